//! PATCH: friction detectors over a trajectory and the records they produce.
//!
//! Detectors only read the log and the skill. New records are appended to a
//! copy of the experience; base files are never touched here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{EventType, Trajectory, TrajectoryError};
use crate::codec::{BIND_FILE, WORKFLOW_FILE};
use crate::model::{
    is_contained_path, persona_path, ChangeDirective, DirectiveAction, EvolutionExperience,
    EvolutionRecord, SwarmSkill, Timestamp,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionKind {
    CircularDependency,
    RedundantCommunication,
    PrematureTermination,
    RoleCoupling,
    ExplicitSignal,
}

impl FrictionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrictionKind::CircularDependency => "circular_dependency",
            FrictionKind::RedundantCommunication => "redundant_communication",
            FrictionKind::PrematureTermination => "premature_termination",
            FrictionKind::RoleCoupling => "role_coupling",
            FrictionKind::ExplicitSignal => "explicit_signal",
        }
    }
}

impl fmt::Display for FrictionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionFinding {
    pub kind: FrictionKind,
    /// Indices into the trajectory's event list.
    pub evidence: Vec<usize>,
    /// One-line description used as the record context.
    pub summary: String,
    pub proposed_directive: ChangeDirective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Identical messages on one ordered actor pair before it counts as
    /// redundant.
    pub redundancy_threshold: usize,
    /// Payload key on task_start events holding the task category.
    pub category_key: String,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            redundancy_threshold: 3,
            category_key: "category".into(),
        }
    }
}

/// Groups of tasks that lie on a dependency cycle: strongly connected
/// components with more than one task, plus tasks that depend on
/// themselves. Each group is sorted; groups are sorted by first task.
pub fn cyclic_components(edges: &[(&str, &str)]) -> Vec<Vec<String>> {
    let mut graph: DiGraph<&str, ()> = DiGraph::new();
    let mut nodes = BTreeMap::new();
    let mut self_loops = BTreeSet::new();
    for &(from, to) in edges {
        let a = *nodes.entry(from).or_insert_with(|| graph.add_node(from));
        let b = *nodes.entry(to).or_insert_with(|| graph.add_node(to));
        graph.add_edge(a, b, ());
        if from == to {
            self_loops.insert(from);
        }
    }
    let mut out: Vec<Vec<String>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1 || self_loops.contains(graph[scc[0]]))
        .map(|scc| {
            let mut tasks: Vec<String> = scc.iter().map(|&n| graph[n].to_string()).collect();
            tasks.sort();
            tasks
        })
        .collect();
    out.sort();
    out
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn title_case(s: &str) -> String {
    s.split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(first) => first.to_uppercase().chain(cs).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Role id for a category split out of a coupled role: an `-ing` activity
/// becomes its `-er` agent (copywriting → copywriter), anything else gets a
/// `-specialist` suffix.
pub fn split_role_id(category: &str) -> String {
    let base = super::create::slug(category);
    match base.strip_suffix("ing") {
        Some(stem) if stem.len() >= 3 => format!("{stem}er"),
        _ if base.is_empty() => "specialist".into(),
        _ => format!("{base}-specialist"),
    }
}

fn circular(t: &Trajectory) -> Vec<FrictionFinding> {
    let deps = t.dependency_edges();
    let edges: Vec<(&str, &str)> = deps.iter().map(|&(a, b, _)| (a, b)).collect();
    cyclic_components(&edges)
        .into_iter()
        .map(|tasks| {
            let evidence: Vec<usize> = deps
                .iter()
                .filter(|(a, b, _)| tasks.iter().any(|x| x == a) && tasks.iter().any(|x| x == b))
                .map(|&(_, _, i)| i)
                .collect();
            let cycle = tasks.join(", ");
            FrictionFinding {
                kind: FrictionKind::CircularDependency,
                summary: format!("Tasks {cycle} wait on each other in a dependency cycle."),
                proposed_directive: ChangeDirective {
                    target_files: vec![WORKFLOW_FILE.into()],
                    action: DirectiveAction::Insert,
                    content: format!(
                        "Break the dependency cycle between {cycle}: fix one task as the first step and let the others consume its output."
                    ),
                },
                evidence,
            }
        })
        .collect()
}

fn redundant(t: &Trajectory, config: &DetectorConfig) -> Vec<FrictionFinding> {
    let mut groups: BTreeMap<(&str, &str, String), Vec<usize>> = BTreeMap::new();
    for (i, e) in t.of(EventType::Message) {
        let (Some(to), Some(text)) = (e.str("to"), e.str("text")) else {
            continue;
        };
        groups
            .entry((e.actor.as_str(), to, normalize(text)))
            .or_default()
            .push(i);
    }
    let mut out: Vec<FrictionFinding> = groups
        .into_iter()
        .filter(|(_, idx)| idx.len() >= config.redundancy_threshold.max(1))
        .map(|((from, to, text), evidence)| FrictionFinding {
            kind: FrictionKind::RedundantCommunication,
            summary: format!(
                "`{from}` sent `{to}` the same message {} times: \"{text}\".",
                evidence.len()
            ),
            proposed_directive: ChangeDirective {
                target_files: vec![WORKFLOW_FILE.into()],
                action: DirectiveAction::Insert,
                content: format!(
                    "`{from}` hands \"{text}\" to `{to}` once; later steps read it from the shared plan instead of asking again."
                ),
            },
            evidence,
        })
        .collect();
    out.sort_by_key(|f| f.evidence[0]);
    out
}

fn premature(t: &Trajectory, skill: &SwarmSkill) -> Vec<FrictionFinding> {
    let gates = match &skill.bounds {
        Some(b) if !b.quality_gates.is_empty() => &b.quality_gates,
        _ => return Vec::new(),
    };
    let successes: Vec<usize> = t
        .of(EventType::Outcome)
        .filter(|(_, e)| e.str("status") == Some("success"))
        .map(|(i, _)| i)
        .collect();
    if successes.is_empty() {
        return Vec::new();
    }
    let mut reported: Vec<String> = Vec::new();
    for (_, e) in t.of(EventType::TaskEnd) {
        for v in e.payload.values() {
            if let Some(s) = v.as_str() {
                reported.push(s.to_lowercase());
            }
        }
    }
    let missing: Vec<&str> = gates
        .iter()
        .filter(|g| {
            let g = g.to_lowercase();
            !reported.iter().any(|r| r.contains(&g))
        })
        .map(String::as_str)
        .collect();
    if missing.is_empty() {
        return Vec::new();
    }
    let list = missing
        .iter()
        .map(|g| format!("\"{g}\""))
        .collect::<Vec<_>>()
        .join(", ");
    vec![FrictionFinding {
        kind: FrictionKind::PrematureTermination,
        summary: format!("Session reported success without checking quality gate(s) {list}."),
        proposed_directive: ChangeDirective {
            target_files: vec![BIND_FILE.into()],
            action: DirectiveAction::Insert,
            content: format!(
                "Do not report success until a task_end explicitly confirms each quality gate: {list}."
            ),
        },
        evidence: successes,
    }]
}

fn role_coupling(
    t: &Trajectory,
    skill: &SwarmSkill,
    config: &DetectorConfig,
) -> Vec<FrictionFinding> {
    // actor -> categories in first-seen order, each with its task_start indices
    let mut by_actor: BTreeMap<&str, Vec<(&str, Vec<usize>)>> = BTreeMap::new();
    for (i, e) in t.of(EventType::TaskStart) {
        if e.actor == "user" {
            continue;
        }
        let Some(cat) = e.payload.get(&config.category_key).and_then(|v| v.as_str()) else {
            continue;
        };
        let cats = by_actor.entry(e.actor.as_str()).or_default();
        match cats.iter_mut().find(|(c, _)| *c == cat) {
            Some((_, idx)) => idx.push(i),
            None => cats.push((cat, vec![i])),
        }
    }
    let mut out = Vec::new();
    let mut taken: BTreeSet<String> = skill.frontmatter.role_ids().map(String::from).collect();
    for (actor, cats) in by_actor {
        if cats.len() < 2 {
            continue;
        }
        let (primary, primary_idx) = &cats[0];
        for (cat, idx) in &cats[1..] {
            let base = split_role_id(cat);
            let mut new_role = base.clone();
            let mut n = 2;
            while taken.contains(&new_role) {
                new_role = format!("{base}-{n}");
                n += 1;
            }
            taken.insert(new_role.clone());
            let title = title_case(cat);
            let mut evidence: Vec<usize> = primary_idx.iter().chain(idx).copied().collect();
            evidence.sort_unstable();
            out.push(FrictionFinding {
                kind: FrictionKind::RoleCoupling,
                summary: format!(
                    "`{actor}` ran both {primary} and {cat} tasks and had to switch context between them."
                ),
                proposed_directive: ChangeDirective {
                    target_files: vec![persona_path(&new_role), WORKFLOW_FILE.into()],
                    action: DirectiveAction::SplitRole,
                    content: format!(
                        "Create a dedicated '{title} Expert' role for {cat} tasks, split out of '{actor}'. Update workflow to route {cat} tasks to the new role."
                    ),
                },
                evidence,
            });
        }
    }
    out
}

fn explicit(t: &Trajectory) -> Vec<FrictionFinding> {
    t.of(EventType::Feedback)
        .map(|(i, e)| {
            let text = e.str("text").unwrap_or_default().trim().to_string();
            let target = e
                .str("target")
                .filter(|p| is_contained_path(p))
                .unwrap_or(WORKFLOW_FILE)
                .to_string();
            FrictionFinding {
                kind: FrictionKind::ExplicitSignal,
                summary: format!("Feedback from `{}`: {text}", e.actor),
                proposed_directive: ChangeDirective {
                    target_files: vec![target],
                    action: DirectiveAction::Insert,
                    content: text,
                },
                evidence: vec![i],
            }
        })
        .collect()
}

/// Runs every detector. Findings come grouped by kind in the order of
/// [`FrictionKind`], each group ordered by first evidence index.
pub fn analyze_friction(
    t: &Trajectory,
    skill: &SwarmSkill,
    config: &DetectorConfig,
) -> Result<Vec<FrictionFinding>, TrajectoryError> {
    if !t.loaded_skills().any(|s| s == skill.name()) {
        return Err(TrajectoryError::SkillNotLoaded(skill.name().to_string()));
    }
    let mut out = circular(t);
    out.extend(redundant(t, config));
    out.extend(premature(t, skill));
    out.extend(role_coupling(t, skill, config));
    out.extend(explicit(t));
    Ok(out)
}

fn next_id(experience: &EvolutionExperience, taken: &BTreeSet<String>, now: Timestamp) -> String {
    let day = now.format("%Y%m%d");
    (1u32..)
        .map(|seq| format!("evo_{day}_{seq:03}"))
        .find(|id| experience.get(id).is_none() && !taken.contains(id))
        .expect("sequence space exhausted")
}

/// Appends one fresh active record per finding to a copy of the skill's
/// experience.
pub fn emit_records(
    findings: &[FrictionFinding],
    skill: &SwarmSkill,
    now: Timestamp,
) -> EvolutionExperience {
    let mut experience = skill.experience.clone();
    let mut taken = BTreeSet::new();
    for finding in findings {
        let id = next_id(&experience, &taken, now);
        taken.insert(id.clone());
        let events = finding
            .evidence
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        let context = format!(
            "{} ({}; events {events}): {}",
            finding.kind,
            finding.evidence.len(),
            finding.summary
        );
        experience.records.push(EvolutionRecord::new(
            id,
            now,
            context,
            finding.proposed_directive.clone(),
        ));
    }
    experience
}
