//! CREATE: spotting a multi-agent collaboration worth keeping and turning it
//! into a candidate skill in a staging directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EventType, Trajectory, TrajectoryError};
use crate::codec::{self, Profile};
use crate::model::{
    EvolutionExperience, ExecutionBounds, Frontmatter, RoleDecl, SwarmSkill, TeammateMode,
    SWARM_KIND,
};

/// Outcome of the two-part collaboration test: at least two distinct spawned
/// roles, and at least one dependency between tasks owned by different
/// actors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateSignal {
    pub detected: bool,
    pub roles: Vec<String>,
    /// (from_task, to_task) pairs crossing actor boundaries.
    pub cross_dependencies: Vec<(String, String)>,
    pub summary: String,
}

pub fn detect_create_signal(t: &Trajectory) -> CreateSignal {
    let roles: Vec<String> = t.spawned_roles().into_iter().map(String::from).collect();
    let owners = t.task_owners();
    let mut cross: Vec<(String, String)> = Vec::new();
    for (from, to, _) in t.dependency_edges() {
        let (Some(a), Some(b)) = (owners.get(from), owners.get(to)) else {
            continue;
        };
        let crosses = a.iter().any(|x| b.iter().any(|y| x != y));
        let edge = (from.to_string(), to.to_string());
        if crosses && !cross.contains(&edge) {
            cross.push(edge);
        }
    }
    cross.sort();

    let enough_roles = roles.len() >= 2;
    let has_cross = !cross.is_empty();
    let mut summary = format!(
        "{} distinct spawned role(s) [{}]; {} cross-role dependency edge(s)",
        roles.len(),
        roles.join(", "),
        cross.len()
    );
    for (from, to) in &cross {
        let _ = write!(summary, "; {from} -> {to}");
    }
    if !enough_roles {
        summary.push_str("; fails: fewer than 2 distinct roles were spawned");
    }
    if !has_cross {
        summary.push_str("; fails: no dependency links tasks owned by different actors");
    }
    CreateSignal {
        detected: enough_roles && has_cross,
        roles,
        cross_dependencies: cross,
        summary,
    }
}

/// What a synthesizer gets to work from.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillationInput {
    /// (role id, persona text) in first-spawn order.
    pub roles: Vec<(String, String)>,
    /// Distinct (from_task, to_task) edges in log order.
    pub edges: Vec<(String, String)>,
    /// (task, owning actor) in first-start order.
    pub task_owners: Vec<(String, String)>,
    /// Distinct task categories, sorted.
    pub categories: Vec<String>,
    pub message_count: usize,
    /// The same facts as plain text, for model-backed synthesizers.
    pub text: String,
}

impl DistillationInput {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        let mut roles: Vec<(String, String)> = Vec::new();
        for (_, e) in t.of(EventType::SpawnRole) {
            if !roles.iter().any(|(id, _)| *id == e.actor) {
                roles.push((
                    e.actor.clone(),
                    e.str("persona_text").unwrap_or_default().to_string(),
                ));
            }
        }
        let mut edges: Vec<(String, String)> = Vec::new();
        for (from, to, _) in t.dependency_edges() {
            let edge = (from.to_string(), to.to_string());
            if !edges.contains(&edge) {
                edges.push(edge);
            }
        }
        let mut task_owners: Vec<(String, String)> = Vec::new();
        let mut categories: Vec<String> = Vec::new();
        for (_, e) in t.of(EventType::TaskStart) {
            if let Some(task) = e.str("task") {
                if !task_owners.iter().any(|(name, _)| name == task) {
                    task_owners.push((task.to_string(), e.actor.clone()));
                }
            }
            if let Some(cat) = e.str("category") {
                if !categories.iter().any(|c| c == cat) {
                    categories.push(cat.to_string());
                }
            }
        }
        categories.sort();
        let message_count = t.of(EventType::Message).count();

        let mut text = String::from("Observed multi-agent session.\nRoles:\n");
        for (id, persona) in &roles {
            let first = persona.lines().next().unwrap_or_default();
            let _ = writeln!(text, "- {id}: {first}");
        }
        text.push_str("Tasks:\n");
        for (task, owner) in &task_owners {
            let _ = writeln!(text, "- {task} (owner {owner})");
        }
        text.push_str("Dependencies:\n");
        for (from, to) in &edges {
            let _ = writeln!(text, "- {from} -> {to}");
        }
        let _ = writeln!(text, "Categories: {}", categories.join(", "));
        let _ = writeln!(text, "Messages exchanged: {message_count}");

        DistillationInput {
            roles,
            edges,
            task_owners,
            categories,
            message_count,
            text,
        }
    }
}

/// Turns a session summary into the files of a candidate skill, keyed by
/// relative path. Implementations may call out to a model service.
pub trait Synthesizer {
    fn synthesize(&self, input: &DistillationInput) -> Result<BTreeMap<String, String>, String>;
}

/// Mechanical synthesizer: one role per spawned actor with its persona text
/// verbatim, the dependency edges as a Mermaid graph, and the observed
/// message count as the turn limit.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubSynthesizer;

pub(crate) fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

fn mermaid_id(s: &str) -> String {
    let id: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("t_{id}")
}

impl StubSynthesizer {
    pub fn skill_name(input: &DistillationInput) -> String {
        let tail = if input.categories.is_empty() {
            "workflow".to_string()
        } else {
            slug(&input.categories.join("-"))
        };
        format!("distilled-{tail}")
    }
}

impl Synthesizer for StubSynthesizer {
    fn synthesize(&self, input: &DistillationInput) -> Result<BTreeMap<String, String>, String> {
        let mut role_ids: Vec<(String, String)> = Vec::new();
        for (actor, persona) in &input.roles {
            let mut id = slug(actor);
            if id.is_empty() {
                id = "role".into();
            }
            let base = id.clone();
            let mut n = 2;
            while role_ids.iter().any(|(existing, _)| *existing == id) {
                id = format!("{base}-{n}");
                n += 1;
            }
            role_ids.push((id, persona.clone()));
        }

        let categories = if input.categories.is_empty() {
            "general".to_string()
        } else {
            input.categories.join(", ")
        };
        let frontmatter = Frontmatter {
            name: Self::skill_name(input),
            description: format!("{}-role workflow: {categories}", role_ids.len()),
            kind: Some(SWARM_KIND.to_string()),
            teammate_mode: Some(TeammateMode::Build),
            roles: role_ids
                .iter()
                .map(|(id, _)| RoleDecl::new(id.clone()))
                .collect(),
            ..Default::default()
        };

        let mut body = format!(
            "\n# {}\n\nDistilled from an observed session in which {} roles cooperated.\n\n## Team\n\n",
            frontmatter.name,
            role_ids.len()
        );
        for (id, _) in &role_ids {
            let _ = writeln!(body, "- `roles/{id}.md`");
        }
        body.push_str("\nFollow the task graph in `workflow.md` and the limits in `bind.md`.\n");

        let mut workflow = String::from("# Workflow\n\n```mermaid\ngraph TD\n");
        for (from, to) in &input.edges {
            let _ = writeln!(
                workflow,
                "  {}[\"{from}\"] --> {}[\"{to}\"]",
                mermaid_id(from),
                mermaid_id(to)
            );
        }
        workflow.push_str("```\n");
        if !input.task_owners.is_empty() {
            workflow.push_str("\nTask owners:\n\n");
            for (task, owner) in &input.task_owners {
                let _ = writeln!(workflow, "- {task}: {owner}");
            }
        }

        let mut bind = String::from("# Execution Bounds\n\nLimits observed when this workflow was distilled.\n\n```bounds\n");
        if input.message_count > 0 {
            let _ = writeln!(bind, "max_turns: {}", input.message_count);
        }
        bind.push_str("```\n");

        let skill = SwarmSkill {
            frontmatter,
            body,
            roles: role_ids.into_iter().collect(),
            workflow: Some(workflow),
            bounds: Some(ExecutionBounds::parse(&bind)),
            experience: EvolutionExperience::default(),
            ..Default::default()
        };
        let files = codec::render_files(&skill).map_err(|e| e.to_string())?;
        files
            .into_iter()
            .map(|(path, bytes)| {
                String::from_utf8(bytes)
                    .map(|text| (path, text))
                    .map_err(|e| e.to_string())
            })
            .collect()
    }
}

fn fresh_dir(staging: &Path, name: &str) -> PathBuf {
    let mut candidate = staging.join(name);
    let mut n = 2;
    while candidate.exists() {
        candidate = staging.join(format!("{name}-{n}"));
        n += 1;
    }
    candidate
}

/// Synthesizes a candidate skill from `t` into a new subdirectory of
/// `staging`. The candidate must pass swarm-profile validation; otherwise the
/// subdirectory is removed again.
pub fn distill_candidate(
    t: &Trajectory,
    synthesizer: &dyn Synthesizer,
    staging: &Path,
) -> Result<SwarmSkill, TrajectoryError> {
    let signal = detect_create_signal(t);
    if !signal.detected {
        return Err(TrajectoryError::NoCreateSignal(signal.summary));
    }
    let input = DistillationInput::from_trajectory(t);
    let files = synthesizer
        .synthesize(&input)
        .map_err(TrajectoryError::Synthesizer)?;
    if let Some(bad) = files.keys().find(|p| !crate::model::is_contained_path(p)) {
        return Err(TrajectoryError::Synthesizer(format!(
            "file `{bad}` escapes the candidate directory"
        )));
    }
    let name = files
        .get(codec::SKILL_FILE)
        .and_then(|text| codec::frontmatter::parse(text).ok())
        .map(|(fm, _)| fm.name)
        .filter(|n| codec::is_safe_identifier(n))
        .unwrap_or_else(|| StubSynthesizer::skill_name(&input));

    std::fs::create_dir_all(staging).map_err(|source| TrajectoryError::Io {
        path: staging.to_path_buf(),
        source,
    })?;
    let dir = fresh_dir(staging, &name);
    let result = (|| {
        for (rel, text) in &files {
            crate::fsutil::write_rel(&dir, rel, text.as_bytes())
                .map_err(|(path, source)| TrajectoryError::Io { path, source })?;
        }
        let skill = codec::parse_skill(&dir)?;
        let report = codec::validate(&skill, Profile::Swarm);
        if !report.is_conformant() {
            let errors: Vec<String> = report.errors().map(ToString::to_string).collect();
            return Err(TrajectoryError::NonConformant(errors.join("; ")));
        }
        Ok(skill)
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&dir);
    }
    result
}
