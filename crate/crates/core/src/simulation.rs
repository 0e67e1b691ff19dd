//! Desk-scale lifecycle replay. A scenario lists sessions; each session
//! indexes the skills root, loads the skill, replays a scripted trajectory,
//! observes its outcome, runs friction analysis and governs at capacity.
//! Every state change goes to a plain-text transcript.
//!
//! ```json
//! {
//!   "skill": "travel-planning-swarm",
//!   "seed": 7,
//!   "interactive": true,
//!   "budget": 20000,
//!   "sessions": [
//!     {"clock": "2026-04-30T09:00:00Z", "trajectory": "travel-session.jsonl",
//!      "outcome": "success", "approvals": ["y"], "rebuild": false}
//!   ]
//! }
//! ```
//!
//! Trajectory paths are relative to the scenario file. Templates are shifted
//! so their first event lands on the session clock, and `{{skill}}` is
//! replaced by the skill name. `outcome` may also be
//! `{"success_probability": p}`, drawn from a ChaCha8 stream seeded by
//! `seed`; when omitted, the last outcome event of the log is used.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::codec::{self, experience::format_timestamp, CodecError, Profile};
use crate::disclosure::{self, LoadError};
use crate::evolution::{self, EvolutionError, Outcome};
use crate::fsutil;
use crate::governance::{
    self, ArchiveStore, GovernanceError, RebuildOptions, SimplifyPlan, StubCurator, StubRewriter,
};
use crate::model::{EvolutionExperience, EvolutionRecord, RecordStatus, ScoringConfig, Timestamp};
use crate::trajectory::{
    self, detect_create_signal, DetectorConfig, EventType, Trajectory, TrajectoryError,
};

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("skill `{0}` is not in the index")]
    SkillNotIndexed(String),
    #[error("session {session}: {source}")]
    Trajectory {
        session: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Scoring(#[from] EvolutionError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OutcomeSpec {
    Fixed(Outcome),
    Random { success_probability: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub clock: String,
    pub trajectory: String,
    #[serde(default)]
    pub outcome: Option<OutcomeSpec>,
    #[serde(default)]
    pub approvals: Vec<String>,
    #[serde(default)]
    pub rebuild: bool,
}

fn default_budget() -> usize {
    50_000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub skill: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub interactive: bool,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub sessions: Vec<SessionSpec>,
    /// Directory trajectory paths resolve against; set by [`Scenario::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, SimulationError> {
        let mut s: Scenario =
            serde_json::from_str(text).map_err(|e| SimulationError::Scenario(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        if s.budget == 0 {
            return Err(SimulationError::Scenario("budget must be positive".into()));
        }
        for (i, session) in s.sessions.iter().enumerate() {
            codec::experience::parse_timestamp(&session.clock)
                .map_err(|e| SimulationError::Scenario(format!("session {}: {e}", i + 1)))?;
            if let Some(OutcomeSpec::Random {
                success_probability: p,
            }) = session.outcome
            {
                if !(0.0..=1.0).contains(&p) {
                    return Err(SimulationError::Scenario(format!(
                        "session {}: success_probability {p} outside [0, 1]",
                        i + 1
                    )));
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimulationError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimulationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::parse(&text, base)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebuildSummary {
    pub archived_version: u32,
    /// Tree hash of the skill directory right before the rebuild.
    pub pre_rebuild_hash: String,
    pub roles: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionReport {
    pub offered: Vec<String>,
    pub applied: Vec<String>,
    pub outcome: Option<Outcome>,
    pub emitted: Vec<EvolutionRecord>,
    pub live_records: usize,
    pub governed: bool,
    pub plan: Option<SimplifyPlan>,
    pub rebuild: Option<RebuildSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub transcript: String,
    pub sessions: Vec<SessionReport>,
    pub skill_dir: PathBuf,
}

struct Approvals<'a> {
    enabled: bool,
    queue: VecDeque<&'a str>,
}

impl Approvals<'_> {
    /// Non-interactive runs approve everything. Interactive runs consume the
    /// next scripted response; a missing response counts as a refusal.
    fn ask(&mut self, out: &mut String, question: &str) -> bool {
        if !self.enabled {
            return true;
        }
        let answer = self.queue.pop_front();
        let yes = answer.is_some_and(|a| a.trim().to_lowercase().starts_with('y'));
        let shown = answer.map_or("(no scripted response)".to_string(), |a| {
            a.trim().to_string()
        });
        let _ = writeln!(out, "  ? {question} -> {shown}");
        yes
    }
}

fn rebase(
    template: &str,
    skill: &str,
    clock: Timestamp,
    session: usize,
) -> Result<Trajectory, SimulationError> {
    let text = template.replace("{{skill}}", skill);
    let mut t = trajectory::parse_trajectory_str(&text)
        .map_err(|source| SimulationError::Trajectory { session, source })?;
    if let Some(first) = t.events.first().map(|e| e.at) {
        let shift = clock - first;
        for e in &mut t.events {
            e.at += shift;
        }
    }
    Ok(t)
}

fn statuses(exp: &EvolutionExperience) -> BTreeMap<String, RecordStatus> {
    exp.records
        .iter()
        .map(|r| (r.id.clone(), r.status))
        .collect()
}

fn log_transitions(
    out: &mut String,
    before: &BTreeMap<String, RecordStatus>,
    after: &EvolutionExperience,
) {
    for r in &after.records {
        match before.get(&r.id) {
            Some(prev) if *prev != r.status => {
                let _ = writeln!(out, "  status: {} {prev} -> {}", r.id, r.status);
            }
            _ => {}
        }
    }
}

fn ts(s: &str) -> Result<Timestamp, SimulationError> {
    codec::experience::parse_timestamp(s).map_err(SimulationError::Scenario)
}

/// Runs `scenario` against the skill at `<skills_root>/<scenario.skill>`.
/// `force_interactive` turns on approval prompts regardless of the file.
pub fn simulate(
    scenario: &Scenario,
    skills_root: &Path,
    config: &ScoringConfig,
    force_interactive: bool,
) -> Result<SimulationReport, SimulationError> {
    let interactive = scenario.interactive || force_interactive;
    let detectors = DetectorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario skill={} seed={} sessions={} interactive={} budget={}",
        scenario.skill,
        scenario.seed,
        scenario.sessions.len(),
        interactive,
        scenario.budget
    );

    let mut dir = skills_root.join(&scenario.skill);
    let store_for = |d: &Path| ArchiveStore::for_skill(d);
    let mut reports = Vec::new();
    let mut last_time: Option<Timestamp> = None;

    for (n, spec) in scenario.sessions.iter().enumerate() {
        let session = n + 1;
        let clock = ts(&spec.clock)?;
        let mut report = SessionReport::default();
        let mut approvals = Approvals {
            enabled: interactive,
            queue: spec.approvals.iter().map(String::as_str).collect(),
        };
        let _ = writeln!(out, "session {session} clock={}", format_timestamp(&clock));

        // index
        let index = codec::index_skills(skills_root)?;
        let entry = index
            .entries
            .iter()
            .find(|e| {
                e.name == scenario.skill
                    || e.path
                        .file_name()
                        .is_some_and(|f| f == scenario.skill.as_str())
            })
            .ok_or_else(|| SimulationError::SkillNotIndexed(scenario.skill.clone()))?;
        dir = entry.path.clone();
        let _ = writeln!(
            out,
            "  index: {} skill(s); selected {}",
            index.entries.len(),
            entry.name
        );

        // load
        let skill = codec::parse_skill(&dir)?;
        let before = statuses(&skill.experience);
        let loaded = disclosure::load_skill(&skill, config, scenario.budget, clock)?;
        let ctx = &loaded.context;
        let _ = writeln!(
            out,
            "  load: stage={} fragments={} chars={}/{}",
            ctx.stage,
            ctx.loaded_fragments.len(),
            ctx.used(),
            ctx.budget
        );
        for (id, s) in ctx.offered_record_ids.iter().zip(&ctx.offered_scores) {
            let _ = writeln!(out, "  offered: {id} S={s:.4}");
        }
        log_transitions(&mut out, &before, &loaded.experience);
        let mut experience = loaded.experience;
        report.offered = ctx.offered_record_ids.clone();

        // replay
        let template_path = scenario.base_dir.join(&spec.trajectory);
        let template =
            std::fs::read_to_string(&template_path).map_err(|source| SimulationError::Io {
                path: template_path.clone(),
                source,
            })?;
        let t = rebase(&template, skill.name(), clock, session)?;
        let end = t.events.last().map_or(clock, |e| e.at.max(clock));
        let signal = detect_create_signal(&t);
        let _ = writeln!(
            out,
            "  replay: {} events; create signal {} ({} roles, {} cross-role dependencies)",
            t.events.len(),
            if signal.detected { "present" } else { "absent" },
            signal.roles.len(),
            signal.cross_dependencies.len()
        );
        for (_, e) in t.of(EventType::RecordApplied) {
            let id = e.str("record_id").unwrap_or_default();
            if !report.offered.iter().any(|o| o == id) {
                let _ = writeln!(out, "  applied: {id} ignored (not offered this session)");
                continue;
            }
            if report.applied.iter().any(|a| a == id) {
                continue;
            }
            if let Some(rec) = experience.get_mut(id) {
                *rec = evolution::record_applied(rec)?;
                let _ = writeln!(out, "  applied: {id}");
                report.applied.push(id.to_string());
            }
        }

        // outcome
        let outcome = match &spec.outcome {
            Some(OutcomeSpec::Fixed(o)) => Some(*o),
            Some(OutcomeSpec::Random {
                success_probability,
            }) => Some(if rng.random_bool(*success_probability) {
                Outcome::Success
            } else {
                Outcome::Failure
            }),
            None => t
                .of(EventType::Outcome)
                .last()
                .and_then(|(_, e)| e.str("status").and_then(Outcome::parse)),
        };
        report.outcome = outcome;
        match outcome {
            Some(o) => {
                let before = statuses(&experience);
                for id in &report.applied {
                    if let Some(rec) = experience.get_mut(id) {
                        if !rec.status.is_terminal() {
                            *rec = evolution::observe_outcome(rec, o, end, config)?;
                        }
                    }
                }
                let _ = writeln!(
                    out,
                    "  outcome: {o} (attributed to {} record(s))",
                    report.applied.len()
                );
                log_transitions(&mut out, &before, &experience);
            }
            None => {
                let _ = writeln!(out, "  outcome: none");
            }
        }

        // patch
        let mut current = skill.clone();
        current.experience = experience.clone();
        if t.loaded_skills().any(|s| s == skill.name()) {
            let findings = trajectory::analyze_friction(&t, &current, &detectors)
                .map_err(|source| SimulationError::Trajectory { session, source })?;
            if findings.is_empty() {
                let _ = writeln!(out, "  friction: none");
            }
            let mut accepted = Vec::new();
            for f in findings {
                let d = &f.proposed_directive;
                let _ = writeln!(
                    out,
                    "  friction: {} events={:?} -> {} [{}]",
                    f.kind,
                    f.evidence,
                    d.action,
                    d.target_files.join(", ")
                );
                if approvals.ask(&mut out, &format!("append {} record", f.kind)) {
                    accepted.push(f);
                }
            }
            experience = trajectory::emit_records(&accepted, &current, end);
            for r in experience.records.iter().skip(current.experience.len()) {
                let _ = writeln!(
                    out,
                    "  emitted: {} {} {}",
                    r.id, r.change_directive.action, r.status
                );
                report.emitted.push(r.clone());
            }
        } else {
            let _ = writeln!(out, "  friction: skipped (skill not loaded in log)");
        }
        governance::persist_experience(&dir, &experience)?;
        current.experience = experience;

        // govern
        report.live_records = current.experience.non_terminal().count();
        if governance::should_govern(&current.experience, config) {
            report.governed = true;
            let _ = writeln!(
                out,
                "  govern: {} live record(s) >= capacity {}; simplifying",
                report.live_records, config.simplify_capacity
            );
            let (updated, plan) =
                governance::simplify_dir(&dir, &StubCurator::default(), config, end)?;
            let _ = writeln!(
                out,
                "  simplify: deleted {} merged {} into {} refined {} retained {}",
                plan.deletions.len(),
                plan.merges.iter().map(|g| g.members.len()).sum::<usize>(),
                plan.merged_into.len(),
                plan.refinements.len(),
                plan.retentions.len()
            );
            report.live_records = updated.experience.non_terminal().count();
            report.plan = Some(plan);
            current = updated;
        } else {
            let _ = writeln!(
                out,
                "  govern: {} live record(s) < capacity {}",
                report.live_records, config.simplify_capacity
            );
        }

        // rebuild
        if spec.rebuild {
            let plan = governance::fold_plan(&current.experience, RebuildOptions::default());
            let ids: Vec<&str> = plan.iter().map(|r| r.id.as_str()).collect();
            let _ = writeln!(out, "  rebuild plan: fold [{}]", ids.join(", "));
            if plan.is_empty() {
                let _ = writeln!(out, "  rebuild: skipped (no active records)");
            } else if approvals.ask(&mut out, "rebuild") {
                let pre =
                    fsutil::tree_hash(&fsutil::read_tree(&dir).map_err(GovernanceError::from)?);
                let r = governance::rebuild(
                    &dir,
                    &StubRewriter,
                    &store_for(&dir),
                    RebuildOptions::default(),
                    end,
                )?;
                let roles = r.skill.frontmatter.roles.len();
                let _ = writeln!(
                    out,
                    "  rebuild: archived v{}; {roles} roles; experience cleared",
                    r.archived_version
                );
                report.rebuild = Some(RebuildSummary {
                    archived_version: r.archived_version,
                    pre_rebuild_hash: pre,
                    roles,
                });
            } else {
                let _ = writeln!(out, "  rebuild: declined");
            }
        }
        last_time = Some(end);
        reports.push(report);
    }

    let _ = writeln!(out, "final");
    if dir.join(codec::SKILL_FILE).exists() {
        let skill = codec::parse_skill(&dir)?;
        let report = codec::validate(&skill, Profile::Swarm);
        let _ = writeln!(out, "  validate swarm: {} error(s)", report.error_count());
        let _ = writeln!(out, "  roles: {}", skill.frontmatter.roles.len());
        let _ = writeln!(out, "  archive versions: {:?}", store_for(&dir).versions()?);
        let now = last_time.unwrap_or_else(|| {
            skill
                .experience
                .records
                .iter()
                .map(|r| r.score_state.last_observed_at)
                .max()
                .unwrap_or_default()
        });
        let _ = writeln!(out, "  scores at {}:", format_timestamp(&now));
        for line in evolution::score_table(&skill.experience, now, config)?.lines() {
            let _ = writeln!(out, "    {line}");
        }
    }
    Ok(SimulationReport {
        transcript: out,
        sessions: reports,
        skill_dir: dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    #[test]
    fn scenario_parsing() {
        let s = Scenario::parse(r#"{"skill": "x"}"#, Path::new(".")).unwrap();
        assert!(s.sessions.is_empty());
        assert_eq!(s.budget, 50_000);
        let s = Scenario::parse(
            r#"{"skill": "x", "sessions": [{"clock": "2026-01-01T00:00:00Z", "trajectory": "a.jsonl", "outcome": {"success_probability": 0.5}}]}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(
            s.sessions[0].outcome,
            Some(OutcomeSpec::Random {
                success_probability: 0.5
            })
        );
        assert!(Scenario::parse(r#"{"skill": "x", "bogus": 1}"#, Path::new(".")).is_err());
        assert!(Scenario::parse(
            r#"{"skill": "x", "sessions": [{"clock": "yesterday", "trajectory": "a"}]}"#,
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn missing_response_refuses() {
        let mut out = String::new();
        let mut a = Approvals {
            enabled: true,
            queue: VecDeque::from(vec!["yes", "n"]),
        };
        assert!(a.ask(&mut out, "q1"));
        assert!(!a.ask(&mut out, "q2"));
        assert!(!a.ask(&mut out, "q3"));
        assert!(out.contains("(no scripted response)"));
    }

    #[test]
    fn rebase_shifts_to_clock() {
        let tpl = r#"{"at":"2020-01-01T00:00:00Z","actor":"leader","type":"skill_loaded","payload":{"skill":"{{skill}}"}}
{"at":"2020-01-01T00:05:00Z","actor":"a","type":"feedback","payload":{"text":"x"}}"#;
        let clock = ts("2026-04-30T09:00:00Z").unwrap();
        let t = rebase(tpl, "demo", clock, 1).unwrap();
        assert_eq!(t.events[0].at, clock);
        assert_eq!(t.events[1].at, clock + Duration::minutes(5));
        assert_eq!(t.loaded_skills().collect::<Vec<_>>(), vec!["demo"]);
    }
}
