//! Session trajectories: the line-delimited event log a host emits while a
//! team works, and the two analyses run over it (CREATE detection and
//! distillation, PATCH friction analysis).
//!
//! One JSON object per line:
//!
//! ```text
//! {"at": "2026-04-30T09:00:00Z", "actor": "leader", "type": "skill_loaded", "payload": {"skill": "travel-planning-swarm"}}
//! {"at": "2026-04-30T09:00:05Z", "actor": "transportation", "type": "spawn_role", "payload": {"persona_text": "..."}}
//! ```
//!
//! Blank lines are ignored. Timestamps must not decrease.

pub mod create;
pub mod friction;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::codec::experience::{format_timestamp, parse_timestamp};
use crate::model::Timestamp;

pub use create::{
    detect_create_signal, distill_candidate, CreateSignal, DistillationInput, StubSynthesizer,
    Synthesizer,
};
pub use friction::{
    analyze_friction, cyclic_components, emit_records, DetectorConfig, FrictionFinding,
    FrictionKind,
};

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("trajectory has no skill_loaded event for `{0}`")]
    SkillNotLoaded(String),
    #[error("no create signal: {0}")]
    NoCreateSignal(String),
    #[error("synthesizer failed: {0}")]
    Synthesizer(String),
    #[error("distilled candidate is not conformant: {0}")]
    NonConformant(String),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    SpawnRole,
    Message,
    TaskStart,
    TaskEnd,
    Dependency,
    Feedback,
    SkillLoaded,
    RecordOffered,
    RecordApplied,
    Outcome,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::SpawnRole => "spawn_role",
            EventType::Message => "message",
            EventType::TaskStart => "task_start",
            EventType::TaskEnd => "task_end",
            EventType::Dependency => "dependency",
            EventType::Feedback => "feedback",
            EventType::SkillLoaded => "skill_loaded",
            EventType::RecordOffered => "record_offered",
            EventType::RecordApplied => "record_applied",
            EventType::Outcome => "outcome",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "spawn_role" => EventType::SpawnRole,
            "message" => EventType::Message,
            "task_start" => EventType::TaskStart,
            "task_end" => EventType::TaskEnd,
            "dependency" => EventType::Dependency,
            "feedback" => EventType::Feedback,
            "skill_loaded" => EventType::SkillLoaded,
            "record_offered" => EventType::RecordOffered,
            "record_applied" => EventType::RecordApplied,
            "outcome" => EventType::Outcome,
            _ => return None,
        })
    }

    /// Payload keys that must hold strings for this event type.
    fn required_keys(self) -> &'static [&'static str] {
        match self {
            EventType::SpawnRole => &["persona_text"],
            EventType::Message => &["to", "text"],
            EventType::TaskStart => &["task"],
            EventType::TaskEnd => &["task", "status"],
            EventType::Dependency => &["from_task", "to_task"],
            EventType::Feedback => &["text"],
            EventType::SkillLoaded => &["skill"],
            EventType::RecordOffered | EventType::RecordApplied => &["record_id"],
            EventType::Outcome => &["status"],
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEvent {
    pub at: Timestamp,
    pub actor: String,
    pub kind: EventType,
    pub payload: Map<String, Value>,
}

impl TrajectoryEvent {
    pub fn new(at: Timestamp, actor: impl Into<String>, kind: EventType, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        TrajectoryEvent {
            at,
            actor: actor.into(),
            kind,
            payload,
        }
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Deserialize)]
struct EventWire {
    at: String,
    actor: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub events: Vec<TrajectoryEvent>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of(&self, kind: EventType) -> impl Iterator<Item = (usize, &TrajectoryEvent)> {
        self.events
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.kind == kind)
    }

    /// Distinct actors of spawn_role events, sorted.
    pub fn spawned_roles(&self) -> BTreeSet<&str> {
        self.of(EventType::SpawnRole)
            .map(|(_, e)| e.actor.as_str())
            .collect()
    }

    /// Task name → set of actors that started it.
    pub fn task_owners(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (_, e) in self.of(EventType::TaskStart) {
            if let Some(task) = e.str("task") {
                owners.entry(task).or_default().insert(e.actor.as_str());
            }
        }
        owners
    }

    /// (from_task, to_task, event index) for every dependency event.
    pub fn dependency_edges(&self) -> Vec<(&str, &str, usize)> {
        self.of(EventType::Dependency)
            .filter_map(|(i, e)| Some((e.str("from_task")?, e.str("to_task")?, i)))
            .collect()
    }

    pub fn loaded_skills(&self) -> impl Iterator<Item = &str> {
        self.of(EventType::SkillLoaded)
            .filter_map(|(_, e)| e.str("skill"))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let line = serde_json::json!({
                "at": format_timestamp(&e.at),
                "actor": e.actor,
                "type": e.kind.as_str(),
                "payload": e.payload,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn parse_trajectory_str(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut events: Vec<TrajectoryEvent> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TrajectoryError::Line {
            line: lineno,
            message,
        };
        let wire: EventWire =
            serde_json::from_str(line).map_err(|e| err(format!("malformed event: {e}")))?;
        let kind = EventType::parse(&wire.kind)
            .ok_or_else(|| err(format!("unknown event type `{}`", wire.kind)))?;
        let at = parse_timestamp(&wire.at).map_err(err)?;
        if let Some(prev) = events.last() {
            if at < prev.at {
                return Err(err(format!(
                    "timestamp {} precedes previous event at {}",
                    wire.at,
                    format_timestamp(&prev.at)
                )));
            }
        }
        for key in kind.required_keys() {
            if !wire.payload.get(*key).is_some_and(Value::is_string) {
                return Err(err(format!("{kind} payload needs string field `{key}`")));
            }
        }
        if kind == EventType::Outcome {
            let status = wire.payload["status"].as_str().unwrap_or_default();
            if !matches!(status, "success" | "failure") {
                return Err(err(format!(
                    "outcome status `{status}` is not success or failure"
                )));
            }
        }
        events.push(TrajectoryEvent {
            at,
            actor: wire.actor,
            kind,
            payload: wire.payload,
        });
    }
    Ok(Trajectory { events })
}

pub fn parse_trajectory(path: &Path) -> Result<Trajectory, TrajectoryError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectory_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_empty_trajectory() {
        assert!(parse_trajectory_str("").unwrap().is_empty());
        assert!(parse_trajectory_str("\n\n").unwrap().is_empty());
    }

    #[test]
    fn decreasing_timestamps_rejected_with_line() {
        let text = r#"{"at":"2026-04-30T09:00:05Z","actor":"a","type":"feedback","payload":{"text":"x"}}
{"at":"2026-04-30T09:00:00Z","actor":"a","type":"feedback","payload":{"text":"y"}}"#;
        match parse_trajectory_str(text) {
            Err(TrajectoryError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_type_rejected() {
        let text = r#"{"at":"2026-04-30T09:00:00Z","actor":"a","type":"teleport","payload":{}}"#;
        let err = parse_trajectory_str(text).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(err.to_string().contains("teleport"));
    }

    #[test]
    fn missing_payload_field_rejected() {
        let text =
            r#"{"at":"2026-04-30T09:00:00Z","actor":"a","type":"message","payload":{"text":"hi"}}"#;
        assert!(parse_trajectory_str(text)
            .unwrap_err()
            .to_string()
            .contains("`to`"));
    }

    #[test]
    fn bad_outcome_status_rejected() {
        let text = r#"{"at":"2026-04-30T09:00:00Z","actor":"leader","type":"outcome","payload":{"status":"meh"}}"#;
        assert!(parse_trajectory_str(text).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"at":"2026-04-30T09:00:00Z","actor":"leader","type":"skill_loaded","payload":{"skill":"s"}}
{"at":"2026-04-30T09:00:00Z","actor":"a","type":"task_start","payload":{"task":"t","category":"c"}}"#;
        let t = parse_trajectory_str(text).unwrap();
        assert_eq!(parse_trajectory_str(&t.to_jsonl()).unwrap(), t);
    }
}
