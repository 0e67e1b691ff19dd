//! Domain types for a swarm skill asset and its evolution experience.
//!
//! A skill is a directory:
//!
//! ```text
//! SKILL.md          frontmatter + natural-language body
//! roles/<id>.md     one persona per declared role
//! workflow.md       task dependency graph (prose or Mermaid)
//! bind.md           execution bounds
//! evolutions.json   evolution experience (optional on disk)
//! ```
//!
//! Everything here is a plain value. Engines in the sibling modules take
//! these by reference and hand back updated copies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

/// Discriminator value marking a multi-agent skill.
pub const SWARM_KIND: &str = "swarm-skill";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TeammateMode {
    Build,
    Plan,
    Other(String),
}

impl TeammateMode {
    pub fn as_str(&self) -> &str {
        match self {
            TeammateMode::Build => "build_mode",
            TeammateMode::Plan => "plan_mode",
            TeammateMode::Other(s) => s,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s {
            "build_mode" => TeammateMode::Build,
            "plan_mode" => TeammateMode::Plan,
            other => TeammateMode::Other(other.to_string()),
        }
    }
}

impl fmt::Display for TeammateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Environment configuration for one participant of the team.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoleDecl {
    pub id: String,
    #[serde(default)]
    pub skills: Vec<String>,
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Unrecognized keys of the role entry, kept in source order.
    #[serde(flatten, default)]
    pub extra: serde_yaml::Mapping,
}

impl RoleDecl {
    pub fn new(id: impl Into<String>) -> Self {
        RoleDecl {
            id: id.into(),
            ..Default::default()
        }
    }

    /// Relative path of the persona file backing this role.
    pub fn persona_path(&self) -> String {
        persona_path(&self.id)
    }
}

pub fn persona_path(role_id: &str) -> String {
    format!("roles/{role_id}.md")
}

/// A top-level frontmatter key this crate does not interpret.
///
/// `raw` is the exact source block (key line plus continuation lines,
/// newline-terminated) so it can be written back untouched.
#[derive(Debug, Clone)]
pub struct ExtraField {
    pub key: String,
    pub raw: String,
    pub value: serde_yaml::Value,
}

impl PartialEq for ExtraField {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.raw == other.raw
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FrontmatterOrigin {
    /// Everything from the opening fence through the closing fence line.
    pub(crate) header: String,
    pub(crate) parsed: Box<Frontmatter>,
}

#[derive(Debug, Clone, Default)]
pub struct Frontmatter {
    pub name: String,
    pub description: String,
    pub kind: Option<String>,
    pub teammate_mode: Option<TeammateMode>,
    pub roles: Vec<RoleDecl>,
    pub dependencies: Vec<String>,
    pub extra_fields: Vec<ExtraField>,
    pub(crate) origin: Option<FrontmatterOrigin>,
}

impl PartialEq for Frontmatter {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.description == other.description
            && self.kind == other.kind
            && self.teammate_mode == other.teammate_mode
            && self.roles == other.roles
            && self.dependencies == other.dependencies
            && self.extra_fields == other.extra_fields
    }
}

impl Frontmatter {
    pub fn is_swarm(&self) -> bool {
        self.kind.as_deref() == Some(SWARM_KIND)
    }

    pub fn role(&self, id: &str) -> Option<&RoleDecl> {
        self.roles.iter().find(|r| r.id == id)
    }

    pub fn role_ids(&self) -> impl Iterator<Item = &str> {
        self.roles.iter().map(|r| r.id.as_str())
    }

    pub fn extra(&self, key: &str) -> Option<&serde_yaml::Value> {
        self.extra_fields
            .iter()
            .find(|f| f.key == key)
            .map(|f| &f.value)
    }

    /// Role ids that occur more than once, in first-duplicate order.
    pub fn duplicate_role_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut dups = Vec::new();
        for role in &self.roles {
            if !seen.insert(role.id.as_str()) && !dups.contains(&role.id) {
                dups.push(role.id.clone());
            }
        }
        dups
    }
}

/// Operational limits declared in bind.md.
///
/// The prose is kept verbatim in `raw_text`; the structured fields come from
/// an optional fenced block labelled `bounds` holding `key: value` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExecutionBounds {
    pub raw_text: String,
    pub max_turns: Option<u64>,
    pub token_budget: Option<u64>,
    pub quality_gates: Vec<String>,
    /// Lines of the bounds block that could not be understood.
    pub problems: Vec<String>,
}

impl ExecutionBounds {
    pub fn parse(text: &str) -> Self {
        let mut bounds = ExecutionBounds {
            raw_text: text.to_string(),
            ..Default::default()
        };
        let mut in_block = false;
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if !in_block {
                if trimmed == "```bounds" {
                    in_block = true;
                }
                continue;
            }
            if trimmed.starts_with("```") {
                in_block = false;
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let Some((key, value)) = trimmed.split_once(':') else {
                bounds
                    .problems
                    .push(format!("line {lineno}: expected `key: value`"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "max_turns" | "token_budget" => match value.parse::<u64>() {
                    Ok(n) if n > 0 => {
                        if key == "max_turns" {
                            bounds.max_turns = Some(n);
                        } else {
                            bounds.token_budget = Some(n);
                        }
                    }
                    _ => bounds
                        .problems
                        .push(format!("line {lineno}: {key} must be a positive integer")),
                },
                "quality_gate" => bounds.quality_gates.push(value.to_string()),
                other => bounds
                    .problems
                    .push(format!("line {lineno}: unknown bounds key `{other}`")),
            }
        }
        bounds
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DirectiveAction {
    Insert,
    Replace,
    Delete,
    SplitRole,
    AddRole,
    RemoveRole,
    Other(String),
}

impl DirectiveAction {
    pub fn as_str(&self) -> &str {
        match self {
            DirectiveAction::Insert => "INSERT",
            DirectiveAction::Replace => "REPLACE",
            DirectiveAction::Delete => "DELETE",
            DirectiveAction::SplitRole => "SPLIT_ROLE",
            DirectiveAction::AddRole => "ADD_ROLE",
            DirectiveAction::RemoveRole => "REMOVE_ROLE",
            DirectiveAction::Other(s) => s,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s {
            "INSERT" => DirectiveAction::Insert,
            "REPLACE" => DirectiveAction::Replace,
            "DELETE" => DirectiveAction::Delete,
            "SPLIT_ROLE" => DirectiveAction::SplitRole,
            "ADD_ROLE" => DirectiveAction::AddRole,
            "REMOVE_ROLE" => DirectiveAction::RemoveRole,
            other => DirectiveAction::Other(other.to_string()),
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, DirectiveAction::Other(_))
    }
}

impl fmt::Display for DirectiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for DirectiveAction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DirectiveAction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(DirectiveAction::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeDirective {
    pub target_files: Vec<String>,
    pub action: DirectiveAction,
    pub content: String,
}

/// True when `path` is a non-empty relative path that stays inside the
/// directory it is resolved against.
pub fn is_contained_path(path: &str) -> bool {
    if path.is_empty() || path.contains('\\') {
        return false;
    }
    let p = Path::new(path);
    p.components().all(|c| matches!(c, Component::Normal(_)))
}

/// Raw evidence counters for one record. E, U and F are derived from these
/// (see [`crate::evolution`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreState {
    pub success_count: u64,
    pub failure_count: u64,
    pub offered_count: u64,
    pub applied_count: u64,
    pub last_observed_at: Timestamp,
}

/// Counters for a record nobody has observed yet.
pub fn new_score_state(now: Timestamp) -> ScoreState {
    ScoreState {
        success_count: 0,
        failure_count: 0,
        offered_count: 0,
        applied_count: 0,
        last_observed_at: now,
    }
}

/// E/U/F as last computed by an engine operation. Written to
/// evolutions.json next to the counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSnapshot {
    pub effectiveness: f64,
    pub utilization: f64,
    pub freshness: f64,
}

impl Default for MetricsSnapshot {
    fn default() -> Self {
        MetricsSnapshot {
            effectiveness: 0.5,
            utilization: 0.0,
            freshness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordStatus {
    Active,
    Dormant,
    Merged,
    Deleted,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Active => "active",
            RecordStatus::Dormant => "dormant",
            RecordStatus::Merged => "merged",
            RecordStatus::Deleted => "deleted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "active" => Some(RecordStatus::Active),
            "dormant" => Some(RecordStatus::Dormant),
            "merged" => Some(RecordStatus::Merged),
            "deleted" => Some(RecordStatus::Deleted),
            _ => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RecordStatus::Merged | RecordStatus::Deleted)
    }

    /// Allowed edges: active↔dormant, active→merged, active→deleted,
    /// dormant→deleted. Staying in place is always allowed.
    pub fn can_transition_to(self, next: RecordStatus) -> bool {
        use RecordStatus::*;
        self == next
            || matches!(
                (self, next),
                (Active, Dormant)
                    | (Dormant, Active)
                    | (Active, Merged)
                    | (Active, Deleted)
                    | (Dormant, Deleted)
            )
    }
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub id: String,
    pub created_at: Timestamp,
    pub context: String,
    pub change_directive: ChangeDirective,
    pub score_state: ScoreState,
    pub metrics: MetricsSnapshot,
    pub status: RecordStatus,
}

impl EvolutionRecord {
    /// A fresh active record with zeroed counters.
    pub fn new(
        id: impl Into<String>,
        now: Timestamp,
        context: impl Into<String>,
        change_directive: ChangeDirective,
    ) -> Self {
        EvolutionRecord {
            id: id.into(),
            created_at: now,
            context: context.into(),
            change_directive,
            score_state: new_score_state(now),
            metrics: MetricsSnapshot::default(),
            status: RecordStatus::Active,
        }
    }
}

/// Invariant violations of a single record. Empty means the record is sound.
pub fn validate_record(record: &EvolutionRecord) -> Vec<String> {
    let mut out = Vec::new();
    if record.id.trim().is_empty() {
        out.push("record id is empty".to_string());
    }
    if record.context.trim().is_empty() {
        out.push(format!("record {}: context is empty", record.id));
    }
    let directive = &record.change_directive;
    if directive.target_files.is_empty() {
        out.push(format!("record {}: target_files is empty", record.id));
    }
    for path in &directive.target_files {
        if !is_contained_path(path) {
            out.push(format!(
                "record {}: target file `{path}` escapes the skill directory",
                record.id
            ));
        }
    }
    let s = &record.score_state;
    if s.applied_count > s.offered_count {
        out.push(format!(
            "record {}: applied_count {} exceeds offered_count {}",
            record.id, s.applied_count, s.offered_count
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolutionExperience {
    pub records: Vec<EvolutionRecord>,
}

impl EvolutionExperience {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn get(&self, id: &str) -> Option<&EvolutionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut EvolutionRecord> {
        self.records.iter_mut().find(|r| r.id == id)
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = &EvolutionRecord> {
        self.records.iter().filter(|r| !r.status.is_terminal())
    }

    pub fn active(&self) -> impl Iterator<Item = &EvolutionRecord> {
        self.records
            .iter()
            .filter(|r| r.status == RecordStatus::Active)
    }

    /// Record-level violations plus duplicate ids.
    pub fn validate(&self) -> Vec<String> {
        let mut out: Vec<String> = self.records.iter().flat_map(validate_record).collect();
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                out.push(format!("duplicate record id {}", r.id));
            }
        }
        out
    }
}

/// Weights and thresholds behind the composite score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    pub w_e: f64,
    pub w_u: f64,
    pub w_f: f64,
    pub half_life: Duration,
    pub dormancy_threshold: f64,
    pub simplify_capacity: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            w_e: 0.5,
            w_u: 0.3,
            w_f: 0.2,
            half_life: Duration::days(90),
            dormancy_threshold: 0.35,
            simplify_capacity: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scoring config: {0}")]
pub struct ConfigError(pub String);

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let weights = [self.w_e, self.w_u, self.w_f];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError(format!("weights sum to {sum}, expected 1")));
        }
        if self.half_life <= Duration::zero() {
            return Err(ConfigError("half_life must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dormancy_threshold) {
            return Err(ConfigError("dormancy_threshold must lie in [0,1]".into()));
        }
        if self.simplify_capacity == 0 {
            return Err(ConfigError("simplify_capacity must be positive".into()));
        }
        Ok(())
    }

    /// Rescales arbitrary non-negative weights so they sum to one.
    pub fn with_weights(mut self, w_e: f64, w_u: f64, w_f: f64) -> Result<Self, ConfigError> {
        let sum = w_e + w_u + w_f;
        if !(sum.is_finite() && sum > 0.0) {
            return Err(ConfigError("weights must have a positive sum".into()));
        }
        self.w_e = w_e / sum;
        self.w_u = w_u / sum;
        self.w_f = w_f / sum;
        self.validate()?;
        Ok(self)
    }
}

/// In-memory model of a skill directory.
#[derive(Debug, Clone, Default)]
pub struct SwarmSkill {
    pub frontmatter: Frontmatter,
    pub body: String,
    /// role id → persona text (roles/<id>.md)
    pub roles: BTreeMap<String, String>,
    /// None when workflow.md is absent.
    pub workflow: Option<String>,
    /// None when bind.md is absent.
    pub bounds: Option<ExecutionBounds>,
    pub experience: EvolutionExperience,
    /// Files in the directory that none of the fields above account for,
    /// keyed by relative path.
    pub extra_files: BTreeMap<PathBuf, Vec<u8>>,
    pub source_dir: PathBuf,
}

impl PartialEq for SwarmSkill {
    fn eq(&self, other: &Self) -> bool {
        self.frontmatter == other.frontmatter
            && self.body == other.body
            && self.roles == other.roles
            && self.workflow == other.workflow
            && self.bounds == other.bounds
            && self.experience == other.experience
            && self.extra_files == other.extra_files
    }
}

impl SwarmSkill {
    pub fn name(&self) -> &str {
        &self.frontmatter.name
    }

    /// Relative paths of every file this model would write.
    pub fn file_set(&self) -> Vec<String> {
        let mut files = vec!["SKILL.md".to_string()];
        for role in &self.frontmatter.roles {
            if self.roles.contains_key(&role.id) {
                files.push(role.persona_path());
            }
        }
        if self.workflow.is_some() {
            files.push("workflow.md".to_string());
        }
        if self.bounds.is_some() {
            files.push("bind.md".to_string());
        }
        files.push("evolutions.json".to_string());
        for p in self.extra_files.keys() {
            files.push(p.to_string_lossy().into_owned());
        }
        files
    }

    /// Content of a file of the skill by relative path, if the model holds it.
    pub fn file_text(&self, rel: &str) -> Option<&str> {
        match rel {
            "SKILL.md" => None,
            "workflow.md" => self.workflow.as_deref(),
            "bind.md" => self.bounds.as_ref().map(|b| b.raw_text.as_str()),
            _ => {
                if let Some(id) = rel
                    .strip_prefix("roles/")
                    .and_then(|r| r.strip_suffix(".md"))
                {
                    if let Some(text) = self.roles.get(id) {
                        return Some(text);
                    }
                }
                self.extra_files
                    .get(Path::new(rel))
                    .and_then(|b| std::str::from_utf8(b).ok())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2026, 4, 30, 0, 0, 0).unwrap()
    }

    fn record(targets: &[&str], context: &str) -> EvolutionRecord {
        EvolutionRecord::new(
            "evo_20260430_001",
            t0(),
            context,
            ChangeDirective {
                target_files: targets.iter().map(|s| s.to_string()).collect(),
                action: DirectiveAction::SplitRole,
                content: "split".into(),
            },
        )
    }

    #[test]
    fn fresh_score_state_is_zeroed() {
        let s = new_score_state(t0());
        assert_eq!(
            s.success_count + s.failure_count + s.offered_count + s.applied_count,
            0
        );
        assert_eq!(s.last_observed_at, t0());
    }

    #[test]
    fn sound_record_has_no_violations() {
        let r = record(&["roles/copywriter.md", "workflow.md"], "coupled role");
        assert!(validate_record(&r).is_empty());
    }

    #[test]
    fn traversal_is_one_violation() {
        let r = record(&["../etc/x"], "ctx");
        let v = validate_record(&r);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("escapes"));
    }

    #[test]
    fn empty_context_is_one_violation() {
        let r = record(&["workflow.md"], "");
        assert_eq!(validate_record(&r).len(), 1);
    }

    #[test]
    fn contained_paths() {
        assert!(is_contained_path("roles/a.md"));
        assert!(is_contained_path("workflow.md"));
        assert!(!is_contained_path("/etc/passwd"));
        assert!(!is_contained_path("roles/../../x"));
        assert!(!is_contained_path("./x"));
        assert!(!is_contained_path(""));
    }

    #[test]
    fn status_transitions() {
        use RecordStatus::*;
        assert!(Active.can_transition_to(Dormant));
        assert!(Dormant.can_transition_to(Active));
        assert!(Dormant.can_transition_to(Deleted));
        assert!(!Dormant.can_transition_to(Merged));
        assert!(!Merged.can_transition_to(Active));
        assert!(!Deleted.can_transition_to(Dormant));
    }

    #[test]
    fn duplicate_ids_flagged() {
        let r = record(&["workflow.md"], "c");
        let exp = EvolutionExperience {
            records: vec![r.clone(), r],
        };
        assert!(exp.validate().iter().any(|v| v.contains("duplicate")));
    }

    #[test]
    fn bounds_block_parsed() {
        let text = "Keep it short.\n\n```bounds\nmax_turns: 40\ntoken_budget: 120000\nquality_gate: budget within limit\nquality_gate: infant-friendly schedule\n```\n";
        let b = ExecutionBounds::parse(text);
        assert_eq!(b.max_turns, Some(40));
        assert_eq!(b.token_budget, Some(120_000));
        assert_eq!(b.quality_gates.len(), 2);
        assert!(b.problems.is_empty());
        assert_eq!(b.raw_text, text);
    }

    #[test]
    fn bounds_rejects_zero() {
        let b = ExecutionBounds::parse("```bounds\nmax_turns: 0\n```\n");
        assert_eq!(b.max_turns, None);
        assert_eq!(b.problems.len(), 1);
    }

    #[test]
    fn default_config_is_valid() {
        ScoringConfig::default().validate().unwrap();
        let bad = ScoringConfig {
            w_e: 0.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
