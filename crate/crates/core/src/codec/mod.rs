//! Skill directory codec: parse, serialize, validate and index.

pub mod experience;
pub mod frontmatter;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;

use crate::fsutil;
use crate::model::{
    is_contained_path, persona_path, EvolutionExperience, ExecutionBounds, SwarmSkill, TeammateMode,
};

pub const SKILL_FILE: &str = "SKILL.md";
pub const WORKFLOW_FILE: &str = "workflow.md";
pub const BIND_FILE: &str = "bind.md";
pub const EVOLUTIONS_FILE: &str = "evolutions.json";

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("{0}: no SKILL.md found")]
    MissingSkillMd(PathBuf),
    #[error("{path}:{line}: {message}")]
    Frontmatter {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Evolutions { path: PathBuf, message: String },
    #[error("{0}: not valid UTF-8")]
    Utf8(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("refusing to write: duplicate role ids {0:?}")]
    DuplicateRoles(Vec<String>),
    #[error("refusing to write: role id `{0}` is not a safe file name")]
    UnsafeRoleId(String),
}

impl From<(PathBuf, io::Error)> for CodecError {
    fn from((path, source): (PathBuf, io::Error)) -> Self {
        CodecError::Io { path, source }
    }
}

fn read_text(path: &Path) -> Result<Option<String>, CodecError> {
    match fs::read(path) {
        Ok(bytes) => String::from_utf8(bytes)
            .map(Some)
            .map_err(|_| CodecError::Utf8(path.to_path_buf())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(CodecError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Identifier usable as a single path component (skill names, role ids).
pub fn is_safe_identifier(s: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z0-9][A-Za-z0-9._-]*$").unwrap())
        .is_match(s)
}

/// Reads a skill directory. Missing roles, workflow or bind files are not
/// errors here; [`validate`] reports them.
pub fn parse_skill(dir: &Path) -> Result<SwarmSkill, CodecError> {
    let skill_path = dir.join(SKILL_FILE);
    let text =
        read_text(&skill_path)?.ok_or_else(|| CodecError::MissingSkillMd(dir.to_path_buf()))?;
    let (frontmatter, body) = frontmatter::parse(&text).map_err(|e| CodecError::Frontmatter {
        path: skill_path.clone(),
        line: e.line,
        message: e.message,
    })?;

    let mut managed: BTreeSet<String> = [SKILL_FILE, WORKFLOW_FILE, BIND_FILE, EVOLUTIONS_FILE]
        .into_iter()
        .map(String::from)
        .collect();

    let mut roles = BTreeMap::new();
    for id in frontmatter.role_ids() {
        if !is_safe_identifier(id) || roles.contains_key(id) {
            continue;
        }
        let rel = persona_path(id);
        if let Some(persona) = read_text(&dir.join(&rel))? {
            roles.insert(id.to_string(), persona);
            managed.insert(rel);
        }
    }

    let workflow = read_text(&dir.join(WORKFLOW_FILE))?;
    let bounds = read_text(&dir.join(BIND_FILE))?.map(|t| ExecutionBounds::parse(&t));

    let evo_path = dir.join(EVOLUTIONS_FILE);
    let experience = match read_text(&evo_path)? {
        Some(t) => experience::parse(&t).map_err(|message| CodecError::Evolutions {
            path: evo_path.clone(),
            message,
        })?,
        None => EvolutionExperience::default(),
    };

    let extra_files = fsutil::read_tree(dir)?
        .into_iter()
        .filter(|(rel, _)| !managed.contains(rel))
        .map(|(rel, bytes)| (PathBuf::from(rel), bytes))
        .collect();

    Ok(SwarmSkill {
        frontmatter,
        body,
        roles,
        workflow,
        bounds,
        experience,
        extra_files,
        source_dir: dir.to_path_buf(),
    })
}

pub fn render_skill_md(skill: &SwarmSkill) -> String {
    frontmatter::render(&skill.frontmatter) + &skill.body
}

/// Every file of the skill as it would be written, keyed by relative path.
pub fn render_files(skill: &SwarmSkill) -> Result<BTreeMap<String, Vec<u8>>, CodecError> {
    let dups = skill.frontmatter.duplicate_role_ids();
    if !dups.is_empty() {
        return Err(CodecError::DuplicateRoles(dups));
    }
    let mut files = BTreeMap::new();
    files.insert(SKILL_FILE.to_string(), render_skill_md(skill).into_bytes());
    for role in &skill.frontmatter.roles {
        if !is_safe_identifier(&role.id) {
            return Err(CodecError::UnsafeRoleId(role.id.clone()));
        }
        if let Some(persona) = skill.roles.get(&role.id) {
            files.insert(role.persona_path(), persona.clone().into_bytes());
        }
    }
    if let Some(w) = &skill.workflow {
        files.insert(WORKFLOW_FILE.to_string(), w.clone().into_bytes());
    }
    if let Some(b) = &skill.bounds {
        files.insert(BIND_FILE.to_string(), b.raw_text.clone().into_bytes());
    }
    files.insert(
        EVOLUTIONS_FILE.to_string(),
        experience::render(&skill.experience).into_bytes(),
    );
    for (rel, bytes) in &skill.extra_files {
        files
            .entry(rel.to_string_lossy().replace('\\', "/"))
            .or_insert_with(|| bytes.clone());
    }
    Ok(files)
}

/// Writes the skill into `dir` and returns the paths written. Files already
/// in `dir` that the skill does not produce are left alone.
pub fn serialize_skill(skill: &SwarmSkill, dir: &Path) -> Result<Vec<PathBuf>, CodecError> {
    let files = render_files(skill)?;
    let mut written = Vec::with_capacity(files.len());
    for (rel, bytes) in &files {
        written.push(fsutil::write_rel(dir, rel, bytes)?);
    }
    Ok(written)
}

/// Rewrites only evolutions.json.
pub fn write_experience(dir: &Path, exp: &EvolutionExperience) -> Result<(), CodecError> {
    fsutil::write_rel(dir, EVOLUTIONS_FILE, experience::render(exp).as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    Swarm,
    DegradedSingleAgent,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Swarm => "swarm",
            Profile::DegradedSingleAgent => "degraded-single-agent",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.severity, self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub profile: Profile,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    pub fn error_count(&self) -> usize {
        self.errors().count()
    }

    pub fn is_conformant(&self) -> bool {
        self.error_count() == 0
    }

    fn push(&mut self, severity: Severity, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            severity,
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "profile: {}", self.profile)?;
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        write!(
            f,
            "{} error(s), {} warning(s)",
            self.error_count(),
            self.violations.len() - self.error_count()
        )
    }
}

/// Relative paths the body points at: Markdown link targets and inline code
/// spans that look like file paths.
pub fn body_references(body: &str) -> Vec<String> {
    static LINK: OnceLock<Regex> = OnceLock::new();
    static CODE: OnceLock<Regex> = OnceLock::new();
    static PATHLIKE: OnceLock<Regex> = OnceLock::new();
    let link = LINK.get_or_init(|| Regex::new(r"\[[^\]]*\]\(([^)\s]+)\)").unwrap());
    let code = CODE.get_or_init(|| Regex::new(r"`([^`\s]+)`").unwrap());
    let pathlike = PATHLIKE.get_or_init(|| {
        Regex::new(r"^(\.{0,2}/)?([A-Za-z0-9_.-]+/)*[A-Za-z0-9_.-]+(\.(md|json|txt|ya?ml|py|sh|csv))$|^([A-Za-z0-9_.-]+/)+$")
            .unwrap()
    });

    let mut refs = Vec::new();
    for cap in link.captures_iter(body) {
        let target = &cap[1];
        if target.contains("://") || target.starts_with('#') || target.starts_with("mailto:") {
            continue;
        }
        let target = target.split('#').next().unwrap_or(target);
        if !target.is_empty() && !refs.iter().any(|r| r == target) {
            refs.push(target.to_string());
        }
    }
    for cap in code.captures_iter(body) {
        let token = &cap[1];
        if token.contains("://") || !pathlike.is_match(token) {
            continue;
        }
        if !refs.iter().any(|r| r == token) {
            refs.push(token.to_string());
        }
    }
    refs
}

fn reference_resolves(files: &BTreeSet<String>, reference: &str) -> bool {
    match reference.strip_suffix('/') {
        Some(dir) => files.iter().any(|f| f.starts_with(&format!("{dir}/"))),
        None => files.contains(reference),
    }
}

fn check_degraded(skill: &SwarmSkill, report: &mut ValidationReport) {
    let fm = &skill.frontmatter;
    if fm.name.trim().is_empty() {
        report.push(
            Severity::Error,
            SKILL_FILE,
            "frontmatter `name` is missing or empty",
        );
    }
    if fm.description.trim().is_empty() {
        report.push(
            Severity::Error,
            SKILL_FILE,
            "frontmatter `description` is missing or empty",
        );
    }
    if skill.body.trim().is_empty() {
        report.push(Severity::Error, SKILL_FILE, "instruction body is empty");
    }
}

fn check_swarm(skill: &SwarmSkill, report: &mut ValidationReport) {
    let fm = &skill.frontmatter;
    if !fm.name.is_empty() && !is_safe_identifier(&fm.name) {
        report.push(
            Severity::Error,
            SKILL_FILE,
            format!("name `{}` is not filesystem-safe", fm.name),
        );
    }
    if !fm.is_swarm() {
        report.push(
            Severity::Error,
            SKILL_FILE,
            format!(
                "kind is {:?}, expected `{}`",
                fm.kind.as_deref().unwrap_or("<absent>"),
                crate::model::SWARM_KIND
            ),
        );
    }
    match &fm.teammate_mode {
        None => report.push(
            Severity::Warning,
            SKILL_FILE,
            "teammate_mode is not declared",
        ),
        Some(TeammateMode::Other(m)) => report.push(
            Severity::Error,
            SKILL_FILE,
            format!("unknown teammate_mode `{m}` (expected build_mode or plan_mode)"),
        ),
        Some(_) => {}
    }
    if fm.roles.is_empty() {
        report.push(Severity::Error, SKILL_FILE, "roles[] is empty");
    }
    for dup in fm.duplicate_role_ids() {
        report.push(
            Severity::Error,
            SKILL_FILE,
            format!("duplicate role id `{dup}`"),
        );
    }
    for role in &fm.roles {
        if !is_safe_identifier(&role.id) {
            report.push(
                Severity::Error,
                SKILL_FILE,
                format!("role id `{}` is not filesystem-safe", role.id),
            );
        } else if !skill.roles.contains_key(&role.id) {
            report.push(
                Severity::Error,
                role.persona_path(),
                format!("missing persona file for role `{}`", role.id),
            );
        }
    }
    for rel in skill.extra_files.keys() {
        let rel = rel.to_string_lossy();
        if rel.starts_with("roles/") && rel.ends_with(".md") {
            report.push(
                Severity::Warning,
                rel.into_owned(),
                "persona file has no matching role declaration",
            );
        }
    }
    for dep in &fm.dependencies {
        if dep.trim().is_empty() {
            report.push(Severity::Error, SKILL_FILE, "empty dependency name");
        }
    }

    let files: BTreeSet<String> = skill.file_set().into_iter().collect();
    let persona_paths: BTreeSet<String> = fm.roles.iter().map(|r| r.persona_path()).collect();
    for reference in body_references(&skill.body) {
        if persona_paths.contains(&reference) {
            // covered by the persona check above
            continue;
        }
        if !is_contained_path(reference.trim_end_matches('/')) {
            report.push(
                Severity::Error,
                SKILL_FILE,
                format!("body reference `{reference}` points outside the skill directory"),
            );
        } else if !reference_resolves(&files, &reference) {
            report.push(
                Severity::Error,
                SKILL_FILE,
                format!("body references missing file `{reference}`"),
            );
        }
    }

    match &skill.workflow {
        None => report.push(Severity::Error, WORKFLOW_FILE, "workflow.md is missing"),
        Some(w) if w.trim().is_empty() => {
            report.push(Severity::Error, WORKFLOW_FILE, "workflow.md is empty")
        }
        Some(_) => {}
    }
    match &skill.bounds {
        None => report.push(Severity::Error, BIND_FILE, "bind.md is missing"),
        Some(b) => {
            for p in &b.problems {
                let severity = if p.contains("unknown bounds key") {
                    Severity::Warning
                } else {
                    Severity::Error
                };
                report.push(severity, BIND_FILE, p.clone());
            }
        }
    }

    for v in skill.experience.validate() {
        report.push(Severity::Error, EVOLUTIONS_FILE, v);
    }
    for r in &skill.experience.records {
        if !r.change_directive.action.is_known() {
            report.push(
                Severity::Warning,
                EVOLUTIONS_FILE,
                format!(
                    "record {}: unknown directive action `{}`",
                    r.id, r.change_directive.action
                ),
            );
        }
    }
}

/// Conformance report under a profile. The swarm profile includes every
/// degraded-profile check, so swarm conformance implies degraded conformance.
pub fn validate(skill: &SwarmSkill, profile: Profile) -> ValidationReport {
    let mut report = ValidationReport {
        profile,
        violations: Vec::new(),
    };
    check_degraded(skill, &mut report);
    if profile == Profile::Swarm {
        check_swarm(skill, &mut report);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub name: String,
    pub description: String,
    pub kind: Option<String>,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkillIndex {
    pub entries: Vec<IndexEntry>,
    /// One line per subdirectory whose SKILL.md could not be parsed.
    pub warnings: Vec<String>,
}

/// Metadata of every skill directly under `root`. Only SKILL.md frontmatter
/// is read. Hidden directories and directories without SKILL.md are skipped.
pub fn index_skills(root: &Path) -> Result<SkillIndex, CodecError> {
    let io_err = |source| CodecError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        let path = entry.path();
        if path.is_dir() && path.join(SKILL_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();

    let mut index = SkillIndex::default();
    for dir in dirs {
        let skill_path = dir.join(SKILL_FILE);
        let parsed = read_text(&skill_path).and_then(|text| {
            let text = text.unwrap_or_default();
            frontmatter::parse(&text).map_err(|e| CodecError::Frontmatter {
                path: skill_path.clone(),
                line: e.line,
                message: e.message,
            })
        });
        match parsed {
            Ok((fm, _)) => index.entries.push(IndexEntry {
                name: fm.name,
                description: fm.description,
                kind: fm.kind,
                path: dir,
            }),
            Err(e) => index.warnings.push(e.to_string()),
        }
    }
    index
        .entries
        .sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.path.cmp(&b.path)));
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_found() {
        let body = "Load `roles/transportation.md` and [the workflow](workflow.md#phase). \
                    See `bind.md`, the `roles/` folder, `read_file`, and https://example.com.";
        let refs = body_references(body);
        assert_eq!(
            refs,
            vec![
                "workflow.md",
                "roles/transportation.md",
                "bind.md",
                "roles/"
            ]
        );
    }

    #[test]
    fn escaping_reference_detected() {
        assert_eq!(
            body_references("see [x](../secret.md)"),
            vec!["../secret.md"]
        );
    }

    #[test]
    fn safe_identifiers() {
        assert!(is_safe_identifier("travel-planning-swarm"));
        assert!(is_safe_identifier("budget_reviewer.v2"));
        assert!(!is_safe_identifier("../x"));
        assert!(!is_safe_identifier("a b"));
        assert!(!is_safe_identifier(""));
    }
}
