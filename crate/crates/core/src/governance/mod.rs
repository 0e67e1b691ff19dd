//! Governance of the evolution experience: SIMPLIFY, REBUILD and ROLLBACK
//! over a versioned archive, with an advisory lock per skill directory.

pub mod archive;
pub mod rebuild;
pub mod simplify;

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub use archive::{ArchiveSnapshot, ArchiveStore, SnapshotReason};
pub use rebuild::{Rewriter, StubRewriter, EVOLVED_HEADING};
pub use simplify::{simplify, Curator, MergeGroup, Refinement, SimplifyPlan, StubCurator};

use crate::codec::{self, CodecError, Profile};
use crate::evolution::EvolutionError;
use crate::fsutil::{self, LOCK_FILE};
use crate::model::{
    EvolutionExperience, EvolutionRecord, RecordStatus, ScoringConfig, SwarmSkill, Timestamp,
};

#[derive(Debug, thiserror::Error)]
pub enum GovernanceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Scoring(#[from] EvolutionError),
    #[error("{0} is locked by another writer (remove {LOCK_FILE} if stale)")]
    Locked(PathBuf),
    #[error("archive: {0}")]
    Archive(String),
    #[error("unknown archive version {version}; available versions: {available:?}")]
    UnknownVersion { version: u32, available: Vec<u32> },
    #[error("curator failed: {0}")]
    Curator(String),
    #[error("curator plan rejected: {0}")]
    InvalidPlan(String),
    #[error("nothing to rebuild: no active records")]
    NoActiveRecords,
    #[error("rewriter failed: {0}")]
    Rewrite(String),
    #[error("rebuilt skill is not conformant: {0}")]
    NonConformant(String),
    #[error("writing the rebuilt skill failed ({cause}); previous content restored")]
    WriteRestored { cause: String },
}

impl From<(PathBuf, std::io::Error)> for GovernanceError {
    fn from((path, source): (PathBuf, std::io::Error)) -> Self {
        GovernanceError::Io { path, source }
    }
}

/// Advisory single-writer lock: `.swarmskills.lock` created exclusively in
/// the skill directory and removed on drop.
#[derive(Debug)]
pub struct SkillLock {
    path: PathBuf,
}

impl SkillLock {
    pub fn acquire(skill_dir: &Path) -> Result<Self, GovernanceError> {
        let path = skill_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(SkillLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(GovernanceError::Locked(skill_dir.to_path_buf()))
            }
            Err(source) => Err(GovernanceError::Io { path, source }),
        }
    }
}

impl Drop for SkillLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// True once the live (active or dormant) records reach capacity.
pub fn should_govern(experience: &EvolutionExperience, config: &ScoringConfig) -> bool {
    experience.non_terminal().count() >= config.simplify_capacity
}

/// Writes `experience` as the skill's evolutions.json under the lock.
pub fn persist_experience(
    dir: &Path,
    experience: &EvolutionExperience,
) -> Result<(), GovernanceError> {
    let _lock = SkillLock::acquire(dir)?;
    codec::write_experience(dir, experience)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RebuildOptions {
    /// Fold dormant records as well as active ones.
    pub include_dormant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebuildReport {
    pub skill: SwarmSkill,
    pub archived_version: u32,
    pub folded: Vec<String>,
}

/// Records a rebuild would fold, oldest first.
pub fn fold_plan(
    experience: &EvolutionExperience,
    options: RebuildOptions,
) -> Vec<EvolutionRecord> {
    let mut records: Vec<EvolutionRecord> = experience
        .records
        .iter()
        .filter(|r| {
            r.status == RecordStatus::Active
                || (options.include_dormant && r.status == RecordStatus::Dormant)
        })
        .cloned()
        .collect();
    records.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then_with(|| a.id.cmp(&b.id))
    });
    records
}

/// Folds the skill's records into its base files and clears the experience.
///
/// The rewrite and validation happen in memory first. Only a conformant
/// result is archived-then-written; if writing fails part way, the archived
/// tree is put back, so the directory ends up either fully rebuilt or
/// byte-identical to before.
pub fn rebuild(
    dir: &Path,
    rewriter: &dyn Rewriter,
    store: &ArchiveStore,
    options: RebuildOptions,
    now: Timestamp,
) -> Result<RebuildReport, GovernanceError> {
    let _lock = SkillLock::acquire(dir)?;
    let skill = codec::parse_skill(dir)?;
    if !skill.experience.active().any(|_| true) {
        return Err(GovernanceError::NoActiveRecords);
    }
    let records = fold_plan(&skill.experience, options);
    let mut rebuilt = rewriter
        .rewrite(&skill, &records)
        .map_err(GovernanceError::Rewrite)?;
    rebuilt.experience = EvolutionExperience::default();
    rebuilt.source_dir = dir.to_path_buf();

    let report = codec::validate(&rebuilt, Profile::Swarm);
    if !report.is_conformant() {
        let errors: Vec<String> = report.errors().map(ToString::to_string).collect();
        return Err(GovernanceError::NonConformant(errors.join("; ")));
    }
    let files = codec::render_files(&rebuilt)?;

    let snapshot = store.snapshot(dir, SnapshotReason::PreRebuild, now)?;
    if let Err((path, source)) = fsutil::sync_tree(dir, &files) {
        let cause = format!("{}: {source}", path.display());
        fsutil::sync_tree(dir, &snapshot.files)?;
        return Err(GovernanceError::WriteRestored { cause });
    }
    Ok(RebuildReport {
        skill: rebuilt,
        archived_version: snapshot.version,
        folded: records.into_iter().map(|r| r.id).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollbackReport {
    /// Snapshot of the state that was replaced.
    pub pre_rollback_version: u32,
    pub restored_version: u32,
}

/// Restores `version` byte-exactly, snapshotting the current state first.
pub fn rollback(
    dir: &Path,
    store: &ArchiveStore,
    version: u32,
    now: Timestamp,
) -> Result<RollbackReport, GovernanceError> {
    let _lock = SkillLock::acquire(dir)?;
    let target = store.load(version)?;
    let pre = store.snapshot(dir, SnapshotReason::PreRollback, now)?;
    fsutil::sync_tree(dir, &target.files)?;
    Ok(RollbackReport {
        pre_rollback_version: pre.version,
        restored_version: version,
    })
}

/// Simplifies the experience on disk under the lock. Base files are not
/// touched.
pub fn simplify_dir(
    dir: &Path,
    curator: &dyn Curator,
    config: &ScoringConfig,
    now: Timestamp,
) -> Result<(SwarmSkill, SimplifyPlan), GovernanceError> {
    let _lock = SkillLock::acquire(dir)?;
    let skill = codec::parse_skill(dir)?;
    let (updated, plan) = simplify(&skill, curator, config, now)?;
    if updated.experience != skill.experience {
        codec::write_experience(dir, &updated.experience)?;
    }
    Ok((updated, plan))
}
