//! Versioned, immutable snapshots of a skill directory.
//!
//! Layout, next to the skill directory:
//!
//! ```text
//! <parent>/.archive/<skill-dir-name>/<version>/manifest.json
//! <parent>/.archive/<skill-dir-name>/<version>/files/<relative path>
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GovernanceError;
use crate::codec::experience::{format_timestamp, parse_timestamp};
use crate::fsutil;
use crate::model::Timestamp;

const MANIFEST: &str = "manifest.json";
const FILES_DIR: &str = "files";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotReason {
    PreRebuild,
    PreRollback,
}

impl fmt::Display for SnapshotReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SnapshotReason::PreRebuild => "pre_rebuild",
            SnapshotReason::PreRollback => "pre_rollback",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveSnapshot {
    pub version: u32,
    pub created_at: Timestamp,
    pub reason: SnapshotReason,
    pub files: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    created_at: String,
    reason: SnapshotReason,
    /// relative path → sha-256 hex
    files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ArchiveStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GovernanceError + '_ {
    move |source| GovernanceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ArchiveStore {
    /// Store rooted at an explicit directory.
    pub fn at(root: impl Into<PathBuf>) -> Self {
        ArchiveStore { root: root.into() }
    }

    /// The default store for a skill directory.
    pub fn for_skill(skill_dir: &Path) -> Self {
        let name = skill_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "skill".into());
        let parent = skill_dir.parent().unwrap_or_else(|| Path::new("."));
        ArchiveStore::at(parent.join(".archive").join(name))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stored versions, ascending.
    pub fn versions(&self) -> Result<Vec<u32>, GovernanceError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if let Ok(v) = entry.file_name().to_string_lossy().parse::<u32>() {
                if entry.path().join(MANIFEST).is_file() {
                    out.push(v);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Archives `files` as the next version. The version directory is
    /// assembled under a temporary name and renamed into place, so a reader
    /// never sees a partial snapshot.
    pub fn write(
        &self,
        files: &BTreeMap<String, Vec<u8>>,
        reason: SnapshotReason,
        now: Timestamp,
    ) -> Result<ArchiveSnapshot, GovernanceError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let version = self.versions()?.last().map_or(1, |v| v + 1);
        let final_dir = self.root.join(version.to_string());
        if final_dir.exists() {
            return Err(GovernanceError::Archive(format!(
                "version {version} already exists at {}",
                final_dir.display()
            )));
        }
        let tmp = self.root.join(format!(".tmp-{version}"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
        }
        let manifest = Manifest {
            version,
            created_at: format_timestamp(&now),
            reason,
            files: files
                .iter()
                .map(|(k, v)| (k.clone(), fsutil::sha256_hex(v)))
                .collect(),
        };
        let result = (|| {
            let files_dir = tmp.join(FILES_DIR);
            fs::create_dir_all(&files_dir).map_err(io_err(&files_dir))?;
            for (rel, bytes) in files {
                fsutil::write_rel(&files_dir, rel, bytes)
                    .map_err(|(path, source)| GovernanceError::Io { path, source })?;
            }
            let json = serde_json::to_string_pretty(&manifest)
                .map_err(|e| GovernanceError::Archive(e.to_string()))?;
            let mpath = tmp.join(MANIFEST);
            fs::write(&mpath, json + "\n").map_err(io_err(&mpath))?;
            fs::rename(&tmp, &final_dir).map_err(io_err(&final_dir))
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result?;
        Ok(ArchiveSnapshot {
            version,
            created_at: now,
            reason,
            files: files.clone(),
        })
    }

    /// Snapshots the visible tree of `skill_dir`.
    pub fn snapshot(
        &self,
        skill_dir: &Path,
        reason: SnapshotReason,
        now: Timestamp,
    ) -> Result<ArchiveSnapshot, GovernanceError> {
        let files = fsutil::read_tree(skill_dir)
            .map_err(|(path, source)| GovernanceError::Io { path, source })?;
        self.write(&files, reason, now)
    }

    /// Reads a version back, checking every file against its manifest hash.
    pub fn load(&self, version: u32) -> Result<ArchiveSnapshot, GovernanceError> {
        let dir = self.root.join(version.to_string());
        let mpath = dir.join(MANIFEST);
        if !mpath.is_file() {
            return Err(GovernanceError::UnknownVersion {
                version,
                available: self.versions()?,
            });
        }
        let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| GovernanceError::Archive(format!("{}: {e}", mpath.display())))?;
        let files_dir = dir.join(FILES_DIR);
        let files = if files_dir.exists() {
            fsutil::read_tree(&files_dir)
                .map_err(|(path, source)| GovernanceError::Io { path, source })?
        } else {
            BTreeMap::new()
        };
        let listed: Vec<&String> = manifest.files.keys().collect();
        let found: Vec<&String> = files.keys().collect();
        if listed != found {
            return Err(GovernanceError::Archive(format!(
                "version {version}: file list differs from manifest"
            )));
        }
        for (rel, bytes) in &files {
            if manifest.files[rel] != fsutil::sha256_hex(bytes) {
                return Err(GovernanceError::Archive(format!(
                    "version {version}: {rel} does not match its manifest hash"
                )));
            }
        }
        let created_at = parse_timestamp(&manifest.created_at).map_err(GovernanceError::Archive)?;
        Ok(ArchiveSnapshot {
            version: manifest.version,
            created_at,
            reason: manifest.reason,
            files,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn versions_increase_and_load_verifies() {
        let tmp = tempfile::tempdir().unwrap();
        let store = ArchiveStore::at(tmp.path().join("a"));
        assert!(store.versions().unwrap().is_empty());
        let now = chrono::Utc.with_ymd_and_hms(2026, 5, 1, 0, 0, 0).unwrap();
        let mut files = BTreeMap::new();
        files.insert("SKILL.md".to_string(), b"x".to_vec());
        files.insert("roles/a.md".to_string(), b"a".to_vec());
        assert_eq!(
            store
                .write(&files, SnapshotReason::PreRebuild, now)
                .unwrap()
                .version,
            1
        );
        assert_eq!(
            store
                .write(&files, SnapshotReason::PreRollback, now)
                .unwrap()
                .version,
            2
        );
        let loaded = store.load(1).unwrap();
        assert_eq!(loaded.files, files);
        assert_eq!(loaded.reason, SnapshotReason::PreRebuild);

        fs::write(store.root().join("1/files/roles/a.md"), b"tampered").unwrap();
        assert!(matches!(store.load(1), Err(GovernanceError::Archive(_))));
        match store.load(9) {
            Err(GovernanceError::UnknownVersion { available, .. }) => {
                assert_eq!(available, vec![1, 2])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_location_is_beside_the_skill() {
        let store = ArchiveStore::for_skill(Path::new("/x/skills/travel"));
        assert_eq!(store.root(), Path::new("/x/skills/.archive/travel"));
    }
}
