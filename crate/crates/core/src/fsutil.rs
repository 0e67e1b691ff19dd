//! Whole-tree file helpers shared by the codec, archive store and tests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Advisory lock file held inside a skill directory while it is mutated.
pub const LOCK_FILE: &str = ".swarmskills.lock";

/// Relative path (forward slashes) → bytes for every regular file under
/// `root`. Hidden entries (leading `.`) are skipped, which also excludes the
/// lock file.
pub fn read_tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, (PathBuf, io::Error)> {
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

fn walk(
    root: &Path,
    dir: &Path,
    out: &mut BTreeMap<String, Vec<u8>>,
) -> Result<(), (PathBuf, io::Error)> {
    let entries = fs::read_dir(dir).map_err(|e| (dir.to_path_buf(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| (dir.to_path_buf(), e))?;
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        paths.push(entry.path());
    }
    paths.sort();
    for path in paths {
        let meta = fs::metadata(&path).map_err(|e| (path.clone(), e))?;
        if meta.is_dir() {
            walk(root, &path, out)?;
        } else if meta.is_file() {
            let bytes = fs::read(&path).map_err(|e| (path.clone(), e))?;
            out.insert(rel_string(root, &path), bytes);
        }
    }
    Ok(())
}

fn rel_string(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Single digest over a file map: path, length and content of every entry.
pub fn tree_hash(files: &BTreeMap<String, Vec<u8>>) -> String {
    let mut h = Sha256::new();
    for (path, bytes) in files {
        h.update(path.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// Writes `bytes` to `root/rel`, creating parent directories.
pub fn write_rel(root: &Path, rel: &str, bytes: &[u8]) -> Result<PathBuf, (PathBuf, io::Error)> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| (parent.to_path_buf(), e))?;
    }
    fs::write(&path, bytes).map_err(|e| (path.clone(), e))?;
    Ok(path)
}

/// Makes the visible tree under `root` equal to `files`: writes every entry
/// and removes regular files that are not listed. Empty directories left
/// behind are pruned.
pub fn sync_tree(
    root: &Path,
    files: &BTreeMap<String, Vec<u8>>,
) -> Result<(), (PathBuf, io::Error)> {
    let current = read_tree(root)?;
    for stale in current.keys().filter(|k| !files.contains_key(*k)) {
        let path = root.join(stale);
        fs::remove_file(&path).map_err(|e| (path.clone(), e))?;
        prune_empty_parents(root, &path);
    }
    for (rel, bytes) in files {
        if current.get(rel) != Some(bytes) {
            write_rel(root, rel, bytes)?;
        }
    }
    Ok(())
}

fn prune_empty_parents(root: &Path, file: &Path) {
    let mut dir = file.parent();
    while let Some(d) = dir {
        if d == root || fs::remove_dir(d).is_err() {
            break;
        }
        dir = d.parent();
    }
}

/// Recursively copies the visible tree of `from` into `to`.
pub fn copy_tree(from: &Path, to: &Path) -> Result<(), (PathBuf, io::Error)> {
    for (rel, bytes) in read_tree(from)? {
        write_rel(to, &rel, &bytes)?;
    }
    Ok(())
}
