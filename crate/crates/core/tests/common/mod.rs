#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use swarmskills_core::fsutil;
use swarmskills_core::model::Timestamp;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn skill_fixture(name: &str) -> PathBuf {
    fixtures().join("skills").join(name)
}

pub fn trajectory_fixture(name: &str) -> PathBuf {
    fixtures().join("trajectories").join(name)
}

pub fn all_skill_fixtures() -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(fixtures().join("skills"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

/// Copies a fixture skill into `<tmp>/skills/<name>` and returns that path.
pub fn copy_fixture(name: &str, tmp: &Path) -> PathBuf {
    let dest = tmp.join("skills").join(name);
    fsutil::copy_tree(&skill_fixture(name), &dest).unwrap();
    dest
}

pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fsutil::read_tree(dir).unwrap()
}

pub fn ts(y: i32, m: u32, d: u32, h: u32) -> Timestamp {
    Utc.with_ymd_and_hms(y, m, d, h, 0, 0).unwrap()
}

/// SPLIT_ROLE record for the travel-planning fixture, in single-object
/// form without counters or timestamps.
pub const TRAVEL_SPLIT_RECORD: &str = r#"{
  "id": "evo_20260430_001",
  "context": "Budget reviewer lost time switching between cost auditing and writing the sharing post.",
  "change_directive": {
    "target_files": ["roles/copywriter.md", "workflow.md"],
    "action": "SPLIT_ROLE",
    "content": "Add a 'Copywriting Expert' role that writes the sharing post. Route the approved plan to it while the final budget review runs."
  },
  "metrics": {
    "effectiveness_score": 0.5,
    "utilization_rate": 0.0,
    "freshness_decay": 1.0
  }
}"#;
