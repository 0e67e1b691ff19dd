use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Duration;
use serde::Deserialize;
use swarmskills_core::codec::experience::parse_timestamp;
use swarmskills_core::model::{ScoringConfig, Timestamp};

/// Contents of the `--config` TOML file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub skills_root: Option<PathBuf>,
    pub interactive: Option<bool>,
    pub clock_override: Option<String>,
    #[serde(default)]
    pub scoring: ScoringOverrides,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringOverrides {
    pub w_e: Option<f64>,
    pub w_u: Option<f64>,
    pub w_f: Option<f64>,
    pub half_life_days: Option<f64>,
    pub dormancy_threshold: Option<f64>,
    pub simplify_capacity: Option<usize>,
}

impl ScoringOverrides {
    fn apply(&self, mut cfg: ScoringConfig) -> Result<ScoringConfig> {
        if self.w_e.is_some() || self.w_u.is_some() || self.w_f.is_some() {
            let w_e = self.w_e.unwrap_or(cfg.w_e);
            let w_u = self.w_u.unwrap_or(cfg.w_u);
            let w_f = self.w_f.unwrap_or(cfg.w_f);
            cfg = cfg.with_weights(w_e, w_u, w_f)?;
        }
        if let Some(days) = self.half_life_days {
            if !(days.is_finite() && days > 0.0) {
                bail!("half_life_days must be positive");
            }
            cfg.half_life = Duration::milliseconds((days * 86_400_000.0).round() as i64);
        }
        if let Some(t) = self.dormancy_threshold {
            cfg.dormancy_threshold = t;
        }
        if let Some(c) = self.simplify_capacity {
            cfg.simplify_capacity = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Effective settings after merging the config file, environment and flags.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub skills_root: PathBuf,
    pub scoring: ScoringConfig,
    pub interactive: bool,
    pub clock_override: Option<Timestamp>,
}

impl CliConfig {
    /// Flags (and the environment, which clap folds into them) win over the
    /// file; the file wins over defaults.
    pub fn resolve(
        file: Option<&Path>,
        skills_root: Option<PathBuf>,
        interactive: bool,
        clock_override: Option<&str>,
    ) -> Result<Self> {
        let fc = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let scoring = fc.scoring.apply(ScoringConfig::default())?;
        let clock = clock_override.map(str::to_owned).or(fc.clock_override);
        let clock_override = clock
            .map(|s| parse_timestamp(&s).map_err(|e| anyhow::anyhow!("clock override: {e}")))
            .transpose()?;
        Ok(CliConfig {
            skills_root: skills_root
                .or(fc.skills_root)
                .unwrap_or_else(|| PathBuf::from(".")),
            scoring,
            interactive: interactive || fc.interactive.unwrap_or(false),
            clock_override,
        })
    }

    pub fn now(&self) -> Timestamp {
        self.clock_override.unwrap_or_else(chrono::Utc::now)
    }
}
