//! evolutions.json reading and writing.
//!
//! Written form:
//!
//! ```json
//! {
//!   "records": [
//!     {
//!       "id": "evo_20260430_001",
//!       "created_at": "2026-04-30T00:00:00Z",
//!       "context": "...",
//!       "change_directive": { "target_files": [...], "action": "SPLIT_ROLE", "content": "..." },
//!       "metrics": { "effectiveness_score": 0.5, "utilization_rate": 0.0, "freshness_decay": 1.0 },
//!       "counters": { "success": 0, "failure": 0, "offered": 0, "applied": 0 },
//!       "last_observed_at": "2026-04-30T00:00:00Z",
//!       "status": "active"
//!     }
//!   ]
//! }
//! ```
//!
//! Reading also accepts a bare array of records, or a single record object.
//! A record missing `created_at` takes the date encoded in an
//! `evo_<yyyymmdd>_<seq>` id; missing counters are zero and a missing status
//! is `active`.

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{
    ChangeDirective, EvolutionExperience, EvolutionRecord, MetricsSnapshot, RecordStatus,
    ScoreState, Timestamp,
};

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct MetricsWire {
    effectiveness_score: f64,
    utilization_rate: f64,
    freshness_decay: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct CountersWire {
    #[serde(default)]
    success: u64,
    #[serde(default)]
    failure: u64,
    #[serde(default)]
    offered: u64,
    #[serde(default)]
    applied: u64,
}

#[derive(Debug, Deserialize)]
struct RecordIn {
    id: String,
    #[serde(default)]
    created_at: Option<String>,
    context: String,
    change_directive: ChangeDirective,
    #[serde(default)]
    metrics: Option<MetricsWire>,
    #[serde(default)]
    counters: Option<CountersWire>,
    #[serde(default)]
    last_observed_at: Option<String>,
    #[serde(default)]
    status: Option<String>,
}

#[derive(Debug, Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    created_at: String,
    context: &'a str,
    change_directive: &'a ChangeDirective,
    metrics: MetricsWire,
    counters: CountersWire,
    last_observed_at: String,
    status: &'static str,
}

#[derive(Debug, Serialize)]
struct FileOut<'a> {
    records: Vec<RecordOut<'a>>,
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid RFC 3339 timestamp `{s}`: {e}"))
}

fn date_from_id(id: &str) -> Option<Timestamp> {
    let digits = id.strip_prefix("evo_")?.get(..8)?;
    let date = NaiveDate::parse_from_str(digits, "%Y%m%d").ok()?;
    Some(date.and_hms_opt(0, 0, 0)?.and_utc())
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn convert(r: RecordIn) -> Result<EvolutionRecord, String> {
    let created_at = match &r.created_at {
        Some(s) => parse_timestamp(s)?,
        None => {
            date_from_id(&r.id).ok_or_else(|| format!("record {}: missing created_at", r.id))?
        }
    };
    let last_observed_at = match &r.last_observed_at {
        Some(s) => parse_timestamp(s)?,
        None => created_at,
    };
    let status = match &r.status {
        Some(s) => RecordStatus::parse(s)
            .ok_or_else(|| format!("record {}: unknown status `{s}`", r.id))?,
        None => RecordStatus::Active,
    };
    let c = r.counters.unwrap_or_default();
    let metrics = r
        .metrics
        .map(|m| MetricsSnapshot {
            effectiveness: m.effectiveness_score,
            utilization: m.utilization_rate,
            freshness: m.freshness_decay,
        })
        .unwrap_or_default();
    Ok(EvolutionRecord {
        id: r.id,
        created_at,
        context: r.context,
        change_directive: r.change_directive,
        score_state: ScoreState {
            success_count: c.success,
            failure_count: c.failure,
            offered_count: c.offered,
            applied_count: c.applied,
            last_observed_at,
        },
        metrics,
        status,
    })
}

pub fn parse(text: &str) -> Result<EvolutionExperience, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let raw: Vec<RecordIn> = match value {
        serde_json::Value::Object(mut map) if map.contains_key("records") => {
            serde_json::from_value(map.remove("records").unwrap_or_default())
        }
        list @ serde_json::Value::Array(_) => serde_json::from_value(list),
        single => serde_json::from_value(single).map(|r| vec![r]),
    }
    .map_err(|e| e.to_string())?;
    let records = raw.into_iter().map(convert).collect::<Result<_, _>>()?;
    Ok(EvolutionExperience { records })
}

pub fn render(exp: &EvolutionExperience) -> String {
    let records = exp
        .records
        .iter()
        .map(|r| RecordOut {
            id: &r.id,
            created_at: format_timestamp(&r.created_at),
            context: &r.context,
            change_directive: &r.change_directive,
            metrics: MetricsWire {
                effectiveness_score: round6(r.metrics.effectiveness),
                utilization_rate: round6(r.metrics.utilization),
                freshness_decay: round6(r.metrics.freshness),
            },
            counters: CountersWire {
                success: r.score_state.success_count,
                failure: r.score_state.failure_count,
                offered: r.score_state.offered_count,
                applied: r.score_state.applied_count,
            },
            last_observed_at: format_timestamp(&r.score_state.last_observed_at),
            status: r.status.as_str(),
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&FileOut { records })
        .expect("record serialization cannot fail");
    out.push('\n');
    out
}
