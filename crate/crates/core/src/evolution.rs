//! Record scoring: effectiveness, utilization, freshness and their weighted
//! composite, plus the counter updates driven by observed sessions.
//!
//! * E = (1 + successes) / (2 + successes + failures), the posterior mean
//!   under a uniform Beta prior.
//! * U = applied / offered, zero before the first offer.
//! * F = 2^(-Δt / half_life), Δt measured from the last observation.
//! * S = w_e·E + w_u·U + w_f·F.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    EvolutionRecord, MetricsSnapshot, RecordStatus, ScoreState, ScoringConfig, Timestamp,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvolutionError {
    #[error("clock skew: now {now} precedes last observation {last}")]
    ClockSkew { now: Timestamp, last: Timestamp },
    #[error("record {id} is {status} and cannot change")]
    Terminal { id: String, status: RecordStatus },
    #[error(
        "record {id}: applied without a matching offer (applied {applied}, offered {offered})"
    )]
    AppliedWithoutOffer {
        id: String,
        applied: u64,
        offered: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "success" => Some(Outcome::Success),
            "failure" => Some(Outcome::Failure),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        })
    }
}

pub fn effectiveness(s: &ScoreState) -> f64 {
    (1.0 + s.success_count as f64) / (2.0 + s.success_count as f64 + s.failure_count as f64)
}

pub fn utilization(s: &ScoreState) -> f64 {
    if s.offered_count == 0 {
        0.0
    } else {
        s.applied_count as f64 / s.offered_count as f64
    }
}

pub fn freshness(
    s: &ScoreState,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<f64, EvolutionError> {
    if now < s.last_observed_at {
        return Err(EvolutionError::ClockSkew {
            now,
            last: s.last_observed_at,
        });
    }
    let elapsed = seconds(now - s.last_observed_at);
    let half_life = seconds(config.half_life);
    Ok((-elapsed / half_life).exp2())
}

fn seconds(d: chrono::Duration) -> f64 {
    d.num_seconds() as f64 + f64::from(d.subsec_nanos()) * 1e-9
}

/// All four scores of one state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub effectiveness: f64,
    pub utilization: f64,
    pub freshness: f64,
    pub composite: f64,
}

impl Scores {
    pub fn metrics(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            effectiveness: self.effectiveness,
            utilization: self.utilization,
            freshness: self.freshness,
        }
    }
}

pub fn scores(
    s: &ScoreState,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<Scores, EvolutionError> {
    let e = effectiveness(s);
    let u = utilization(s);
    let f = freshness(s, now, config)?;
    Ok(Scores {
        effectiveness: e,
        utilization: u,
        freshness: f,
        composite: config.w_e * e + config.w_u * u + config.w_f * f,
    })
}

pub fn composite(
    s: &ScoreState,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<f64, EvolutionError> {
    scores(s, now, config).map(|sc| sc.composite)
}

/// Rewrites the stored E/U/F snapshot as of `now`.
pub fn refresh_metrics(
    record: &mut EvolutionRecord,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<Scores, EvolutionError> {
    let sc = scores(&record.score_state, now, config)?;
    record.metrics = sc.metrics();
    Ok(sc)
}

/// Status a non-terminal record should hold at `now`: dormant below the
/// threshold, active otherwise. Terminal statuses are returned unchanged.
pub fn recompute_status(
    record: &EvolutionRecord,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<RecordStatus, EvolutionError> {
    if record.status.is_terminal() {
        return Ok(record.status);
    }
    let s = composite(&record.score_state, now, config)?;
    Ok(if s < config.dormancy_threshold {
        RecordStatus::Dormant
    } else {
        RecordStatus::Active
    })
}

fn ensure_live(record: &EvolutionRecord) -> Result<(), EvolutionError> {
    if record.status.is_terminal() {
        return Err(EvolutionError::Terminal {
            id: record.id.clone(),
            status: record.status,
        });
    }
    Ok(())
}

/// Counts one task outcome against the record and re-derives its status.
pub fn observe_outcome(
    record: &EvolutionRecord,
    outcome: Outcome,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<EvolutionRecord, EvolutionError> {
    ensure_live(record)?;
    if now < record.score_state.last_observed_at {
        return Err(EvolutionError::ClockSkew {
            now,
            last: record.score_state.last_observed_at,
        });
    }
    let mut next = record.clone();
    match outcome {
        Outcome::Success => next.score_state.success_count += 1,
        Outcome::Failure => next.score_state.failure_count += 1,
    }
    next.score_state.last_observed_at = now;
    next.status = recompute_status(&next, now, config)?;
    refresh_metrics(&mut next, now, config)?;
    Ok(next)
}

/// Notes that the executing team followed the record.
pub fn record_applied(record: &EvolutionRecord) -> Result<EvolutionRecord, EvolutionError> {
    ensure_live(record)?;
    let s = &record.score_state;
    if s.applied_count + 1 > s.offered_count {
        return Err(EvolutionError::AppliedWithoutOffer {
            id: record.id.clone(),
            applied: s.applied_count,
            offered: s.offered_count,
        });
    }
    let mut next = record.clone();
    next.score_state.applied_count += 1;
    next.metrics.utilization = utilization(&next.score_state);
    Ok(next)
}

/// Score table over every record, highest S first (ties by id). One header
/// line, then `id status E U F S` rows with four decimals.
pub fn score_table(
    experience: &crate::model::EvolutionExperience,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<String, EvolutionError> {
    let mut rows: Vec<(f64, &EvolutionRecord, Scores)> = Vec::new();
    for r in &experience.records {
        let sc = scores(&r.score_state, now, config)?;
        rows.push((sc.composite, r, sc));
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let mut out = String::from("id status E U F S\n");
    for (_, r, sc) in rows {
        out.push_str(&format!(
            "{} {} {:.4} {:.4} {:.4} {:.4}\n",
            r.id, r.status, sc.effectiveness, sc.utilization, sc.freshness, sc.composite
        ));
    }
    Ok(out)
}
