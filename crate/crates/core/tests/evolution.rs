mod common;

use chrono::Duration;
use common::*;
use proptest::prelude::*;
use swarmskills_core::evolution::{
    composite, effectiveness, freshness, observe_outcome, recompute_status, score_table, Outcome,
};
use swarmskills_core::model::{
    new_score_state, ChangeDirective, DirectiveAction, EvolutionExperience, EvolutionRecord,
    RecordStatus, ScoreState, ScoringConfig,
};

fn state(s: u64, f: u64, o: u64, a: u64) -> ScoreState {
    ScoreState {
        success_count: s,
        failure_count: f,
        offered_count: o,
        applied_count: a,
        last_observed_at: ts(2026, 4, 30, 0),
    }
}

fn rec(id: &str, s: ScoreState) -> EvolutionRecord {
    let mut r = EvolutionRecord::new(
        id,
        ts(2026, 4, 30, 0),
        "ctx",
        ChangeDirective {
            target_files: vec!["workflow.md".into()],
            action: DirectiveAction::Insert,
            content: "x".into(),
        },
    );
    r.score_state = s;
    r
}

#[test]
fn freshness_at_whole_half_lives() {
    let cfg = ScoringConfig::default();
    let s = new_score_state(ts(2026, 1, 1, 0));
    for k in 0..=5i64 {
        let f = freshness(&s, ts(2026, 1, 1, 0) + Duration::days(90 * k), &cfg).unwrap();
        assert!((f - 2f64.powi(-(k as i32))).abs() < 1e-12, "k={k}");
    }
}

#[test]
fn e_grid_strictly_monotone() {
    for s in 0..20u64 {
        for f in 0..20u64 {
            let here = effectiveness(&state(s, f, 0, 0));
            assert!(effectiveness(&state(s + 1, f, 0, 0)) > here);
            assert!(effectiveness(&state(s, f + 1, 0, 0)) < here);
        }
    }
}

#[test]
fn dormancy_boundary_built_from_oracle() {
    // search the smallest failure count whose S is still >= threshold,
    // using the closed form rather than the engine
    let cfg = ScoringConfig::default();
    let s_of = |f: u64| 0.5 * (1.0 / (2.0 + f as f64)) + 0.2;
    let f = (0..100)
        .rev()
        .find(|&f| s_of(f) >= cfg.dormancy_threshold)
        .unwrap();
    let r = rec("evo_20260430_001", state(0, f, 0, 0));
    assert_eq!(
        recompute_status(&r, ts(2026, 4, 30, 0), &cfg).unwrap(),
        RecordStatus::Active
    );
    let r = observe_outcome(&r, Outcome::Failure, ts(2026, 4, 30, 0), &cfg).unwrap();
    assert_eq!(r.status, RecordStatus::Dormant);
    // a success brings it back
    let r = observe_outcome(&r, Outcome::Success, ts(2026, 4, 30, 0), &cfg).unwrap();
    assert_eq!(r.status, RecordStatus::Active);
}

#[test]
fn score_table_rows() {
    let cfg = ScoringConfig::default();
    let mut exp = EvolutionExperience::default();
    assert_eq!(
        score_table(&exp, ts(2026, 4, 30, 0), &cfg).unwrap(),
        "id status E U F S\n"
    );
    exp.records
        .push(rec("evo_20260430_001", new_score_state(ts(2026, 4, 30, 0))));
    exp.records.push(rec("evo_20260430_002", state(3, 0, 2, 2)));
    let table = score_table(&exp, ts(2026, 4, 30, 0), &cfg).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(
        rows[1],
        "evo_20260430_001 active 0.5000 0.0000 1.0000 0.4500"
    );
    assert!(rows[0].starts_with("evo_20260430_002 "));
}

proptest! {
    #[test]
    fn freshness_non_increasing(a in 0i64..3_000_000_000, b in 0i64..3_000_000_000) {
        let cfg = ScoringConfig::default();
        let s = new_score_state(ts(2026, 1, 1, 0));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let f_lo = freshness(&s, ts(2026, 1, 1, 0) + Duration::seconds(lo), &cfg).unwrap();
        let f_hi = freshness(&s, ts(2026, 1, 1, 0) + Duration::seconds(hi), &cfg).unwrap();
        prop_assert!(f_hi <= f_lo);
        prop_assert!(f_hi > 0.0 && f_lo <= 1.0);
    }

    #[test]
    fn composite_invariant_under_weight_rescale(
        k in 0.01f64..100.0,
        we in 0.01f64..1.0, wu in 0.01f64..1.0, wf in 0.01f64..1.0,
        s in 0u64..50, f in 0u64..50, o in 0u64..50, frac in 0.0f64..=1.0, days in 0i64..400,
    ) {
        let a = ((o as f64) * frac).floor() as u64;
        let st = state(s, f, o, a);
        let now = ts(2026, 4, 30, 0) + Duration::days(days);
        let base = ScoringConfig::default().with_weights(we, wu, wf).unwrap();
        let scaled = ScoringConfig::default().with_weights(we * k, wu * k, wf * k).unwrap();
        let x = composite(&st, now, &base).unwrap();
        let y = composite(&st, now, &scaled).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn status_recompute_idempotent(s in 0u64..30, f in 0u64..30, o in 0u64..30, days in 0i64..1000) {
        let cfg = ScoringConfig::default();
        let mut r = rec("evo_20260430_001", state(s, f, o, o / 2));
        let now = ts(2026, 4, 30, 0) + Duration::days(days);
        r.status = recompute_status(&r, now, &cfg).unwrap();
        prop_assert_eq!(recompute_status(&r, now, &cfg).unwrap(), r.status);
    }
}
