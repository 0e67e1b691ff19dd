mod common;

use common::*;
use proptest::prelude::*;
use swarmskills_core::codec::{index_skills, parse_skill};
use swarmskills_core::disclosure::{load_metadata, load_skill, LoadError, Stage};
use swarmskills_core::model::{
    ChangeDirective, DirectiveAction, EvolutionRecord, RecordStatus, ScoreState, ScoringConfig,
    SwarmSkill,
};

/// S computed straight from the definitions, independent of the engine.
fn oracle_s(succ: u64, fail: u64, offered: u64, applied: u64) -> f64 {
    let e = (succ as f64 + 1.0) / (succ as f64 + fail as f64 + 2.0);
    let u = if offered == 0 {
        0.0
    } else {
        applied as f64 / offered as f64
    };
    0.5 * e + 0.3 * u + 0.2 * 1.0
}

fn record(id: &str, day: u32, counters: (u64, u64, u64, u64)) -> EvolutionRecord {
    let created = ts(2026, 5, day, 0);
    let mut r = EvolutionRecord::new(
        id,
        created,
        format!("context for {id}"),
        ChangeDirective {
            target_files: vec!["workflow.md".into()],
            action: DirectiveAction::Insert,
            content: format!("guidance from {id}"),
        },
    );
    r.score_state = ScoreState {
        success_count: counters.0,
        failure_count: counters.1,
        offered_count: counters.2,
        applied_count: counters.3,
        last_observed_at: ts(2026, 6, 1, 0),
    };
    r
}

fn travel_with(records: Vec<EvolutionRecord>) -> SwarmSkill {
    let mut skill = parse_skill(&skill_fixture("travel-planning-swarm")).unwrap();
    skill.experience.records = records;
    skill
}

#[test]
fn metadata_digest_lists_fixtures() {
    let index = index_skills(&fixtures().join("skills")).unwrap();
    let digest = load_metadata(&index);
    assert_eq!(digest.lines().count(), index.entries.len());
    assert!(digest.contains("travel-planning-swarm: Plans multi-constraint"));
    // descriptions only, never body text
    assert!(!digest.contains("Spawn one teammate"));
}

#[test]
fn higher_score_first_and_offered_bumped() {
    let high = (2, 1, 1, 1);
    let low = (3, 5, 0, 0);
    assert!((oracle_s(high.0, high.1, high.2, high.3) - 0.8).abs() < 1e-12);
    assert!((oracle_s(low.0, low.1, low.2, low.3) - 0.4).abs() < 1e-12);

    // low-score record listed first and older, so the order really comes from S
    let skill = travel_with(vec![
        record("evo_20260501_001", 1, low),
        record("evo_20260502_001", 2, high),
    ]);
    let now = ts(2026, 6, 1, 0);
    let out = load_skill(&skill, &ScoringConfig::default(), 1_000_000, now).unwrap();
    assert_eq!(
        out.context.offered_record_ids,
        ["evo_20260502_001", "evo_20260501_001"]
    );
    assert!((out.context.offered_scores[0] - 0.8).abs() < 1e-12);
    assert!((out.context.offered_scores[1] - 0.4).abs() < 1e-12);
    assert_eq!(out.context.stage, Stage::Full);
    for (before, after) in skill.experience.records.iter().zip(&out.experience.records) {
        assert_eq!(
            after.score_state.offered_count,
            before.score_state.offered_count + 1
        );
    }
    // the input skill is not modified
    assert_eq!(skill.experience.records[0].score_state.offered_count, 0);
}

#[test]
fn budget_covering_base_only_offers_nothing() {
    let skill = travel_with(vec![record("evo_20260501_001", 1, (0, 0, 0, 0))]);
    let big = load_skill(
        &skill,
        &ScoringConfig::default(),
        1_000_000,
        ts(2026, 6, 1, 0),
    )
    .unwrap();
    let base: usize = big
        .context
        .loaded_fragments
        .iter()
        .filter(|f| !f.source.starts_with("evolutions.json#"))
        .map(|f| f.len())
        .sum();
    let out = load_skill(&skill, &ScoringConfig::default(), base, ts(2026, 6, 1, 0)).unwrap();
    assert_eq!(out.context.used(), base);
    assert_eq!(out.context.stage, Stage::Full);
    assert!(out.context.offered_record_ids.is_empty());
    assert_eq!(out.experience.records[0].score_state.offered_count, 0);
    let sources: Vec<_> = out
        .context
        .loaded_fragments
        .iter()
        .map(|f| f.source.as_str())
        .collect();
    assert_eq!(
        sources,
        [
            "SKILL.md",
            "roles/transportation.md",
            "roles/accommodation.md",
            "roles/attraction.md",
            "roles/plan-synthesizer.md",
            "roles/budget-reviewer.md",
            "workflow.md",
            "bind.md"
        ]
    );
}

#[test]
fn dormant_record_never_offered() {
    let mut r = record("evo_20260501_001", 1, (9, 0, 1, 1));
    r.status = RecordStatus::Dormant;
    let skill = travel_with(vec![r]);
    for budget in [100_000, 10_000_000] {
        let out = load_skill(&skill, &ScoringConfig::default(), budget, ts(2026, 6, 1, 0)).unwrap();
        assert!(out.context.offered_record_ids.is_empty());
        assert_eq!(out.experience.records[0].status, RecordStatus::Dormant);
    }
}

#[test]
fn low_active_record_is_demoted_on_load() {
    // E = 1/12, U = 0, F = 1: S ≈ 0.2417
    let skill = travel_with(vec![record("evo_20260501_001", 1, (0, 10, 0, 0))]);
    let out = load_skill(
        &skill,
        &ScoringConfig::default(),
        1_000_000,
        ts(2026, 6, 1, 0),
    )
    .unwrap();
    assert!(out.context.offered_record_ids.is_empty());
    assert_eq!(out.experience.records[0].status, RecordStatus::Dormant);
}

#[test]
fn budget_errors() {
    let skill = travel_with(vec![]);
    let cfg = ScoringConfig::default();
    assert_eq!(
        load_skill(&skill, &cfg, 0, ts(2026, 6, 1, 0)).unwrap_err(),
        LoadError::ZeroBudget
    );
    let err = load_skill(&skill, &cfg, 10, ts(2026, 6, 1, 0)).unwrap_err();
    assert!(matches!(
        err,
        LoadError::BudgetBelowMinimum { budget: 10, .. }
    ));
    assert!(err.to_string().contains("budget below minimum disclosure"));
}

#[test]
fn ties_go_to_older_record() {
    let skill = travel_with(vec![
        record("evo_20260503_001", 3, (1, 0, 0, 0)),
        record("evo_20260501_001", 1, (1, 0, 0, 0)),
    ]);
    let out = load_skill(
        &skill,
        &ScoringConfig::default(),
        1_000_000,
        ts(2026, 6, 1, 0),
    )
    .unwrap();
    assert_eq!(
        out.context.offered_record_ids,
        ["evo_20260501_001", "evo_20260503_001"]
    );
}

fn skills_with_records() -> Vec<SwarmSkill> {
    let mut out: Vec<SwarmSkill> = all_skill_fixtures()
        .iter()
        .map(|d| parse_skill(d).unwrap())
        .collect();
    out.push(travel_with(vec![
        record("evo_20260501_001", 1, (2, 1, 1, 1)),
        record("evo_20260502_001", 2, (3, 5, 0, 0)),
        record("evo_20260503_001", 3, (0, 0, 0, 0)),
    ]));
    out
}

proptest! {
    #[test]
    fn budget_monotone(which in 0usize..6, a in 1usize..20_000, b in 1usize..20_000) {
        let skills = skills_with_records();
        let skill = &skills[which % skills.len()];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let now = ts(2026, 6, 1, 0);
        let cfg = ScoringConfig::default();
        let small = load_skill(skill, &cfg, lo, now);
        let large = load_skill(skill, &cfg, hi, now);
        if let Ok(small) = small {
            let large = large.unwrap();
            let n = small.context.loaded_fragments.len();
            prop_assert!(large.context.loaded_fragments.len() >= n);
            prop_assert_eq!(&large.context.loaded_fragments[..n], &small.context.loaded_fragments[..]);
        }
    }

    #[test]
    fn load_invariants(which in 0usize..6, budget in 1usize..30_000) {
        let skills = skills_with_records();
        let skill = &skills[which % skills.len()];
        let now = ts(2026, 6, 1, 0);
        if let Ok(out) = load_skill(skill, &ScoringConfig::default(), budget, now) {
            let ctx = &out.context;
            prop_assert!(ctx.used() <= budget);
            prop_assert!(ctx.offered_scores.windows(2).all(|w| w[0] >= w[1]));
            let bumped: u64 = out.experience.records.iter().map(|r| r.score_state.offered_count).sum::<u64>()
                - skill.experience.records.iter().map(|r| r.score_state.offered_count).sum::<u64>();
            prop_assert_eq!(bumped, ctx.offered_record_ids.len() as u64);
            let files = skill.file_set();
            for f in &ctx.loaded_fragments {
                let inside = files.contains(&f.source)
                    || f.source
                        .strip_prefix("evolutions.json#")
                        .is_some_and(|id| skill.experience.get(id).is_some());
                prop_assert!(inside, "{}", f.source);
            }
        }
    }
}
