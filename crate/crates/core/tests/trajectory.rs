mod common;

use std::fs;

use common::*;
use proptest::prelude::*;
use serde_json::json;
use swarmskills_core::codec::{parse_skill, validate, Profile};
use swarmskills_core::model::{DirectiveAction, RecordStatus};
use swarmskills_core::trajectory::{
    analyze_friction, detect_create_signal, distill_candidate, emit_records, parse_trajectory,
    parse_trajectory_str, DetectorConfig, DistillationInput, EventType, FrictionKind,
    StubSynthesizer, Synthesizer, Trajectory, TrajectoryError, TrajectoryEvent,
};

fn ev(minute: u32, actor: &str, kind: EventType, payload: serde_json::Value) -> TrajectoryEvent {
    TrajectoryEvent::new(
        ts(2026, 4, 30, 9) + chrono::Duration::minutes(minute as i64),
        actor,
        kind,
        payload,
    )
}

fn spawn(minute: u32, actor: &str) -> TrajectoryEvent {
    ev(
        minute,
        actor,
        EventType::SpawnRole,
        json!({"persona_text": format!("# {actor}\n")}),
    )
}

fn start(minute: u32, actor: &str, task: &str, category: &str) -> TrajectoryEvent {
    ev(
        minute,
        actor,
        EventType::TaskStart,
        json!({"task": task, "category": category}),
    )
}

fn dep(minute: u32, from: &str, to: &str) -> TrajectoryEvent {
    ev(
        minute,
        "leader",
        EventType::Dependency,
        json!({"from_task": from, "to_task": to}),
    )
}

fn loaded(skill: &str) -> TrajectoryEvent {
    ev(0, "leader", EventType::SkillLoaded, json!({"skill": skill}))
}

#[test]
fn travel_log_has_five_spawns() {
    let t = parse_trajectory(&trajectory_fixture("travel-session.jsonl")).unwrap();
    assert_eq!(t.of(EventType::SpawnRole).count(), 5);
}

#[test]
fn empty_file_is_empty_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("empty.jsonl");
    fs::write(&p, "").unwrap();
    assert!(parse_trajectory(&p).unwrap().is_empty());
}

#[test]
fn malformed_line_reports_number() {
    let text = fs::read_to_string(trajectory_fixture("two-role-minimal.jsonl")).unwrap();
    let broken = text.replacen("\n", "\n{not json\n", 2);
    match parse_trajectory_str(&broken) {
        Err(TrajectoryError::Line { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn create_signal_examples() {
    let two = Trajectory {
        events: vec![
            spawn(0, "a"),
            spawn(1, "b"),
            start(2, "a", "t1", "x"),
            start(3, "b", "t2", "y"),
            dep(4, "t1", "t2"),
        ],
    };
    let s = detect_create_signal(&two);
    assert!(s.detected, "{}", s.summary);
    assert!(s.summary.contains("t1 -> t2"));

    let three_no_deps = Trajectory {
        events: vec![
            spawn(0, "a"),
            spawn(1, "b"),
            spawn(2, "c"),
            start(3, "a", "t1", "x"),
        ],
    };
    let s = detect_create_signal(&three_no_deps);
    assert!(!s.detected);
    assert!(s.summary.contains("no dependency"));

    let one_self = Trajectory {
        events: vec![spawn(0, "a"), start(1, "a", "t1", "x"), dep(2, "t1", "t1")],
    };
    let s = detect_create_signal(&one_self);
    assert!(!s.detected);
    assert!(s.summary.contains("fewer than 2"));
}

#[test]
fn travel_distills_to_conformant_five_role_skill() {
    let t = parse_trajectory(&trajectory_fixture("travel-session.jsonl")).unwrap();
    let staging = tempfile::tempdir().unwrap();
    let skill = distill_candidate(&t, &StubSynthesizer, staging.path()).unwrap();
    assert_eq!(skill.frontmatter.roles.len(), 5);
    assert!(skill.experience.is_empty());
    assert!(validate(&skill, Profile::Swarm).is_conformant());
    assert!(skill
        .frontmatter
        .description
        .starts_with("5-role workflow: "));
    // personas are carried over verbatim
    let original =
        fs::read_to_string(skill_fixture("travel-planning-swarm").join("roles/attraction.md"))
            .unwrap();
    assert_eq!(skill.roles["attraction"], original);
    assert_eq!(
        skill.bounds.as_ref().unwrap().max_turns,
        Some(t.of(EventType::Message).count() as u64)
    );

    // a second run lands in a fresh sibling directory
    let again = distill_candidate(&t, &StubSynthesizer, staging.path()).unwrap();
    assert_ne!(again.source_dir, skill.source_dir);
    assert_eq!(parse_skill(&again.source_dir).unwrap(), again);
}

#[test]
fn minimal_log_keeps_single_edge() {
    let t = parse_trajectory(&trajectory_fixture("two-role-minimal.jsonl")).unwrap();
    let staging = tempfile::tempdir().unwrap();
    let skill = distill_candidate(&t, &StubSynthesizer, staging.path()).unwrap();
    let workflow = skill.workflow.unwrap();
    assert_eq!(workflow.matches(" --> ").count(), 1);
    assert!(workflow.contains("```mermaid"));
}

#[test]
fn failing_signal_writes_nothing() {
    let t = Trajectory {
        events: vec![spawn(0, "a"), spawn(1, "b")],
    };
    let staging = tempfile::tempdir().unwrap();
    let err = distill_candidate(&t, &StubSynthesizer, staging.path()).unwrap_err();
    assert!(matches!(err, TrajectoryError::NoCreateSignal(_)));
    assert_eq!(fs::read_dir(staging.path()).unwrap().count(), 0);
}

struct BrokenSynth;

impl Synthesizer for BrokenSynth {
    fn synthesize(
        &self,
        input: &DistillationInput,
    ) -> Result<std::collections::BTreeMap<String, String>, String> {
        let mut files = StubSynthesizer.synthesize(input)?;
        files.remove("bind.md");
        Ok(files)
    }
}

#[test]
fn nonconformant_candidate_is_removed() {
    let t = parse_trajectory(&trajectory_fixture("two-role-minimal.jsonl")).unwrap();
    let staging = tempfile::tempdir().unwrap();
    let err = distill_candidate(&t, &BrokenSynth, staging.path()).unwrap_err();
    assert!(matches!(err, TrajectoryError::NonConformant(_)), "{err}");
    assert_eq!(fs::read_dir(staging.path()).unwrap().count(), 0);
}

#[test]
fn unwritable_staging_is_an_error() {
    let t = parse_trajectory(&trajectory_fixture("two-role-minimal.jsonl")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("occupied");
    fs::write(&file, "").unwrap();
    assert!(matches!(
        distill_candidate(&t, &StubSynthesizer, &file),
        Err(TrajectoryError::Io { .. })
    ));
}

#[test]
fn travel_log_yields_one_split_role() {
    let skill = parse_skill(&skill_fixture("travel-planning-swarm")).unwrap();
    let t = parse_trajectory(&trajectory_fixture("travel-session.jsonl")).unwrap();
    let findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    assert_eq!(findings.len(), 1, "{findings:#?}");
    let f = &findings[0];
    assert_eq!(f.kind, FrictionKind::RoleCoupling);
    assert_eq!(f.proposed_directive.action, DirectiveAction::SplitRole);
    assert_eq!(
        f.proposed_directive.target_files,
        vec!["roles/copywriter.md", "workflow.md"]
    );
    assert!(f.evidence.iter().all(|&i| i < t.events.len()));
    assert!(f
        .evidence
        .iter()
        .all(|&i| t.events[i].actor == "budget-reviewer"));
}

#[test]
fn followup_logs_are_frictionless() {
    let skill = parse_skill(&skill_fixture("travel-planning-swarm")).unwrap();
    for name in ["travel-followup.jsonl", "travel-rebuilt.jsonl"] {
        let t = parse_trajectory(&trajectory_fixture(name)).unwrap();
        assert!(
            analyze_friction(&t, &skill, &DetectorConfig::default())
                .unwrap()
                .is_empty(),
            "{name}"
        );
    }
}

#[test]
fn three_task_cycle_is_one_finding() {
    let skill = parse_skill(&skill_fixture("release-notes")).unwrap();
    let t = Trajectory {
        events: vec![
            loaded("release-notes"),
            dep(1, "A", "B"),
            dep(2, "B", "C"),
            dep(3, "C", "A"),
        ],
    };
    let findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].kind, FrictionKind::CircularDependency);
    assert_eq!(findings[0].evidence, vec![1, 2, 3]);
}

#[test]
fn quiet_log_has_no_findings() {
    let skill = parse_skill(&skill_fixture("release-notes")).unwrap();
    let t = Trajectory {
        events: vec![
            loaded("release-notes"),
            spawn(1, "a"),
            start(2, "a", "t", "x"),
        ],
    };
    assert!(analyze_friction(&t, &skill, &DetectorConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn missing_skill_loaded_is_refused() {
    let skill = parse_skill(&skill_fixture("release-notes")).unwrap();
    let t = Trajectory {
        events: vec![loaded("something-else")],
    };
    assert!(matches!(
        analyze_friction(&t, &skill, &DetectorConfig::default()),
        Err(TrajectoryError::SkillNotLoaded(_))
    ));
}

#[test]
fn redundant_messages_need_three_normalized_copies() {
    let skill = parse_skill(&skill_fixture("release-notes")).unwrap();
    let msg = |m, text: &str| ev(m, "a", EventType::Message, json!({"to": "b", "text": text}));
    let mut events = vec![
        loaded("release-notes"),
        msg(1, "Any update?"),
        msg(2, "any   UPDATE?"),
    ];
    let t = Trajectory {
        events: events.clone(),
    };
    assert!(analyze_friction(&t, &skill, &DetectorConfig::default())
        .unwrap()
        .is_empty());
    events.push(msg(3, " Any update? "));
    // other direction does not count toward the same pair
    events.push(ev(
        4,
        "b",
        EventType::Message,
        json!({"to": "a", "text": "any update?"}),
    ));
    let t = Trajectory { events };
    let findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].kind, FrictionKind::RedundantCommunication);
    assert_eq!(findings[0].evidence, vec![1, 2, 3]);
}

#[test]
fn success_without_gate_evidence_is_premature() {
    let skill = parse_skill(&skill_fixture("incident-response-swarm")).unwrap();
    let end = |m, note: &str| {
        ev(
            m,
            "investigator",
            EventType::TaskEnd,
            json!({"task": "t", "status": "done", "note": note}),
        )
    };
    let outcome = ev(
        9,
        "leader",
        EventType::Outcome,
        json!({"status": "success"}),
    );
    let t = Trajectory {
        events: vec![
            loaded("incident-response-swarm"),
            end(1, "Root cause identified"),
            outcome.clone(),
        ],
    };
    let findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].kind, FrictionKind::PrematureTermination);
    assert!(findings[0]
        .proposed_directive
        .content
        .contains("stakeholders notified"));
    assert!(!findings[0]
        .proposed_directive
        .content
        .contains("root cause"));
    assert_eq!(findings[0].proposed_directive.target_files, vec!["bind.md"]);

    let t = Trajectory {
        events: vec![
            loaded("incident-response-swarm"),
            end(1, "root cause identified"),
            end(2, "stakeholders notified"),
            outcome,
        ],
    };
    assert!(analyze_friction(&t, &skill, &DetectorConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn feedback_becomes_insert() {
    let skill = parse_skill(&skill_fixture("incident-response-swarm")).unwrap();
    let t = parse_trajectory_str(
        &fs::read_to_string(trajectory_fixture("incident-feedback.jsonl"))
            .unwrap()
            .replace("{{skill}}", "incident-response-swarm"),
    )
    .unwrap();
    let findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].kind, FrictionKind::ExplicitSignal);
    assert_eq!(
        findings[0].proposed_directive.action,
        DirectiveAction::Insert
    );
    assert!(findings[0]
        .proposed_directive
        .content
        .starts_with("Post the first status update"));
}

#[test]
fn emitted_records_are_fresh_and_sequential() {
    let skill = parse_skill(&skill_fixture("travel-planning-swarm")).unwrap();
    let t = parse_trajectory(&trajectory_fixture("travel-session.jsonl")).unwrap();
    let mut findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    let now = ts(2026, 4, 30, 10);
    let exp = emit_records(&findings, &skill, now);
    assert_eq!(exp.len(), 1);
    let r = &exp.records[0];
    assert_eq!(r.id, "evo_20260430_001");
    assert_eq!(r.status, RecordStatus::Active);
    assert_eq!(
        (
            r.metrics.effectiveness,
            r.metrics.utilization,
            r.metrics.freshness
        ),
        (0.5, 0.0, 1.0)
    );
    assert!(r.context.contains("role_coupling"));

    assert_eq!(emit_records(&[], &skill, now), skill.experience);

    findings.push(findings[0].clone());
    let exp = emit_records(&findings, &skill, now);
    let ids: Vec<_> = exp.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["evo_20260430_001", "evo_20260430_002"]);

    // existing ids are skipped
    let mut seeded = skill.clone();
    seeded.experience = emit_records(&findings[..1], &skill, now);
    let exp = emit_records(&findings[..1], &seeded, now);
    assert_eq!(exp.records[1].id, "evo_20260430_002");
}

#[test]
fn patch_leaves_base_files_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = copy_fixture("travel-planning-swarm", tmp.path());
    let before = tree(&dir);
    let skill = parse_skill(&dir).unwrap();
    let t = parse_trajectory(&trajectory_fixture("travel-session.jsonl")).unwrap();
    let findings = analyze_friction(&t, &skill, &DetectorConfig::default()).unwrap();
    let exp = emit_records(&findings, &skill, ts(2026, 4, 30, 10));
    swarmskills_core::governance::persist_experience(&dir, &exp).unwrap();
    let mut after = tree(&dir);
    assert!(after.remove("evolutions.json").is_some());
    assert_eq!(before, after);
}

fn arb_log() -> impl Strategy<Value = Vec<(u8, u8, u8, u8)>> {
    // (kind, actor, task a, task b) with kind 0 = spawn, 1 = task_start, 2 = dependency
    prop::collection::vec((0u8..3, 0u8..4, 0u8..5, 0u8..5), 0..24)
}

fn build(events: &[(u8, u8, u8, u8)], minutes: &[u32]) -> Trajectory {
    let actors = ["a", "b", "c", "d"];
    let tasks = ["t0", "t1", "t2", "t3", "t4"];
    Trajectory {
        events: events
            .iter()
            .zip(minutes)
            .map(|(&(k, a, x, y), &m)| match k {
                0 => spawn(m, actors[a as usize]),
                1 => start(m, actors[a as usize], tasks[x as usize], "c"),
                _ => dep(m, tasks[x as usize], tasks[y as usize]),
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn create_signal_ignores_order(log in arb_log(), seed in any::<u64>()) {
        // all events share one timestamp, so any permutation keeps time order
        let same: Vec<u32> = vec![0; log.len()];
        let t = build(&log, &same);
        let mut shuffled = log.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let u = build(&shuffled, &same);
        prop_assert_eq!(detect_create_signal(&t).detected, detect_create_signal(&u).detected);
    }

    #[test]
    fn distilled_candidates_always_conform(log in arb_log()) {
        let minutes: Vec<u32> = (0..log.len() as u32).collect();
        let t = build(&log, &minutes);
        if detect_create_signal(&t).detected {
            let staging = tempfile::tempdir().unwrap();
            let skill = distill_candidate(&t, &StubSynthesizer, staging.path()).unwrap();
            prop_assert!(validate(&skill, Profile::Swarm).is_conformant());
        }
    }
}
