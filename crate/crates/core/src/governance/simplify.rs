//! SIMPLIFY: partitioning the live records into deletions, merges,
//! refinements and retentions, then applying that plan.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::GovernanceError;
use crate::evolution;
use crate::model::{
    ChangeDirective, EvolutionExperience, EvolutionRecord, RecordStatus, ScoreState, ScoringConfig,
    SwarmSkill, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergeGroup {
    /// At least two record ids.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Refinement {
    pub id: String,
    pub context: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SimplifyPlan {
    pub deletions: Vec<String>,
    pub merges: Vec<MergeGroup>,
    pub refinements: Vec<Refinement>,
    pub retentions: Vec<String>,
    /// Ids of the replacement records created for `merges`, same order.
    /// Filled in by [`simplify`].
    pub merged_into: Vec<String>,
}

impl SimplifyPlan {
    /// Checks that every live record id lands in exactly one partition and
    /// that no unknown or terminal id is mentioned.
    pub fn check(&self, experience: &EvolutionExperience) -> Result<(), String> {
        let live: BTreeSet<&str> = experience.non_terminal().map(|r| r.id.as_str()).collect();
        let mut seen: BTreeMap<String, &'static str> = BTreeMap::new();
        let mut claim = |id: &str, part: &'static str| -> Result<(), String> {
            if !live.contains(id) {
                return Err(format!("{part} names `{id}`, which is not a live record"));
            }
            if let Some(prev) = seen.insert(id.to_string(), part) {
                return Err(format!("`{id}` appears in both {prev} and {part}"));
            }
            Ok(())
        };
        for id in &self.deletions {
            claim(id, "deletions")?;
        }
        for g in &self.merges {
            if g.members.len() < 2 {
                return Err(format!(
                    "merge group {:?} has fewer than two members",
                    g.members
                ));
            }
            for id in &g.members {
                claim(id, "merges")?;
            }
        }
        for r in &self.refinements {
            claim(&r.id, "refinements")?;
            if r.context.trim().is_empty() {
                return Err(format!("refinement of `{}` has an empty context", r.id));
            }
        }
        for id in &self.retentions {
            claim(id, "retentions")?;
        }
        if let Some(missing) = live.iter().find(|id| !seen.contains_key(**id)) {
            return Err(format!("`{missing}` is not assigned to any partition"));
        }
        Ok(())
    }
}

/// Decides how to prune an experience. Implementations may consult a model
/// service; [`StubCurator`] is purely mechanical.
pub trait Curator {
    fn plan(
        &self,
        experience: &EvolutionExperience,
        config: &ScoringConfig,
        now: Timestamp,
    ) -> Result<SimplifyPlan, String>;
}

/// Deletes records that are both low-scoring and stale, merges records that
/// share an action and target-file set, and keeps everything else.
#[derive(Debug, Clone, Copy)]
pub struct StubCurator {
    /// Records need freshness below this as well as S below the dormancy
    /// threshold to be deleted.
    pub stale_freshness: f64,
}

impl Default for StubCurator {
    fn default() -> Self {
        StubCurator {
            stale_freshness: 0.25,
        }
    }
}

/// Records with the same action over the same target set are duplicates.
type MergeKey = (String, BTreeSet<String>);

fn merge_key(d: &ChangeDirective) -> MergeKey {
    (
        d.action.as_str().to_string(),
        d.target_files.iter().cloned().collect(),
    )
}

impl Curator for StubCurator {
    fn plan(
        &self,
        experience: &EvolutionExperience,
        config: &ScoringConfig,
        now: Timestamp,
    ) -> Result<SimplifyPlan, String> {
        let mut plan = SimplifyPlan::default();
        let mut groups: Vec<(MergeKey, Vec<String>)> = Vec::new();
        for record in experience.non_terminal() {
            let sc =
                evolution::scores(&record.score_state, now, config).map_err(|e| e.to_string())?;
            if sc.composite < config.dormancy_threshold && sc.freshness < self.stale_freshness {
                plan.deletions.push(record.id.clone());
                continue;
            }
            let key = merge_key(&record.change_directive);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, ids)) => ids.push(record.id.clone()),
                None => groups.push((key, vec![record.id.clone()])),
            }
        }
        for (_, ids) in groups {
            if ids.len() >= 2 {
                plan.merges.push(MergeGroup { members: ids });
            } else {
                plan.retentions.extend(ids);
            }
        }
        Ok(plan)
    }
}

pub(crate) fn next_record_id(experience: &EvolutionExperience, now: Timestamp) -> String {
    let day = now.format("%Y%m%d");
    (1u32..)
        .map(|seq| format!("evo_{day}_{seq:03}"))
        .find(|id| experience.get(id).is_none())
        .expect("sequence space exhausted")
}

fn merged_record(
    members: &[&EvolutionRecord],
    id: String,
    now: Timestamp,
    config: &ScoringConfig,
) -> Result<EvolutionRecord, GovernanceError> {
    let first = members[0];
    let mut contents: Vec<&str> = Vec::new();
    for m in members {
        let c = m.change_directive.content.trim();
        if !contents.contains(&c) {
            contents.push(c);
        }
    }
    let context = members
        .iter()
        .map(|m| format!("[{}] {}", m.id, m.context.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    let mut state = ScoreState {
        last_observed_at: first.score_state.last_observed_at,
        ..crate::model::new_score_state(now)
    };
    for m in members {
        let s = &m.score_state;
        state.success_count += s.success_count;
        state.failure_count += s.failure_count;
        state.offered_count += s.offered_count;
        state.applied_count += s.applied_count;
        state.last_observed_at = state.last_observed_at.max(s.last_observed_at);
    }
    let mut record = EvolutionRecord::new(
        id,
        now,
        context,
        ChangeDirective {
            target_files: first.change_directive.target_files.clone(),
            action: first.change_directive.action.clone(),
            content: contents.join("\n\n"),
        },
    );
    record.score_state = state;
    evolution::refresh_metrics(&mut record, now, config)?;
    Ok(record)
}

/// Applies the curator's plan to a copy of the skill. Only the experience
/// changes; the plan is rejected whole if it breaks the partition rule.
pub fn simplify(
    skill: &SwarmSkill,
    curator: &dyn Curator,
    config: &ScoringConfig,
    now: Timestamp,
) -> Result<(SwarmSkill, SimplifyPlan), GovernanceError> {
    let mut plan = curator
        .plan(&skill.experience, config, now)
        .map_err(GovernanceError::Curator)?;
    plan.check(&skill.experience)
        .map_err(GovernanceError::InvalidPlan)?;

    let mut out = skill.clone();
    let exp = &mut out.experience;
    for id in &plan.deletions {
        if let Some(r) = exp.get_mut(id) {
            r.status = RecordStatus::Deleted;
        }
    }
    for r in &plan.refinements {
        if let Some(rec) = exp.get_mut(&r.id) {
            rec.context = r.context.clone();
        }
    }
    let mut merged_into = Vec::new();
    for group in &plan.merges {
        let members: Vec<EvolutionRecord> = group
            .members
            .iter()
            .filter_map(|id| exp.get(id).cloned())
            .collect();
        let refs: Vec<&EvolutionRecord> = members.iter().collect();
        let id = next_record_id(exp, now);
        let replacement = merged_record(&refs, id.clone(), now, config)?;
        for m in &group.members {
            if let Some(r) = exp.get_mut(m) {
                r.status = RecordStatus::Merged;
            }
        }
        exp.records.push(replacement);
        merged_into.push(id);
    }
    for r in exp.records.iter_mut().filter(|r| !r.status.is_terminal()) {
        evolution::refresh_metrics(r, now, config)?;
    }
    plan.merged_into = merged_into;
    Ok((out, plan))
}
