//! Progressive disclosure: the metadata digest a leader sees for every
//! skill, and the staged load of one selected skill under a character
//! budget.
//!
//! Fragments are appended in a fixed order (SKILL.md body, persona files in
//! declaration order, workflow.md, bind.md, then active evolution records by
//! descending composite score). Loading stops at the first fragment that
//! would overflow the budget, so a larger budget only ever extends the list.

use std::fmt;

use crate::codec::{SkillIndex, BIND_FILE, EVOLUTIONS_FILE, SKILL_FILE, WORKFLOW_FILE};
use crate::evolution::{self, EvolutionError};
use crate::model::{
    EvolutionExperience, EvolutionRecord, RecordStatus, ScoringConfig, SwarmSkill, Timestamp,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("budget must be positive")]
    ZeroBudget,
    #[error(
        "budget below minimum disclosure: body needs {required} characters, budget is {budget}"
    )]
    BudgetBelowMinimum { budget: usize, required: usize },
    #[error(transparent)]
    Scoring(#[from] EvolutionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Metadata,
    Body,
    Full,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Metadata => "metadata",
            Stage::Body => "body",
            Stage::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    /// Relative path inside the skill, or `evolutions.json#<record id>`.
    pub source: String,
    pub text: String,
}

impl Fragment {
    pub fn len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisclosureContext {
    pub stage: Stage,
    pub budget: usize,
    pub loaded_fragments: Vec<Fragment>,
    pub offered_record_ids: Vec<String>,
    /// Composite score of each offered record at load time, same order.
    pub offered_scores: Vec<f64>,
}

impl DisclosureContext {
    pub fn used(&self) -> usize {
        self.loaded_fragments.iter().map(Fragment::len).sum()
    }

    /// The loaded fragments joined into one prompt text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.loaded_fragments {
            out.push_str(&format!("<!-- {} -->\n", f.source));
            out.push_str(&f.text);
            if !f.text.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub context: DisclosureContext,
    /// The skill's experience with offered counters bumped and load-time
    /// demotions applied. The caller persists it.
    pub experience: EvolutionExperience,
}

/// One `name: description` line per indexed skill.
pub fn load_metadata(index: &SkillIndex) -> String {
    index
        .entries
        .iter()
        .map(|e| format!("{}: {}\n", e.name, e.description))
        .collect()
}

pub fn render_record(record: &EvolutionRecord) -> String {
    let d = &record.change_directive;
    format!(
        "[{}] {} {}\nContext: {}\n{}\n",
        record.id,
        d.action,
        d.target_files.join(", "),
        record.context.trim(),
        d.content.trim()
    )
}

fn base_fragments(skill: &SwarmSkill) -> Vec<Fragment> {
    let mut out = vec![Fragment {
        source: SKILL_FILE.to_string(),
        text: skill.body.clone(),
    }];
    for role in &skill.frontmatter.roles {
        if let Some(text) = skill.roles.get(&role.id) {
            if out.iter().any(|f| f.source == role.persona_path()) {
                continue;
            }
            out.push(Fragment {
                source: role.persona_path(),
                text: text.clone(),
            });
        }
    }
    if let Some(w) = &skill.workflow {
        out.push(Fragment {
            source: WORKFLOW_FILE.to_string(),
            text: w.clone(),
        });
    }
    if let Some(b) = &skill.bounds {
        out.push(Fragment {
            source: BIND_FILE.to_string(),
            text: b.raw_text.clone(),
        });
    }
    out
}

/// Stages the skill's content into a context of at most `budget` characters.
///
/// Before ranking, active records whose composite score has fallen below the
/// dormancy threshold are demoted. Dormant records are never promoted here;
/// only a new observation can revive them.
pub fn load_skill(
    skill: &SwarmSkill,
    config: &ScoringConfig,
    budget: usize,
    now: Timestamp,
) -> Result<LoadOutcome, LoadError> {
    if budget == 0 {
        return Err(LoadError::ZeroBudget);
    }
    let base = base_fragments(skill);
    let required = base[0].len();
    if required > budget {
        return Err(LoadError::BudgetBelowMinimum { budget, required });
    }

    let mut experience = skill.experience.clone();
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    for (idx, record) in experience.records.iter_mut().enumerate() {
        if record.status != RecordStatus::Active {
            continue;
        }
        let s = evolution::composite(&record.score_state, now, config)?;
        if s < config.dormancy_threshold {
            record.status = RecordStatus::Dormant;
            evolution::refresh_metrics(record, now, config)?;
            continue;
        }
        ranked.push((s, idx));
    }
    ranked.sort_by(|(sa, ia), (sb, ib)| {
        let (ra, rb) = (&experience.records[*ia], &experience.records[*ib]);
        sb.total_cmp(sa)
            .then_with(|| ra.created_at.cmp(&rb.created_at))
            .then_with(|| ra.id.cmp(&rb.id))
    });

    let mut ctx = DisclosureContext {
        stage: Stage::Metadata,
        budget,
        loaded_fragments: Vec::new(),
        offered_record_ids: Vec::new(),
        offered_scores: Vec::new(),
    };
    let mut used = 0usize;
    let base_count = base.len();
    let mut complete = true;
    for (n, fragment) in base.into_iter().enumerate() {
        if used + fragment.len() > budget {
            complete = false;
            break;
        }
        used += fragment.len();
        ctx.loaded_fragments.push(fragment);
        ctx.stage = if n + 1 == base_count {
            Stage::Full
        } else {
            Stage::Body
        };
    }

    if complete {
        for (score, idx) in ranked {
            let record = &experience.records[idx];
            let fragment = Fragment {
                source: format!("{EVOLUTIONS_FILE}#{}", record.id),
                text: render_record(record),
            };
            if used + fragment.len() > budget {
                break;
            }
            used += fragment.len();
            ctx.offered_record_ids.push(record.id.clone());
            ctx.offered_scores.push(score);
            ctx.loaded_fragments.push(fragment);
        }
    }

    for id in &ctx.offered_record_ids {
        if let Some(record) = experience.get_mut(id) {
            record.score_state.offered_count += 1;
            evolution::refresh_metrics(record, now, config)?;
        }
    }
    Ok(LoadOutcome {
        context: ctx,
        experience,
    })
}
