use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use swarmskills_core::codec::experience::{format_timestamp, parse_timestamp};
use swarmskills_core::codec::{self, Profile};
use swarmskills_core::disclosure;
use swarmskills_core::evolution::{self, Outcome};
use swarmskills_core::governance::{
    self, fold_plan, ArchiveStore, RebuildOptions, SimplifyPlan, SkillLock, StubCurator,
    StubRewriter,
};
use swarmskills_core::model::{EvolutionRecord, Timestamp};
use swarmskills_core::simulation::{self, Scenario};
use swarmskills_core::trajectory::{self, DetectorConfig, StubSynthesizer};

mod config;
mod error;

use config::CliConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "swarmskills",
    version,
    about = "Validate, evolve and govern swarm skill directories"
)]
struct Cli {
    /// TOML file with skills_root, interactive, clock_override and [scoring].
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding one subdirectory per skill.
    #[arg(long, global = true, env = "SWARMSKILLS_ROOT", value_name = "DIR")]
    skills_root: Option<PathBuf>,
    /// Fixed RFC 3339 timestamp used instead of the wall clock.
    #[arg(long, global = true, value_name = "TS")]
    clock_override: Option<String>,
    /// Ask for confirmation (y/n on stdin) before mutating steps.
    #[arg(long, global = true)]
    interactive: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Swarm,
    Degraded,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Success,
    Failure,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a skill directory against a conformance profile.
    Validate {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "swarm")]
        profile: ProfileArg,
    },
    /// Print E/U/F/S for every evolution record.
    Score {
        dir: PathBuf,
        #[arg(long, value_name = "TS")]
        now: Option<String>,
    },
    /// Find coordination friction in a trajectory and append records.
    Analyze {
        trajectory: PathBuf,
        #[arg(long, value_name = "DIR")]
        skill: PathBuf,
    },
    /// Distill a candidate skill from a trajectory into a staging directory.
    Distill {
        trajectory: PathBuf,
        #[arg(long, value_name = "DIR")]
        staging: PathBuf,
    },
    /// Delete stale records and merge duplicates.
    Simplify { dir: PathBuf },
    /// Fold active records into the base files and clear the experience.
    Rebuild {
        dir: PathBuf,
        #[arg(long)]
        include_dormant: bool,
    },
    /// Restore an archived version.
    Rollback {
        dir: PathBuf,
        #[arg(long, value_name = "VERSION")]
        to: u32,
    },
    /// Replay a scripted multi-session scenario.
    Simulate { scenario: PathBuf },
    /// List the skills under the skills root.
    Index { root: Option<PathBuf> },
    /// Stage a skill into a context budget and print it.
    Load {
        dir: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        budget: usize,
        /// Do not persist the bumped offered counters.
        #[arg(long)]
        no_record: bool,
    },
    /// Count a task outcome against records.
    Observe {
        dir: PathBuf,
        #[arg(long, value_enum)]
        outcome: OutcomeArg,
        #[arg(long = "record", value_name = "ID", required = true)]
        records: Vec<String>,
        /// The team also followed these records.
        #[arg(long)]
        applied: bool,
    },
}

/// Reads single-line answers from stdin; prompts go to stderr.
struct Prompter {
    enabled: bool,
}

impl Prompter {
    fn confirm(&self, question: &str) -> CliResult<bool> {
        if !self.enabled {
            return Ok(true);
        }
        eprint!("{question} [y/N] ");
        io::stderr().flush()?;
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line)?;
        Ok(matches!(
            line.trim().to_ascii_lowercase().as_str(),
            "y" | "yes"
        ))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    let cfg = CliConfig::resolve(
        cli.config.as_deref(),
        cli.skills_root,
        cli.interactive,
        cli.clock_override.as_deref(),
    )
    .map_err(CliError::input)?;
    let prompt = Prompter {
        enabled: cfg.interactive,
    };
    match cli.command {
        Command::Validate { dir, profile } => validate(&dir, profile),
        Command::Score { dir, now } => {
            let now = match now {
                Some(s) => {
                    parse_timestamp(&s).map_err(|e| CliError::input(anyhow!("--now: {e}")))?
                }
                None => cfg.now(),
            };
            let skill = codec::parse_skill(&dir)?;
            print!(
                "{}",
                evolution::score_table(&skill.experience, now, &cfg.scoring)?
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { trajectory, skill } => analyze(&cfg, &prompt, &trajectory, &skill),
        Command::Distill {
            trajectory,
            staging,
        } => {
            let t = trajectory::parse_trajectory(&trajectory)?;
            let skill = trajectory::distill_candidate(&t, &StubSynthesizer, &staging)?;
            println!("{}", skill.source_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simplify { dir } => {
            let (skill, plan) =
                governance::simplify_dir(&dir, &StubCurator::default(), &cfg.scoring, cfg.now())?;
            print_plan(&plan);
            println!(
                "{} live record(s) remain",
                skill.experience.non_terminal().count()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Rebuild {
            dir,
            include_dormant,
        } => rebuild(&cfg, &prompt, &dir, include_dormant),
        Command::Rollback { dir, to } => {
            let store = ArchiveStore::for_skill(&dir);
            let r = governance::rollback(&dir, &store, to, cfg.now())?;
            println!(
                "restored v{}; previous state archived as v{}",
                r.restored_version, r.pre_rollback_version
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { scenario } => {
            let scenario = Scenario::load(&scenario)?;
            let report =
                simulation::simulate(&scenario, &cfg.skills_root, &cfg.scoring, cfg.interactive)?;
            print!("{}", report.transcript);
            Ok(ExitCode::SUCCESS)
        }
        Command::Index { root } => {
            let index = codec::index_skills(root.as_deref().unwrap_or(&cfg.skills_root))?;
            for w in &index.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", disclosure::load_metadata(&index));
            Ok(ExitCode::SUCCESS)
        }
        Command::Load {
            dir,
            budget,
            no_record,
        } => load(&cfg, &dir, budget, no_record),
        Command::Observe {
            dir,
            outcome,
            records,
            applied,
        } => {
            let outcome = match outcome {
                OutcomeArg::Success => Outcome::Success,
                OutcomeArg::Failure => Outcome::Failure,
            };
            observe(&cfg, &dir, outcome, &records, applied)
        }
    }
}

fn validate(dir: &Path, profile: ProfileArg) -> CliResult<ExitCode> {
    let profile = match profile {
        ProfileArg::Swarm => Profile::Swarm,
        ProfileArg::Degraded => Profile::DegradedSingleAgent,
    };
    let skill = codec::parse_skill(dir)?;
    let report = codec::validate(&skill, profile);
    let errors = report.error_count();
    println!(
        "{} ({}): {} error(s), {} warning(s)",
        dir.display(),
        profile.as_str(),
        errors,
        report.violations.len() - errors
    );
    for v in &report.violations {
        println!("  {v}");
    }
    Ok(if errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn describe(r: &EvolutionRecord) -> String {
    let d = &r.change_directive;
    format!("{} {} [{}]", r.id, d.action, d.target_files.join(", "))
}

fn analyze(cfg: &CliConfig, prompt: &Prompter, path: &Path, dir: &Path) -> CliResult<ExitCode> {
    let t = trajectory::parse_trajectory(path)?;
    let skill = codec::parse_skill(dir)?;
    let findings = trajectory::analyze_friction(&t, &skill, &DetectorConfig::default())?;
    if findings.is_empty() {
        println!("no findings");
        return Ok(ExitCode::SUCCESS);
    }
    // records are stamped at the end of the analyzed session unless the
    // clock is pinned
    let now: Timestamp = match cfg.clock_override {
        Some(ts) => ts,
        None => t.events.last().map_or_else(chrono::Utc::now, |e| e.at),
    };
    let mut accepted = Vec::new();
    for (i, f) in findings.iter().enumerate() {
        let events: Vec<String> = f.evidence.iter().map(ToString::to_string).collect();
        println!(
            "finding {}: {} events=[{}] -> {} [{}]",
            i + 1,
            f.kind,
            events.join(", "),
            f.proposed_directive.action,
            f.proposed_directive.target_files.join(", ")
        );
        println!("  {}", f.summary);
        if prompt.confirm(&format!("append {} record?", f.kind))? {
            accepted.push(f.clone());
        } else {
            println!("  skipped");
        }
    }
    if accepted.is_empty() {
        println!("no records appended");
        return Ok(ExitCode::SUCCESS);
    }
    let experience = trajectory::emit_records(&accepted, &skill, now);
    let emitted: Vec<&EvolutionRecord> = experience.records[skill.experience.len()..]
        .iter()
        .collect();
    governance::persist_experience(dir, &experience)?;
    for r in emitted {
        println!("appended {}", describe(r));
    }
    if governance::should_govern(&experience, &cfg.scoring) {
        eprintln!(
            "warning: {} live record(s) >= capacity {}; run `swarmskills simplify`",
            experience.non_terminal().count(),
            cfg.scoring.simplify_capacity
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn print_plan(plan: &SimplifyPlan) {
    println!("deleted: [{}]", plan.deletions.join(", "));
    for (group, into) in plan.merges.iter().zip(&plan.merged_into) {
        println!("merged: [{}] into {into}", group.members.join(", "));
    }
    for r in &plan.refinements {
        println!("refined: {}", r.id);
    }
    println!("retained: [{}]", plan.retentions.join(", "));
}

fn rebuild(
    cfg: &CliConfig,
    prompt: &Prompter,
    dir: &Path,
    include_dormant: bool,
) -> CliResult<ExitCode> {
    let options = RebuildOptions { include_dormant };
    if prompt.enabled {
        let skill = codec::parse_skill(dir)?;
        for r in fold_plan(&skill.experience, options) {
            println!("fold: {}", describe(&r));
        }
        if !prompt.confirm("rebuild?")? {
            println!("rebuild declined; nothing changed");
            return Ok(ExitCode::SUCCESS);
        }
    }
    let store = ArchiveStore::for_skill(dir);
    let report = governance::rebuild(dir, &StubRewriter, &store, options, cfg.now())?;
    println!(
        "archived v{}; {} roles; experience cleared",
        report.archived_version,
        report.skill.frontmatter.roles.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn load(cfg: &CliConfig, dir: &Path, budget: usize, no_record: bool) -> CliResult<ExitCode> {
    let skill = codec::parse_skill(dir)?;
    let out = disclosure::load_skill(&skill, &cfg.scoring, budget, cfg.now())?;
    let ctx = &out.context;
    eprintln!(
        "stage={} fragments={} chars={}/{} offered=[{}]",
        ctx.stage,
        ctx.loaded_fragments.len(),
        ctx.used(),
        ctx.budget,
        ctx.offered_record_ids.join(", ")
    );
    print!("{}", ctx.render());
    if !no_record && out.experience != skill.experience {
        governance::persist_experience(dir, &out.experience)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn observe(
    cfg: &CliConfig,
    dir: &Path,
    outcome: Outcome,
    ids: &[String],
    applied: bool,
) -> CliResult<ExitCode> {
    let now = cfg.now();
    let _lock = SkillLock::acquire(dir)?;
    let mut experience = codec::parse_skill(dir)?.experience;
    for id in ids {
        let current = experience
            .get(id)
            .ok_or_else(|| CliError::domain(anyhow!("no record `{id}`")))?;
        let before = current.status;
        let mut next = current.clone();
        if applied {
            next = evolution::record_applied(&next)?;
        }
        next = evolution::observe_outcome(&next, outcome, now, &cfg.scoring)?;
        let s = evolution::composite(&next.score_state, now, &cfg.scoring)?;
        println!(
            "{id}: {outcome} at {}; {} -> {} (S={s:.4})",
            format_timestamp(&now),
            before,
            next.status
        );
        *experience.get_mut(id).expect("looked up above") = next;
    }
    codec::write_experience(dir, &experience)?;
    Ok(ExitCode::SUCCESS)
}
