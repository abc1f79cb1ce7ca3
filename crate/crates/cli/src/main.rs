use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use cmorris::campaign::{self, CampaignConfig, CopulaKind, Overrides, PlanFile, RunOptions};
use cmorris::Error;

/// Dependence-aware Morris screening campaigns.
#[derive(Parser)]
#[command(name = "cmorris", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the paths of a campaign and write the plan file.
    Plan {
        /// Campaign configuration (JSON).
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Plan file to write.
        #[arg(long, default_value = "plan.json")]
        out: PathBuf,
    },
    /// Evaluate the plan's points, appending to (and resuming from) a records file.
    Run {
        plan: PathBuf,
        /// Records file (JSON lines).
        #[arg(long, default_value = "records.jsonl")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Per-evaluation limit in seconds for external models.
        #[arg(long)]
        timeout: Option<f64>,
    },
    /// Compute the sensitivity measures and write report.csv, report.json and plot.svg.
    Analyze {
        plan: PathBuf,
        records: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Plan, run and analyze the shipped North Sea buffer-model campaign.
    Demo {
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Output directory.
        #[arg(long, default_value = "cmorris-demo")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Grid levels p.
    #[arg(long)]
    levels: Option<u32>,
    /// Step s in levels.
    #[arg(long)]
    step: Option<u32>,
    /// Number of paths r.
    #[arg(long)]
    paths: Option<usize>,
    /// gaussian or independence.
    #[arg(long)]
    copula: Option<CopulaKind>,
    #[arg(long)]
    workers: Option<usize>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            levels: self.levels,
            step: self.step,
            paths: self.paths,
            copula: self.copula,
            workers: self.workers,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::Json { .. }
        | Error::InvalidGrid(_)
        | Error::InvalidCorrelation(_)
        | Error::InconsistentGroups(_)
        | Error::NotPositiveSemiDefinite { .. } => 2,
        Error::Evaluation { .. } | Error::Model(_) | Error::Bufferbox(_) | Error::UndefinedObjective(_) => 3,
        Error::IncompleteRecords { .. } => 4,
        _ => 1,
    }
}

fn timeout(secs: Option<f64>) -> Result<Option<Duration>, Error> {
    match secs {
        None => Ok(None),
        Some(s) if s.is_finite() && s > 0.0 => Ok(Some(Duration::from_secs_f64(s))),
        Some(s) => Err(Error::config("--timeout", format!("must be positive, got {s}"))),
    }
}

fn analyze_into(plan: &PlanFile, records: &Path, out: &Path) -> Result<(), Error> {
    let report = campaign::analyze(plan, &campaign::read_records(records)?)?;
    let files = campaign::write_report(&report, out)?;
    print!("{}", campaign::report_table(&report));
    eprintln!(
        "wrote {}, {}, {}",
        files.csv.display(),
        files.json.display(),
        files.svg.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Plan { config, overrides, out } => {
            let mut cfg = CampaignConfig::load(&config)?;
            cfg.apply(&overrides.to_overrides())?;
            let plan = campaign::plan(&cfg)?;
            plan.write(&out)?;
            eprintln!(
                "{} paths over {} factors, {} evaluations -> {}",
                plan.plan.paths.len(),
                plan.factors.len(),
                plan.plan.evaluation_count(),
                out.display()
            );
        }
        Command::Run {
            plan,
            out,
            workers,
            timeout: secs,
        } => {
            let plan = PlanFile::read(&plan)?;
            if workers == Some(0) {
                return Err(Error::config("--workers", "need at least one worker"));
            }
            let options = RunOptions {
                workers,
                timeout: timeout(secs)?,
            };
            let summary = campaign::run(&plan, &out, &options)?;
            eprintln!(
                "{} points: {} already recorded, {} written, {} model calls -> {}",
                summary.points,
                summary.reused,
                summary.written,
                summary.calls,
                out.display()
            );
        }
        Command::Analyze { plan, records, out } => {
            let plan = PlanFile::read(&plan)?;
            analyze_into(&plan, &records, &out)?;
        }
        Command::Demo { overrides, out } => {
            let mut cfg = CampaignConfig::northsea();
            cfg.apply(&overrides.to_overrides())?;
            let plan = campaign::plan(&cfg)?;
            let plan_path = out.join("plan.json");
            let records = out.join("records.jsonl");
            plan.write(&plan_path)?;
            // a fresh records file keeps repeated demos comparable
            if records.exists() {
                std::fs::remove_file(&records).map_err(|e| Error::Io {
                    path: records.clone(),
                    source: e,
                })?;
            }
            campaign::run(&plan, &records, &RunOptions::default())?;
            analyze_into(&plan, &records, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::IncompleteRecords { missing } = &err {
                for i in missing {
                    eprintln!("  missing point {i}");
                }
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
