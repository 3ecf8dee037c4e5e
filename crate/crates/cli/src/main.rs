use std::path::PathBuf;
use std::process::ExitCode;

use bbo_arena::analysis::BootstrapConfig;
use bbo_arena::harness::StudyConfig;
use bbo_arena::scoring::DEFAULT_RS_SAMPLES;
use bbo_arena_cli::{
    cmd_analyze, cmd_calibrate, cmd_leaderboard, cmd_run, cmd_warmstart_rerun, parse_optimizers,
    CliError, ExperimentManifest, RerunOverrides, SuiteSource, DEFAULT_OPTIMIZERS, DEFAULT_RS_POOL,
};
use clap::{Args, Parser, Subcommand};

/// Benchmark harness for batch black-box optimizers.
#[derive(Parser)]
#[command(name = "bbo-arena", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run optimizers on a suite, calibrate and score.
    Run(RunArgs),
    /// Rank finished results.
    Leaderboard(OutArg),
    /// Bootstrap confidence intervals and ranking stability.
    Analyze(AnalyzeArgs),
    /// Rerun with visible parameter names and warm-start archives from a prior run.
    WarmstartRerun(RerunArgs),
    /// Compute per-problem random-search calibrations.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Independent trials per (optimizer, problem).
    #[arg(long)]
    trials: Option<usize>,
    /// Batches per study.
    #[arg(long)]
    batches: Option<usize>,
    /// Suggestions per batch.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Rerun studies even if results exist.
    #[arg(long)]
    fresh: bool,
}

impl StudyArgs {
    fn apply(&self, mut cfg: StudyConfig) -> StudyConfig {
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.batches = self.batches.unwrap_or(cfg.batches);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg
    }

    fn any(&self) -> bool {
        self.trials.is_some()
            || self.batches.is_some()
            || self.batch_size.is_some()
            || self.seed.is_some()
    }
}

#[derive(Args)]
struct RunArgs {
    /// Suite manifest path, or `reference` for the bundled suite.
    #[arg(long, default_value = "reference")]
    suite: String,
    /// Comma-separated optimizer ids or a JSON strategy file.
    #[arg(long, default_value = DEFAULT_OPTIMIZERS)]
    optimizers: String,
    #[command(flatten)]
    study: StudyArgs,
    /// Hide parameter names from optimizers.
    #[arg(long)]
    anonymize: bool,
    #[arg(long, default_value = "bbo-results")]
    out: PathBuf,
    /// Random-search samples per problem for calibration.
    #[arg(long = "rs-samples", default_value_t = DEFAULT_RS_SAMPLES)]
    rs_samples: usize,
    /// Random-search draws per problem and trial for the RS curve.
    #[arg(long = "rs-pool", default_value_t = DEFAULT_RS_POOL)]
    rs_pool: usize,
}

#[derive(Args)]
struct OutArg {
    #[arg(long, default_value = "bbo-results")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value = "bbo-results")]
    out: PathBuf,
    /// Bootstrap replications.
    #[arg(long = "bootstrap-B", default_value_t = 10_000)]
    bootstrap_b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RerunArgs {
    /// Results directory of the prior run; the rerun goes to its `warmstart/`.
    #[arg(long, default_value = "bbo-results")]
    out: PathBuf,
    /// Overrides the recorded suite.
    #[arg(long)]
    suite: Option<String>,
    /// Overrides the recorded optimizers.
    #[arg(long)]
    optimizers: Option<String>,
    #[command(flatten)]
    study: StudyArgs,
    /// Keep names hidden, which leaves the archives unusable.
    #[arg(long)]
    anonymize: bool,
    #[arg(long = "bootstrap-B", default_value_t = 10_000)]
    bootstrap_b: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value = "reference")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "rs-samples", default_value_t = DEFAULT_RS_SAMPLES)]
    rs_samples: usize,
    /// Also write `calibration.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("output serializes")
    );
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let mut m = ExperimentManifest::new(
                SuiteSource::from_arg(&a.suite),
                parse_optimizers(&a.optimizers)?,
                &a.out,
            );
            m.config = a.study.apply(StudyConfig::default());
            m.config.anonymize = a.anonymize;
            m.workers = a.study.workers;
            m.fresh = a.study.fresh;
            m.rs_samples = a.rs_samples;
            m.rs_pool = a.rs_pool;
            let art = cmd_run(&m)?;
            print!("{}", bbo_arena::scoring::scores_csv(&art.reports));
        }
        Command::Leaderboard(a) => {
            print!("{}", cmd_leaderboard(&a.out)?.table());
        }
        Command::Analyze(a) => {
            let cfg = BootstrapConfig {
                replications: a.bootstrap_b,
                seed: a.seed,
            };
            let report = cmd_analyze(&a.out, &cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for i in &report.intervals {
                println!("{}: {:.3} [{:.3}, {:.3}]", i.team, i.score, i.p2_5, i.p97_5);
            }
            println!();
            print!("{}", report.table);
            println!(
                "confidence set: {} ranking(s) covering {:.1}%",
                report.confidence_set.len(),
                100.0 * report.confidence_mass
            );
        }
        Command::WarmstartRerun(a) => {
            let over = RerunOverrides {
                suite: a.suite.as_deref().map(SuiteSource::from_arg),
                strategies: a.optimizers.as_deref().map(parse_optimizers).transpose()?,
                config: None,
                anonymize: a.anonymize,
                workers: a.study.workers,
                fresh: a.study.fresh,
            };
            let over = if a.study.any() {
                let recorded = std::fs::read_to_string(a.out.join("experiment.json"))
                    .ok()
                    .and_then(|t| serde_json::from_str::<bbo_arena_cli::ExperimentRecord>(&t).ok())
                    .map_or_else(StudyConfig::default, |r| r.config);
                RerunOverrides {
                    config: Some(a.study.apply(recorded)),
                    ..over
                }
            } else {
                over
            };
            let cfg = BootstrapConfig {
                replications: a.bootstrap_b,
                seed: 0,
            };
            let art = cmd_warmstart_rerun(&a.out, &over, &cfg)?;
            print!("{}", art.leaderboard.table());
            for c in &art.comparisons {
                println!(
                    "{}: cold {:.3} -> warm {:.3} (change {:+.3}, 95% [{:+.3}, {:+.3}])",
                    c.team, c.cold, c.warm, c.change.delta, c.change.p2_5, c.change.p97_5
                );
            }
        }
        Command::Calibrate(a) => {
            let cals = cmd_calibrate(
                &SuiteSource::from_arg(&a.suite),
                a.seed,
                a.rs_samples,
                a.out.as_deref(),
            )?;
            print_json(&cals);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
