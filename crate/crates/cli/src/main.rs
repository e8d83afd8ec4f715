use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atpo_core::harness::{
    bound_check, export, run_experiment, solve_only, write_outputs, ExperimentConfig, HarnessError,
};
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser)]
#[command(
    name = "atpo",
    version,
    about = "Ad hoc teamwork experiments under partial observability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Solved-model cache; `cache` when omitted.
    #[arg(long, default_value = "cache")]
    cache_dir: PathBuf,
    /// Disables the model cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build and solve the task library, filling the cache.
    Solve(Common),
    /// Run the configuration at its base point (sweep ignored).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run every point of the configured sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Re-evaluate the regret bound on the traces of a finished run.
    BoundCheck {
        /// Run directory or traces.jsonl file.
        #[arg(long, default_value = "out")]
        input: PathBuf,
    },
    /// Re-emit the CSV tables and per-trace CSVs of a finished run.
    Export {
        #[arg(long, default_value = "out")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let src = fs::read_to_string(&common.config).map_err(|e| {
        HarnessError::Config(format!("cannot read {}: {e}", common.config.display()))
    })?;
    let mut cfg = ExperimentConfig::from_json(&src)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cache(common: &Common) -> Option<&Path> {
    (!common.no_cache).then_some(common.cache_dir.as_path())
}

fn run(common: &Common, out_dir: &Path, sweep: bool) -> Result<(), HarnessError> {
    let cfg = load_config(common)?;
    if sweep && cfg.sweep.is_none() {
        return Err(HarnessError::Config(format!(
            "{} has no sweep section",
            common.config.display()
        )));
    }
    let result = run_experiment(&cfg, sweep, cache(common))?;
    write_outputs(&result, out_dir)?;
    for row in &result.summary.rows {
        println!(
            "point {} {:<10} steps {:.2} ± {:.2}  reward {:.2} ± {:.2}  n={}",
            row.point,
            row.agent,
            row.steps.mean,
            row.steps.half_width,
            row.reward.mean,
            row.reward.half_width,
            row.trials
        );
    }
    info!("wrote {}", out_dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = load_config(&common)?;
            for point in solve_only(&cfg, cfg.sweep.is_some(), cache(&common))? {
                for t in &point.tasks {
                    println!(
                        "point {} {} rounds={} converged={} cached={} setup={:.3}s",
                        point.point,
                        t.label,
                        t.perseus_rounds,
                        t.perseus_converged,
                        t.from_cache,
                        t.setup_seconds
                    );
                }
            }
            Ok(())
        }
        Command::Run { common, out_dir } => run(&common, &out_dir, false),
        Command::Sweep { common, out_dir } => run(&common, &out_dir, true),
        Command::BoundCheck { input } => {
            let report = bound_check(&input)?;
            let pct = |n: usize| {
                if report.traces == 0 {
                    100.0
                } else {
                    100.0 * n as f64 / report.traces as f64
                }
            };
            println!(
                "traces {}  holds(q=target) {} ({:.1}%)  holds(q=uniform) {} ({:.1}%)",
                report.traces,
                report.holds_target,
                pct(report.holds_target),
                report.holds_uniform,
                pct(report.holds_uniform)
            );
            for (p, m, i) in &report.failures {
                println!("violated: point {p} target {m} trial {i}");
            }
            Ok(())
        }
        Command::Export { input, out_dir } => {
            let n = export(&input, &out_dir)?;
            println!("exported {n} trials to {}", out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
