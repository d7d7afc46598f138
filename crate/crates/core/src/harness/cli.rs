use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::eval::{evaluate, EvalOptions, EvalReport};
use super::selftest::run_selftest;
use super::svg::write_figures;
use crate::error::{Error, Result};
use crate::meta::{load_model, save_model, train, train_from, Checkpoint, Execution, TrainConfig};
use crate::simulators::{SimulatorKind, SimulatorSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_SELFTEST: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "alfi", version, about = "Meta-learned recurrent updates for likelihood-free inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Meta-train an updater and write a checkpoint plus a CSV training log.
    Train {
        #[arg(long)]
        sim: SimulatorKind,
        /// TOML overrides of the simulator's default configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Training log path; defaults to the checkpoint path with a `.csv` extension.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start from the weights of an existing checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on fresh test problems; writes CSV and JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 100)]
        problems: usize,
        #[arg(long, default_value_t = 30)]
        t_test: usize,
        #[arg(long, default_value_t = 500)]
        n_init: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG figures from an evaluation report directory.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        histograms: usize,
    },
    /// Run the oracle suites; non-zero exit if any fails.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::CorruptCheckpoint(_) | Error::VersionMismatch { .. } => EXIT_IO,
        Error::Usage(_) | Error::Configuration(_) | Error::Dimension(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn read_config(path: Option<&Path>, kind: SimulatorKind) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            TrainConfig::from_toml(&text, kind)
        }
        None => Ok(TrainConfig::defaults_for(kind)),
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train {
            sim,
            config,
            seed,
            out,
            log,
            init,
        } => {
            let mut cfg = read_config(config.as_deref(), sim)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let spec = SimulatorSpec::from_kind(sim);
            let outcome = match init {
                Some(path) => {
                    let start = load_model(&path)?;
                    start.check_simulator(&spec)?;
                    train_from(&spec, &cfg, start.model, Execution::default())?
                }
                None => train(&spec, &cfg)?,
            };
            save_model(
                &out,
                &Checkpoint {
                    model: outcome.model,
                    simulator: spec.name().to_string(),
                    config: cfg,
                },
            )?;
            let log_path = log.unwrap_or_else(|| out.with_extension("csv"));
            outcome.log.write_csv(&log_path)?;
            println!(
                "best validation RMSE {:.5} at epoch {}; wrote {} and {}",
                outcome.best_val_rmse,
                outcome.best_epoch,
                out.display(),
                log_path.display()
            );
            Ok(EXIT_OK)
        }
        Command::Eval {
            ckpt,
            problems,
            t_test,
            n_init,
            seed,
            out,
        } => {
            let ck = load_model(&ckpt)?;
            let sim = SimulatorSpec::by_name(&ck.simulator)?;
            ck.check_simulator(&sim)?;
            let opts = EvalOptions {
                problems,
                t_test,
                n_init,
                seed,
                ..EvalOptions::default()
            };
            let report = evaluate(&ck.model, &sim, &ck.config, &opts)?;
            for p in report.write(&out)? {
                println!("wrote {}", p.display());
            }
            let last = report.rmse_mean.last().copied().unwrap_or(f64::NAN);
            match report.median_mle() {
                Some(m) => println!(
                    "mean RMSE at t = {t_test}: {last:.5}; median final RMSE {:.5} (MLE {m:.5}); {} MLE failures",
                    report.median_alfi_at(t_test),
                    report.mle_failures
                ),
                None => println!("mean RMSE at t = {t_test}: {last:.5}"),
            }
            Ok(EXIT_OK)
        }
        Command::Report { input, out, histograms } => {
            let report = EvalReport::read(&input)?;
            let dir = out.unwrap_or_else(|| if input.is_dir() { input.clone() } else { input.parent().map(Path::to_path_buf).unwrap_or_default() });
            for p in write_figures(&report, &dir, histograms)? {
                println!("wrote {}", p.display());
            }
            Ok(EXIT_OK)
        }
        Command::Selftest { seed } => {
            let results = run_selftest(seed);
            let mut ok = true;
            for r in &results {
                println!("[{}] {} ({} checks, {:.1}s)", if r.passed { "PASS" } else { "FAIL" }, r.name, r.checks, r.seconds);
                for d in &r.detail {
                    println!("    {d}");
                }
                ok &= r.passed;
            }
            Ok(if ok { EXIT_OK } else { EXIT_SELFTEST })
        }
    }
}
