use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dppkit_cli::config::load_config;
use dppkit_cli::{cmd_eval, cmd_sample, cmd_train, format_nll_table, CliError, SuiteOutcome};

/// Determinantal point process sampling, surrogate training and evaluation.
#[derive(Parser)]
#[command(name = "dppkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to a JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap worker threads (default: DPPKIT_THREADS or the machine width).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sampling-path dataset and train the surrogate.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Draw subsets with one of the fixed methods.
    Sample {
        #[command(flatten)]
        common: Common,
        /// dpp | kdpp | dppnet | dppnet-mode | uniform | kmedoids | inhib-attn
        #[arg(long)]
        method: Option<String>,
        /// Subset size.
        #[arg(long)]
        k: Option<usize>,
        /// Number of draws.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Semicolon-joined item indices that must appear in every sample.
        #[arg(long)]
        condition: Option<String>,
    },
    /// Run an evaluation suite.
    Eval {
        #[command(flatten)]
        common: Common,
        /// nll | nystrom | timing | theorem1
        #[arg(long)]
        suite: String,
    },
}

fn threads_for(common: &Common) -> usize {
    common
        .threads
        .unwrap_or_else(dppkit::parallel::default_threads)
        .max(1)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common } => {
            let cfg = load_config(&common.config)?;
            let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let outcome = cmd_train(&cfg, &out, threads_for(&common), |line| {
                println!("{line}");
            })?;
            match (outcome.initial_loss, outcome.final_loss) {
                (Some(first), Some(last)) => {
                    println!("final loss {last:.6e} (initial {first:.6e})")
                }
                _ => println!("0 epochs: checkpoint equals initialization"),
            }
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!("loss curve: {}", outcome.loss_curve.display());
            Ok(())
        }
        Command::Sample {
            common,
            method,
            k,
            n,
            condition,
        } => {
            let cfg = load_config(&common.config)?;
            let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let outcome = cmd_sample(
                &cfg,
                &out,
                method.as_deref(),
                k,
                n,
                condition.as_deref(),
                threads_for(&common),
            )?;
            println!("{} samples -> {}", outcome.rows, outcome.csv_path.display());
            Ok(())
        }
        Command::Eval { common, suite } => {
            let cfg = load_config(&common.config)?;
            let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            match cmd_eval(&cfg, &out, &suite, threads_for(&common))? {
                SuiteOutcome::Nll { csv_path, reports } => {
                    print!("{}", format_nll_table(&reports));
                    println!("results: {}", csv_path.display());
                }
                SuiteOutcome::Nystrom { csv_path, summary } => {
                    println!(
                        "{:<12} {:>6} {:>14} {:>10}",
                        "method", "size", "mean_frobenius", "mean_rmse"
                    );
                    for (method, size, fro, rmse) in &summary {
                        println!("{method:<12} {size:>6} {fro:>14.4} {rmse:>10.4}");
                    }
                    println!("results: {}", csv_path.display());
                }
                SuiteOutcome::Timing { csv_path, report } => {
                    for row in &report.rows {
                        println!(
                            "{:<12} {:>10.4}s forwards {}",
                            row.method, row.seconds, row.forward_count
                        );
                    }
                    println!(
                        "exact/surrogate wallclock ratio: {:.2}x (N={}, k={}, batch={})",
                        report.ratio_exact_over_surrogate, report.n, report.k, report.batch
                    );
                    println!("results: {}", csv_path.display());
                }
                SuiteOutcome::Theorem1 {
                    csv_path,
                    report,
                    adversarial_detected,
                } => {
                    if !report.precondition_ok {
                        println!(
                            "precondition violated: source margin {:.3e} is not positive",
                            report.margin
                        );
                    } else {
                        println!(
                            "margin {:.6e}; pass count = {} of {} trials",
                            report.margin, report.passes, report.trials
                        );
                        println!(
                            "adversarial 10x-margin perturbation detected: {adversarial_detected}"
                        );
                    }
                    println!("results: {}", csv_path.display());
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
