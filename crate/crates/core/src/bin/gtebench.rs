use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gtebench::evalmetrics::RankBy;
use gtebench::pipeline::{self, DatasetKind};
use gtebench::Result;

#[derive(Parser)]
#[command(name = "gtebench", version, about = "Score local explanations against ground-truth explanations")]
struct Cli {
    /// Seed override for the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Configuration file for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Loan,
    Time,
    Distance,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankArg {
    Absolute,
    Signed,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset CSV.
    Generate {
        dataset: DatasetArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        rows_per_class: Option<usize>,
    },
    /// Train a classifier on a dataset.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain a model's predictions.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Second model, used with --only-correct.
        #[arg(long)]
        model2: Option<PathBuf>,
        #[arg(long)]
        num_samples: Option<usize>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// How many instances to explain (default: all).
        #[arg(long)]
        instances: Option<usize>,
        /// Only explain instances every given model classifies correctly.
        #[arg(long)]
        only_correct: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute ground-truth coefficients for one or more neighborhood sizes.
    Align {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated; several values write one file each.
        #[arg(long, value_delimiter = ',')]
        num_samples: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Reuse the instances and run count of this explainer matrix.
        #[arg(long)]
        matching: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare explainer coefficients with ground truth.
    Evaluate {
        #[arg(long)]
        explainer: PathBuf,
        #[arg(long)]
        gte: PathBuf,
        /// A second model's explainer matrix for the invariance test.
        #[arg(long)]
        explainer2: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "absolute")]
        rank_by: RankArg,
        #[arg(long, default_value_t = 0.0)]
        zero_tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot one or more evaluation directories.
    Report {
        #[arg(required = true)]
        eval_dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let Cli { seed, config, command, .. } = cli;
    match command {
        Command::Generate {
            dataset,
            out,
            rows_per_class,
        } => {
            let kind = match dataset {
                DatasetArg::Loan => DatasetKind::Loan,
                DatasetArg::Time => DatasetKind::Time,
                DatasetArg::Distance => DatasetKind::Distance,
            };
            let (ds, path) = pipeline::cmd_generate(&pipeline::GenerateArgs {
                dataset: kind,
                config,
                out,
                seed,
                rows_per_class,
            })?;
            println!("wrote {} ({} instances)", path.display(), ds.len());
            for (name, count) in ds.meta.class_names.iter().zip(ds.class_histogram()) {
                println!("  {name}: {count}");
            }
        }
        Command::Train { dataset, out } => {
            let (model, path) = pipeline::cmd_train(&pipeline::TrainArgs {
                dataset,
                config,
                out,
                seed,
            })?;
            println!("wrote {}", path.display());
            println!("train_accuracy={:.3}", model.train_accuracy);
            if let Some(acc) = model.test_accuracy {
                println!("test_accuracy={acc:.3}");
            }
            println!("layers={:?}", model.config().layers);
        }
        Command::Explain {
            model,
            dataset,
            model2,
            num_samples,
            runs,
            instances,
            only_correct,
            out,
        } => {
            let (matrix, path) = pipeline::cmd_explain(&pipeline::ExplainArgs {
                model,
                model2,
                dataset,
                config,
                num_samples,
                runs,
                instances,
                only_correct,
                seed,
                out,
            })?;
            let (r, n, d) = matrix.shape();
            println!("wrote {} ({r} runs x {n} instances x {d} features)", path.display());
            if !matrix.meta.failures.is_empty() {
                println!("failed slots: {}", matrix.meta.failures.len());
            }
        }
        Command::Align {
            dataset,
            num_samples,
            runs,
            matching,
            out,
        } => {
            for (matrix, path) in pipeline::cmd_align(&pipeline::AlignArgs {
                dataset,
                config,
                num_samples,
                runs,
                matching,
                seed,
                out,
            })? {
                let (r, n, d) = matrix.shape();
                println!("wrote {} ({r} runs x {n} instances x {d} features)", path.display());
            }
        }
        Command::Evaluate {
            explainer,
            gte,
            explainer2,
            rank_by,
            zero_tolerance,
            out,
        } => {
            let (report, dir) = pipeline::cmd_evaluate(&pipeline::EvaluateArgs {
                explainer,
                gte,
                explainer2,
                out_dir: out,
                rank_by: match rank_by {
                    RankArg::Absolute => RankBy::Absolute,
                    RankArg::Signed => RankBy::Signed,
                },
                zero_tolerance,
            })?;
            println!("wrote {}", dir.display());
            print!("{}", report.summary_csv());
            if let Some(line) = report.invariance_line() {
                println!("{line}");
            }
        }
        Command::Report { eval_dirs, out } => {
            for path in pipeline::cmd_report(&pipeline::ReportArgs { eval_dirs, out_dir: out })? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
