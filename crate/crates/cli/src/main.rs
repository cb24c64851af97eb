use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use london::harness::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "london",
    version,
    about = "Lipschitz-guided knowledge distillation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lipschitz loss weight override.
    #[arg(long)]
    lambda: Option<f64>,
    /// Worker threads for sweeps and probes.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test CSV files.
    GenData(Common),
    /// Train the teacher with cross-entropy.
    TrainTeacher(Common),
    /// Distill the teacher into a fresh student.
    Distill(Common),
    /// Run the lambda x seed grid and summarize test error.
    Sweep(Common),
    /// Compare train/test gaps with and without the Lipschitz term.
    OverfitProbe(Common),
    /// Report per-block spectral statistics and the Lipschitz bound.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Model file (defaults to the configured teacher).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset CSV (defaults to the configured test set).
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> london::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(lambda) = c.lambda {
        cfg.distill.lambda = lambda;
    }
    if let Some(jobs) = c.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> london::Result<()> {
    match command {
        Command::GenData(c) => {
            let (train, test) = harness::run_gen_data(&load_config(&c)?)?;
            println!("wrote {} and {}", train.display(), test.display());
        }
        Command::TrainTeacher(c) => {
            let cfg = load_config(&c)?;
            let out = harness::run_train_teacher(&cfg)?;
            if let Some(m) = out.metrics.last() {
                println!(
                    "epoch {}: train_acc {:.4} test_acc {:.4}",
                    m.epoch, m.train_acc, m.test_acc
                );
            }
            println!("wrote {}", cfg.out_dir.join("teacher.model").display());
        }
        Command::Distill(c) => {
            let cfg = load_config(&c)?;
            let out = harness::run_distill(&cfg)?;
            let m = out.last();
            println!(
                "epoch {}: train_acc {:.4} test_acc {:.4} loss {:.6}",
                m.epoch, m.train_acc, m.test_acc, m.total
            );
        }
        Command::Sweep(c) => {
            let out = harness::run_sweep(&load_config(&c)?)?;
            for cell in &out.cells {
                if let Err(e) = &cell.outcome {
                    eprintln!("cell lambda={} seed={} failed: {e}", cell.lambda, cell.seed);
                }
            }
            print!("{}", out.summary_csv());
        }
        Command::OverfitProbe(c) => {
            let out = harness::run_overfit_probe(&load_config(&c)?)?;
            print!("{}", out.report_csv());
        }
        Command::Analyze {
            common,
            model,
            data,
        } => {
            let cfg = load_config(&common)?;
            let model = model.unwrap_or_else(|| cfg.teacher_model_path());
            let data = data.unwrap_or_else(|| cfg.test_csv_path());
            let report = harness::run_analyze(&cfg, &model, &data)?;
            print!("{}", harness::render_analysis(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_format_error() { 2 } else { 1 })
        }
    }
}
