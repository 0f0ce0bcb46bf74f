use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tss::harness::{run_experiment, ExperimentConfig};
use tss::kernel::{Metric, Transform};
use tss::optimizer::Algorithm;
use tss::pipeline::{run, Method, RunManifest};
use tss::Error;

#[derive(Parser)]
#[command(name = "tss", version, about = "Targeted subset selection with submodular mutual information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a budget of pool rows and write a JSON report.
    Select(SelectArgs),
    /// Run the synthetic class-imbalance experiment.
    Experiment {
        /// JSON experiment config; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SelectArgs {
    /// Re-run a manifest, or the manifest echoed inside a previous report.
    #[arg(long, conflicts_with_all = ["method", "budget", "unlabeled"])]
    manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    method: Option<Method>,
    #[arg(long, required_unless_present = "manifest")]
    budget: Option<usize>,
    /// Pool features (headerless CSV).
    #[arg(long, required_unless_present = "manifest")]
    unlabeled: Option<PathBuf>,
    /// Target features (headerless CSV).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Predicted class probabilities for the pool (us, tus).
    #[arg(long)]
    probs: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long = "lambda-gc", default_value_t = 0.5)]
    lambda_gc: f64,
    #[arg(long, default_value_t = 1e-6)]
    ridge: f64,
    #[arg(long, default_value_t = Metric::Cosine)]
    metric: Metric,
    #[arg(long, default_value_t = Transform::ShiftScale)]
    transform: Transform,
    #[arg(long, default_value_t = Algorithm::Lazy)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SelectArgs {
    fn manifest(&self) -> tss::Result<RunManifest> {
        if let Some(path) = &self.manifest {
            return RunManifest::load(path);
        }
        let mut m = RunManifest::new(
            self.method.expect("required by clap"),
            self.budget.expect("required by clap"),
            self.unlabeled.clone().expect("required by clap"),
        );
        m.target = self.target.clone();
        m.probs = self.probs.clone();
        m.eta = self.eta;
        m.gamma = self.gamma;
        m.lambda_gc = self.lambda_gc;
        m.ridge = self.ridge;
        m.metric = self.metric;
        m.transform = self.transform;
        m.algorithm = self.algorithm;
        m.seed = self.seed;
        Ok(m)
    }
}

fn write_out(path: Option<&Path>, body: &str) -> tss::Result<()> {
    match path {
        Some(p) => fs::write(p, body).map_err(|source| Error::Io { path: p.to_path_buf(), source }),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> tss::Result<()> {
    match cli.command {
        Command::Select(args) => {
            let report = run(&args.manifest()?)?;
            write_out(args.out.as_deref(), &report.to_json()?)
        }
        Command::Experiment { config, out } => {
            let cfg: ExperimentConfig = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
                    serde_json::from_str(&text)?
                }
                None => ExperimentConfig::default(),
            };
            let report = run_experiment(&cfg, &cfg.methods)?;
            for s in &report.summaries {
                eprintln!(
                    "{:<10} median target gain {:+.4}  median overall gain {:+.4}",
                    s.method.name(),
                    s.median_target_gain,
                    s.median_overall_gain
                );
            }
            write_out(Some(&out), &report.to_json()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tss: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
