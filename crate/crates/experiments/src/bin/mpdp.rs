use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpdp_core::analysis::regret_bound;
use mpdp_experiments::harness::{self, analyze, describe, emit_csv, summary_path, ExperimentConfig};
use mpdp_experiments::Error;

#[derive(Parser)]
#[command(name = "mpdp", version, about = "Receding-horizon planning experiments on non-stationary MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Per-trial CSV; the summary goes next to it.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (default: $MPDP_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Contraction and diameter certificates of the configured environment.
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate the regret bound from its parameters.
    Bound(BoundArgs),
    /// Print state and action counts and a memory estimate without building.
    Describe { config: PathBuf },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long)]
    k: usize,
    #[arg(long = "J")]
    j: usize,
    #[arg(long)]
    gamma: f64,
    #[arg(long = "D")]
    d: f64,
    /// Per-step reward errors eps_0, eps_1, ... (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "eps_const")]
    eps: Option<Vec<f64>>,
    /// Per-step kernel errors delta_0, delta_1, ... (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "delta_const")]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    eps_const: Option<f64>,
    #[arg(long)]
    delta_const: Option<f64>,
}

/// Failures reading or validating the config are usage errors (exit 2).
enum Failure {
    Usage(Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<mpdp_core::Error> for Failure {
    fn from(e: mpdp_core::Error) -> Self {
        Failure::Usage(e.into())
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    load_inner(path, overrides).map_err(Failure::Usage)
}

fn load_inner(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = overrides.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn profile(list: &Option<Vec<f64>>, constant: Option<f64>, len: usize) -> Vec<f64> {
    match list {
        // entries past the list are past the forecast window
        Some(v) => (0..len).map(|l| v.get(l).copied().unwrap_or(0.0)).collect(),
        None => vec![constant.unwrap_or(0.0); len],
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, overrides, output, workers } => {
            let cfg = load(&config, &overrides)?;
            let workers = workers.unwrap_or_else(harness::runner::default_workers);
            let report = harness::run_sweep_with(&cfg, workers)?;
            let path = output
                .or_else(|| cfg.output.path.clone())
                .unwrap_or_else(|| PathBuf::from(format!("results/{}.csv", cfg.name)));
            emit_csv(&report, &path)?;
            println!("{} ({} rows)", cfg.name, report.rows.len());
            println!("{:>12} {:>8} {:>14} {:>14} {:>14}", "sweep_value", "trials", "mean_regret", "std", "bound");
            for s in &report.summaries {
                let v = s.sweep_value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                let b = s.bound.map(|b| format!("{b:.6}")).unwrap_or_else(|| "-".into());
                println!("{v:>12} {:>8} {:>14.6} {:>14.6} {b:>14}", s.trials, s.mean, s.std);
            }
            println!("wrote {} and {}", path.display(), summary_path(&path).display());
        }
        Command::Analyze { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let a = analyze(&cfg)?;
            println!("states {}  actions {}  T {}", a.num_states, a.num_actions, a.horizon);
            println!("optimal value {:.9}", a.optimal_value);
            match &a.certificate {
                Ok(c) => println!(
                    "gamma {:.9} (J = {}, {:?}, {} policy pairs)",
                    c.gamma, c.j, c.method, c.policy_pairs_examined
                ),
                Err(e) => println!("gamma unavailable: {e}"),
            }
            if let Some(check) = &a.check {
                println!(
                    "contraction check: {} pairs, {} violations, max ratio {:.6}",
                    check.checks, check.violations, check.max_ratio
                );
            }
            println!(
                "D {:.6} (cutoff {}, truncated {})  max span(V*) {:.6}",
                a.diameter.d, a.diameter.cutoff, a.diameter.truncated, a.max_span
            );
        }
        Command::Bound(b) => {
            let need = b.k.div_ceil(b.j.max(1)) * b.j.max(1) + 1;
            let eps = profile(&b.eps, b.eps_const, need);
            let delta = profile(&b.delta, b.delta_const, need);
            let r = regret_bound(b.horizon, b.k, b.j, b.gamma, b.d, &eps, &delta)?;
            println!("noise_free  {:.9}", r.noise_free_term);
            println!("eps0        {:.9}", r.eps0_term);
            println!("delta0      {:.9}", r.delta0_term);
            println!("geometric   {:.9}", r.geometric_term);
            println!("tail        {:.9}", r.tail_term);
            println!("total       {:.9}", r.total);
        }
        Command::Describe { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(Failure::Usage)?;
            let d = describe(&cfg);
            println!("env {}", d.kind);
            println!("states {}", d.num_states);
            println!("actions {}", d.num_actions);
            println!("T {}", d.horizon);
            println!("memory ~{:.1} MiB", d.memory_bytes as f64 / (1024.0 * 1024.0));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
