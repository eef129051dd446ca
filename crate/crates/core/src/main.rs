use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use finder::harness::{self, load_config, GoldenConfig, RunConfig};
use finder::Error;

#[derive(Parser)]
#[command(name = "finder-opt", version, about = "Ensemble-filtering quasi-Newton experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimizer on one objective and write its trace.
    Bench(RunFlags),
    /// Check the single-epoch 5-D sphere reference case.
    Golden(GoldenFlags),
    /// Run several optimizers on the same objective and tabulate them.
    Compare(CompareFlags),
}

#[derive(Args, Clone, Default)]
struct RunFlags {
    /// finder | adam | gd
    #[arg(long)]
    optimizer: Option<String>,
    /// sphere | griewank | ackley | rastrigin | rosenbrock | elliptic | tinynet
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "eps-tol")]
    eps_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set theta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write 0 in the wall_ms column so traces are byte-reproducible.
    #[arg(long = "no-wall-time")]
    no_wall_time: bool,
}

#[derive(Args)]
struct GoldenFlags {
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Sample the ensemble from this seed instead of the reference matrix.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareFlags {
    /// Comma-separated optimizers sharing the remaining flags.
    #[arg(long, value_delimiter = ',')]
    optimizers: Vec<String>,
    /// One config file per run (repeatable); used instead of --optimizers.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "eps-tol")]
    eps_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Merged trace CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long = "no-wall-time")]
    no_wall_time: bool,
}

fn build_config(base: Option<RunConfig>, flags: &RunFlags) -> Result<RunConfig, Error> {
    let mut config = match (&flags.config, base) {
        (Some(path), _) => load_config(path)?,
        (None, Some(base)) => base,
        (None, None) => RunConfig::default(),
    };
    for pair in &flags.set {
        config.set_pair(pair)?;
    }
    if let Some(v) = &flags.optimizer {
        config.optimizer = v.parse()?;
    }
    if let Some(v) = &flags.objective {
        config.objective = v.parse()?;
    }
    if let Some(v) = flags.dim {
        config.dim = v;
    }
    if let Some(v) = flags.epochs {
        config.epochs = v;
    }
    if let Some(v) = flags.eps_tol {
        config.eps_tol = v;
    }
    if let Some(v) = flags.seed {
        config.set("seed", &v.into())?;
    }
    if let Some(v) = &flags.out {
        config.out = Some(v.clone());
    }
    if flags.no_wall_time {
        config.wall_time = false;
    }
    config.apply_env_seed()?;
    config.validate()?;
    Ok(config)
}

fn bench(flags: &RunFlags) -> Result<i32, Error> {
    let config = build_config(None, flags)?;
    let summary = harness::cmd_bench(&config)?;
    println!(
        "{} on {} (dim {}, start {}): final loss {:.6e} after {} epochs, {} ms",
        summary.optimizer,
        summary.objective,
        summary.dim,
        summary.start,
        summary.final_loss,
        summary.epochs(),
        summary.wall_ms()
    );
    if summary.outcome == harness::Outcome::Diverged {
        eprintln!("error: loss became non-finite");
    }
    Ok(summary.outcome.exit_code())
}

fn golden(flags: &GoldenFlags) -> Result<i32, Error> {
    let report = harness::run_golden(&GoldenConfig {
        p: flags.p,
        gamma: flags.gamma,
        seed: flags.seed,
    })?;
    println!("{}", report.summary());
    for failure in &report.failures {
        eprintln!("golden check failed: {failure}");
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn compare(flags: &CompareFlags) -> Result<i32, Error> {
    let shared = RunFlags {
        optimizer: None,
        objective: flags.objective.clone(),
        dim: flags.dim,
        epochs: flags.epochs,
        eps_tol: flags.eps_tol,
        seed: flags.seed,
        config: None,
        out: None,
        set: flags.set.clone(),
        no_wall_time: flags.no_wall_time,
    };
    let mut configs = Vec::new();
    for path in &flags.configs {
        let per_run = RunFlags {
            config: Some(path.clone()),
            ..shared.clone()
        };
        configs.push(build_config(None, &per_run)?);
    }
    for name in &flags.optimizers {
        let per_run = RunFlags {
            optimizer: Some(name.clone()),
            ..shared.clone()
        };
        configs.push(build_config(None, &per_run)?);
    }
    let (_, table) = harness::cmd_compare(&configs, flags.out.as_deref())?;
    print!("{table}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench(flags) => bench(flags),
        Command::Golden(flags) => golden(flags),
        Command::Compare(flags) => compare(flags),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
