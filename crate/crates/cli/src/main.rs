use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prosumer_coalitions::coalition::ContractMode;
use prosumer_coalitions::experiment::{self, Extras, RunConfig, Status, SweepOutput};
use prosumer_coalitions::Error;

/// Coalition formation experiments for renewable prosumers.
#[derive(Parser)]
#[command(name = "coalitions", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate climate and pool; write hourly series per realization.
    Simulate(RunArgs),
    /// Form coalitions at a single parameter point.
    Form(FormArgs),
    /// Form coalitions over the phi x p_min x n_coal grid.
    Sweep(FormArgs),
    /// Aggregate summary files into per-point means and deviations.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FormArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ContractMode>,
    /// Series CSVs written by `simulate`, one per realization.
    #[arg(long, num_args = 1..)]
    series: Vec<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// `summary.csv` files from `form` or `sweep`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ContractMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit codes: 0 success, 1 runtime failure, 2 invalid config, 3 infeasible.
enum Failure {
    Runtime(String),
    Config(String),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation { .. } => Failure::Config(e.to_string()),
            Error::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_path(&args.config).map_err(|e| match e {
        Error::Io(io) => Failure::Config(format!("cannot read config {}: {io}", args.config.display())),
        other => Failure::from(other),
    })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    cfg.validate_simulation()?;
    let sims = (0..cfg.realizations)
        .map(|r| experiment::simulate_realization(&cfg, r))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(&cfg);
    let paths = experiment::write_simulation(&dir, &cfg, &sims)?;
    for (s, p) in sims.iter().zip(&paths) {
        println!("{}: {} agents x {} hours", p.display(), s.info.n_agents, s.info.hours);
    }
    Ok(())
}

fn formation(args: &FormArgs, single_point: bool) -> Result<(), Failure> {
    let mut cfg = load(&args.run)?;
    if let Some(mode) = args.mode {
        cfg.formation.mode = mode;
    }
    if !args.series.is_empty() {
        cfg.series = args.series.clone();
    }
    if single_point {
        let r = &cfg.requirements;
        for (name, n) in [("phi", r.phi.len()), ("p_min", r.p_min.len()), ("n_coal", r.n_coal.len())] {
            if n != 1 {
                return Err(Error::Validation {
                    path: format!("requirements.{name}"),
                    message: format!("form takes a single value, got {n}; use sweep for grids"),
                }
                .into());
            }
        }
    }
    let out = experiment::run(&cfg)?;
    let dir = out_dir(&cfg);
    let (command, extras) = if single_point {
        ("form", Extras::Structures)
    } else {
        ("sweep", Extras::Pivots)
    };
    experiment::write_formation(&dir, command, &cfg, &out, extras)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} rows written to {}", out.records.len(), dir.join("summary.csv").display());
    infeasibility(&out)
}

fn infeasibility(out: &SweepOutput) -> Result<(), Failure> {
    let bad: Vec<String> = out
        .records
        .iter()
        .filter(|r| r.status == Status::Infeasible)
        .map(|r| {
            format!(
                "{} at n_coal {} (realization {}): at most {} achievable",
                r.algorithm,
                r.n_coal,
                r.realization,
                r.max_achievable.unwrap_or(0)
            )
        })
        .collect();
    if bad.is_empty() {
        return Ok(());
    }
    let mut msg = format!("infeasible: {} of {} rows", bad.len(), out.records.len());
    for b in bad.iter().take(10) {
        msg.push_str("\n  ");
        msg.push_str(b);
    }
    Err(Failure::Infeasible(msg))
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let agg = experiment::write_report(&dir, &args.inputs)?;
    println!("{} aggregate rows written to {}", agg.len(), Path::new(&dir).join("aggregate.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Form(a) => formation(a, true),
        Command::Sweep(a) => formation(a, false),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
