//! `sevbandit` command line: run simulations and policy experiments, or
//! serve the review-dispatch API.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sevbandit_service::{ServiceConfig, SystemClock};
use sevbandit_sim::output::{write_capacity_csv, write_intervals_csv, write_summary_json, write_tune_csv};
use sevbandit_sim::{ab_compare, builtin, run_seed, sweep_capacity, tune, PolicySpec, ScenarioConfig, TuneGrid};
use thiserror::Error;
use tracing::info;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown scenario `{0}`: not a built-in name (standard-drift, new-model, stationary) or a readable file")]
    UnknownScenario(String),

    #[error(transparent)]
    Sim(#[from] sevbandit_sim::SimError),

    #[error(transparent)]
    Service(#[from] sevbandit_service::ServiceError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "sevbandit", version, about = "Severity-calibrated review prioritization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation; writes `<prefix>.summary.json` and `<prefix>.intervals.csv`.
    Simulate(SimulateArgs),
    /// Paired-seed comparison of two policies.
    Ab(AbArgs),
    /// Grid search over bandit settings, ranked by mean integrity value.
    Tune(TuneArgs),
    /// Bandit vs. static calibration across reviewer counts (CSV).
    SweepCapacity(SweepArgs),
    /// Print a built-in scenario as JSON, as a starting point for edits.
    Scenario {
        #[arg(default_value = "standard-drift")]
        name: String,
    },
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Built-in scenario name or path to a scenario JSON file.
    #[arg(long, default_value = "standard-drift")]
    pub scenario: String,
    /// Overrides the scenario's reviewer count.
    #[arg(long)]
    pub reviewers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// ucb, thompson, static, max-raw or fixed.
    #[arg(long, default_value = "ucb")]
    pub policy: PolicySpec,
    /// Defaults to the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AbArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value = "static")]
    pub a: PolicySpec,
    #[arg(long, default_value = "ucb")]
    pub b: PolicySpec,
    #[arg(long, default_value_t = 32)]
    pub seeds: usize,
    /// Also write the full comparison as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// JSON grid, e.g. `{"delta": [0.05, 0.1], "gamma": [0.99, 0.995], "seeds": 4}`.
    #[arg(long)]
    pub grid: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Reviewer counts to try.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8")]
    pub reviewer_counts: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub seeds: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service configuration JSON; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<std::net::IpAddr>,
    /// Where the replay log and checkpoints live; in-memory when unset.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// A built-in scenario by name, else a scenario file.
pub fn load_scenario(arg: &ScenarioArg) -> Result<ScenarioConfig> {
    let mut scenario = match builtin(&arg.scenario) {
        Some(s) => s,
        None => {
            let path = Path::new(&arg.scenario);
            if !path.is_file() {
                return Err(CliError::UnknownScenario(arg.scenario.clone()));
            }
            read_json(path)?
        }
    };
    if let Some(n) = arg.reviewers {
        scenario.reviewer_capacity.reviewers = Some(n);
    }
    scenario.validate()?;
    Ok(scenario)
}

/// File destination, or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

/// Runs one simulation and returns the paths it wrote.
pub fn simulate(args: &SimulateArgs) -> Result<(PathBuf, PathBuf)> {
    let scenario = load_scenario(&args.scenario)?;
    let seed = args.seed.unwrap_or(scenario.seed);
    let result = run_seed(&scenario, &args.policy, seed)?;
    std::fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let prefix = format!("{}-{}-{}", scenario.name, args.policy.name(), seed);
    let summary = args.out_dir.join(format!("{prefix}.summary.json"));
    let intervals = args.out_dir.join(format!("{prefix}.intervals.csv"));
    write_summary_json(&result, create(&summary)?)?;
    write_intervals_csv(&result, create(&intervals)?)?;
    println!(
        "{} / {} / seed {}: realized IV {:.1} of {:.1} available, {} reviews, {} removed",
        scenario.name,
        args.policy,
        seed,
        result.realized_iv,
        result.total_violating_iv,
        result.reviews,
        result.removed
    );
    Ok((summary, intervals))
}

pub fn ab(args: &AbArgs) -> Result<sevbandit_sim::LiftEstimate> {
    let scenario = load_scenario(&args.scenario)?;
    let est = ab_compare(&scenario, &args.a, &args.b, args.seeds)?;
    println!(
        "{} vs {} over {} seeds: mean IV {:.1} -> {:.1}, lift {:+.1}% (95% CI {:+.1}% .. {:+.1}%), {} better on {}/{} seeds",
        est.policy_a,
        est.policy_b,
        est.seeds.len(),
        est.mean_a,
        est.mean_b,
        est.lift * 100.0,
        est.ci_low * 100.0,
        est.ci_high * 100.0,
        est.policy_b,
        est.b_at_least_a,
        est.seeds.len()
    );
    if let Some(path) = &args.out {
        serde_json::to_writer_pretty(create(path)?, &est).map_err(|source| CliError::Json {
            path: path.clone(),
            source,
        })?;
    }
    Ok(est)
}

pub fn run_tune(args: &TuneArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let grid: TuneGrid = read_json(&args.grid)?;
    let entries = tune(&scenario, &grid)?;
    if let Some(best) = entries.first() {
        info!(
            delta = best.cell.delta,
            gamma = best.cell.gamma,
            mean_iv = best.mean_iv,
            "best configuration"
        );
    }
    write_tune_csv(&entries, sink(args.out.as_deref())?)?;
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<sevbandit_sim::CapacitySweep> {
    let scenario = load_scenario(&args.scenario)?;
    let result = sweep_capacity(&scenario, &args.reviewer_counts, args.seeds)?;
    write_capacity_csv(&result, sink(args.out.as_deref())?)?;
    Ok(result)
}

/// Config file, then `SEVBANDIT_*` environment variables, then flags.
pub fn service_config(args: &ServeArgs, env: impl Fn(&str) -> Option<String>) -> Result<ServiceConfig> {
    let mut config = match &args.config {
        Some(path) => ServiceConfig::from_file(path)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(env)?;
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    if let Some(dir) = &args.data_dir {
        config.data_dir = Some(dir.clone());
    }
    config.validate()?;
    Ok(config)
}

pub async fn serve(args: &ServeArgs) -> Result<()> {
    let config = service_config(args, |k| std::env::var(k).ok())?;
    let service = sevbandit_service::start(&config, Arc::new(SystemClock)).await?;
    println!("listening on http://{}", service.addr);
    tokio::signal::ctrl_c().await.map_err(io_err(Path::new("<signal>")))?;
    info!("shutting down");
    service.shutdown()?;
    Ok(())
}

pub async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a).map(drop),
        Command::Ab(a) => ab(&a).map(drop),
        Command::Tune(a) => run_tune(&a),
        Command::SweepCapacity(a) => sweep(&a).map(drop),
        Command::Scenario { name } => {
            let s = builtin(&name).ok_or(CliError::UnknownScenario(name))?;
            println!("{}", serde_json::to_string_pretty(&s).expect("scenarios serialize"));
            Ok(())
        }
        Command::Serve(a) => serve(&a).await,
    }
}
