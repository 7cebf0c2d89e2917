//! `decarb` command line. Every command prints a JSON summary on stdout;
//! failures go to stderr with exit code 1 (validation), 2 (I/O) or 64
//! (usage).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use decarb_core::equity::EquityWeights;
use decarb_core::GoalSet;
use serde::Serialize;
use serde_json::json;

use crate::api;
use crate::config::{self, FlagOverrides, GatewayConfig};
use crate::error::{GatewayError, EXIT_OK, EXIT_USAGE};
use crate::ops;

#[derive(Debug, Parser)]
#[command(name = "decarb", version, about = "Transportation emissions inventory, scenarios, equity screening, mobility simulation and hub telemetry")]
pub struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding baseline datasets and `worlds/`.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files. Without it only the summary is printed.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run hub telemetry through validation, storage and processing.
    Ingest(IngestArgs),
    /// Baseline inventory totals and shares.
    Baseline(BaselineArgs),
    /// Scenario projections against reduction goals.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Tract equity index, affordability and charger ratios.
    Equity(EquityArgs),
    /// Simulate one day of travel in a world.
    Simulate(SimulateArgs),
    /// Serve the /v1 HTTP API.
    Serve(ServeArgs),
    /// Write lever bounds and GeoJSON layers for the console.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Newline-delimited JSON telemetry. Without it, records are synthesized.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of synthetic records when no input is given.
    #[arg(long, default_value_t = 10_000)]
    pub synth: usize,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Dataset name under the data directory, or a dataset path.
    #[arg(long)]
    pub baseline: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Project one scenario and check it against the goals.
    Run(ScenarioRunArgs),
    /// Names of the bundled scenarios.
    List(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioRunArgs {
    /// Scenario JSON file or bundled scenario name.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub baseline: Option<String>,
    /// Goal file replacing the dataset's goals.
    #[arg(long)]
    pub goals: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EquityArgs {
    #[arg(long)]
    pub baseline: Option<String>,
    /// JSON file of index weights; missing fields keep their defaults.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// World name under `worlds/`, or a world path.
    #[arg(long)]
    pub world: Option<String>,
    /// Named lever preset of the world.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON lever file, applied over the preset.
    #[arg(long)]
    pub levers: Option<PathBuf>,
    /// Override the world's agent count.
    #[arg(long)]
    pub agents: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub world: Option<String>,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("decarb: {}: {e}", e.code());
            e.exit_code()
        }
    }
}

fn print<T: Serialize>(v: &T) -> Result<(), GatewayError> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // a closed pipe (`decarb ... | head`) is not a failure of the command
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<PathBuf, GatewayError> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v)?)?;
    Ok(p)
}

fn read_json_file<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, GatewayError> {
    let text = fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| GatewayError::Validation(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), GatewayError> {
    let port = match &cli.command {
        Command::Serve(s) => s.port,
        _ => None,
    };
    let flags = FlagOverrides {
        port,
        data_dir: cli.data_dir.clone(),
        seed: cli.seed,
    };
    let mut cfg = config::resolve(cli.config.as_deref(), |k| std::env::var(k).ok(), &flags)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a, out),
        Command::Baseline(a) => {
            let ds = ops::load_baseline(&cfg, a.baseline.as_deref().unwrap_or(&cfg.baseline))?;
            let report = ops::baseline(&ds)?;
            if let Some(dir) = out {
                write_json(dir, "baseline.json", &report)?;
                write_json(dir, "emissions.geojson", &ops::baseline_geojson(&ds)?)?;
            }
            print(&report)
        }
        Command::Scenario(ScenarioCommand::List(a)) => {
            let ds = ops::load_baseline(&cfg, a.baseline.as_deref().unwrap_or(&cfg.baseline))?;
            print(&json!({ "scenarios": ds.scenario_names()? }))
        }
        Command::Scenario(ScenarioCommand::Run(a)) => {
            let ds = ops::load_baseline(&cfg, a.baseline.as_deref().unwrap_or(&cfg.baseline))?;
            let spec = ops::load_spec(&ds, &a.spec)?;
            let goals: Option<GoalSet> = a.goals.as_deref().map(read_json_file).transpose()?;
            let report = ops::evaluate_scenario(&ds, &spec, goals.as_ref())?;
            if let Some(dir) = out {
                write_json(dir, "scenario.json", &report)?;
                ops::write_series_csv(&dir.join("series.csv"), &report.series)?;
            }
            print(&report)
        }
        Command::Equity(a) => {
            let ds = ops::load_baseline(&cfg, a.baseline.as_deref().unwrap_or(&cfg.baseline))?;
            let weights: EquityWeights = match &a.weights {
                Some(p) => read_json_file(p)?,
                None => EquityWeights::default(),
            };
            let report = ops::equity(&ds, &weights, &ops::default_ratio_pairs())?;
            if let Some(dir) = out {
                write_json(dir, "equity.json", &report)?;
                write_json(dir, "tracts.geojson", &ops::equity_geojson(&ds, &report.index)?)?;
            }
            print(&report)
        }
        Command::Simulate(a) => {
            let mut world = ops::load_world(&cfg, a.world.as_deref().unwrap_or(&cfg.world))?;
            if let Some(n) = a.agents {
                world = ops::with_agents(&world, n)?;
            }
            let levers = ops::resolve_levers(&world, a.preset.as_deref(), a.levers.as_deref())?;
            cfg.check_levers(&levers)?;
            let result = ops::simulate(&world, &levers, cfg.seed)?;
            if let Some(dir) = out {
                ops::export_simulation(dir, &result, &world)?;
            }
            print(&ops::SimSummary::from(&result))
        }
        Command::Serve(a) => {
            if let Some(b) = a.bind {
                cfg.bind = b;
            }
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| GatewayError::Io(e.to_string()))?;
            rt.block_on(api::serve(api::AppState::new(cfg)))
        }
        Command::Export(a) => export(&cfg, a, out),
    }
}

fn ingest(cfg: &GatewayConfig, a: IngestArgs, out: Option<&Path>) -> Result<(), GatewayError> {
    let inputs = ops::ingest_inputs(a.input.as_deref(), a.synth, cfg.seed)?;
    let scratch;
    let dir = match out {
        Some(d) => d,
        None => {
            scratch = std::env::temp_dir().join(format!("decarb-ingest-{}", std::process::id()));
            &scratch
        }
    };
    let (_, summary) = ops::ingest(&cfg.pipeline, inputs, dir)?;
    if out.is_none() {
        let _ = fs::remove_dir_all(dir);
    }
    if !summary.counts.balanced() {
        return Err(GatewayError::Validation(format!("reconciliation failed: {:?}", summary.counts)));
    }
    print(&summary)
}

fn export(cfg: &GatewayConfig, a: ExportArgs, out: Option<&Path>) -> Result<(), GatewayError> {
    let dir = out.ok_or_else(|| GatewayError::Usage("export needs --out".into()))?;
    let ds = ops::load_baseline(cfg, a.baseline.as_deref().unwrap_or(&cfg.baseline))?;
    let world = ops::load_world(cfg, a.world.as_deref().unwrap_or(&cfg.world))?;
    let index = decarb_core::equity::compute_equity_index(&ds.tracts()?, &EquityWeights::default())?;
    let files = vec![
        write_json(dir, "lever_bounds.json", &json!({ "bounds": cfg.effective_bounds()? }))?,
        write_json(dir, "baseline_emissions.geojson", &ops::baseline_geojson(&ds)?)?,
        write_json(dir, "equity_tracts.geojson", &ops::equity_geojson(&ds, &index)?)?,
        write_json(dir, "world_zones.geojson", &ops::world_zones_geojson(&world))?,
    ];
    print(&json!({ "files": files }))
}
