//! Operations shared by the CLI and the HTTP API, so both paths compute
//! identical numbers from identical inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use decarb_core::dataset::{load_scenario, BaselineDataset};
use decarb_core::equity::{affordability_gap, charger_ratio, compute_equity_index, project_adoption, Affordability, AdoptionProjection, ChargerRatio, EquityIndex, EquityWeights};
use decarb_core::{
    apply_scenario, check_goals, class_share_report, emissions_map, sector_shares, size_offsets, ClassGroup, ComplianceReport, EmissionSeries,
    GoalSet, OffsetSizing, ScenarioSpec, VehicleClass,
};
use decarb_hubpipe::synth::{random_records, SynthConfig};
use decarb_hubpipe::{read_ndjson, run as run_pipeline, Authorizer, Inbound, PipelineConfig, PipelineState, Reconciliation};
use decarb_mobsim::{export_result, simulate_day, PolicyLevers, SimResult, SimWorld};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::GatewayConfig;
use crate::error::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub dataset: String,
    pub baseline_year: i32,
    pub on_road_total_mtco2e: f64,
    pub off_road_remainder_mtco2e: f64,
    pub transportation_total_mtco2e: f64,
    pub total_vmt: f64,
    pub community_sectors: BTreeMap<String, f64>,
    pub sector_shares: BTreeMap<String, f64>,
    pub class_totals: BTreeMap<VehicleClass, f64>,
    pub class_group_shares: BTreeMap<ClassGroup, f64>,
    pub zone_totals: BTreeMap<String, f64>,
}

pub fn load_baseline(cfg: &GatewayConfig, name: &str) -> Result<BaselineDataset, GatewayError> {
    let dir = cfg.baseline_dir(name);
    if !dir.is_dir() {
        return Err(GatewayError::Io(format!("baseline dataset {} not found", dir.display())));
    }
    Ok(BaselineDataset::load(dir)?)
}

pub fn baseline(ds: &BaselineDataset) -> Result<BaselineReport, GatewayError> {
    let inv = ds.inventory()?;
    let sectors = ds.community_sectors(&inv);
    let grid = emissions_map(&inv);
    Ok(BaselineReport {
        dataset: ds.meta.name.clone(),
        baseline_year: inv.baseline_year(),
        on_road_total_mtco2e: inv.on_road_total(),
        off_road_remainder_mtco2e: inv.off_road_remainder(),
        transportation_total_mtco2e: inv.transportation_total(),
        total_vmt: inv.total_vmt(),
        sector_shares: sector_shares(&sectors)?,
        community_sectors: sectors,
        class_totals: inv.class_totals().clone(),
        class_group_shares: class_share_report(&inv)?,
        zone_totals: grid.zones.keys().map(|z| (z.clone(), grid.zone_total(z))).collect(),
    })
}

/// Zone emissions choropleth of the baseline inventory.
pub fn baseline_geojson(ds: &BaselineDataset) -> Result<Value, GatewayError> {
    let inv = ds.inventory()?;
    Ok(emissions_map(&inv).to_geojson(&ds.zone_geometries()?))
}

/// Renewable build-out needed to offset the emissions left at a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualOffsets {
    pub year: i32,
    /// Fraction of baseline emissions left when the target is met.
    pub residual_share: f64,
    pub residual_mtco2e: f64,
    pub sizing: OffsetSizing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub baseline: String,
    pub series: EmissionSeries,
    pub compliance: ComplianceReport,
    /// Reduction below baseline in the horizon year.
    pub final_reduction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets_at_target: Option<ResidualOffsets>,
}

/// Resolve `spec` as a path to a JSON file or a bundled scenario name.
pub fn load_spec(ds: &BaselineDataset, spec: &str) -> Result<ScenarioSpec, GatewayError> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(load_scenario(path)?);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    let bundled = ds.scenario_path(stem);
    if bundled.is_file() {
        return Ok(ds.scenario(stem)?);
    }
    Err(GatewayError::NotFound(format!("no scenario file or bundled scenario named {spec}")))
}

pub fn evaluate_scenario(ds: &BaselineDataset, spec: &ScenarioSpec, goals: Option<&GoalSet>) -> Result<ScenarioReport, GatewayError> {
    let inv = ds.inventory()?;
    let series = apply_scenario(&inv, spec, ds.meta.base_population)?;
    let goals = match goals {
        Some(g) => g.clone(),
        None => ds.goals()?,
    };
    let compliance = check_goals(&series, &goals)?;
    let final_reduction = series.points.last().map_or(0.0, |p| p.reduction);
    let offsets_at_target = match goals.reduction.iter().next_back() {
        Some((&year, &target)) => {
            let residual_share = 1.0 - target;
            let residual_mtco2e = residual_share * inv.on_road_total();
            Some(ResidualOffsets {
                year,
                residual_share,
                residual_mtco2e,
                sizing: size_offsets(residual_mtco2e, &ds.offset_plan()?)?,
            })
        }
        None => None,
    };
    Ok(ScenarioReport {
        scenario: spec.name.clone(),
        description: spec.description.clone(),
        baseline: ds.meta.name.clone(),
        series,
        compliance,
        final_reduction,
        offsets_at_target,
    })
}

/// One line per year: emissions and reductions.
pub fn write_series_csv(path: &Path, series: &EmissionSeries) -> Result<(), GatewayError> {
    let mut w = String::from("year,emissions_mtco2e,reduction,vmt,population,vmt_per_capita_reduction,ev_fleet_share\n");
    for p in &series.points {
        w.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.year, p.emissions_mtco2e, p.reduction, p.vmt, p.population, p.vmt_per_capita_reduction, p.ev_fleet_share
        ));
    }
    fs::write(path, w)?;
    Ok(())
}

/// Ratio diagnostics reported when none are requested: national and Texas
/// EV-to-public-charger counts.
pub const DEFAULT_CHARGER_PAIRS: [(&str, f64, f64); 2] = [("national", 22_000.0, 1_000.0), ("texas", 25_800.0, 1_000.0)];

/// Regional EV sales-share anchors: first half and fourth quarter of 2024.
pub const DEFAULT_ADOPTION_ANCHORS: [(f64, f64); 2] = [(2024.25, 0.1453), (2024.875, 0.16)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledRatio {
    pub label: String,
    #[serde(flatten)]
    pub ratio: ChargerRatio,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityReport {
    pub dataset: String,
    pub tracts: usize,
    pub index: EquityIndex,
    pub new_ev: Affordability,
    pub used_ev_with_incentive: Affordability,
    pub charger_ratios: Vec<LabelledRatio>,
    pub adoption: AdoptionProjection,
}

pub fn equity(ds: &BaselineDataset, weights: &EquityWeights, ratio_pairs: &[(String, f64, f64)]) -> Result<EquityReport, GatewayError> {
    let tracts = ds.tracts()?;
    let cfg = ds.affordability()?;
    let mut charger_ratios = Vec::new();
    for (label, evs, chargers) in ratio_pairs {
        let ratio = charger_ratio(*evs, *chargers)?;
        charger_ratios.push(LabelledRatio {
            label: label.clone(),
            display: ratio.label(),
            ratio,
        });
    }
    Ok(EquityReport {
        dataset: ds.meta.name.clone(),
        tracts: tracts.len(),
        index: compute_equity_index(&tracts, weights)?,
        new_ev: affordability_gap(&tracts, cfg.new_ev_price, &cfg.terms, 0.0)?,
        used_ev_with_incentive: affordability_gap(&tracts, cfg.used_ev_price, &cfg.terms, cfg.used_ev_incentive)?,
        charger_ratios,
        adoption: project_adoption(&DEFAULT_ADOPTION_ANCHORS, 2035)?,
    })
}

pub fn default_ratio_pairs() -> Vec<(String, f64, f64)> {
    DEFAULT_CHARGER_PAIRS.iter().map(|(l, e, c)| (l.to_string(), *e, *c)).collect()
}

pub fn equity_geojson(ds: &BaselineDataset, index: &EquityIndex) -> Result<Value, GatewayError> {
    Ok(index.to_geojson(&ds.tract_geometries()?))
}

pub fn load_world(cfg: &GatewayConfig, name: &str) -> Result<Arc<SimWorld>, GatewayError> {
    let dir = cfg.world_dir(name);
    if !dir.is_dir() {
        return Err(GatewayError::Io(format!("world {} not found", dir.display())));
    }
    Ok(Arc::new(SimWorld::load(dir)?))
}

/// Levers from an optional preset name and an optional JSON file, the file
/// winning field by field.
pub fn resolve_levers(world: &SimWorld, preset: Option<&str>, file: Option<&Path>) -> Result<PolicyLevers, GatewayError> {
    let base = match preset {
        Some(p) => world.preset(p)?,
        None => PolicyLevers::default(),
    };
    let Some(path) = file else {
        return Ok(base);
    };
    let text = fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    let patch: decarb_mobsim::LeverPatch = serde_json::from_str(&text).map_err(|e| GatewayError::Validation(format!("{}: {e}", path.display())))?;
    Ok(base.merged(&patch)?)
}

/// Headline numbers of a simulated day, as printed by the CLI and compared
/// against API runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub run_id: String,
    pub world: String,
    pub seed: u64,
    pub agents: usize,
    pub trips_completed: u64,
    pub total_vmt: f64,
    pub total_mtco2e: f64,
    pub mode_shares: BTreeMap<String, f64>,
    pub mean_charger_wait_min: f64,
    pub hash: String,
}

impl From<&SimResult> for SimSummary {
    fn from(r: &SimResult) -> Self {
        SimSummary {
            run_id: r.run_id.clone(),
            world: r.world.clone(),
            seed: r.seed,
            agents: r.agents,
            trips_completed: r.trips_completed,
            total_vmt: r.total_vmt,
            total_mtco2e: r.total_mtco2e,
            mode_shares: r.mode_shares.iter().map(|(m, s)| (m.as_str().to_string(), *s)).collect(),
            mean_charger_wait_min: r.mean_charger_wait(),
            hash: r.hash.clone(),
        }
    }
}

pub fn simulate(world: &Arc<SimWorld>, levers: &PolicyLevers, seed: u64) -> Result<SimResult, GatewayError> {
    Ok(simulate_day(world, levers, &world.factors, seed)?)
}

pub fn export_simulation(out: &Path, result: &SimResult, world: &SimWorld) -> Result<Vec<PathBuf>, GatewayError> {
    fs::create_dir_all(out)?;
    Ok(export_result(out, result, world)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub counts: Reconciliation,
    pub rejections_by_reason: BTreeMap<String, u64>,
    pub windows: usize,
    pub deduplicated_records: u64,
    pub ledger_users: usize,
    pub ledger_points: i64,
}

/// Read telemetry from `input`, or synthesize `synth` records when no input
/// is given.
pub fn ingest_inputs(input: Option<&Path>, synth: usize, seed: u64) -> Result<Vec<Inbound>, GatewayError> {
    match input {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| GatewayError::Io(format!("{}: {e}", p.display())))?;
            Ok(read_ndjson(BufReader::new(f))?)
        }
        None => Ok(random_records(synth, seed, &SynthConfig::default()).into_iter().map(Ok).collect()),
    }
}

/// Run the pipeline and write the operator outputs into `out`.
pub fn ingest(cfg: &PipelineConfig, inputs: Vec<Inbound>, out: &Path) -> Result<(PipelineState, IngestSummary), GatewayError> {
    let state = run_pipeline(cfg.clone(), inputs);
    fs::create_dir_all(out)?;
    let mut rejections = Vec::new();
    state.write_rejections(&mut rejections)?;
    fs::write(out.join("rejections.csv"), rejections)?;
    let windows = state.windowed_aggregates(cfg.window_secs);
    fs::write(out.join("aggregates.json"), serde_json::to_vec_pretty(&windows)?)?;
    let mut auth = Authorizer::default();
    let analyst = state.view("Analyst", None, &mut auth).map_err(|d| GatewayError::Validation(format!("{d:?}")))?;
    let mut lines = Vec::new();
    for r in &analyst {
        serde_json::to_writer(&mut lines, r)?;
        lines.push(b'\n');
    }
    fs::write(out.join("records.analyst.ndjson"), lines)?;
    fs::write(out.join("ledger.json"), serde_json::to_vec_pretty(&state.ledger)?)?;
    let mut audit = Vec::new();
    auth.write_audit(&mut audit)?;
    fs::write(out.join("audit.jsonl"), audit)?;

    let mut by_reason = BTreeMap::new();
    for r in &state.rejections {
        *by_reason.entry(r.reason.clone()).or_insert(0) += 1;
    }
    let dedup = state.aggregates(decarb_hubpipe::BatchWindow::all()).map(|a| a.deduplicated_records).unwrap_or(0);
    let balances = state.ledger.balances();
    let summary = IngestSummary {
        counts: state.counts,
        rejections_by_reason: by_reason,
        windows: windows.len(),
        deduplicated_records: dedup,
        ledger_users: balances.len(),
        ledger_points: balances.values().sum(),
    };
    Ok((state, summary))
}

/// Zone polygons of a simulation world with static attributes.
pub fn world_zones_geojson(world: &SimWorld) -> Value {
    let features: Vec<Value> = world
        .zones
        .iter()
        .map(|z| {
            serde_json::json!({
                "type": "Feature",
                "id": z.id,
                "geometry": world.zone_geometries.get(&z.id).cloned().unwrap_or(Value::Null),
                "properties": {
                    "zone_id": z.id,
                    "population": z.population,
                    "employment": z.employment,
                    "priced": z.priced,
                    "tract_id": z.tract_id,
                },
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}

/// A copy of `world` with a different agent count.
pub fn with_agents(world: &Arc<SimWorld>, n_agents: usize) -> Result<Arc<SimWorld>, GatewayError> {
    let max = decarb_mobsim::world::MAX_AGENTS;
    if !(1..=max).contains(&n_agents) {
        return Err(GatewayError::Validation(format!("agent count {n_agents} outside 1..={max}")));
    }
    let mut w = (**world).clone();
    w.config.n_agents = n_agents;
    Ok(Arc::new(w))
}
