//! Simulation world bundles.
//!
//! A bundle directory holds `zones.geojson`, `edges.csv`, `hubs.csv`,
//! `gtfs-lite/`, `agents.json` and `factors.csv`, with optional `tracts.csv`
//! and `presets/*.json` lever files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use decarb_core::equity::{read_tracts_csv, TractProfile};
use decarb_core::inventory::read_factors_csv;
use decarb_core::{EmissionFactor, FuelType, VehicleClass};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::hub::{HubService, IntermodalMatrix};
use crate::levers::PolicyLevers;
use crate::network::{disconnected_zones, NetworkEdge, RoadNetwork};
use crate::population::IncomeBand;
use crate::transit::{load_gtfs_lite, TransitPattern, TransitSkims};

/// Validated desk-scale envelope.
pub const MAX_ZONES: usize = 50;
pub const MAX_AGENTS: usize = 50_000;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("world validation failed: {}", .0.join("; "))]
    ValidationFailure(Vec<String>),
}

impl WorldError {
    pub fn is_io(&self) -> bool {
        matches!(self, WorldError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub population: f64,
    pub employment: f64,
    pub tract_id: Option<String>,
    /// Inside the congestion-priced area.
    #[serde(default)]
    pub priced: bool,
    /// Destination parking charge, USD per trip.
    #[serde(default)]
    pub parking_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hub {
    pub id: String,
    pub zone: String,
    pub parking_spaces: u32,
    pub charger_ports: u32,
    pub routes: Vec<String>,
    pub services: BTreeSet<HubService>,
}

#[derive(Debug, Deserialize)]
struct HubRow {
    hub_id: String,
    zone: String,
    parking_spaces: i64,
    charger_ports: i64,
    #[serde(default)]
    routes: String,
    #[serde(default)]
    services: String,
}

/// Cost and behaviour constants of the mode-choice model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChoiceParams {
    /// USD per logit utility unit.
    pub logit_scale_usd: f64,
    pub gas_cost_per_mile: f64,
    pub ev_cost_per_mile: f64,
    /// EV ownership premium charged per trip before incentives.
    pub ev_fixed_cost_per_trip: f64,
    /// Trips over which a purchase incentive is amortized.
    pub ev_incentive_amortization_trips: f64,
    pub transit_fare: f64,
    pub pnr_parking_fee: f64,
    /// Walk access plus egress at the ends of a transit trip.
    pub access_egress_min: f64,
    pub transfer_penalty_min: f64,
    pub active_speed_mph: f64,
    pub intrazonal_miles: f64,
    pub intrazonal_speed_mph: f64,
    /// Probability an EV parking at a hub requests a charge.
    pub charge_probability: f64,
    pub charge_mean_minutes: f64,
}

impl Default for ChoiceParams {
    fn default() -> Self {
        Self {
            logit_scale_usd: 5.0,
            gas_cost_per_mile: 0.18,
            ev_cost_per_mile: 0.06,
            ev_fixed_cost_per_trip: 5.0,
            ev_incentive_amortization_trips: 2_500.0,
            transit_fare: 1.25,
            pnr_parking_fee: 0.0,
            access_egress_min: 20.0,
            transfer_penalty_min: 10.0,
            active_speed_mph: 8.0,
            intrazonal_miles: 2.0,
            intrazonal_speed_mph: 20.0,
            charge_probability: 0.5,
            charge_mean_minutes: 120.0,
        }
    }
}

/// Synthetic population settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentsConfig {
    pub n_agents: usize,
    pub employment_rate: f64,
    /// Departure windows, minutes after midnight, half-open.
    pub am_window_min: (u32, u32),
    pub pm_window_min: (u32, u32),
    /// Log-normal sigma of household income around the tract median.
    pub income_sigma: f64,
    /// Upper income bounds of the low and middle bands, USD.
    pub band_limits_usd: (f64, f64),
    pub value_of_time: BTreeMap<IncomeBand, f64>,
    /// Share of sub-two-car households with no car at all, by band.
    pub carless_share: BTreeMap<IncomeBand, f64>,
    /// Share of car owners whose car is an EV, by band.
    pub ev_share: BTreeMap<IncomeBand, f64>,
    /// Distance decay of workplace choice, miles.
    pub work_decay_miles: f64,
    /// Vehicles represented by each simulated vehicle on the road.
    pub flow_scale: f64,
    pub choice: ChoiceParams,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        use IncomeBand::*;
        Self {
            n_agents: 5_000,
            employment_rate: 0.9,
            am_window_min: (360, 540),
            pm_window_min: (960, 1140),
            income_sigma: 0.35,
            band_limits_usd: (45_000.0, 100_000.0),
            value_of_time: BTreeMap::from([(Low, 12.0), (Middle, 22.0), (High, 36.0)]),
            carless_share: BTreeMap::from([(Low, 0.45), (Middle, 0.2), (High, 0.05)]),
            ev_share: BTreeMap::from([(Low, 0.01), (Middle, 0.03), (High, 0.08)]),
            work_decay_miles: 12.0,
            flow_scale: 1.0,
            choice: ChoiceParams::default(),
        }
    }
}

/// A loaded, validated world.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub name: String,
    pub root: PathBuf,
    pub zones: Vec<Zone>,
    pub zone_index: BTreeMap<String, usize>,
    pub zone_geometries: BTreeMap<String, Value>,
    pub edges: Vec<NetworkEdge>,
    /// `(from, to)` zone indices per edge.
    pub edge_zones: Vec<(usize, usize)>,
    pub hubs: Vec<Hub>,
    /// Hub zone index per hub.
    pub hub_zones: Vec<usize>,
    pub patterns: Vec<TransitPattern>,
    pub config: AgentsConfig,
    pub factors: Vec<EmissionFactor>,
    pub factor_year: i32,
    pub tracts: BTreeMap<String, TractProfile>,
    pub matrix: IntermodalMatrix,
    pub network: RoadNetwork,
    pub skims: TransitSkims,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> WorldError {
    WorldError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn read_to_string(path: &Path) -> Result<String, WorldError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn invalid(msg: impl Into<String>) -> WorldError {
    WorldError::ValidationFailure(vec![msg.into()])
}

fn parse_zones(text: &str) -> Result<(Vec<Zone>, BTreeMap<String, Value>), WorldError> {
    let gj: Value = serde_json::from_str(text).map_err(|e| invalid(format!("zones.geojson: {e}")))?;
    let features = gj["features"]
        .as_array()
        .ok_or_else(|| invalid("zones.geojson: expected a FeatureCollection"))?;
    let mut zones = Vec::new();
    let mut geoms = BTreeMap::new();
    for f in features {
        let mut props = f["properties"].clone();
        if props.get("id").is_none() {
            if let Some(id) = props.get("zone_id").cloned() {
                props["id"] = id;
            }
        }
        let zone: Zone = serde_json::from_value(props)
            .map_err(|e| invalid(format!("zones.geojson feature {}: {e}", f["id"])))?;
        geoms.insert(zone.id.clone(), f["geometry"].clone());
        zones.push(zone);
    }
    zones.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((zones, geoms))
}

impl SimWorld {
    /// Load and validate a world bundle. Lever presets are not loaded here.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, WorldError> {
        let root = root.as_ref().to_owned();
        let name = root
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("world")
            .to_owned();
        let (zones, zone_geometries) = parse_zones(&read_to_string(&root.join("zones.geojson"))?)?;

        let edges_path = root.join("edges.csv");
        let edges: Vec<NetworkEdge> = csv::Reader::from_reader(
            std::fs::File::open(&edges_path).map_err(|e| io_err(&edges_path, e))?,
        )
        .deserialize::<EdgeRow>()
        .map(|r| r.map(NetworkEdge::from))
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("edges.csv: {e}")))?;

        let hubs_path = root.join("hubs.csv");
        let hub_rows: Vec<HubRow> = csv::Reader::from_reader(
            std::fs::File::open(&hubs_path).map_err(|e| io_err(&hubs_path, e))?,
        )
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("hubs.csv: {e}")))?;

        let gtfs_dir = root.join("gtfs-lite");
        if !gtfs_dir.is_dir() {
            return Err(io_err(&gtfs_dir, "missing gtfs-lite directory"));
        }
        let gtfs = load_gtfs_lite(&gtfs_dir).map_err(WorldError::ValidationFailure)?;

        let config: AgentsConfig = serde_json::from_str(&read_to_string(&root.join("agents.json"))?)
            .map_err(|e| invalid(format!("agents.json: {e}")))?;

        let factors_path = root.join("factors.csv");
        let factors = read_factors_csv(
            std::fs::File::open(&factors_path).map_err(|e| io_err(&factors_path, e))?,
        )
        .map_err(|e| invalid(format!("factors.csv: {e}")))?;

        let tracts_path = root.join("tracts.csv");
        let tracts = if tracts_path.exists() {
            read_tracts_csv(std::fs::File::open(&tracts_path).map_err(|e| io_err(&tracts_path, e))?)
                .map_err(|e| invalid(format!("tracts.csv: {e}")))?
                .into_iter()
                .map(|t| (t.tract_id.clone(), t))
                .collect()
        } else {
            BTreeMap::new()
        };

        Self::assemble(WorldParts {
            name,
            root,
            zones,
            zone_geometries,
            edges,
            hub_rows: hub_rows.into_iter().map(HubInput::from).collect(),
            patterns: gtfs.patterns,
            config,
            factors,
            tracts,
        })
    }

    /// Build a world from in-memory parts, running the same validation as
    /// [`SimWorld::load`].
    pub fn from_parts(parts: WorldParts) -> Result<Self, WorldError> {
        Self::assemble(parts)
    }

    fn assemble(p: WorldParts) -> Result<Self, WorldError> {
        let mut errors = Vec::new();
        let zone_index: BTreeMap<String, usize> =
            p.zones.iter().enumerate().map(|(i, z)| (z.id.clone(), i)).collect();
        if zone_index.len() != p.zones.len() {
            errors.push("duplicate zone ids".to_string());
        }
        if p.zones.is_empty() {
            errors.push("world has no zones".to_string());
        }
        if p.zones.len() > MAX_ZONES {
            errors.push(format!("{} zones exceed the {MAX_ZONES}-zone envelope", p.zones.len()));
        }
        for z in &p.zones {
            if !(z.population >= 0.0 && z.employment >= 0.0) {
                errors.push(format!("zone {} has negative population or employment", z.id));
            }
            if let Some(t) = &z.tract_id {
                if !p.tracts.is_empty() && !p.tracts.contains_key(t) {
                    errors.push(format!("zone {} links unknown tract {t}", z.id));
                }
            }
        }
        if p.zones.iter().map(|z| z.population).sum::<f64>() <= 0.0 {
            errors.push("zone populations sum to zero".to_string());
        }

        let mut edge_zones = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, e) in p.edges.iter().enumerate() {
            match (zone_index.get(&e.from), zone_index.get(&e.to)) {
                (Some(a), Some(b)) => {
                    if !seen.insert((*a, *b)) {
                        errors.push(format!("edge {i} duplicates {} -> {}", e.from, e.to));
                    }
                    edge_zones.push((*a, *b));
                }
                _ => errors.push(format!("edge {i} references unknown zone {} -> {}", e.from, e.to)),
            }
            if !(e.distance_mi > 0.0 && e.free_flow_min > 0.0 && e.capacity_vph > 0.0) {
                errors.push(format!("edge {i} ({} -> {}) needs positive distance, time and capacity", e.from, e.to));
            }
        }

        let route_ids: BTreeSet<&str> = p.patterns.iter().map(|pt| pt.route_id.as_str()).collect();
        for pt in &p.patterns {
            for z in &pt.zones {
                if !zone_index.contains_key(z) {
                    errors.push(format!("route {} stops in unknown zone {z}", pt.route_id));
                }
            }
        }
        let mut hubs = Vec::new();
        let mut hub_zones = Vec::new();
        for h in &p.hub_rows {
            if h.parking_spaces < 0 || h.charger_ports < 0 {
                errors.push(format!("hub {} has negative spaces or ports", h.hub_id));
            }
            match zone_index.get(&h.zone) {
                Some(z) => hub_zones.push(*z),
                None => errors.push(format!("hub {} is in unknown zone {}", h.hub_id, h.zone)),
            }
            for r in &h.routes {
                if !route_ids.contains(r.as_str()) {
                    errors.push(format!("hub {} serves unknown route {r}", h.hub_id));
                }
            }
            hubs.push(Hub {
                id: h.hub_id.clone(),
                zone: h.zone.clone(),
                parking_spaces: h.parking_spaces.max(0) as u32,
                charger_ports: h.charger_ports.max(0) as u32,
                routes: h.routes.clone(),
                services: h.services.clone(),
            });
        }

        let c = &p.config;
        if c.n_agents == 0 || c.n_agents > MAX_AGENTS {
            errors.push(format!("n_agents {} outside 1..={MAX_AGENTS}", c.n_agents));
        }
        if !(0.0..=1.0).contains(&c.employment_rate) {
            errors.push("employment_rate outside [0, 1]".to_string());
        }
        if c.am_window_min.0 >= c.am_window_min.1 || c.pm_window_min.0 >= c.pm_window_min.1 {
            errors.push("departure windows must be non-empty".to_string());
        }
        if c.am_window_min.1 > c.pm_window_min.0 || c.pm_window_min.1 > 24 * 60 {
            errors.push("departure windows must be ordered within the day".to_string());
        }
        for band in IncomeBand::ALL {
            match c.value_of_time.get(&band) {
                Some(v) if *v > 0.0 => {}
                _ => errors.push(format!("value_of_time for {band:?} must be positive")),
            }
            for (name, map) in [("carless_share", &c.carless_share), ("ev_share", &c.ev_share)] {
                if !map.get(&band).is_some_and(|v| (0.0..=1.0).contains(v)) {
                    errors.push(format!("{name} for {band:?} must lie in [0, 1]"));
                }
            }
        }
        if !(c.choice.logit_scale_usd > 0.0
            && c.choice.active_speed_mph > 0.0
            && c.choice.intrazonal_speed_mph > 0.0
            && c.choice.charge_mean_minutes > 0.0
            && c.flow_scale > 0.0)
        {
            errors.push("choice scale, speeds, charge duration and flow_scale must be positive".to_string());
        }

        let factor_year = p.factors.iter().map(|f| f.year).max().unwrap_or(0);
        for fuel in [FuelType::Gasoline, FuelType::Electric] {
            if !p
                .factors
                .iter()
                .any(|f| f.class == VehicleClass::PassengerCar && f.fuel == fuel && f.year == factor_year)
            {
                errors.push(format!("factors.csv lacks PassengerCar/{fuel} for {factor_year}"));
            }
        }

        if !errors.is_empty() {
            return Err(WorldError::ValidationFailure(errors));
        }

        let weighted: Vec<(usize, usize, f64, f64)> = p
            .edges
            .iter()
            .zip(&edge_zones)
            .map(|(e, (a, b))| (*a, *b, e.distance_mi, e.free_flow_min))
            .collect();
        let demand: Vec<usize> = p
            .zones
            .iter()
            .enumerate()
            .filter(|(_, z)| z.population > 0.0 || z.employment > 0.0)
            .map(|(i, _)| i)
            .collect();
        let cut = disconnected_zones(p.zones.len(), &weighted, &demand);
        if !cut.is_empty() {
            return Err(WorldError::ValidationFailure(
                cut.iter()
                    .map(|z| format!("zone {} is not strongly connected to the network", p.zones[*z].id))
                    .collect(),
            ));
        }
        let network = RoadNetwork::build(p.zones.len(), &weighted);
        let skims = TransitSkims::build(p.zones.len(), &p.patterns, &zone_index, c.choice.transfer_penalty_min);

        Ok(SimWorld {
            name: p.name,
            root: p.root,
            zones: p.zones,
            zone_index,
            zone_geometries: p.zone_geometries,
            edges: p.edges,
            edge_zones,
            hubs,
            hub_zones,
            patterns: p.patterns,
            config: p.config,
            factors: p.factors,
            factor_year,
            tracts: p.tracts,
            matrix: IntermodalMatrix::standard(),
            network,
            skims,
        })
    }

    /// Lever presets under `presets/`, keyed by file stem.
    pub fn presets(&self) -> Result<BTreeMap<String, PolicyLevers>, WorldError> {
        let dir = self.root.join("presets");
        let mut out = BTreeMap::new();
        if !dir.is_dir() {
            return Ok(out);
        }
        let entries = std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.extension().is_some_and(|x| x == "json") {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
                let text = read_to_string(&path)?;
                let preset: Preset = serde_json::from_str(&text)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                preset
                    .levers
                    .validate()
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                out.insert(stem, preset.levers);
            }
        }
        Ok(out)
    }

    pub fn preset(&self, name: &str) -> Result<PolicyLevers, WorldError> {
        self.presets()?
            .remove(name)
            .ok_or_else(|| invalid(format!("no preset named {name}")))
    }

    pub fn zone_name(&self, idx: usize) -> &str {
        &self.zones[idx].id
    }
}

/// A named lever set stored with a world bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    #[serde(default)]
    pub description: String,
    pub levers: PolicyLevers,
    /// Calibration notes written by the tool that produced the preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    from: String,
    to: String,
    distance_mi: f64,
    free_flow_min: f64,
    capacity_vph: f64,
}

impl From<EdgeRow> for NetworkEdge {
    fn from(r: EdgeRow) -> Self {
        NetworkEdge {
            from: r.from,
            to: r.to,
            distance_mi: r.distance_mi,
            free_flow_min: r.free_flow_min,
            capacity_vph: r.capacity_vph,
        }
    }
}

/// Hub as described in a bundle, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct HubInput {
    pub hub_id: String,
    pub zone: String,
    pub parking_spaces: i64,
    pub charger_ports: i64,
    pub routes: Vec<String>,
    pub services: BTreeSet<HubService>,
}

impl From<HubRow> for HubInput {
    fn from(r: HubRow) -> Self {
        let split = |s: &str| -> Vec<String> {
            s.split(';').map(str::trim).filter(|x| !x.is_empty()).map(str::to_owned).collect()
        };
        HubInput {
            hub_id: r.hub_id,
            zone: r.zone,
            parking_spaces: r.parking_spaces,
            charger_ports: r.charger_ports,
            routes: split(&r.routes),
            services: split(&r.services)
                .iter()
                .filter_map(|s| s.parse().ok())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldParts {
    pub name: String,
    pub root: PathBuf,
    pub zones: Vec<Zone>,
    pub zone_geometries: BTreeMap<String, Value>,
    pub edges: Vec<NetworkEdge>,
    pub hub_rows: Vec<HubInput>,
    pub patterns: Vec<TransitPattern>,
    pub config: AgentsConfig,
    pub factors: Vec<EmissionFactor>,
    pub tracts: BTreeMap<String, TractProfile>,
}
