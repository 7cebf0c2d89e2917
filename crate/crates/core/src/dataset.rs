//! Loading of bundled baseline datasets from a directory.
//!
//! A dataset directory holds `meta.json`, `activity.csv`, `factors.csv`,
//! optional `zones.geojson` / `tracts.csv` / `tracts.geojson`, plus
//! `offset_plan.json`, `goals.json`, `affordability.json` and a `scenarios/`
//! folder of scenario specs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::equity::{read_tracts_csv, EquityError, LoanTerms, TractProfile};
use crate::inventory::{
    build_baseline, read_activity_csv, read_factors_csv, validate_zones, ActivityRecord,
    EmissionFactor, EmissionInventory, InventoryError,
};
use crate::scenario::{GoalSet, OffsetPlan, ScenarioError, ScenarioSpec, Trajectory};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Equity(#[from] EquityError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl DatasetError {
    /// True when the failure is an I/O problem rather than bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, DatasetError::Io { .. })
    }
}

fn open(path: &Path) -> Result<BufReader<File>, DatasetError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Non-road sectors and dataset parameters from `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub baseline_year: i32,
    pub base_population: f64,
    /// Population trajectory used by business-as-usual projections.
    pub population: Trajectory,
    /// Off-road and rail transportation emissions, MTCO2e.
    pub off_road_remainder: f64,
    /// Other community sectors, MTCO2e.
    pub sectors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffordabilityConfig {
    pub new_ev_price: f64,
    pub used_ev_price: f64,
    pub used_ev_incentive: f64,
    #[serde(default)]
    pub terms: LoanTerms,
}

#[derive(Debug, Clone)]
pub struct BaselineDataset {
    pub root: PathBuf,
    pub meta: DatasetMeta,
    pub activity: Vec<ActivityRecord>,
    pub factors: Vec<EmissionFactor>,
}

impl BaselineDataset {
    pub fn load(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_owned();
        let meta: DatasetMeta = read_json(&root.join("meta.json"))?;
        let activity = read_activity_csv(open(&root.join("activity.csv"))?)?;
        let factors = read_factors_csv(open(&root.join("factors.csv"))?)?;
        let ds = Self {
            root,
            meta,
            activity,
            factors,
        };
        let geoms = ds.zone_geometries()?;
        if !geoms.is_empty() {
            validate_zones(&ds.activity, geoms.keys().map(String::as_str))?;
        }
        Ok(ds)
    }

    pub fn inventory(&self) -> Result<EmissionInventory, DatasetError> {
        Ok(build_baseline(&self.activity, &self.factors, self.meta.baseline_year)?
            .with_off_road_remainder(self.meta.off_road_remainder))
    }

    /// Community sectors with transportation = on-road + off-road remainder.
    pub fn community_sectors(&self, inventory: &EmissionInventory) -> BTreeMap<String, f64> {
        let mut sectors = self.meta.sectors.clone();
        sectors.insert("transportation".into(), inventory.transportation_total());
        sectors
    }

    pub fn zone_geometries(&self) -> Result<BTreeMap<String, Value>, DatasetError> {
        load_geometries(&self.root.join("zones.geojson"), "zone_id")
    }

    pub fn tract_geometries(&self) -> Result<BTreeMap<String, Value>, DatasetError> {
        load_geometries(&self.root.join("tracts.geojson"), "tract_id")
    }

    pub fn tracts(&self) -> Result<Vec<TractProfile>, DatasetError> {
        Ok(read_tracts_csv(open(&self.root.join("tracts.csv"))?)?)
    }

    pub fn offset_plan(&self) -> Result<OffsetPlan, DatasetError> {
        let plan: OffsetPlan = read_json(&self.root.join("offset_plan.json"))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn goals(&self) -> Result<GoalSet, DatasetError> {
        let goals: GoalSet = read_json(&self.root.join("goals.json"))?;
        goals.validate()?;
        Ok(goals)
    }

    pub fn affordability(&self) -> Result<AffordabilityConfig, DatasetError> {
        read_json(&self.root.join("affordability.json"))
    }

    pub fn scenario_path(&self, name: &str) -> PathBuf {
        self.root.join("scenarios").join(format!("{name}.json"))
    }

    pub fn scenario(&self, name: &str) -> Result<ScenarioSpec, DatasetError> {
        load_scenario(&self.scenario_path(name))
    }

    /// Names of all bundled scenario specs, sorted.
    pub fn scenario_names(&self) -> Result<Vec<String>, DatasetError> {
        let dir = self.root.join("scenarios");
        let entries = fs::read_dir(&dir).map_err(|source| DatasetError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(str::to_owned))?
            })
            .collect();
        names.sort();
        Ok(names)
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    ScenarioSpec::from_json(&text).map_err(|e| DatasetError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Read feature geometries keyed by an id property. Missing file → empty map.
pub fn load_geometries(path: &Path, id_property: &str) -> Result<BTreeMap<String, Value>, DatasetError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let gj: Value = read_json(path)?;
    let features = gj["features"].as_array().ok_or_else(|| DatasetError::Parse {
        path: path.to_owned(),
        message: "expected a FeatureCollection".into(),
    })?;
    let mut out = BTreeMap::new();
    for f in features {
        let id = f["properties"][id_property]
            .as_str()
            .or_else(|| f["id"].as_str())
            .ok_or_else(|| DatasetError::Parse {
                path: path.to_owned(),
                message: format!("feature without {id_property}"),
            })?;
        out.insert(id.to_owned(), f["geometry"].clone());
    }
    Ok(out)
}
