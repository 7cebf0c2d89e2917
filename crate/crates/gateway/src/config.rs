//! Service configuration with file < environment < flag precedence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use decarb_hubpipe::PipelineConfig;
use decarb_mobsim::{lever_bounds, LeverBound, PolicyLevers};
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

pub const ENV_PORT: &str = "DECARB_PORT";
pub const ENV_DATA_DIR: &str = "DECARB_DATA_DIR";
pub const ENV_HUB_KEY: &str = "DECARB_HUB_KEY";

/// Narrower range for one lever. Must sit inside the simulator's own bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOverride {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub bind: String,
    pub port: u16,
    /// Holds baseline datasets by name and simulation worlds under `worlds/`.
    pub data_dir: PathBuf,
    pub baseline: String,
    pub world: String,
    pub seed: u64,
    /// Snapshot cadence in ticks for API runs.
    pub cadence: u32,
    /// Wall-clock pause between ticks of API runs, for watchable playback.
    pub tick_ms: u64,
    pub lever_bounds: BTreeMap<String, BoundOverride>,
    pub pipeline: PipelineConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            baseline: "houston-2014".into(),
            world: "demo".into(),
            seed: 7,
            cadence: 60,
            tick_ms: 0,
            lever_bounds: BTreeMap::new(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layer alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverrides {
    pub port: Option<u16>,
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Parse a TOML or JSON config by extension (anything not `.json` is TOML).
pub fn load_file(path: &Path) -> Result<GatewayConfig, GatewayError> {
    let text = fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| GatewayError::Validation(format!("{}: {e}", path.display())))
}

/// Layer file, environment and flags. `env` is injected so callers and
/// tests control what counts as the environment.
pub fn resolve(
    file: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
    flags: &FlagOverrides,
) -> Result<GatewayConfig, GatewayError> {
    let mut cfg = match file {
        Some(p) => load_file(p)?,
        None => GatewayConfig::default(),
    };
    if let Some(v) = env(ENV_PORT) {
        cfg.port = v
            .parse()
            .map_err(|_| GatewayError::Validation(format!("{ENV_PORT}={v} is not a port number")))?;
    }
    if let Some(v) = env(ENV_DATA_DIR) {
        cfg.data_dir = PathBuf::from(v);
    }
    if let Some(v) = env(ENV_HUB_KEY) {
        cfg.pipeline.key = v;
    }
    if let Some(p) = flags.port {
        cfg.port = p;
    }
    if let Some(d) = &flags.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        self.effective_bounds()?;
        if self.pipeline.key.is_empty() {
            return Err(GatewayError::Validation("pipeline.key must not be empty".into()));
        }
        Ok(())
    }

    /// Simulator bounds narrowed by the configured overrides.
    pub fn effective_bounds(&self) -> Result<Vec<LeverBound>, GatewayError> {
        let mut bounds = lever_bounds();
        for (lever, o) in &self.lever_bounds {
            let b = bounds
                .iter_mut()
                .find(|b| &b.lever == lever)
                .ok_or_else(|| GatewayError::Validation(format!("lever_bounds: unknown lever {lever}")))?;
            let min = o.min.unwrap_or(b.min);
            let max = o.max.unwrap_or(b.max);
            if min < b.min || max > b.max || min > max {
                return Err(GatewayError::Validation(format!(
                    "lever_bounds.{lever}: [{min}, {max}] must lie within [{}, {}]",
                    b.min, b.max
                )));
            }
            b.min = min;
            b.max = max;
            b.default = b.default.clamp(min, max);
        }
        Ok(bounds)
    }

    /// Reject levers outside the configured bounds.
    pub fn check_levers(&self, levers: &PolicyLevers) -> Result<(), GatewayError> {
        levers.validate()?;
        let values = serde_json::to_value(levers)?;
        for b in self.effective_bounds()? {
            let v = values[&b.lever].as_f64().unwrap_or(f64::NAN);
            if !(b.min..=b.max).contains(&v) {
                return Err(GatewayError::Validation(format!(
                    "invalid value {v} for lever {}: must lie in [{}, {}]",
                    b.lever, b.min, b.max
                )));
            }
        }
        Ok(())
    }

    /// A baseline name resolves under the data directory; an existing path
    /// is used as given.
    pub fn baseline_dir(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_dir() {
            p.to_path_buf()
        } else {
            self.data_dir.join(name)
        }
    }

    pub fn world_dir(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_dir() {
            p.to_path_buf()
        } else {
            self.data_dir.join("worlds").join(name)
        }
    }
}
