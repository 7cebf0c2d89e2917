//! Runtime policy levers and their declared bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LeverError {
    #[error("invalid value {value} for lever {lever}: {reason}")]
    InvalidLeverValue {
        lever: String,
        value: f64,
        reason: String,
    },
}

/// Policy levers in effect for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyLevers {
    /// USD charged per trip whose drive path touches a priced zone.
    pub congestion_price: f64,
    /// One-off EV purchase incentive, amortized over a vehicle's trips.
    pub ev_incentive_usd: f64,
    /// Scales every transit headway; below 1 means more frequent service.
    pub transit_headway_multiplier: f64,
    /// Minutes spent searching for parking at the end of a drive trip.
    pub parking_search_minutes: f64,
    /// Charger ports added at every hub.
    pub charger_ports_added: u32,
}

impl Default for PolicyLevers {
    fn default() -> Self {
        Self {
            congestion_price: 0.0,
            ev_incentive_usd: 0.0,
            transit_headway_multiplier: 1.0,
            parking_search_minutes: 5.0,
            charger_ports_added: 0,
        }
    }
}

/// Range a client may offer for one lever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverBound {
    pub lever: String,
    pub min: f64,
    pub max: f64,
    pub default: f64,
    pub step: f64,
    pub unit: String,
    pub integer: bool,
}

fn bound(lever: &str, min: f64, max: f64, default: f64, step: f64, unit: &str, integer: bool) -> LeverBound {
    LeverBound {
        lever: lever.into(),
        min,
        max,
        default,
        step,
        unit: unit.into(),
        integer,
    }
}

pub fn lever_bounds() -> Vec<LeverBound> {
    let d = PolicyLevers::default();
    vec![
        bound("congestion_price", 0.0, 50.0, d.congestion_price, 0.5, "usd_per_trip", false),
        bound("ev_incentive_usd", 0.0, 15_000.0, d.ev_incentive_usd, 250.0, "usd", false),
        bound("transit_headway_multiplier", 0.25, 4.0, d.transit_headway_multiplier, 0.05, "ratio", false),
        bound("parking_search_minutes", 0.0, 30.0, d.parking_search_minutes, 0.5, "minutes", false),
        bound("charger_ports_added", 0.0, 50.0, d.charger_ports_added as f64, 1.0, "ports_per_hub", true),
    ]
}

impl PolicyLevers {
    fn values(&self) -> [(&'static str, f64); 5] {
        [
            ("congestion_price", self.congestion_price),
            ("ev_incentive_usd", self.ev_incentive_usd),
            ("transit_headway_multiplier", self.transit_headway_multiplier),
            ("parking_search_minutes", self.parking_search_minutes),
            ("charger_ports_added", self.charger_ports_added as f64),
        ]
    }

    /// Every lever finite and within its declared bounds.
    pub fn validate(&self) -> Result<(), LeverError> {
        for ((name, value), b) in self.values().into_iter().zip(lever_bounds()) {
            check(name, value, &b)?;
        }
        Ok(())
    }

    /// Apply a partial update, validating the merged result.
    pub fn merged(&self, patch: &LeverPatch) -> Result<PolicyLevers, LeverError> {
        let bounds = lever_bounds();
        let pick = |name: &str, v: Option<f64>, current: f64| -> Result<f64, LeverError> {
            match v {
                Some(v) => {
                    let b = bounds.iter().find(|b| b.lever == name).expect("declared lever");
                    check(name, v, b)?;
                    Ok(v)
                }
                None => Ok(current),
            }
        };
        let out = PolicyLevers {
            congestion_price: pick("congestion_price", patch.congestion_price, self.congestion_price)?,
            ev_incentive_usd: pick("ev_incentive_usd", patch.ev_incentive_usd, self.ev_incentive_usd)?,
            transit_headway_multiplier: pick(
                "transit_headway_multiplier",
                patch.transit_headway_multiplier,
                self.transit_headway_multiplier,
            )?,
            parking_search_minutes: pick(
                "parking_search_minutes",
                patch.parking_search_minutes,
                self.parking_search_minutes,
            )?,
            charger_ports_added: pick(
                "charger_ports_added",
                patch.charger_ports_added,
                self.charger_ports_added as f64,
            )? as u32,
        };
        out.validate()?;
        Ok(out)
    }
}

fn check(name: &str, value: f64, b: &LeverBound) -> Result<(), LeverError> {
    let bad = |reason: String| LeverError::InvalidLeverValue {
        lever: name.into(),
        value,
        reason,
    };
    if !value.is_finite() {
        return Err(bad("must be finite".into()));
    }
    if value < 0.0 {
        return Err(bad("must be non-negative".into()));
    }
    if value < b.min || value > b.max {
        return Err(bad(format!("must lie in [{}, {}]", b.min, b.max)));
    }
    if b.integer && value.fract() != 0.0 {
        return Err(bad("must be a whole number".into()));
    }
    Ok(())
}

/// Partial lever update as submitted by a client.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeverPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congestion_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ev_incentive_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transit_headway_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parking_search_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charger_ports_added: Option<f64>,
}

impl From<&PolicyLevers> for LeverPatch {
    fn from(l: &PolicyLevers) -> Self {
        LeverPatch {
            congestion_price: Some(l.congestion_price),
            ev_incentive_usd: Some(l.ev_incentive_usd),
            transit_headway_multiplier: Some(l.transit_headway_multiplier),
            parking_search_minutes: Some(l.parking_search_minutes),
            charger_ports_added: Some(l.charger_ports_added as f64),
        }
    }
}

/// A lever set that took, or will take, effect at `effective_tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverChange {
    pub snapshot_id: u64,
    pub submitted_tick: u32,
    pub effective_tick: u32,
    pub levers: PolicyLevers,
}
