//! Window aggregation as a pure fold over stored records.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Source, ValidatedRecord};

/// Half-open interval `[start, end)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchWindow {
    pub start: i64,
    pub end: i64,
}

impl BatchWindow {
    pub fn all() -> Self {
        BatchWindow { start: i64::MIN, end: i64::MAX }
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProcessError {
    #[error("no stored records fall in the window")]
    EmptyWindow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HubCharging {
    pub occupied_port_minutes: u64,
    pub port_minutes: u64,
    /// `occupied / port minutes`, in `[0, 1]`.
    pub utilization: f64,
    pub kwh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub window: Option<BatchWindow>,
    pub records_in_window: u64,
    pub deduplicated_records: u64,
    pub duplicates_removed: u64,
    pub records_by_source: BTreeMap<Source, u64>,
    pub charger: BTreeMap<String, HubCharging>,
    /// Mean reported occupancy per hub and hour of day.
    pub occupancy_by_hub_hour: BTreeMap<String, BTreeMap<u8, f64>>,
    /// Stored records per zone id, from coarsened location.
    pub records_by_zone: BTreeMap<String, u64>,
}

/// Identity used for duplicate detection: token, timestamp and payload.
pub fn dedup_key(r: &ValidatedRecord) -> String {
    let payload = serde_json::to_string(&r.payload).expect("payload serializes");
    format!("{}|{}|{}", r.device_token, r.timestamp, payload)
}

fn hour_of_day(ts: i64) -> u8 {
    (ts.rem_euclid(86_400) / 3_600) as u8
}

pub fn process(records: &[ValidatedRecord], window: BatchWindow) -> Result<Aggregates, ProcessError> {
    let mut agg = Aggregates {
        window: Some(window),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut occ: BTreeMap<String, BTreeMap<u8, (u64, u64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| window.contains(r.timestamp)) {
        agg.records_in_window += 1;
        if !seen.insert(dedup_key(r)) {
            agg.duplicates_removed += 1;
            continue;
        }
        agg.deduplicated_records += 1;
        *agg.records_by_source.entry(r.source).or_insert(0) += 1;
        if let Some(z) = &r.payload.zone_id {
            *agg.records_by_zone.entry(z.clone()).or_insert(0) += 1;
        }
        let Some(hub) = &r.hub_id else { continue };
        if r.source == Source::ChargerPort {
            let c = agg.charger.entry(hub.clone()).or_default();
            if let Some(p) = &r.payload.port {
                c.occupied_port_minutes += u64::from(p.occupied_min);
                c.port_minutes += u64::from(p.interval_min);
            }
            c.kwh += r.payload.kwh.unwrap_or(0.0);
        }
        if r.source == Source::ParkingSensor {
            if let Some(n) = r.payload.occupancy {
                let cell = occ.entry(hub.clone()).or_default().entry(hour_of_day(r.timestamp)).or_insert((0, 0));
                cell.0 += u64::from(n);
                cell.1 += 1;
            }
        }
    }
    if agg.records_in_window == 0 {
        return Err(ProcessError::EmptyWindow);
    }
    for c in agg.charger.values_mut() {
        c.utilization = if c.port_minutes == 0 {
            0.0
        } else {
            c.occupied_port_minutes as f64 / c.port_minutes as f64
        };
    }
    agg.occupancy_by_hub_hour = occ
        .into_iter()
        .map(|(hub, hours)| (hub, hours.into_iter().map(|(h, (sum, n))| (h, sum as f64 / n as f64)).collect()))
        .collect();
    Ok(agg)
}
