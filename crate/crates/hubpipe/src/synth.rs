//! Seeded synthetic telemetry with planted faults, for demos and tests.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::record::{FieldCategory, GpsFix, PortUsage, RiderEvent, RiderEventKind, Source, TelemetryRecord, ZoneGrid};

pub const HUBS: [&str; 6] = ["H-NORTH", "H-SOUTH", "H-WEST", "H-EAST", "H-N-INNER", "H-S-INNER"];

/// Fault rates applied per generated record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub duplicate_rate: f64,
    pub missing_field_rate: f64,
    pub regression_rate: f64,
    pub devices_per_source: usize,
    pub riders: usize,
    pub start_ts: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duplicate_rate: 0.05,
            missing_field_rate: 0.03,
            regression_rate: 0.03,
            devices_per_source: 40,
            riders: 200,
            start_ts: 1_700_000_000,
        }
    }
}

/// Raw device id for the `i`-th device of a source.
pub fn device_id(source: Source, i: usize) -> String {
    match source {
        Source::BusFleet => format!("bus-{i:04}"),
        Source::ChargerPort => format!("charger-{i:04}"),
        Source::RiderApp => format!("phone-{i:05}"),
        Source::ParkingSensor => format!("lotsensor-{i:04}"),
    }
}

pub fn user_id(i: usize) -> String {
    format!("rider-{i:05}")
}

fn fine_fix(rng: &mut ChaCha8Rng, grid: &ZoneGrid) -> GpsFix {
    // five decimals, about a metre
    let r = |v: f64| (v * 1e5).round() / 1e5;
    GpsFix {
        lat: r(rng.random_range(grid.lat_min..grid.lat_max)),
        lon: r(rng.random_range(grid.lon_min..grid.lon_max)),
    }
}

/// `n` records from many devices, with exact duplicates, missing fields and
/// timestamp regressions planted at the configured rates.
pub fn random_records(n: usize, seed: u64, cfg: &SynthConfig) -> Vec<TelemetryRecord> {
    let grid = ZoneGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = [Source::BusFleet, Source::ChargerPort, Source::RiderApp, Source::ParkingSensor];
    let mut clock: BTreeMap<(Source, usize), i64> = BTreeMap::new();
    let mut out: Vec<TelemetryRecord> = Vec::with_capacity(n);
    while out.len() < n {
        if !out.is_empty() && rng.random_bool(cfg.duplicate_rate) {
            // retransmission of one of the last few messages
            let back = rng.random_range(1..=out.len().min(3));
            let prev = out[out.len() - back].clone();
            out.push(prev);
            continue;
        }
        let source = *sources.choose(&mut rng).expect("non-empty");
        let dev = rng.random_range(0..cfg.devices_per_source.max(1));
        let last = clock.entry((source, dev)).or_insert(cfg.start_ts);
        let ts = if rng.random_bool(cfg.regression_rate) {
            *last - rng.random_range(1..600)
        } else {
            *last += rng.random_range(0..900);
            *last
        };
        let hub = HUBS[dev % HUBS.len()].to_string();
        let mut r = TelemetryRecord {
            source: Some(source),
            device_id: Some(device_id(source, dev)),
            timestamp: Some(ts),
            ..Default::default()
        };
        match source {
            Source::BusFleet => {
                r.gps = Some(fine_fix(&mut rng, &grid));
                r.occupancy = Some(rng.random_range(0..70));
                if rng.random_bool(0.2) {
                    r.image_ref = Some(format!("media://bus/{}", rng.random::<u32>()));
                }
            }
            Source::ChargerPort => {
                r.hub_id = Some(hub);
                let interval = 15;
                r.port = Some(PortUsage {
                    port_id: format!("{}", dev % 4 + 1),
                    interval_min: interval,
                    occupied_min: rng.random_range(0..=interval),
                });
                r.kwh = Some((rng.random_range(0.0..12.0f64) * 100.0).round() / 100.0);
            }
            Source::ParkingSensor => {
                r.hub_id = Some(hub);
                r.occupancy = Some(rng.random_range(0..=140));
            }
            Source::RiderApp => {
                r.hub_id = Some(hub);
                r.gps = Some(fine_fix(&mut rng, &grid));
                let kind = if rng.random_bool(0.5) {
                    RiderEventKind::ChargeStart
                } else {
                    RiderEventKind::TransitBoarding
                };
                r.event = Some(RiderEvent {
                    kind,
                    user_id: user_id(dev % cfg.riders.max(1)),
                });
                if rng.random_bool(0.1) {
                    r.image_ref = Some(format!("media://app/{}", rng.random::<u32>()));
                }
                let consent = FieldCategory::ALL.iter().map(|c| (*c, rng.random_bool(0.7))).collect();
                r.consent = Some(consent);
            }
        }
        if rng.random_bool(cfg.missing_field_rate) {
            match rng.random_range(0..3) {
                0 => r.timestamp = None,
                1 => r.device_id = None,
                _ => r.source = None,
            }
        }
        out.push(r);
    }
    out
}
