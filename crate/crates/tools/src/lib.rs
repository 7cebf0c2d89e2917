//! Shared layout for the synthetic Houston-like datasets.
//!
//! The study area is a 10 × 10 grid of census tracts nested in a 5 × 5 grid of
//! traffic zones. Both the baseline dataset and the demo simulation world use
//! the same zone ids so that emissions maps overlay.

use std::path::PathBuf;

use serde_json::{json, Value};

pub const LAT_MIN: f64 = 29.50;
pub const LAT_MAX: f64 = 30.10;
pub const LON_MIN: f64 = -95.80;
pub const LON_MAX: f64 = -95.00;

pub const ZONE_GRID: usize = 5;
pub const TRACT_GRID: usize = 10;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[derive(Debug, Clone)]
pub struct ZoneSpec {
    pub id: String,
    pub row: usize,
    pub col: usize,
    pub population: f64,
    pub employment: f64,
    pub tract_id: String,
    pub priced: bool,
    pub parking_cost: f64,
}

impl ZoneSpec {
    pub fn ring(&self) -> usize {
        let c = ZONE_GRID / 2;
        self.row.abs_diff(c).max(self.col.abs_diff(c))
    }

    pub fn centroid(&self) -> (f64, f64) {
        cell_centroid(self.row, self.col, ZONE_GRID)
    }
}

pub fn zone_id(row: usize, col: usize) -> String {
    format!("Z{:02}", row * ZONE_GRID + col)
}

pub fn tract_id(row: usize, col: usize) -> String {
    format!("T{row}{col}")
}

/// (lat, lon) of a grid cell centre.
pub fn cell_centroid(row: usize, col: usize, n: usize) -> (f64, f64) {
    let dlat = (LAT_MAX - LAT_MIN) / n as f64;
    let dlon = (LON_MAX - LON_MIN) / n as f64;
    (
        LAT_MIN + dlat * (row as f64 + 0.5),
        LON_MIN + dlon * (col as f64 + 0.5),
    )
}

pub fn cell_polygon(row: usize, col: usize, n: usize) -> Value {
    let dlat = (LAT_MAX - LAT_MIN) / n as f64;
    let dlon = (LON_MAX - LON_MIN) / n as f64;
    let s = LAT_MIN + dlat * row as f64;
    let w = LON_MIN + dlon * col as f64;
    let (nn, e) = (s + dlat, w + dlon);
    let r = |v: f64| (v * 1e6).round() / 1e6;
    json!({
        "type": "Polygon",
        "coordinates": [[[r(w), r(s)], [r(e), r(s)], [r(e), r(nn)], [r(w), r(nn)], [r(w), r(s)]]]
    })
}

/// Zone attributes: a dense core, a populous inner ring with two job centres
/// and a suburban outer ring.
pub fn zone_layout() -> Vec<ZoneSpec> {
    let mut out = Vec::new();
    for row in 0..ZONE_GRID {
        for col in 0..ZONE_GRID {
            let idx = row * ZONE_GRID + col;
            let c = ZONE_GRID / 2;
            let ring = row.abs_diff(c).max(col.abs_diff(c));
            let wobble = 1.0 + 0.15 * (idx as f64 * 1.7).sin();
            let population = match ring {
                0 => 60_000.0,
                1 => 120_000.0,
                _ => 85_000.0,
            } * wobble;
            let employment = match (ring, idx) {
                (0, _) => 250_000.0,
                (1, 11) => 120_000.0,
                (1, 17) => 110_000.0,
                (1, _) => 60_000.0,
                _ => 15_000.0,
            };
            out.push(ZoneSpec {
                id: zone_id(row, col),
                row,
                col,
                population: population.round(),
                employment,
                tract_id: tract_id(2 * row, 2 * col),
                priced: ring == 0,
                parking_cost: match ring {
                    0 => 12.0,
                    1 => 4.0,
                    _ => 0.0,
                },
            });
        }
    }
    out
}

pub fn zones_geojson(zones: &[ZoneSpec]) -> Value {
    let features: Vec<Value> = zones
        .iter()
        .map(|z| {
            let (lat, lon) = z.centroid();
            json!({
                "type": "Feature",
                "id": z.id,
                "geometry": cell_polygon(z.row, z.col, ZONE_GRID),
                "properties": {
                    "zone_id": z.id,
                    "centroid_lat": (lat * 1e6).round() / 1e6,
                    "centroid_lon": (lon * 1e6).round() / 1e6,
                    "population": z.population,
                    "employment": z.employment,
                    "tract_id": z.tract_id,
                    "priced": z.priced,
                    "parking_cost": z.parking_cost,
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn tracts_geojson() -> Value {
    let mut features = Vec::new();
    for row in 0..TRACT_GRID {
        for col in 0..TRACT_GRID {
            let id = tract_id(row, col);
            features.push(json!({
                "type": "Feature",
                "id": id,
                "geometry": cell_polygon(row, col, TRACT_GRID),
                "properties": { "tract_id": id }
            }));
        }
    }
    json!({ "type": "FeatureCollection", "features": features })
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 3958.8;
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().asin()
}

pub fn write_json(path: &std::path::Path, value: &Value) {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).expect("create output directory");
    }
    let text = serde_json::to_string_pretty(value).expect("serialize json");
    std::fs::write(path, text + "\n").expect("write json");
}
