//! GTFS-lite ingestion and zone-to-zone transit skims.
//!
//! Only `stops.txt`, `routes.txt`, `trips.txt` and `stop_times.txt` are read.
//! Each distinct stop sequence of a route is a pattern; its headway is the
//! mean gap between consecutive first-stop departures of the pattern's trips.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
struct StopRow {
    stop_id: String,
    zone_id: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RouteRow {
    route_id: String,
    #[serde(default)]
    route_short_name: String,
}

#[derive(Debug, Clone, Deserialize)]
struct TripRow {
    route_id: String,
    trip_id: String,
}

#[derive(Debug, Clone, Deserialize)]
struct StopTimeRow {
    trip_id: String,
    departure_time: String,
    stop_id: String,
    stop_sequence: u32,
}

/// One directional stop sequence of a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitPattern {
    pub route_id: String,
    pub short_name: String,
    pub zones: Vec<String>,
    /// Minutes from the first stop.
    pub offsets_min: Vec<f64>,
    pub headway_min: f64,
    pub trips: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtfsLite {
    pub patterns: Vec<TransitPattern>,
    /// Stop ids per zone.
    pub stops: BTreeMap<String, String>,
}

/// Seconds-since-midnight from `HH:MM:SS`; hours may exceed 23.
pub fn parse_gtfs_time(s: &str) -> Option<u32> {
    let mut parts = s.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let sec: u32 = parts.next().unwrap_or("0").parse().ok()?;
    if parts.next().is_some() || m >= 60 || sec >= 60 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_rows_from(file).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_rows_from<T: for<'de> Deserialize<'de>, R: io::Read>(r: R) -> Result<Vec<T>, csv::Error> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r)
        .deserialize()
        .collect()
}

/// Load a GTFS-lite directory. Errors are reported as messages naming the
/// offending file or entity.
pub fn load_gtfs_lite(dir: &Path) -> Result<GtfsLite, Vec<String>> {
    let stops: Vec<StopRow> = read_rows(&dir.join("stops.txt")).map_err(|e| vec![e])?;
    let routes: Vec<RouteRow> = read_rows(&dir.join("routes.txt")).map_err(|e| vec![e])?;
    let trips: Vec<TripRow> = read_rows(&dir.join("trips.txt")).map_err(|e| vec![e])?;
    let times: Vec<StopTimeRow> = read_rows(&dir.join("stop_times.txt")).map_err(|e| vec![e])?;
    build(stops, routes, trips, times)
}

fn build(
    stops: Vec<StopRow>,
    routes: Vec<RouteRow>,
    trips: Vec<TripRow>,
    times: Vec<StopTimeRow>,
) -> Result<GtfsLite, Vec<String>> {
    let mut errors = Vec::new();
    let stop_zone: BTreeMap<String, String> =
        stops.iter().map(|s| (s.stop_id.clone(), s.zone_id.clone())).collect();
    let route_names: BTreeMap<String, String> = routes
        .iter()
        .map(|r| (r.route_id.clone(), r.route_short_name.clone()))
        .collect();
    let mut trip_route = BTreeMap::new();
    for t in &trips {
        if !route_names.contains_key(&t.route_id) {
            errors.push(format!("trip {} references unknown route {}", t.trip_id, t.route_id));
        }
        trip_route.insert(t.trip_id.clone(), t.route_id.clone());
    }

    let mut by_trip: BTreeMap<String, Vec<(u32, String, u32)>> = BTreeMap::new();
    for st in &times {
        if !trip_route.contains_key(&st.trip_id) {
            errors.push(format!("stop_time references unknown trip {}", st.trip_id));
            continue;
        }
        let Some(zone) = stop_zone.get(&st.stop_id) else {
            errors.push(format!("stop_time references unknown stop {}", st.stop_id));
            continue;
        };
        let Some(secs) = parse_gtfs_time(&st.departure_time) else {
            errors.push(format!("trip {} has malformed time {:?}", st.trip_id, st.departure_time));
            continue;
        };
        by_trip
            .entry(st.trip_id.clone())
            .or_default()
            .push((st.stop_sequence, zone.clone(), secs));
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    // (route, zone sequence) -> (offsets of first trip, first-stop departures)
    let mut patterns: BTreeMap<(String, Vec<String>), (Vec<f64>, Vec<u32>)> = BTreeMap::new();
    for (trip, mut rows) in by_trip {
        rows.sort_by_key(|r| r.0);
        if rows.len() < 2 {
            errors.push(format!("trip {trip} has fewer than two stops"));
            continue;
        }
        if rows.windows(2).any(|w| w[1].2 < w[0].2) {
            errors.push(format!("trip {trip} has decreasing stop times"));
            continue;
        }
        let zones: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
        let start = rows[0].2;
        let offsets: Vec<f64> = rows.iter().map(|r| (r.2 - start) as f64 / 60.0).collect();
        let entry = patterns
            .entry((trip_route[&trip].clone(), zones))
            .or_insert_with(|| (offsets, Vec::new()));
        entry.1.push(start);
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let patterns = patterns
        .into_iter()
        .map(|((route_id, zones), (offsets_min, mut starts))| {
            starts.sort_unstable();
            let headway_min = if starts.len() > 1 {
                (starts[starts.len() - 1] - starts[0]) as f64 / 60.0 / (starts.len() - 1) as f64
            } else {
                24.0 * 60.0
            };
            TransitPattern {
                short_name: route_names[&route_id].clone(),
                route_id,
                zones,
                offsets_min,
                headway_min,
                trips: starts.len(),
            }
        })
        .collect();
    let stops = stops.into_iter().map(|s| (s.zone_id, s.stop_id)).collect();
    Ok(GtfsLite { patterns, stops })
}

/// One boarding on a transit itinerary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitLeg {
    pub pattern: usize,
    pub route_id: String,
    pub from_zone: usize,
    pub to_zone: usize,
    pub in_vehicle_min: f64,
    pub base_headway_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub legs: Vec<TransitLeg>,
}

impl Itinerary {
    pub fn in_vehicle_min(&self) -> f64 {
        self.legs.iter().map(|l| l.in_vehicle_min).sum()
    }

    /// Expected wait over all boardings: half the scaled headway each.
    pub fn wait_min(&self, headway_multiplier: f64) -> f64 {
        self.legs
            .iter()
            .map(|l| l.base_headway_min * headway_multiplier / 2.0)
            .sum()
    }

    pub fn transfers(&self) -> usize {
        self.legs.len().saturating_sub(1)
    }

    pub fn first_route(&self) -> &str {
        &self.legs[0].route_id
    }
}

/// Best itinerary per zone pair with at most one transfer, ranked by
/// in-vehicle time plus expected wait plus `transfer_penalty_min` per
/// transfer at base headways.
#[derive(Debug, Clone)]
pub struct TransitSkims {
    best: Vec<Vec<Option<Itinerary>>>,
}

impl TransitSkims {
    pub fn build(
        n_zones: usize,
        patterns: &[TransitPattern],
        zone_index: &BTreeMap<String, usize>,
        transfer_penalty_min: f64,
    ) -> Self {
        let seqs: Vec<Vec<usize>> = patterns
            .iter()
            .map(|p| p.zones.iter().map(|z| zone_index[z]).collect())
            .collect();
        let leg = |pi: usize, i: usize, j: usize| TransitLeg {
            pattern: pi,
            route_id: patterns[pi].route_id.clone(),
            from_zone: seqs[pi][i],
            to_zone: seqs[pi][j],
            in_vehicle_min: patterns[pi].offsets_min[j] - patterns[pi].offsets_min[i],
            base_headway_min: patterns[pi].headway_min,
        };
        let score = |it: &Itinerary| {
            it.in_vehicle_min() + it.wait_min(1.0) + transfer_penalty_min * it.transfers() as f64
        };

        // direct legs: (o, d) -> candidates
        let mut direct: Vec<Vec<Vec<TransitLeg>>> = vec![vec![Vec::new(); n_zones]; n_zones];
        for (pi, seq) in seqs.iter().enumerate() {
            for i in 0..seq.len() {
                for j in (i + 1)..seq.len() {
                    if seq[i] != seq[j] {
                        direct[seq[i]][seq[j]].push(leg(pi, i, j));
                    }
                }
            }
        }
        let mut best: Vec<Vec<Option<Itinerary>>> = vec![vec![None; n_zones]; n_zones];
        let offer = |slot: &mut Option<Itinerary>, cand: Itinerary| {
            let better = match slot {
                Some(cur) => score(&cand) < score(cur),
                None => true,
            };
            if better {
                *slot = Some(cand);
            }
        };
        for o in 0..n_zones {
            for d in 0..n_zones {
                if o == d {
                    continue;
                }
                for l in &direct[o][d] {
                    offer(&mut best[o][d], Itinerary { legs: vec![l.clone()] });
                }
                for s in 0..n_zones {
                    if s == o || s == d {
                        continue;
                    }
                    for a in &direct[o][s] {
                        for b in &direct[s][d] {
                            if a.pattern == b.pattern {
                                continue;
                            }
                            offer(
                                &mut best[o][d],
                                Itinerary {
                                    legs: vec![a.clone(), b.clone()],
                                },
                            );
                        }
                    }
                }
            }
        }
        Self { best }
    }

    pub fn itinerary(&self, o: usize, d: usize) -> Option<&Itinerary> {
        self.best.get(o)?.get(d)?.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<StopRow>, Vec<RouteRow>, Vec<TripRow>, Vec<StopTimeRow>) {
        let stops = ["A", "B", "C", "D"]
            .iter()
            .map(|z| StopRow {
                stop_id: format!("S{z}"),
                zone_id: z.to_string(),
            })
            .collect();
        let routes = vec![
            RouteRow {
                route_id: "R1".into(),
                route_short_name: "1".into(),
            },
            RouteRow {
                route_id: "R2".into(),
                route_short_name: "2".into(),
            },
        ];
        let mut trips = Vec::new();
        let mut times = Vec::new();
        // R1: A -> B -> C every 20 min; R2: C -> D every 30 min
        for (route, stops, gap, n, hop) in [("R1", vec!["A", "B", "C"], 20, 4, 10), ("R2", vec!["C", "D"], 30, 3, 15)] {
            for k in 0..n {
                let trip = format!("{route}-{k}");
                trips.push(TripRow {
                    route_id: route.into(),
                    trip_id: trip.clone(),
                });
                for (seq, z) in stops.iter().enumerate() {
                    let mins = 6 * 60 + k * gap + seq as u32 * hop;
                    times.push(StopTimeRow {
                        trip_id: trip.clone(),
                        departure_time: format!("{:02}:{:02}:00", mins / 60, mins % 60),
                        stop_id: format!("S{z}"),
                        stop_sequence: seq as u32 + 1,
                    });
                }
            }
        }
        (stops, routes, trips, times)
    }

    #[test]
    fn patterns_and_headways() {
        let (s, r, t, st) = sample();
        let g = build(s, r, t, st).unwrap();
        assert_eq!(g.patterns.len(), 2);
        let r1 = &g.patterns[0];
        assert_eq!(r1.zones, vec!["A", "B", "C"]);
        assert_eq!(r1.offsets_min, vec![0.0, 10.0, 20.0]);
        assert_eq!(r1.headway_min, 20.0);
        assert_eq!(g.patterns[1].headway_min, 30.0);
    }

    #[test]
    fn skims_use_one_transfer() {
        let (s, r, t, st) = sample();
        let g = build(s, r, t, st).unwrap();
        let zi: BTreeMap<String, usize> =
            ["A", "B", "C", "D"].iter().enumerate().map(|(i, z)| (z.to_string(), i)).collect();
        let skims = TransitSkims::build(4, &g.patterns, &zi, 5.0);
        let ad = skims.itinerary(0, 3).unwrap();
        assert_eq!(ad.legs.len(), 2);
        assert_eq!(ad.in_vehicle_min(), 35.0);
        assert_eq!(ad.wait_min(1.0), 25.0);
        assert_eq!(ad.wait_min(0.5), 12.5);
        assert!(skims.itinerary(3, 0).is_none());
        assert_eq!(skims.itinerary(0, 1).unwrap().first_route(), "R1");
    }

    #[test]
    fn unknown_stop_is_named() {
        let (s, r, t, mut st) = sample();
        st[0].stop_id = "nowhere".into();
        let errs = build(s, r, t, st).unwrap_err();
        assert!(errs[0].contains("nowhere"));
    }

    #[test]
    fn gtfs_times_allow_after_midnight() {
        assert_eq!(parse_gtfs_time("25:10:05"), Some(25 * 3600 + 605));
        assert_eq!(parse_gtfs_time("7:60:00"), None);
    }
}
