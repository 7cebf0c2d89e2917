//! Generate the `demo` simulation world bundle.
//!
//! Zones reuse the baseline grid. Roads join orthogonal neighbours in both
//! directions; arterials into the core are slower and tighter. Transit runs
//! two radial lines through the core, two crosstown lines and an inner loop
//! in both directions. Park-and-ride hubs sit on the radial lines.
//!
//! Usage: cargo run -p decarb-tools --bin gen_demo_world

use std::fmt::Write as _;
use std::fs;

use decarb_mobsim::world::AgentsConfig;
use decarb_tools::{data_dir, haversine_miles, write_json, zone_id, zone_layout, zones_geojson, ZoneSpec, ZONE_GRID};

/// Road distance over straight-line distance.
const CIRCUITY: f64 = 1.25;
const DEMO_AGENTS: usize = 5_000;
const SERVICE_START_MIN: u32 = 5 * 60;
const SERVICE_END_MIN: u32 = 23 * 60;

struct Line {
    id: &'static str,
    zones: Vec<(usize, usize)>,
    headway_min: u32,
    minutes_per_hop: f64,
}

fn hhmmss(min: f64) -> String {
    let s = (min * 60.0).round() as u32;
    format!("{:02}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60)
}

fn main() {
    let out = data_dir().join("worlds/demo");
    fs::create_dir_all(out.join("gtfs-lite")).expect("create world directory");
    // the demo cordon covers the core and the inner ring
    let zones: Vec<ZoneSpec> = zone_layout()
        .into_iter()
        .map(|z| ZoneSpec {
            priced: z.ring() <= 1,
            ..z
        })
        .collect();
    write_json(&out.join("zones.geojson"), &zones_geojson(&zones));

    let at = |r: usize, c: usize| -> &ZoneSpec { &zones[r * ZONE_GRID + c] };
    let mut edges = String::from("from,to,distance_mi,free_flow_min,capacity_vph\n");
    for r in 0..ZONE_GRID {
        for c in 0..ZONE_GRID {
            for (dr, dc) in [(0isize, 1isize), (1, 0), (0, -1), (-1, 0)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= ZONE_GRID as isize || nc >= ZONE_GRID as isize {
                    continue;
                }
                let (a, b) = (at(r, c), at(nr as usize, nc as usize));
                let miles = haversine_miles(a.centroid(), b.centroid()) * CIRCUITY;
                let inner = a.ring().min(b.ring());
                let (mph, cap) = match inner {
                    0 => (28.0, 260.0),
                    1 => (38.0, 360.0),
                    _ => (50.0, 500.0),
                };
                let _ = writeln!(
                    edges,
                    "{},{},{:.3},{:.2},{cap}",
                    a.id,
                    b.id,
                    miles,
                    miles / mph * 60.0
                );
            }
        }
    }
    fs::write(out.join("edges.csv"), edges).expect("write edges");

    let col = |c: usize| (0..ZONE_GRID).map(|r| (r, c)).collect::<Vec<_>>();
    let row = |r: usize| (0..ZONE_GRID).map(|c| (r, c)).collect::<Vec<_>>();
    let lines = vec![
        Line { id: "NS", zones: col(2), headway_min: 15, minutes_per_hop: 18.0 },
        Line { id: "EW", zones: row(2), headway_min: 15, minutes_per_hop: 18.0 },
        Line { id: "C1", zones: col(1), headway_min: 30, minutes_per_hop: 20.0 },
        Line { id: "C3", zones: col(3), headway_min: 30, minutes_per_hop: 20.0 },
        Line { id: "R1", zones: row(1), headway_min: 30, minutes_per_hop: 20.0 },
        Line { id: "R3", zones: row(3), headway_min: 30, minutes_per_hop: 20.0 },
        Line {
            id: "LOOP",
            zones: vec![(1, 1), (1, 2), (1, 3), (2, 3), (3, 3), (3, 2), (3, 1), (2, 1), (1, 1)],
            headway_min: 20,
            minutes_per_hop: 16.0,
        },
    ];
    let mut stops = String::from("stop_id,zone_id\n");
    for z in &zones {
        let _ = writeln!(stops, "S{},{}", z.id, z.id);
    }
    let mut routes = String::from("route_id,route_short_name\n");
    let mut trips = String::from("route_id,trip_id\n");
    let mut stop_times = String::from("trip_id,departure_time,stop_id,stop_sequence\n");
    for line in &lines {
        for (dir, suffix) in [(false, "A"), (true, "B")] {
            let route_id = format!("{}{}", line.id, suffix);
            let _ = writeln!(routes, "{route_id},{}", line.id);
            let mut seq = line.zones.clone();
            if dir {
                seq.reverse();
            }
            let mut start = SERVICE_START_MIN;
            let mut n = 0;
            while start <= SERVICE_END_MIN {
                let trip_id = format!("{route_id}-{n:03}");
                let _ = writeln!(trips, "{route_id},{trip_id}");
                for (k, (r, c)) in seq.iter().enumerate() {
                    let t = start as f64 + k as f64 * line.minutes_per_hop;
                    let _ = writeln!(stop_times, "{trip_id},{},S{},{}", hhmmss(t), zone_id(*r, *c), k + 1);
                }
                start += line.headway_min;
                n += 1;
            }
        }
    }
    let g = out.join("gtfs-lite");
    fs::write(g.join("stops.txt"), stops).expect("write stops");
    fs::write(g.join("routes.txt"), routes).expect("write routes");
    fs::write(g.join("trips.txt"), trips).expect("write trips");
    fs::write(g.join("stop_times.txt"), stop_times).expect("write stop times");

    // hubs on the radials, one per side of the core at the inner and outer ring
    let services = "park_n_ride;metro_xpress;metro_local;passenger_drop_off;private_bike";
    let mut hubs = String::from("hub_id,zone,parking_spaces,charger_ports,routes,services\n");
    for (name, (r, c), spaces, ports, routes) in [
        ("H-NORTH", (0, 2), 140, 4, "NSA;NSB"),
        ("H-SOUTH", (4, 2), 140, 4, "NSA;NSB"),
        ("H-WEST", (2, 0), 140, 4, "EWA;EWB"),
        ("H-EAST", (2, 4), 140, 4, "EWA;EWB"),
        ("H-N-INNER", (1, 2), 90, 2, "NSA;NSB;R1A;R1B;LOOPA;LOOPB"),
        ("H-S-INNER", (3, 2), 90, 2, "NSA;NSB;R3A;R3B;LOOPA;LOOPB"),
    ] {
        let _ = writeln!(hubs, "{name},{},{spaces},{ports},{routes},{services}", zone_id(r, c));
    }
    fs::write(out.join("hubs.csv"), hubs).expect("write hubs");

    let cfg = AgentsConfig {
        n_agents: DEMO_AGENTS,
        ..AgentsConfig::default()
    };
    write_json(&out.join("agents.json"), &serde_json::to_value(&cfg).expect("config serializes"));

    let factors = "class,fuel,year,g_per_mile,pm25_proxy\nPassengerCar,Gasoline,2014,430,0.01\nPassengerCar,Electric,2014,0,0\n";
    fs::write(out.join("factors.csv"), factors).expect("write factors");
    fs::copy(data_dir().join("houston-2014/tracts.csv"), out.join("tracts.csv")).expect("copy tracts");
    println!("wrote {}", out.display());
}
