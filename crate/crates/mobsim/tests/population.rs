mod common;

use std::collections::BTreeMap;

use decarb_mobsim::population::{build_od, generate_population, Vehicle};
use decarb_mobsim::world::{AgentsConfig, Zone};

fn zone(id: &str, lat: f64, pop: f64, tract: Option<&str>) -> Zone {
    Zone {
        id: id.into(),
        centroid_lat: lat,
        centroid_lon: -95.4,
        population: pop,
        employment: 1_000.0,
        tract_id: tract.map(str::to_owned),
        priced: false,
        parking_cost: 0.0,
    }
}

/// Binomial oracle: with p = 3/4 and n = 10,000 the 3-sigma band is 130,
/// inside the 2% (150) tolerance.
#[test]
fn homes_follow_population_weights() {
    let zones = vec![zone("A", 29.7, 30_000.0, None), zone("B", 29.8, 10_000.0, None)];
    let agents = generate_population(&zones, &BTreeMap::new(), 10_000, 8, &AgentsConfig::default()).unwrap();
    let in_a = agents.iter().filter(|a| a.home == 0).count() as f64;
    assert!((in_a - 7_500.0).abs() <= 150.0, "{in_a}");
    assert!((10_000.0 - in_a - 2_500.0).abs() <= 150.0);
}

#[test]
fn car_ownership_tracks_tract_fleet_size() {
    let world = common::demo_world();
    let mut tracts = world.tracts.clone();
    let t = tracts.get_mut("T00").unwrap();
    t.sub_two_car_rate = 0.0;
    let zones = vec![zone("A", 29.7, 1.0, Some("T00")), zone("B", 29.8, 1.0, Some("T22"))];
    tracts.get_mut("T22").unwrap().sub_two_car_rate = 1.0;
    let agents = generate_population(&zones, &tracts, 4_000, 4, &world.config).unwrap();
    let carless = |z: usize| agents.iter().filter(|a| a.home == z && a.vehicle == Vehicle::None).count();
    assert_eq!(carless(0), 0);
    assert!(carless(1) > 100);
}

#[test]
fn od_marginals_match_the_population() {
    let world = common::demo_world();
    let agents = generate_population(&world.zones, &world.tracts, world.config.n_agents, 7, &world.config).unwrap();
    let od = build_od(&agents);
    let employed = agents.iter().filter(|a| a.employed).count() as u64;
    assert_eq!(od.total(), 2 * employed);
    let (am_start, am_end) = world.config.am_window_min;
    for (o, _) in world.zones.iter().enumerate() {
        let homed = agents.iter().filter(|a| a.employed && a.home == o).count() as u64;
        let am_out: u64 = (0..world.zones.len())
            .map(|d| od.window(o, d, (am_start / 60) as u8, am_end.div_ceil(60) as u8))
            .sum();
        assert_eq!(am_out, homed, "zone {o}");
    }
    for entry in od.trips.values() {
        assert!(*entry > 0);
    }
}
