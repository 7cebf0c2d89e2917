mod common;

use std::sync::Arc;

use decarb_mobsim::choice::{choose_among, Alternative, Plan};
use decarb_mobsim::{choose_mode, ChoiceContext, Mode, PolicyLevers, SimRun, TripRequest, Vehicle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 10_000;

fn alt(mode: Mode, money: f64) -> Alternative {
    Alternative {
        mode,
        time_min: 30.0,
        money_usd: money,
        plan: Plan::Active { miles: 1.0 },
    }
}

fn share_first(money_a: f64, money_b: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 5.0;
    let hits = (0..DRAWS)
        .filter(|_| {
            let c = choose_among(
                vec![alt(Mode::TransitDirect, money_a), alt(Mode::Active, money_b)],
                20.0,
                scale,
                rng.random(),
            );
            c.chosen == 0
        })
        .count();
    hits as f64 / DRAWS as f64
}

#[test]
fn equal_utilities_split_evenly() {
    let p = share_first(3.0, 3.0, 1);
    assert!((p - 0.5).abs() <= 0.02, "{p}");
}

#[test]
fn one_scale_unit_gives_logistic_share() {
    // alternative 0 is cheaper by exactly one scale unit (5 USD)
    let p = share_first(1.0, 6.0, 2);
    let oracle = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((oracle - 0.731).abs() < 5e-4);
    assert!((p - oracle).abs() <= 0.02, "{p} vs {oracle}");
}

fn employed_agents(world: &Arc<decarb_mobsim::SimWorld>) -> Vec<decarb_mobsim::Agent> {
    let run = SimRun::new(world.clone(), decarb_mobsim::RunSpec::new("probe", 3, PolicyLevers::default())).unwrap();
    run.agents().iter().filter(|a| a.employed).cloned().collect()
}

/// Draw morning modes for every commuter at free flow.
fn am_modes(world: &Arc<decarb_mobsim::SimWorld>, levers: &PolicyLevers) -> Vec<Mode> {
    let edge_minutes: Vec<f64> = world.edges.iter().map(|e| e.free_flow_min).collect();
    let hub_free: Vec<u32> = world.hubs.iter().map(|h| h.parking_spaces).collect();
    let ctx = ChoiceContext {
        world,
        levers,
        edge_minutes: &edge_minutes,
        hub_free: &hub_free,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    employed_agents(world)
        .iter()
        .map(|a| {
            let trip = TripRequest {
                origin: a.home,
                dest: a.work,
                car_available: a.vehicle != Vehicle::None,
            };
            choose_mode(a, trip, levers, &ctx, rng.random()).alternative().mode
        })
        .collect()
}

#[test]
fn unbounded_price_removes_driving() {
    let mut w = (*common::demo_with_agents(2_000)).clone();
    for z in &mut w.zones {
        z.priced = true;
    }
    let levers = PolicyLevers {
        congestion_price: 1e12,
        ..PolicyLevers::default()
    };
    let with_hubs = Arc::new(w.clone());
    let modes = am_modes(&with_hubs, &levers);
    assert!(modes.iter().all(|m| !m.is_drive()));

    // without park-and-ride every remaining car trip is priced out
    w.hubs.clear();
    w.hub_zones.clear();
    let modes = am_modes(&Arc::new(w), &levers);
    let share = modes
        .iter()
        .filter(|m| matches!(m, Mode::TransitDirect | Mode::Active))
        .count() as f64
        / modes.len() as f64;
    assert_eq!(share, 1.0);

    let free = am_modes(&with_hubs, &PolicyLevers::default());
    assert!(free.iter().any(|m| m.is_drive()));
}

#[test]
fn ev_drive_needs_an_ev() {
    let world = common::demo_with_agents(1_000);
    let agents = employed_agents(&world);
    let modes = am_modes(&world, &PolicyLevers::default());
    for (a, m) in agents.iter().zip(&modes) {
        match m {
            Mode::DriveEv => assert_eq!(a.vehicle, Vehicle::EV),
            Mode::DriveGas => assert_eq!(a.vehicle, Vehicle::GasolineCar),
            Mode::ParkAndRide => assert_ne!(a.vehicle, Vehicle::None),
            _ => {}
        }
    }
}
