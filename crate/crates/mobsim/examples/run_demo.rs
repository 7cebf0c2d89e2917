//! Run one demo-world day and print the headline numbers.
//!
//! Usage: cargo run -p decarb-mobsim --example run_demo -- [seed]

use std::sync::Arc;
use std::time::Instant;

use decarb_mobsim::{simulate_day, PolicyLevers, SimWorld};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/worlds/demo");
    let t0 = Instant::now();
    let world = Arc::new(SimWorld::load(root).expect("demo world loads"));
    let loaded = t0.elapsed();
    let result = simulate_day(&world, &PolicyLevers::default(), &world.factors, seed).expect("day runs");
    println!(
        "load {:?}, run {:?}: {} trips, vmt {:.0}, mtco2e {:.3}, hash {}",
        loaded,
        t0.elapsed() - loaded,
        result.trips_completed,
        result.total_vmt,
        result.total_mtco2e,
        &result.hash[..16]
    );
}
