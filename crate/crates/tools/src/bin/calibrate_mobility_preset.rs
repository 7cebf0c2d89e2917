//! Calibrate the `scenario4-mobility` lever preset for the demo world.
//!
//! Headways are halved and smart parking trims the search to two minutes;
//! the congestion price is then bisected until the day's VMT is 80% of the
//! no-lever VMT at the calibration seed.
//!
//! Usage: cargo run --release -p decarb-tools --bin calibrate_mobility_preset

use std::sync::Arc;

use decarb_mobsim::sim::simulate_day;
use decarb_mobsim::world::{Preset, SimWorld};
use decarb_mobsim::PolicyLevers;
use decarb_tools::{data_dir, write_json};
use serde_json::json;

const SEED: u64 = 7;
const TARGET_RATIO: f64 = 0.80;

fn main() {
    let root = data_dir().join("worlds/demo");
    let world = Arc::new(SimWorld::load(&root).expect("demo world loads"));
    let run = |levers: &PolicyLevers| simulate_day(&world, levers, &world.factors, SEED).expect("simulation runs");

    let base = run(&PolicyLevers::default());
    println!(
        "no levers: vmt {:.0}, mtco2e {:.3}, drive share {:.3}, shares {:?}",
        base.total_vmt,
        base.total_mtco2e,
        base.drive_share(),
        base.mode_shares
    );
    for h in &base.hubs {
        println!(
            "  {} peak {}/{} reroutes {} charge {} wait {:.1}",
            h.hub_id, h.peak_occupancy, h.capacity, h.reroutes, h.charger.started, h.charger.mean_wait_min
        );
    }

    let with_price = |price: f64| PolicyLevers {
        congestion_price: price,
        transit_headway_multiplier: 0.5,
        parking_search_minutes: 2.0,
        ..PolicyLevers::default()
    };
    let ratio = |price: f64| run(&with_price(price)).total_vmt / base.total_vmt;
    let (mut lo, mut hi) = (0.0, 50.0);
    let (r_lo, r_hi) = (ratio(lo), ratio(hi));
    println!("ratio at $0: {r_lo:.4}, at $50: {r_hi:.4}");
    assert!(
        r_lo > TARGET_RATIO && r_hi < TARGET_RATIO,
        "target ratio not bracketed by the price range"
    );
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > TARGET_RATIO {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 0.25 {
            break;
        }
    }
    // snap to the lever step
    let price = (0.5 * (lo + hi) * 2.0).round() / 2.0;
    let levers = with_price(price);
    let achieved = ratio(price);
    println!("price {price}: vmt ratio {achieved:.4}");

    let preset = Preset {
        description: "Mobility levers reaching a 20% VMT cut against the no-lever day".into(),
        levers,
        calibration: Some(json!({
            "seed": SEED,
            "no_lever_vmt": base.total_vmt,
            "vmt_ratio": achieved,
            "target_ratio": TARGET_RATIO,
        })),
    };
    write_json(
        &root.join("presets/scenario4-mobility.json"),
        &serde_json::to_value(&preset).expect("preset serializes"),
    );
}
