//! Write the bundled scenario specs for `houston-2014`.
//!
//! The "technical limits" efficiency trajectory is not a published number. It
//! is solved here: with every class sharing one efficiency multiplier, the
//! projected emissions at an anchor year are linear in that multiplier, so
//! the value reaching the milestone is `(1 − target) · baseline / E₁` where
//! `E₁` is the projection with the multiplier at 1. Values are rounded down
//! to four decimals so the milestone is met, never missed, by rounding.
//!
//! Usage: cargo run -p decarb-tools --bin calibrate_scenarios

use std::collections::BTreeMap;

use decarb_core::dataset::BaselineDataset;
use decarb_core::inventory::VehicleClass;
use decarb_core::scenario::{apply_scenario, check_goals, ScenarioSpec, Trajectory};
use decarb_tools::{data_dir, write_json};

fn traj(points: &[(f64, f64)]) -> Trajectory {
    Trajectory::new(points.to_vec()).expect("valid anchors")
}

fn uniform(t: &Trajectory) -> BTreeMap<VehicleClass, Trajectory> {
    VehicleClass::ALL.iter().map(|c| (*c, t.clone())).collect()
}

fn main() {
    let root = data_dir().join("houston-2014");
    let ds = BaselineDataset::load(&root).expect("load dataset");
    let inv = ds.inventory().expect("inventory");
    let base_pop = ds.meta.base_population;
    let population = ds.meta.population.clone();
    let ev0 = inv.light_duty_electric_share();
    let baseline = inv.on_road_total();
    let goals = ds.goals().expect("goals");

    let bau = ScenarioSpec {
        name: "bau".into(),
        description: Some("Business as usual: VMT tracks population, rates frozen at the baseline.".into()),
        population: population.clone(),
        vmt_per_capita_multiplier: Trajectory::constant(1.0),
        efficiency_multiplier: BTreeMap::new(),
        ev_fleet_share: Trajectory::constant(ev0),
        horizon: 2050,
    };

    // Federal 2025 car / 2027 truck standards; magnitudes are illustrative.
    let mut standards = BTreeMap::new();
    for class in VehicleClass::ALL {
        let t = if class.group() == decarb_core::ClassGroup::Personal || class == VehicleClass::FleetVehicle {
            traj(&[(2014.0, 1.0), (2025.0, 0.75)])
        } else {
            traj(&[(2014.0, 1.0), (2027.0, 0.80)])
        };
        standards.insert(class, t);
    }
    let modest_ev = traj(&[(2014.0, ev0), (2030.0, 0.05), (2050.0, 0.10)]);
    let scenario1 = ScenarioSpec {
        name: "scenario1".into(),
        description: Some("ILLUSTRATIVE: 2025 car and 2027 truck fuel-economy standards; multiplier magnitudes are not sourced.".into()),
        population: population.clone(),
        vmt_per_capita_multiplier: Trajectory::constant(1.0),
        efficiency_multiplier: standards.clone(),
        ev_fleet_share: modest_ev.clone(),
        horizon: 2050,
    };
    let scenario2 = ScenarioSpec {
        name: "scenario2".into(),
        description: Some("Scenario 1 standards plus a 30% per-capita VMT reduction by 2050.".into()),
        vmt_per_capita_multiplier: traj(&[(2020.0, 1.0), (2050.0, 0.70)]),
        ..scenario1.clone()
    };

    let fast_ev = traj(&[(2014.0, ev0), (2025.0, 0.05), (2030.0, 0.18), (2040.0, 0.44), (2050.0, 0.60)]);
    let vmt_20 = traj(&[(2020.0, 1.0), (2050.0, 0.80)]);
    let mut probe = ScenarioSpec {
        name: "scenario4".into(),
        description: None,
        population: population.clone(),
        vmt_per_capita_multiplier: vmt_20.clone(),
        efficiency_multiplier: BTreeMap::new(),
        ev_fleet_share: fast_ev.clone(),
        horizon: 2050,
    };
    let unit = apply_scenario(&inv, &probe, base_pop).expect("probe projection");
    let mut anchors = vec![(2014.0, 1.0)];
    for (&year, &target) in &goals.reduction {
        let e1 = unit.point(year).expect("milestone year").emissions_mtco2e;
        let eff = (1.0 - target) * baseline / e1;
        let eff = (eff * 10_000.0).floor() / 10_000.0;
        println!("{year}: target {target:.2} -> efficiency multiplier {eff:.4}");
        anchors.push((year as f64, eff));
    }
    let technical_limits = traj(&anchors);
    probe.efficiency_multiplier = uniform(&technical_limits);
    probe.description = Some(
        "Preferred: technical-limits efficiency (calibrated) with a 20% per-capita VMT reduction by 2050.".into(),
    );
    let scenario4 = probe;
    let scenario3 = ScenarioSpec {
        name: "scenario3".into(),
        description: Some("Technical-limits efficiency (calibrated) with a 40% per-capita VMT reduction by 2050.".into()),
        vmt_per_capita_multiplier: traj(&[(2020.0, 1.0), (2050.0, 0.60)]),
        ..scenario4.clone()
    };

    for spec in [&bau, &scenario1, &scenario2, &scenario3, &scenario4] {
        spec.validate().expect("valid spec");
        let series = apply_scenario(&inv, spec, base_pop).unwrap();
        let report = check_goals(&series, &goals.reduction_only()).unwrap();
        let last = series.points.last().unwrap();
        println!(
            "{:<10} 2050 emissions {:>12.0}  reduction {:+.4}  milestones pass: {}",
            spec.name, last.emissions_mtco2e, last.reduction, report.all_pass
        );
        write_json(
            &root.join("scenarios").join(format!("{}.json", spec.name)),
            &serde_json::to_value(spec).unwrap(),
        );
    }
}
