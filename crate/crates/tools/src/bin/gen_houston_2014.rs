//! Generate the synthetic `houston-2014` baseline dataset.
//!
//! Per-class emissions are fixed by proportional scaling: the on-road total
//! (15,932,882 MTCO2e) is split by target class shares, each class total is
//! divided by its fuel-weighted factor to obtain class VMT, and class VMT is
//! spread over zones and hours with fixed spatial and diurnal weights.
//!
//! Tract incomes are drawn from a seeded log-normal and then rank-mapped so
//! that exactly 19 of 100 tracts can carry a new-EV loan and 44 can carry a
//! used-EV loan after the $4,000 incentive.
//!
//! Usage: cargo run -p decarb-tools --bin gen_houston_2014

use std::fs::File;

use decarb_core::dataset::AffordabilityConfig;
use decarb_core::equity::{write_tracts_csv, LoanTerms, TractProfile};
use decarb_core::inventory::{
    build_baseline, class_share_report, write_activity_csv, ActivityRecord, FuelType, VehicleClass,
};
use decarb_tools::{data_dir, tracts_geojson, write_json, zone_layout, zones_geojson, tract_id, TRACT_GRID};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde_json::json;

const ON_ROAD_TOTAL: f64 = 15_932_882.0;
const BASELINE_YEAR: i32 = 2014;

const HOURLY: [f64; 24] = [
    0.8, 0.5, 0.4, 0.4, 0.7, 1.8, 4.2, 6.8, 6.5, 5.0, 4.8, 5.1, 5.4, 5.3, 5.5, 6.2, 7.4, 7.9, 6.4,
    4.6, 3.6, 3.0, 2.3, 1.5,
];

/// (class, share of on-road MTCO2e, [(fuel, VMT fraction, g/mi)])
fn class_table() -> Vec<(VehicleClass, f64, Vec<(FuelType, f64, f64)>)> {
    use FuelType::*;
    use VehicleClass::*;
    vec![
        (PassengerCar, 0.550, vec![(Gasoline, 0.979, 430.0), (Diesel, 0.020, 390.0), (Electric, 0.001, 0.0)]),
        (LightTruck, 0.333, vec![(Gasoline, 0.939, 560.0), (Diesel, 0.060, 520.0), (Electric, 0.001, 0.0)]),
        (MotorcycleRV, 0.005, vec![(Gasoline, 1.0, 350.0)]),
        (ShortHaulTruck, 0.079, vec![(Diesel, 0.85, 1150.0), (Gasoline, 0.15, 930.0)]),
        (LongHaulTruck, 0.029, vec![(Diesel, 1.0, 1720.0)]),
        (FleetVehicle, 0.0025, vec![(Gasoline, 0.699, 510.0), (Diesel, 0.300, 700.0), (Electric, 0.001, 0.0)]),
        (TransitBus, 0.0015, vec![(Diesel, 1.0, 2550.0)]),
    ]
}

fn pm25_proxy(class: VehicleClass, fuel: FuelType) -> f64 {
    match (class, fuel) {
        (_, FuelType::Electric) => 0.0,
        (VehicleClass::LongHaulTruck | VehicleClass::ShortHaulTruck | VehicleClass::TransitBus, _) => 0.08,
        (_, FuelType::Diesel) => 0.03,
        _ => 0.01,
    }
}

fn main() {
    let out = data_dir().join("houston-2014");
    std::fs::create_dir_all(&out).expect("create dataset dir");
    let zones = zone_layout();

    // spatial weights: population + employment, long-haul favours the outer ring
    let zone_weight = |class: VehicleClass| -> Vec<f64> {
        let raw: Vec<f64> = zones
            .iter()
            .map(|z| {
                let base = z.population + z.employment;
                if class == VehicleClass::LongHaulTruck && z.ring() == 2 {
                    base * 1.5
                } else {
                    base
                }
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / sum).collect()
    };
    let hour_sum: f64 = HOURLY.iter().sum();
    let hour_weight: Vec<f64> = HOURLY.iter().map(|h| h / hour_sum).collect();

    let mut activity = Vec::new();
    let mut factor_rows = Vec::new();
    for (class, share, fuels) in class_table() {
        let target = ON_ROAD_TOTAL * share;
        let grams_per_mile: f64 = fuels.iter().map(|(_, frac, rate)| frac * rate).sum();
        let class_vmt = target / (grams_per_mile * 1e-6);
        let zw = zone_weight(class);
        for (fuel, frac, rate) in &fuels {
            factor_rows.push((class, *fuel, *rate));
            for (z, w) in zones.iter().zip(&zw) {
                for (hour, hw) in hour_weight.iter().enumerate() {
                    let vmt = class_vmt * frac * w * hw;
                    activity.push(ActivityRecord {
                        class,
                        fuel: *fuel,
                        zone: z.id.clone(),
                        hour: hour as u8,
                        vmt: (vmt * 1000.0).round() / 1000.0,
                    });
                }
            }
        }
    }

    write_activity_csv(File::create(out.join("activity.csv")).unwrap(), &activity).unwrap();
    let mut factors_csv = String::from("class,fuel,year,g_per_mile,pm25_proxy\n");
    for (class, fuel, rate) in &factor_rows {
        factors_csv.push_str(&format!(
            "{class},{fuel},{BASELINE_YEAR},{rate},{}\n",
            pm25_proxy(*class, *fuel)
        ));
    }
    std::fs::write(out.join("factors.csv"), factors_csv).unwrap();

    write_json(&out.join("zones.geojson"), &zones_geojson(&zones));
    write_json(&out.join("tracts.geojson"), &tracts_geojson());
    write_json(
        &out.join("meta.json"),
        &json!({
            "name": "houston-2014",
            "baseline_year": BASELINE_YEAR,
            "base_population": 2_520_000.0,
            "population": [[2020.0, 2_520_000.0], [2050.0, 3_300_000.0]],
            "off_road_remainder": 16_140_987.0 - ON_ROAD_TOTAL,
            "sectors": { "stationary_energy": 16_454_686.0, "waste": 818_344.0 }
        }),
    );
    write_json(
        &out.join("goals.json"),
        &json!({
            "reduction": { "2030": 0.33, "2040": 0.58, "2050": 0.70 },
            "zev_share": { "2035": 0.30 },
            "vmt_per_capita_reduction": { "2050": 0.20 }
        }),
    );
    // back-solved from 30% of baseline -> 15,490 gWh -> 67 square miles
    let residual = 0.30 * ON_ROAD_TOTAL;
    let grid_intensity: f64 = residual / 15_490.0;
    let solar_yield: f64 = 15_490.0 / (67.0 * 640.0);
    write_json(
        &out.join("offset_plan.json"),
        &json!({
            "grid_intensity_mt_per_gwh": (grid_intensity * 100.0).round() / 100.0,
            "solar_yield_gwh_per_acre": (solar_yield * 10_000.0).round() / 10_000.0,
        }),
    );

    let afford = AffordabilityConfig {
        new_ev_price: 55_000.0,
        used_ev_price: 30_000.0,
        used_ev_incentive: 4_000.0,
        terms: LoanTerms::default(),
    };
    write_json(&out.join("affordability.json"), &serde_json::to_value(afford).unwrap());
    let tracts = generate_tracts(&afford);
    write_tracts_csv(File::create(out.join("tracts.csv")).unwrap(), &tracts).unwrap();

    // report
    let factors = decarb_core::inventory::read_factors_csv(File::open(out.join("factors.csv")).unwrap()).unwrap();
    let inv = build_baseline(&activity, &factors, BASELINE_YEAR).unwrap();
    println!("on-road total: {:.1} MTCO2e", inv.on_road_total());
    println!("group shares: {:?}", class_share_report(&inv).unwrap());
    println!("light-duty electric share: {:.6}", inv.light_duty_electric_share());
}

fn generate_tracts(afford: &AffordabilityConfig) -> Vec<TractProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(2014);
    let n = TRACT_GRID * TRACT_GRID;
    let terms = afford.terms;
    let used_thr = terms.annual_payment(afford.used_ev_price, afford.used_ev_incentive) / terms.budget_fraction;
    let new_thr = terms.annual_payment(afford.new_ev_price, 0.0) / terms.budget_fraction;
    let n_new = 19;
    let n_used = 44;

    let dist = LogNormal::new(55_000f64.ln(), 0.55).unwrap();
    let mut draws: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let segments = [
        (0, n - n_used, 22_000.0, 0.97 * used_thr),
        (n - n_used, n - n_new, 1.03 * used_thr, 0.97 * new_thr),
        (n - n_new, n, 1.03 * new_thr, 240_000.0),
    ];
    let mut incomes = vec![0.0; n];
    for (lo, hi, min_v, max_v) in segments {
        let (a, b) = (draws[lo], draws[hi - 1]);
        for i in lo..hi {
            let frac = if b > a { (draws[i] - a) / (b - a) } else { 0.5 };
            incomes[i] = ((min_v + frac * (max_v - min_v)) / 10.0).round() * 10.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let round4 = |v: f64| (v * 10_000.0).round() / 10_000.0;
    let mut tracts = Vec::with_capacity(n);
    for (cell, &rank) in order.iter().enumerate() {
        let q = rank as f64 / (n - 1) as f64;
        let mut noise = |scale: f64| rng.random_range(-scale..scale);
        let poverty = (0.35 - 0.30 * q + noise(0.04)).clamp(0.01, 0.6);
        tracts.push(TractProfile {
            tract_id: tract_id(cell / TRACT_GRID, cell % TRACT_GRID),
            median_income: incomes[rank],
            educational_attainment: round4((0.10 + 0.50 * q + noise(0.05)).clamp(0.02, 0.9)),
            poverty_rate: round4(poverty),
            renter_rate: round4((0.75 - 0.40 * q + noise(0.06)).clamp(0.05, 0.95)),
            sub_two_car_rate: round4((0.70 - 0.40 * q + noise(0.06)).clamp(0.05, 0.95)),
            charger_access: round4((0.2 + 2.0 * q + noise(0.3)).max(0.0)),
            ev_cost_index: (48_000.0 + noise(4_000.0)).round(),
            incentive_usd: if poverty > 0.25 { 2_500.0 } else { 0.0 },
        });
    }
    tracts
}
