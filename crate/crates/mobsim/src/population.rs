//! Synthetic commuters and their origin-destination matrix.

use std::collections::BTreeMap;

use decarb_core::equity::TractProfile;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{AgentsConfig, Zone};

/// Median household income assumed for zones without a tract profile.
pub const DEFAULT_MEDIAN_INCOME: f64 = 60_000.0;

/// RNG stream reserved for population synthesis; trip streams start above it.
pub const POPULATION_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncomeBand {
    Low,
    Middle,
    High,
}

impl IncomeBand {
    pub const ALL: [IncomeBand; 3] = [IncomeBand::Low, IncomeBand::Middle, IncomeBand::High];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vehicle {
    GasolineCar,
    EV,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    pub home: usize,
    pub work: usize,
    pub income_band: IncomeBand,
    pub income_usd: f64,
    pub vehicle: Vehicle,
    /// USD per hour, always positive.
    pub value_of_time: f64,
    pub employed: bool,
    pub am_departure_min: u32,
    pub pm_departure_min: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopulationError {
    #[error("zone populations are empty or sum to zero")]
    EmptyZones,
    #[error("n_agents must be positive")]
    NoAgents,
}

pub fn haversine_miles(a: (f64, f64), b: (f64, f64)) -> f64 {
    const R_MILES: f64 = 3_958.8;
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * R_MILES * h.sqrt().asin()
}

/// Draw `n` agents. Homes follow zone population; workplaces follow
/// employment discounted by `exp(-miles / work_decay_miles)`.
pub fn generate_population(
    zones: &[Zone],
    tracts: &BTreeMap<String, TractProfile>,
    n: usize,
    seed: u64,
    cfg: &AgentsConfig,
) -> Result<Vec<Agent>, PopulationError> {
    if n == 0 {
        return Err(PopulationError::NoAgents);
    }
    let homes = WeightedIndex::new(zones.iter().map(|z| z.population.max(0.0)))
        .map_err(|_| PopulationError::EmptyZones)?;
    let work_choice: Vec<Option<WeightedIndex<f64>>> = zones
        .iter()
        .map(|h| {
            let w = zones.iter().map(|z| {
                let d = haversine_miles((h.centroid_lat, h.centroid_lon), (z.centroid_lat, z.centroid_lon));
                z.employment.max(0.0) * (-d / cfg.work_decay_miles).exp()
            });
            WeightedIndex::new(w).ok()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POPULATION_STREAM);
    let mut agents = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let home = homes.sample(&mut rng);
        let tract = zones[home].tract_id.as_ref().and_then(|t| tracts.get(t));
        let median = tract.map_or(DEFAULT_MEDIAN_INCOME, |t| t.median_income).max(1.0);
        let income_usd = LogNormal::new(median.ln(), cfg.income_sigma)
            .expect("finite log-normal parameters")
            .sample(&mut rng);
        let income_band = if income_usd < cfg.band_limits_usd.0 {
            IncomeBand::Low
        } else if income_usd < cfg.band_limits_usd.1 {
            IncomeBand::Middle
        } else {
            IncomeBand::High
        };
        // Carless households are a band-dependent fraction of the tract's
        // sub-two-car households.
        let sub_two = tract.map_or(1.0, |t| t.sub_two_car_rate);
        let p_carless = (sub_two * cfg.carless_share[&income_band]).clamp(0.0, 1.0);
        let u_car: f64 = rng.random();
        let u_ev: f64 = rng.random();
        let vehicle = if u_car < p_carless {
            Vehicle::None
        } else if u_ev < cfg.ev_share[&income_band] {
            Vehicle::EV
        } else {
            Vehicle::GasolineCar
        };
        let employed = rng.random::<f64>() < cfg.employment_rate;
        let work = match (&work_choice[home], employed) {
            (Some(w), true) => w.sample(&mut rng),
            _ => home,
        };
        let am_departure_min = rng.random_range(cfg.am_window_min.0..cfg.am_window_min.1);
        let pm_departure_min = rng.random_range(cfg.pm_window_min.0..cfg.pm_window_min.1);
        agents.push(Agent {
            id,
            home,
            work,
            income_band,
            income_usd,
            vehicle,
            value_of_time: cfg.value_of_time[&income_band],
            employed,
            am_departure_min,
            pm_departure_min,
        });
    }
    Ok(agents)
}

/// Trips per `(origin, destination, hour)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ODMatrix {
    pub trips: BTreeMap<(usize, usize, u8), u64>,
}

impl ODMatrix {
    pub fn get(&self, o: usize, d: usize, hour: u8) -> u64 {
        self.trips.get(&(o, d, hour)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.trips.values().sum()
    }

    /// Trips leaving each origin, summed over hours.
    pub fn origin_totals(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for ((o, _, _), n) in &self.trips {
            *out.entry(*o).or_insert(0) += n;
        }
        out
    }

    /// Trips in `[from_hour, to_hour)` between two zones.
    pub fn window(&self, o: usize, d: usize, from_hour: u8, to_hour: u8) -> u64 {
        (from_hour..to_hour).map(|h| self.get(o, d, h)).sum()
    }
}

/// One home-to-work trip at the AM departure and one return at the PM
/// departure per employed agent.
pub fn build_od(agents: &[Agent]) -> ODMatrix {
    let mut od = ODMatrix::default();
    for a in agents.iter().filter(|a| a.employed) {
        *od.trips.entry((a.home, a.work, (a.am_departure_min / 60) as u8)).or_insert(0) += 1;
        *od.trips.entry((a.work, a.home, (a.pm_departure_min / 60) as u8)).or_insert(0) += 1;
    }
    od
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zone(id: &str, lat: f64, pop: f64, emp: f64) -> Zone {
        Zone {
            id: id.into(),
            centroid_lat: lat,
            centroid_lon: -95.4,
            population: pop,
            employment: emp,
            tract_id: None,
            priced: false,
            parking_cost: 0.0,
        }
    }

    #[test]
    fn deterministic_and_single_zone() {
        let zones = vec![zone("A", 29.7, 10.0, 5.0)];
        let cfg = AgentsConfig::default();
        let a = generate_population(&zones, &BTreeMap::new(), 200, 3, &cfg).unwrap();
        let b = generate_population(&zones, &BTreeMap::new(), 200, 3, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.iter().all(|x| x.home == 0 && x.work == 0 && x.value_of_time > 0.0));
    }

    #[test]
    fn empty_zones_rejected() {
        let zones = vec![zone("A", 29.7, 0.0, 5.0)];
        let err = generate_population(&zones, &BTreeMap::new(), 10, 1, &AgentsConfig::default());
        assert_eq!(err.unwrap_err(), PopulationError::EmptyZones);
    }

    #[test]
    fn od_construction() {
        let mut agents = Vec::new();
        for id in 0..100 {
            agents.push(Agent {
                id,
                home: 1,
                work: 2,
                income_band: IncomeBand::Middle,
                income_usd: 50_000.0,
                vehicle: Vehicle::GasolineCar,
                value_of_time: 20.0,
                employed: true,
                am_departure_min: 7 * 60 + 10,
                pm_departure_min: 17 * 60,
            });
        }
        let od = build_od(&agents);
        assert_eq!(od.window(1, 2, 6, 9), 100);
        assert_eq!(od.window(2, 1, 16, 19), 100);
        assert_eq!(od.total(), 200);
        for a in &mut agents {
            a.employed = false;
        }
        assert_eq!(build_od(&agents).total(), 0);
    }
}
