//! Multinomial logit mode choice over generalized cost.

use serde::{Deserialize, Serialize};

use crate::hub::HubService;
use crate::levers::PolicyLevers;
use crate::population::{Agent, Vehicle};
use crate::transit::Itinerary;
use crate::world::SimWorld;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    DriveGas,
    #[serde(rename = "DriveEV")]
    DriveEv,
    ParkAndRide,
    TransitDirect,
    Active,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::DriveGas,
        Mode::DriveEv,
        Mode::ParkAndRide,
        Mode::TransitDirect,
        Mode::Active,
    ];

    pub fn is_drive(self) -> bool {
        matches!(self, Mode::DriveGas | Mode::DriveEv)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::DriveGas => "DriveGas",
            Mode::DriveEv => "DriveEV",
            Mode::ParkAndRide => "ParkAndRide",
            Mode::TransitDirect => "TransitDirect",
            Mode::Active => "Active",
        }
    }
}

/// How an alternative would be executed.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    /// Road edges in order; empty means an intrazonal drive.
    Drive { edges: Vec<usize>, zone: usize },
    ParkAndRide { hub: usize, drive_edges: Vec<usize>, origin: usize, itinerary: Itinerary },
    Transit { itinerary: Itinerary },
    Active { miles: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub mode: Mode,
    pub time_min: f64,
    pub money_usd: f64,
    pub plan: Plan,
}

impl Alternative {
    pub fn generalized_cost(&self, value_of_time: f64) -> f64 {
        self.time_min / 60.0 * value_of_time + self.money_usd
    }

    /// `-(time · VOT + money) / scale`
    pub fn utility(&self, value_of_time: f64, scale_usd: f64) -> f64 {
        -self.generalized_cost(value_of_time) / scale_usd
    }
}

/// Network state seen by a traveller at decision time.
#[derive(Debug, Clone, Copy)]
pub struct ChoiceContext<'a> {
    pub world: &'a SimWorld,
    pub levers: &'a PolicyLevers,
    /// Current congested minutes per edge.
    pub edge_minutes: &'a [f64],
    /// Free parking spaces per hub.
    pub hub_free: &'a [u32],
}

/// One trip to be decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripRequest {
    pub origin: usize,
    pub dest: usize,
    /// False when the car was left elsewhere, e.g. at home on a morning
    /// transit trip.
    pub car_available: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub alternatives: Vec<Alternative>,
    pub probabilities: Vec<f64>,
    pub chosen: usize,
}

impl Choice {
    pub fn alternative(&self) -> &Alternative {
        &self.alternatives[self.chosen]
    }
}

/// Softmax of `utilities`, shifted by the maximum for stability.
pub fn logit_probabilities(utilities: &[f64]) -> Vec<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Inverse-CDF draw with `u` in `[0, 1)`.
pub fn sample_index(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left `u` above the final partial sum
    probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn drive_mode(vehicle: Vehicle) -> Option<Mode> {
    match vehicle {
        Vehicle::GasolineCar => Some(Mode::DriveGas),
        Vehicle::EV => Some(Mode::DriveEv),
        Vehicle::None => None,
    }
}

/// Per-trip money cost of moving the car `miles`, including the EV premium
/// net of the amortized incentive.
fn car_money(vehicle: Vehicle, miles: f64, ctx: &ChoiceContext) -> f64 {
    let p = &ctx.world.config.choice;
    match vehicle {
        Vehicle::EV => {
            miles * p.ev_cost_per_mile + p.ev_fixed_cost_per_trip
                - ctx.levers.ev_incentive_usd / p.ev_incentive_amortization_trips
        }
        _ => miles * p.gas_cost_per_mile,
    }
}

fn edges_time_distance(edges: &[usize], ctx: &ChoiceContext) -> (f64, f64) {
    edges.iter().fold((0.0, 0.0), |(t, d), e| {
        (t + ctx.edge_minutes[*e], d + ctx.world.edges[*e].distance_mi)
    })
}

/// Drive the car from `o` to `d` and park at the destination.
pub fn drive_alternative(vehicle: Vehicle, o: usize, d: usize, ctx: &ChoiceContext) -> Option<Alternative> {
    let mode = drive_mode(vehicle)?;
    let w = ctx.world;
    let p = &w.config.choice;
    let (edges, time, miles, priced) = if o == d {
        let miles = p.intrazonal_miles;
        (Vec::new(), miles / p.intrazonal_speed_mph * 60.0, miles, w.zones[o].priced)
    } else {
        let path = w.network.path(o, d)?;
        let (t, m) = edges_time_distance(&path.edges, ctx);
        (path.edges.clone(), t, m, path.zones.iter().any(|z| w.zones[*z].priced))
    };
    let mut money = car_money(vehicle, miles, ctx) + w.zones[d].parking_cost;
    if priced {
        money += ctx.levers.congestion_price;
    }
    Some(Alternative {
        mode,
        time_min: time + ctx.levers.parking_search_minutes,
        money_usd: money,
        plan: Plan::Drive { edges, zone: o },
    })
}

fn transit_time(it: &Itinerary, ctx: &ChoiceContext) -> f64 {
    let p = &ctx.world.config.choice;
    it.in_vehicle_min()
        + it.wait_min(ctx.levers.transit_headway_multiplier)
        + p.transfer_penalty_min * it.transfers() as f64
}

/// Drive to a hub on the way, park, and ride transit to `d`. The cheapest
/// hub with free space and a transit connection is offered.
pub fn park_and_ride_alternative(vehicle: Vehicle, o: usize, d: usize, vot: f64, ctx: &ChoiceContext) -> Option<Alternative> {
    drive_mode(vehicle)?;
    if o == d {
        return None;
    }
    let w = ctx.world;
    let p = &w.config.choice;
    let path = w.network.path(o, d)?;
    let mut best: Option<Alternative> = None;
    for (h, hub) in w.hubs.iter().enumerate() {
        let hz = w.hub_zones[h];
        if hz == d || ctx.hub_free[h] == 0 || !hub.services.contains(&HubService::ParkNRide) {
            continue;
        }
        let Some(pos) = path.zones.iter().position(|z| *z == hz) else {
            continue;
        };
        let Some(it) = w.skims.itinerary(hz, d) else {
            continue;
        };
        if !hub.routes.is_empty() && !hub.routes.iter().any(|r| r == it.first_route()) {
            continue;
        }
        let drive_edges = path.edges[..pos].to_vec();
        let (drive_t, miles) = edges_time_distance(&drive_edges, ctx);
        let alt = Alternative {
            mode: Mode::ParkAndRide,
            time_min: drive_t + transit_time(it, ctx) + p.access_egress_min / 2.0,
            money_usd: car_money(vehicle, miles, ctx) + p.pnr_parking_fee + p.transit_fare,
            plan: Plan::ParkAndRide {
                hub: h,
                drive_edges,
                origin: o,
                itinerary: it.clone(),
            },
        };
        let better = best
            .as_ref()
            .is_none_or(|b| alt.generalized_cost(vot) < b.generalized_cost(vot));
        if better {
            best = Some(alt);
        }
    }
    best
}

pub fn transit_alternative(o: usize, d: usize, ctx: &ChoiceContext) -> Option<Alternative> {
    if o == d {
        return None;
    }
    let p = &ctx.world.config.choice;
    let it = ctx.world.skims.itinerary(o, d)?;
    Some(Alternative {
        mode: Mode::TransitDirect,
        time_min: p.access_egress_min + transit_time(it, ctx),
        money_usd: p.transit_fare,
        plan: Plan::Transit { itinerary: it.clone() },
    })
}

/// Walk or cycle the free-flow road distance. Always feasible.
pub fn active_alternative(o: usize, d: usize, ctx: &ChoiceContext) -> Alternative {
    let p = &ctx.world.config.choice;
    let miles = if o == d {
        p.intrazonal_miles
    } else {
        ctx.world.network.path(o, d).map_or(p.intrazonal_miles, |x| x.distance_mi)
    };
    Alternative {
        mode: Mode::Active,
        time_min: miles / p.active_speed_mph * 60.0,
        money_usd: 0.0,
        plan: Plan::Active { miles },
    }
}

/// Feasible alternatives in draw order: own drive, park-and-ride, transit,
/// active.
pub fn alternatives(agent: &Agent, trip: TripRequest, ctx: &ChoiceContext) -> Vec<Alternative> {
    let (o, d) = (trip.origin, trip.dest);
    let mut alts = Vec::with_capacity(4);
    if trip.car_available {
        alts.extend(drive_alternative(agent.vehicle, o, d, ctx));
        alts.extend(park_and_ride_alternative(agent.vehicle, o, d, agent.value_of_time, ctx));
    }
    alts.extend(transit_alternative(o, d, ctx));
    alts.push(active_alternative(o, d, ctx));
    alts
}

/// Draw among `alts` with uniform `u`.
pub fn choose_among(alts: Vec<Alternative>, value_of_time: f64, scale_usd: f64, u: f64) -> Choice {
    assert!(!alts.is_empty(), "NoFeasibleMode: the active fallback is always offered");
    let utilities: Vec<f64> = alts.iter().map(|a| a.utility(value_of_time, scale_usd)).collect();
    let probabilities = logit_probabilities(&utilities);
    let chosen = sample_index(&probabilities, u);
    Choice {
        alternatives: alts,
        probabilities,
        chosen,
    }
}

/// Mode choice for one trip; `levers` override those in `ctx`.
pub fn choose_mode(agent: &Agent, trip: TripRequest, levers: &PolicyLevers, ctx: &ChoiceContext, u: f64) -> Choice {
    let ctx = ChoiceContext { levers, ..*ctx };
    let alts = alternatives(agent, trip, &ctx);
    choose_among(alts, agent.value_of_time, ctx.world.config.choice.logit_scale_usd, u)
}
