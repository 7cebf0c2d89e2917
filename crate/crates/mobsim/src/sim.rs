//! One simulated weekday: 1-minute ticks, an event heap per tick, hub lots and
//! charger queues, and live lever changes applied at tick boundaries.
//!
//! Every trip owns a ChaCha stream keyed by `(seed, trip id)` from which its
//! choice and charging draws are taken up front, so two runs with the same
//! seed see the same random numbers whatever the levers.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use decarb_core::{
    build_baseline, emissions_map, ActivityRecord, EmissionFactor, EmissionInventory, EmissionsGrid, FuelType, VehicleClass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::charger::QueueStats;
use crate::choice::{
    choose_mode, drive_alternative, logit_probabilities, sample_index, ChoiceContext, Mode, Plan, TripRequest,
};
use crate::hub::{allocate_arrivals, AccessMode, Boarding, HubArrival, HubError, HubState};
use crate::levers::{LeverChange, LeverError, PolicyLevers};
use crate::network::{bpr_minutes, EdgeLoads};
use crate::population::{generate_population, Agent, PopulationError, Vehicle, POPULATION_STREAM};
use crate::transit::Itinerary;
use crate::world::SimWorld;

pub const TICKS_PER_DAY: u32 = 1_440;
/// Trips still travelling after this many ticks abort the run.
pub const MAX_TICKS: u32 = 3 * TICKS_PER_DAY;
/// VMT reduction the gauge compares against.
pub const VMT_REDUCTION_TARGET: f64 = 0.20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Lever(#[from] LeverError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error("{0} trips still travelling after {MAX_TICKS} ticks")]
    DidNotDrain(usize),
    #[error("emissions inventory: {0}")]
    Inventory(String),
    #[error("run already finished")]
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub seed: u64,
    pub levers: PolicyLevers,
    /// Snapshot every `cadence` ticks; 0 disables interim snapshots.
    pub cadence: u32,
    /// Cumulative VMT per tick of a reference run, for the VMT gauge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_vmt: Option<Vec<f64>>,
}

impl RunSpec {
    pub fn new(run_id: impl Into<String>, seed: u64, levers: PolicyLevers) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            levers,
            cadence: 0,
            reference_vmt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotStatus {
    Running,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSnapshot {
    pub hub_id: String,
    pub occupied: u32,
    pub capacity: u32,
    pub peak_occupancy: u32,
    pub transfers: u64,
    pub reroutes: u64,
    pub charger_ports: usize,
    pub charger_queue: usize,
    pub charger_in_service: usize,
    pub charger_mean_wait_min: f64,
    pub charger_max_wait_min: f64,
}

/// Cumulative VMT against a reference run at the same tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmtGauge {
    pub reference_vmt: f64,
    pub reduction: f64,
    pub target: f64,
    pub on_track: bool,
}

/// Immutable summary of a run after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub run_id: String,
    pub tick: u32,
    pub status: SnapshotStatus,
    pub lever_snapshot_id: u64,
    pub levers: PolicyLevers,
    pub trips_started: u64,
    pub trips_completed: u64,
    pub mode_counts: BTreeMap<Mode, u64>,
    pub mode_shares: BTreeMap<Mode, f64>,
    pub vmt: f64,
    pub mtco2e: f64,
    pub hubs: Vec<HubSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmt_gauge: Option<VmtGauge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubResult {
    pub hub_id: String,
    pub zone: String,
    pub capacity: u32,
    pub occupied_end: u32,
    pub peak_occupancy: u32,
    pub parked_in: u64,
    pub parked_out: u64,
    /// Travellers turned away by a full lot who rode transit anyway.
    pub overflow: u64,
    pub transfers: u64,
    pub reroutes: u64,
    pub primary_arrivals: u64,
    pub supporting_arrivals: u64,
    pub charger: QueueStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Am,
    Pm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: u64,
    pub agent_id: u64,
    pub period: Period,
    pub origin: String,
    pub dest: String,
    pub mode: Mode,
    pub depart_min: f64,
    pub arrive_min: f64,
    pub vmt: f64,
    pub rerouted: bool,
    #[serde(default)]
    pub hub: Option<String>,
    pub charged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub run_id: String,
    pub world: String,
    pub seed: u64,
    pub levers: PolicyLevers,
    pub lever_history: Vec<LeverChange>,
    pub agents: usize,
    pub ticks: u32,
    pub trips_started: u64,
    pub trips_completed: u64,
    pub mode_counts: BTreeMap<Mode, u64>,
    pub mode_shares: BTreeMap<Mode, f64>,
    pub mode_vmt: BTreeMap<Mode, f64>,
    pub total_vmt: f64,
    pub factor_year: i32,
    /// Tailpipe MTCO2e of private cars; transit vehicles are outside the log.
    pub total_mtco2e: f64,
    pub vmt_log: Vec<ActivityRecord>,
    pub emissions_grid: EmissionsGrid,
    pub hubs: Vec<HubResult>,
    pub cumulative_vmt_by_tick: Vec<f64>,
    pub trips: Vec<TripRecord>,
    /// SHA-256 of the canonical JSON of every other field.
    pub hash: String,
}

impl SimResult {
    pub fn compute_hash(&self) -> String {
        let mut copy = self.clone();
        copy.hash = String::new();
        let bytes = serde_json::to_vec(&copy).expect("result serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn drive_share(&self) -> f64 {
        self.mode_shares.get(&Mode::DriveGas).unwrap_or(&0.0) + self.mode_shares.get(&Mode::DriveEv).unwrap_or(&0.0)
    }

    /// Mean charger wait over all hubs, weighted by sessions started.
    pub fn mean_charger_wait(&self) -> f64 {
        let started: u64 = self.hubs.iter().map(|h| h.charger.started).sum();
        if started == 0 {
            return 0.0;
        }
        self.hubs
            .iter()
            .map(|h| h.charger.mean_wait_min * h.charger.started as f64)
            .sum::<f64>()
            / started as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Drive(usize),
    Intrazonal(usize),
    ParkSearch,
    ArriveHub(usize),
    Wait(f64),
    PickupCar { hub: usize, overflow: bool },
}

#[derive(Debug, Clone)]
struct Trip {
    id: u64,
    agent: usize,
    period: Period,
    origin: usize,
    dest: usize,
    mode: Mode,
    depart: f64,
    arrive: Option<f64>,
    steps: Vec<Step>,
    cursor: usize,
    vmt: f64,
    rerouted: bool,
    overflow: bool,
    hub: Option<usize>,
    charged: bool,
    boarding: Option<Boarding>,
    draws: Draws,
}

/// Random numbers a trip may consume, drawn before any decision.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Draws {
    mode: f64,
    reroute: f64,
    charge: f64,
    charge_minutes: f64,
}

fn draws(seed: u64, trip_id: u64, charge_mean_min: f64) -> Draws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POPULATION_STREAM + 1 + trip_id);
    Draws {
        mode: rng.random(),
        reroute: rng.random(),
        charge: rng.random(),
        charge_minutes: Exp::new(1.0 / charge_mean_min)
            .expect("positive mean")
            .sample(&mut rng),
    }
}

fn time_key(t: f64) -> u64 {
    debug_assert!(t >= 0.0);
    t.to_bits()
}

/// A run in progress. Drive with [`SimRun::step`] until it returns a
/// completed snapshot, then call [`SimRun::finish`].
#[derive(Debug)]
pub struct SimRun {
    world: Arc<SimWorld>,
    spec: RunSpec,
    factors: Vec<EmissionFactor>,
    factor_year: i32,
    gas_rate: f64,
    ev_rate: f64,
    agents: Vec<Agent>,
    trips: Vec<Option<Trip>>,
    departures: BTreeMap<u32, Vec<u64>>,
    heap: BinaryHeap<Reverse<(u64, u64)>>,
    hub_batches: Vec<Vec<(u64, f64)>>,
    hubs: Vec<HubState>,
    loads: EdgeLoads,
    edge_minutes: Vec<f64>,
    levers: PolicyLevers,
    lever_id: u64,
    active_id: u64,
    pending: Option<(u64, PolicyLevers)>,
    history: Vec<LeverChange>,
    tick: u32,
    started: u64,
    completed: u64,
    vmt_log: BTreeMap<(FuelType, usize, u8), f64>,
    vmt_total: f64,
    gas_vmt: f64,
    ev_vmt: f64,
    cumulative_vmt: Vec<f64>,
    done: bool,
}

impl SimRun {
    /// Start a run with the world's own emission factors.
    pub fn new(world: Arc<SimWorld>, spec: RunSpec) -> Result<Self, SimError> {
        let factors = world.factors.clone();
        Self::with_factors(world, spec, factors)
    }

    pub fn with_factors(world: Arc<SimWorld>, spec: RunSpec, factors: Vec<EmissionFactor>) -> Result<Self, SimError> {
        spec.levers.validate()?;
        let factor_year = factors
            .iter()
            .filter(|f| f.class == VehicleClass::PassengerCar)
            .map(|f| f.year)
            .max()
            .unwrap_or(world.factor_year);
        let rate = |fuel: FuelType| {
            factors
                .iter()
                .find(|f| f.class == VehicleClass::PassengerCar && f.fuel == fuel && f.year == factor_year)
                .map(|f| f.g_per_mile)
                .ok_or_else(|| SimError::Inventory(format!("no PassengerCar/{fuel} factor for {factor_year}")))
        };
        let (gas_rate, ev_rate) = (rate(FuelType::Gasoline)?, rate(FuelType::Electric)?);
        let cfg = &world.config;
        let agents = generate_population(&world.zones, &world.tracts, cfg.n_agents, spec.seed, cfg)?;

        let mut trips = vec![None; agents.len() * 2];
        let mut departures: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for (i, a) in agents.iter().enumerate().filter(|(_, a)| a.employed) {
            for (k, period) in [(0u64, Period::Am), (1, Period::Pm)] {
                let id = a.id * 2 + k;
                let (origin, dest) = if period == Period::Am { (a.home, a.work) } else { (a.work, a.home) };
                trips[id as usize] = Some(Trip {
                    id,
                    agent: i,
                    period,
                    origin,
                    dest,
                    mode: Mode::Active,
                    depart: 0.0,
                    arrive: None,
                    steps: Vec::new(),
                    cursor: 0,
                    vmt: 0.0,
                    rerouted: false,
                    overflow: false,
                    hub: None,
                    charged: false,
                    boarding: None,
                    draws: draws(spec.seed, id, cfg.choice.charge_mean_minutes),
                });
            }
            departures.entry(a.am_departure_min).or_default().push(a.id * 2);
        }

        let levers = spec.levers.clone();
        let hubs = world
            .hubs
            .iter()
            .map(|h| HubState::new(h.parking_spaces, (h.charger_ports + levers.charger_ports_added) as usize))
            .collect();
        let history = vec![LeverChange {
            snapshot_id: 0,
            submitted_tick: 0,
            effective_tick: 0,
            levers: levers.clone(),
        }];
        Ok(Self {
            loads: EdgeLoads::new(world.edges.len()),
            edge_minutes: world.edges.iter().map(|e| e.free_flow_min).collect(),
            hub_batches: vec![Vec::new(); world.hubs.len()],
            world,
            spec,
            factors,
            factor_year,
            gas_rate,
            ev_rate,
            agents,
            trips,
            departures,
            heap: BinaryHeap::new(),
            hubs,
            levers,
            lever_id: 0,
            active_id: 0,
            pending: None,
            history,
            tick: 0,
            started: 0,
            completed: 0,
            vmt_log: BTreeMap::new(),
            vmt_total: 0.0,
            gas_vmt: 0.0,
            ev_vmt: 0.0,
            cumulative_vmt: Vec::new(),
            done: false,
        })
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn levers(&self) -> &PolicyLevers {
        &self.levers
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn lever_history(&self) -> &[LeverChange] {
        &self.history
    }

    /// Queue new levers for the next tick boundary. Resubmitting the levers
    /// already queued or in force returns the existing change unaltered.
    pub fn apply_levers(&mut self, levers: PolicyLevers) -> Result<LeverChange, SimError> {
        if self.done {
            return Err(SimError::Finished);
        }
        levers.validate()?;
        let latest = self.pending.as_ref().map_or(self.active_id, |(id, _)| *id);
        let entry = self
            .history
            .iter()
            .rev()
            .find(|c| c.snapshot_id == latest)
            .expect("every lever id is recorded");
        if entry.levers == levers {
            return Ok(entry.clone());
        }
        self.lever_id += 1;
        let change = LeverChange {
            snapshot_id: self.lever_id,
            submitted_tick: self.tick,
            effective_tick: self.tick,
            levers: levers.clone(),
        };
        self.pending = Some((self.lever_id, levers));
        self.history.push(change.clone());
        Ok(change)
    }

    fn apply_pending(&mut self) {
        if let Some((id, levers)) = self.pending.take() {
            self.active_id = id;
            for (state, hub) in self.hubs.iter_mut().zip(&self.world.hubs) {
                state
                    .chargers
                    .set_ports((hub.charger_ports + levers.charger_ports_added) as usize);
            }
            self.levers = levers;
        }
    }

    fn refresh_edge_minutes(&mut self) {
        let scale = self.world.config.flow_scale;
        for (i, e) in self.world.edges.iter().enumerate() {
            self.edge_minutes[i] = bpr_minutes(e.free_flow_min, self.loads.volume_vph(i) * scale, e.capacity_vph);
        }
    }

    fn schedule(&mut self, t: f64, trip: u64) {
        self.heap.push(Reverse((time_key(t), trip)));
    }

    fn hub_free(&self) -> Vec<u32> {
        self.hubs.iter().map(|h| h.free_spaces()).collect()
    }

    fn trip(&self, id: u64) -> &Trip {
        self.trips[id as usize].as_ref().expect("scheduled trip exists")
    }

    fn trip_mut(&mut self, id: u64) -> &mut Trip {
        self.trips[id as usize].as_mut().expect("scheduled trip exists")
    }

    fn drive_steps(edges: &[usize], zone: usize) -> Vec<Step> {
        let mut steps: Vec<Step> = if edges.is_empty() {
            vec![Step::Intrazonal(zone)]
        } else {
            edges.iter().map(|e| Step::Drive(*e)).collect()
        };
        steps.push(Step::ParkSearch);
        steps
    }

    fn ride_minutes(&self, it: &Itinerary) -> f64 {
        it.in_vehicle_min()
            + it.wait_min(self.levers.transit_headway_multiplier)
            + self.world.config.choice.transfer_penalty_min * it.transfers() as f64
    }

    /// Plan the trip and put its first step on the heap.
    fn depart(&mut self, id: u64, tick: u32) {
        let world = Arc::clone(&self.world);
        let p = &world.config.choice;
        let hub_free = self.hub_free();
        let ctx = ChoiceContext {
            world: &world,
            levers: &self.levers,
            edge_minutes: &self.edge_minutes,
            hub_free: &hub_free,
        };
        let trip = self.trip(id).clone();
        let agent = &self.agents[trip.agent];

        // A morning car trip fixes where the car is in the evening.
        let am = (trip.period == Period::Pm).then(|| self.trip(id - 1).clone());
        let forced = match &am {
            Some(m) if m.mode.is_drive() => Some(Mode::DriveGas),
            Some(m) if m.hub.is_some() || m.overflow => Some(Mode::ParkAndRide),
            _ => None,
        };

        let (mode, steps, boarding) = match (forced, &am) {
            (Some(Mode::ParkAndRide), Some(m)) => {
                let h = m.hub.expect("morning park-and-ride records its hub");
                let hz = world.hub_zones[h];
                let mut steps = Vec::new();
                match world.skims.itinerary(trip.origin, hz) {
                    Some(it) => {
                        steps.push(Step::Wait(p.access_egress_min / 2.0));
                        steps.push(Step::Wait(self.ride_minutes(it)));
                    }
                    None => {
                        let miles = world.network.path(trip.origin, hz).map_or(p.intrazonal_miles, |x| x.distance_mi);
                        steps.push(Step::Wait(miles / p.active_speed_mph * 60.0));
                    }
                }
                steps.push(Step::PickupCar { hub: h, overflow: m.overflow });
                if let Some(path) = world.network.path(hz, trip.dest) {
                    steps.extend(path.edges.iter().map(|e| Step::Drive(*e)));
                }
                (Mode::ParkAndRide, steps, None)
            }
            (Some(_), _) => {
                let alt = drive_alternative(agent.vehicle, trip.origin, trip.dest, &ctx)
                    .expect("a car driven to work can be driven home");
                let Plan::Drive { edges, zone } = &alt.plan else { unreachable!() };
                (alt.mode, Self::drive_steps(edges, *zone), None)
            }
            (None, _) => {
                let req = TripRequest {
                    origin: trip.origin,
                    dest: trip.dest,
                    car_available: trip.period == Period::Am && agent.vehicle != Vehicle::None,
                };
                let choice = choose_mode(agent, req, &self.levers, &ctx, trip.draws.mode);
                let alt = choice.alternative();
                match &alt.plan {
                    Plan::Drive { edges, zone } => (alt.mode, Self::drive_steps(edges, *zone), None),
                    Plan::ParkAndRide {
                        hub,
                        drive_edges,
                        itinerary,
                        ..
                    } => {
                        let mut steps: Vec<Step> = drive_edges.iter().map(|e| Step::Drive(*e)).collect();
                        steps.push(Step::ArriveHub(*hub));
                        steps.push(Step::Wait(self.ride_minutes(itinerary)));
                        steps.push(Step::Wait(p.access_egress_min / 2.0));
                        let boarding = Boarding {
                            route_id: itinerary.first_route().to_owned(),
                            wait_minutes: itinerary.wait_min(self.levers.transit_headway_multiplier),
                        };
                        (Mode::ParkAndRide, steps, Some(boarding))
                    }
                    Plan::Transit { itinerary } => (
                        Mode::TransitDirect,
                        vec![
                            Step::Wait(p.access_egress_min / 2.0),
                            Step::Wait(self.ride_minutes(itinerary)),
                            Step::Wait(p.access_egress_min / 2.0),
                        ],
                        None,
                    ),
                    Plan::Active { .. } => (Mode::Active, vec![Step::Wait(alt.time_min)], None),
                }
            }
        };
        let t = tick as f64;
        let trip = self.trip_mut(id);
        trip.mode = mode;
        trip.steps = steps;
        trip.boarding = boarding;
        trip.depart = t;
        self.started += 1;
        self.schedule(t, id);
    }

    fn record_vmt(&mut self, id: u64, zone: usize, miles: f64, t: f64) {
        let vehicle = self.agents[self.trip(id).agent].vehicle;
        let fuel = if vehicle == Vehicle::EV { FuelType::Electric } else { FuelType::Gasoline };
        let hour = ((t / 60.0) as u32).min(23) as u8;
        *self.vmt_log.entry((fuel, zone, hour)).or_insert(0.0) += miles;
        self.vmt_total += miles;
        match fuel {
            FuelType::Electric => self.ev_vmt += miles,
            _ => self.gas_vmt += miles,
        }
        self.trip_mut(id).vmt += miles;
    }

    fn execute(&mut self, id: u64, t: f64) {
        let step = {
            let trip = self.trip(id);
            trip.steps.get(trip.cursor).copied()
        };
        let Some(step) = step else {
            let trip = self.trip_mut(id);
            trip.arrive = Some(t);
            let (period, agent) = (trip.period, trip.agent);
            self.completed += 1;
            if period == Period::Am {
                let pm = (self.agents[agent].pm_departure_min).max(t.floor() as u32 + 1);
                self.departures.entry(pm).or_default().push(id + 1);
            }
            return;
        };
        let world = Arc::clone(&self.world);
        let p = &world.config.choice;
        let dt = match step {
            Step::Drive(e) => {
                let edge = &world.edges[e];
                self.loads.record(e, self.tick);
                let minutes = bpr_minutes(
                    edge.free_flow_min,
                    self.loads.volume_vph(e) * world.config.flow_scale,
                    edge.capacity_vph,
                );
                let (zone, miles) = (world.edge_zones[e].0, edge.distance_mi);
                self.record_vmt(id, zone, miles, t);
                minutes
            }
            Step::Intrazonal(z) => {
                let (miles, speed) = (p.intrazonal_miles, p.intrazonal_speed_mph);
                self.record_vmt(id, z, miles, t);
                miles / speed * 60.0
            }
            Step::ParkSearch => self.levers.parking_search_minutes,
            Step::Wait(m) => m,
            Step::PickupCar { hub, overflow } => {
                if !overflow {
                    self.hubs[hub].release();
                }
                0.0
            }
            Step::ArriveHub(h) => {
                self.hub_batches[h].push((id, t));
                return;
            }
        };
        self.trip_mut(id).cursor += 1;
        self.schedule(t + dt, id);
    }

    /// Admit this tick's lot arrivals; turned-away drivers re-choose.
    fn resolve_hubs(&mut self) -> Result<(), SimError> {
        let world = Arc::clone(&self.world);
        for h in 0..self.hubs.len() {
            let batch = std::mem::take(&mut self.hub_batches[h]);
            if batch.is_empty() {
                continue;
            }
            let arrivals = batch
                .iter()
                .map(|(id, t)| {
                    let trip = self.trip(*id);
                    let ev = self.agents[trip.agent].vehicle == Vehicle::EV;
                    HubArrival {
                        trip_id: *id,
                        access: if ev { AccessMode::EvAutoOwnership } else { AccessMode::Other },
                        arrival_min: *t,
                        charge_minutes: (ev && trip.draws.charge < world.config.choice.charge_probability)
                            .then_some(trip.draws.charge_minutes),
                        boarding: trip.boarding.clone(),
                    }
                })
                .collect();
            for (arrival, outcome) in allocate_arrivals(&mut self.hubs[h], arrivals, &world.matrix)? {
                let id = arrival.trip_id;
                let t = arrival.arrival_min;
                if outcome.parked {
                    let trip = self.trip_mut(id);
                    trip.hub = Some(h);
                    trip.charged = outcome.charging;
                    trip.cursor += 1;
                    self.schedule(t, id);
                    continue;
                }
                self.reroute(h, id, t);
            }
        }
        Ok(())
    }

    fn reroute(&mut self, h: usize, id: u64, t: f64) {
        let world = Arc::clone(&self.world);
        let hub_free = self.hub_free();
        let ctx = ChoiceContext {
            world: &world,
            levers: &self.levers,
            edge_minutes: &self.edge_minutes,
            hub_free: &hub_free,
        };
        let trip = self.trip(id).clone();
        let agent = &self.agents[trip.agent];
        let p = &world.config.choice;
        let hz = world.hub_zones[h];
        let drive = drive_alternative(agent.vehicle, hz, trip.dest, &ctx).expect("hub lies on a drivable path");
        let rest: f64 = trip.steps[trip.cursor + 1..]
            .iter()
            .map(|s| if let Step::Wait(m) = s { *m } else { 0.0 })
            .sum();
        let scale = p.logit_scale_usd;
        let u_transit = -(rest / 60.0 * agent.value_of_time + p.transit_fare) / scale;
        let probs = logit_probabilities(&[drive.utility(agent.value_of_time, scale), u_transit]);
        self.hubs[h].reroutes += 1;
        let trip = self.trip_mut(id);
        trip.rerouted = true;
        if sample_index(&probs, trip.draws.reroute) == 0 {
            let Plan::Drive { edges, zone } = &drive.plan else { unreachable!() };
            trip.mode = drive.mode;
            trip.steps.truncate(trip.cursor);
            trip.steps.extend(Self::drive_steps(edges, *zone));
            trip.boarding = None;
        } else {
            // the car stays near the hub and is collected on the way home
            trip.mode = Mode::TransitDirect;
            trip.overflow = true;
            trip.hub = Some(h);
            trip.cursor += 1;
            self.hubs[h].overflow_in += 1;
        }
        self.schedule(t, id);
    }

    fn travelling(&self) -> usize {
        (self.started - self.completed) as usize
    }

    /// Process one tick. Returns the snapshot due after it, if any; the last
    /// call returns the `Completed` snapshot.
    pub fn step(&mut self) -> Result<Option<Snapshot>, SimError> {
        if self.done {
            return Err(SimError::Finished);
        }
        let tick = self.tick;
        self.apply_pending();
        self.loads.advance(tick);
        self.refresh_edge_minutes();
        if let Some(mut ids) = self.departures.remove(&tick) {
            ids.sort_unstable();
            for id in ids {
                self.depart(id, tick);
            }
        }
        let horizon = (tick + 1) as f64;
        loop {
            while let Some(Reverse((key, id))) = self.heap.peek().copied() {
                let t = f64::from_bits(key);
                if t >= horizon {
                    break;
                }
                self.heap.pop();
                self.execute(id, t);
            }
            if self.hub_batches.iter().all(|b| b.is_empty()) {
                break;
            }
            self.resolve_hubs()?;
        }
        for hub in &mut self.hubs {
            hub.chargers.advance_to(horizon);
        }
        self.cumulative_vmt.push(self.vmt_total);
        self.tick += 1;

        let day_over = self.tick >= TICKS_PER_DAY && self.travelling() == 0 && self.departures.is_empty();
        if day_over {
            self.done = true;
            let mut last = self.snapshot(SnapshotStatus::Completed, self.tick);
            last.mtco2e = self.inventory()?.on_road_total();
            return Ok(Some(last));
        }
        if self.tick >= MAX_TICKS {
            self.done = true;
            return Err(SimError::DidNotDrain(self.travelling()));
        }
        let cadence = self.spec.cadence;
        if cadence > 0 && tick.is_multiple_of(cadence) && tick < TICKS_PER_DAY {
            return Ok(Some(self.snapshot(SnapshotStatus::Running, tick)));
        }
        Ok(None)
    }

    fn mode_counts(&self) -> BTreeMap<Mode, u64> {
        let mut counts: BTreeMap<Mode, u64> = Mode::ALL.iter().map(|m| (*m, 0)).collect();
        for trip in self.trips.iter().flatten().filter(|t| !t.steps.is_empty()) {
            *counts.get_mut(&trip.mode).expect("all modes present") += 1;
        }
        counts
    }

    fn shares(counts: &BTreeMap<Mode, u64>) -> BTreeMap<Mode, f64> {
        let total: u64 = counts.values().sum();
        counts
            .iter()
            .map(|(m, n)| (*m, if total == 0 { 0.0 } else { *n as f64 / total as f64 }))
            .collect()
    }

    /// Snapshot of the current state, labelled `tick`.
    pub fn snapshot(&self, status: SnapshotStatus, tick: u32) -> Snapshot {
        let mode_counts = self.mode_counts();
        let vmt_gauge = self.spec.reference_vmt.as_ref().and_then(|r| {
            let idx = (self.cumulative_vmt.len().max(1) - 1).min(r.len().checked_sub(1)?);
            let reference = r[idx];
            (reference > 0.0).then(|| {
                let reduction = 1.0 - self.vmt_total / reference;
                VmtGauge {
                    reference_vmt: reference,
                    reduction,
                    target: VMT_REDUCTION_TARGET,
                    on_track: reduction >= VMT_REDUCTION_TARGET,
                }
            })
        });
        Snapshot {
            run_id: self.spec.run_id.clone(),
            tick,
            status,
            lever_snapshot_id: self.active_id,
            levers: self.levers.clone(),
            trips_started: self.started,
            trips_completed: self.completed,
            mode_shares: Self::shares(&mode_counts),
            mode_counts,
            vmt: self.vmt_total,
            mtco2e: (self.gas_vmt * self.gas_rate + self.ev_vmt * self.ev_rate) * 1e-6,
            hubs: self
                .world
                .hubs
                .iter()
                .zip(&self.hubs)
                .map(|(h, s)| {
                    let q = s.charger_stats();
                    HubSnapshot {
                        hub_id: h.id.clone(),
                        occupied: s.occupied,
                        capacity: s.capacity,
                        peak_occupancy: s.peak_occupancy,
                        transfers: s.transfers,
                        reroutes: s.reroutes,
                        charger_ports: q.ports,
                        charger_queue: s.chargers.queue_len(),
                        charger_in_service: s.chargers.in_service(),
                        charger_mean_wait_min: q.mean_wait_min,
                        charger_max_wait_min: q.max_wait_min,
                    }
                })
                .collect(),
            vmt_gauge,
        }
    }

    /// Run the remaining ticks, discarding snapshots.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while !self.done {
            self.step()?;
        }
        Ok(())
    }

    fn activity(&self) -> Vec<ActivityRecord> {
        self.vmt_log
            .iter()
            .map(|((fuel, zone, hour), vmt)| ActivityRecord {
                class: VehicleClass::PassengerCar,
                fuel: *fuel,
                zone: self.world.zones[*zone].id.clone(),
                hour: *hour,
                vmt: *vmt,
            })
            .collect()
    }

    fn inventory(&self) -> Result<EmissionInventory, SimError> {
        build_baseline(&self.activity(), &self.factors, self.factor_year).map_err(|e| SimError::Inventory(e.to_string()))
    }

    /// Assemble the result of a completed run.
    pub fn finish(&self) -> Result<SimResult, SimError> {
        let w = &self.world;
        let vmt_log = self.activity();
        let inventory = self.inventory()?;
        let mode_counts = self.mode_counts();
        let mut mode_vmt: BTreeMap<Mode, f64> = Mode::ALL.iter().map(|m| (*m, 0.0)).collect();
        let mut trips = Vec::new();
        for t in self.trips.iter().flatten().filter(|t| !t.steps.is_empty()) {
            *mode_vmt.get_mut(&t.mode).expect("all modes present") += t.vmt;
            trips.push(TripRecord {
                trip_id: t.id,
                agent_id: self.agents[t.agent].id,
                period: t.period,
                origin: w.zones[t.origin].id.clone(),
                dest: w.zones[t.dest].id.clone(),
                mode: t.mode,
                depart_min: t.depart,
                arrive_min: t.arrive.unwrap_or(f64::NAN),
                vmt: t.vmt,
                rerouted: t.rerouted,
                hub: t.hub.map(|h| w.hubs[h].id.clone()),
                charged: t.charged,
            });
        }
        let hubs = w
            .hubs
            .iter()
            .zip(&self.hubs)
            .map(|(h, s)| HubResult {
                hub_id: h.id.clone(),
                zone: h.zone.clone(),
                capacity: s.capacity,
                occupied_end: s.occupied,
                peak_occupancy: s.peak_occupancy,
                parked_in: s.parked_in,
                parked_out: s.parked_out,
                overflow: s.overflow_in,
                transfers: s.transfers,
                reroutes: s.reroutes,
                primary_arrivals: s.primary_arrivals,
                supporting_arrivals: s.supporting_arrivals,
                charger: s.charger_stats(),
            })
            .collect();
        let mut result = SimResult {
            run_id: self.spec.run_id.clone(),
            world: w.name.clone(),
            seed: self.spec.seed,
            levers: self.spec.levers.clone(),
            lever_history: self.history.clone(),
            agents: self.agents.len(),
            ticks: self.tick,
            trips_started: self.started,
            trips_completed: self.completed,
            mode_shares: Self::shares(&mode_counts),
            mode_counts,
            mode_vmt,
            total_vmt: self.vmt_total,
            factor_year: self.factor_year,
            total_mtco2e: inventory.on_road_total(),
            emissions_grid: emissions_map(&inventory),
            vmt_log,
            hubs,
            cumulative_vmt_by_tick: self.cumulative_vmt.clone(),
            trips,
            hash: String::new(),
        };
        result.hash = result.compute_hash();
        Ok(result)
    }
}

/// Simulate a full day with fixed levers.
pub fn simulate_day(
    world: &Arc<SimWorld>,
    levers: &PolicyLevers,
    factors: &[EmissionFactor],
    seed: u64,
) -> Result<SimResult, SimError> {
    let spec = RunSpec::new(format!("{}-{seed}", world.name), seed, levers.clone());
    let mut run = SimRun::with_factors(Arc::clone(world), spec, factors.to_vec())?;
    run.run_to_end()?;
    run.finish()
}
