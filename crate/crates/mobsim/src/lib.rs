//! Seeded agent-based simulation of a commuting day over a zone network with
//! park-and-ride hubs, charger queues, logit mode choice and live policy
//! levers.

pub mod charger;
pub mod choice;
pub mod export;
pub mod hub;
pub mod levers;
pub mod network;
pub mod population;
pub mod sim;
pub mod transit;
pub mod world;

pub use charger::{charger_queue_step, mmc_metrics, ChargeRequest, ChargerQueue, MmcMetrics, QueueStats, StepStats};
pub use choice::{choose_mode, logit_probabilities, ChoiceContext, Mode, TripRequest};
pub use export::export_result;
pub use hub::{allocate_arrivals, hub_transfer, AccessMode, HubService, IntermodalMatrix, Pairing};
pub use levers::{lever_bounds, LeverBound, LeverChange, LeverError, LeverPatch, PolicyLevers};
pub use population::{build_od, generate_population, Agent, IncomeBand, ODMatrix, Vehicle};
pub use sim::{simulate_day, RunSpec, SimError, SimResult, SimRun, Snapshot, SnapshotStatus};
pub use world::{AgentsConfig, SimWorld, WorldError};
