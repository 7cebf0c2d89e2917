//! Emissions inventory, scenario projection and EV equity scoring.

pub mod dataset;
pub mod equity;
pub mod inventory;
pub mod scenario;

pub use inventory::{
    build_baseline, class_share_report, emissions_map, sector_shares, ActivityRecord, ClassGroup,
    EmissionFactor, EmissionInventory, EmissionsGrid, FuelType, InventoryError, VehicleClass,
};
pub use scenario::{
    apply_scenario, check_goals, project_bau, size_offsets, ComplianceReport, EmissionSeries,
    GoalSet, OffsetPlan, OffsetSizing, ScenarioError, ScenarioSpec, Trajectory,
};
