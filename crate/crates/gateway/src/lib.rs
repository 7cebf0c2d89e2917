//! Command line and `/v1` HTTP service over the inventory, scenario, equity,
//! simulation and hub pipeline crates.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod ops;
pub mod runs;

pub use config::GatewayConfig;
pub use error::GatewayError;
