//! Smart-hub data pipeline: devices report through a collection queue,
//! acquisition validates and pseudonymizes, storage appends to a bounded
//! log, and processing folds the log into per-window aggregates. Incentive
//! points and role-based access sit beside the layers.

pub mod access;
pub mod incentive;
pub mod pipeline;
pub mod process;
pub mod record;
pub mod store;
pub mod synth;

pub use access::{AccessPolicy, AuditEntry, Authorizer, Decision, DenyReason, Granularity, RecordScope, Role};
pub use incentive::{EventContext, IncentiveConfig, IncentiveError, IncentiveEvent, IncentiveLedger, LedgerDelta, LedgerEntry};
pub use pipeline::{read_ndjson, run, spawn, write_ndjson, Collector, Inbound, PipelineConfig, PipelineState, Reconciliation, RejectionEntry};
pub use process::{dedup_key, process, Aggregates, BatchWindow, HubCharging, ProcessError};
pub use record::{
    token, Acquirer, FieldCategory, GpsFix, Payload, PortUsage, Rejection, RiderEvent, RiderEventKind, Source, TelemetryRecord,
    TokenEvent, ValidatedRecord, Verdict, ZoneGrid,
};
pub use store::RecordLog;
