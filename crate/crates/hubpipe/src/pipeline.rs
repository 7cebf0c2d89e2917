//! Layer wiring: collection → acquisition → storage, each a single consumer
//! of an ordered queue, with processing reading the committed log.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};

use crate::access::{Authorizer, Decision, Granularity, RecordScope};
use crate::incentive::{EventContext, IncentiveConfig, IncentiveEvent, IncentiveLedger};
use crate::process::{process, Aggregates, BatchWindow, ProcessError};
use crate::record::{Acquirer, FieldCategory, Rejection, RiderEventKind, Source, TelemetryRecord, ValidatedRecord, ZoneGrid};
use crate::store::RecordLog;

const QUEUE_DEPTH: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Tokenization key. Must be non-empty.
    pub key: String,
    pub storage_capacity: usize,
    pub grid: ZoneGrid,
    pub incentives: IncentiveConfig,
    /// Aggregation window width in seconds.
    pub window_secs: i64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            key: "desk-scale-demo-key".into(),
            storage_capacity: 1_000_000,
            grid: ZoneGrid::default(),
            incentives: IncentiveConfig::default(),
            window_secs: 3_600,
        }
    }
}

/// What a producer hands to the collection layer: a parsed record or the
/// parse error of an undecodable line.
pub type Inbound = Result<TelemetryRecord, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionEntry {
    /// Position of the input in arrival order.
    pub offset: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub input: u64,
    pub stored: u64,
    pub rejected: u64,
}

impl Reconciliation {
    pub fn balanced(&self) -> bool {
        self.input == self.stored + self.rejected
    }
}

/// Committed state after the queues drain.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub log: RecordLog,
    pub rejections: Vec<RejectionEntry>,
    pub ledger: IncentiveLedger,
    pub incentive_errors: BTreeMap<String, u64>,
    pub counts: Reconciliation,
}

/// Producer side of the collection queue; clone it for more producers.
#[derive(Debug, Clone)]
pub struct Collector {
    tx: SyncSender<Inbound>,
}

impl Collector {
    /// Returns false once the pipeline has shut down.
    pub fn send(&self, item: Inbound) -> bool {
        self.tx.send(item).is_ok()
    }
}

enum Acquired {
    Valid(u64, ValidatedRecord),
    Rejected(u64, Rejection),
}

/// Start the acquisition and storage layers. The pipeline drains and
/// returns its state once every `Collector` has been dropped.
pub fn spawn(config: PipelineConfig) -> (Collector, JoinHandle<PipelineState>) {
    let (in_tx, in_rx) = mpsc::sync_channel::<Inbound>(QUEUE_DEPTH);
    let (acq_tx, acq_rx) = mpsc::sync_channel::<Acquired>(QUEUE_DEPTH);
    let handle = thread::spawn(move || {
        let acquirer = Acquirer::new(config.key.as_bytes().to_vec(), config.grid.clone());
        let acq = thread::spawn(move || acquisition_layer(acquirer, in_rx, acq_tx));
        let state = storage_layer(&config, acq_rx);
        acq.join().expect("acquisition layer panicked");
        state
    });
    (Collector { tx: in_tx }, handle)
}

fn acquisition_layer(mut acquirer: Acquirer, rx: Receiver<Inbound>, tx: SyncSender<Acquired>) {
    for (offset, item) in rx.into_iter().enumerate() {
        let offset = offset as u64;
        let out = match item {
            Ok(rec) => match acquirer.acquire(&rec) {
                Ok(v) => Acquired::Valid(offset, v),
                Err(r) => Acquired::Rejected(offset, r),
            },
            Err(e) => Acquired::Rejected(offset, Rejection::Malformed(e)),
        };
        if tx.send(out).is_err() {
            return;
        }
    }
}

fn storage_layer(config: &PipelineConfig, rx: Receiver<Acquired>) -> PipelineState {
    let mut state = PipelineState {
        log: RecordLog::new(config.storage_capacity),
        rejections: Vec::new(),
        ledger: IncentiveLedger::new(config.incentives),
        incentive_errors: BTreeMap::new(),
        counts: Reconciliation::default(),
    };
    for item in rx {
        state.counts.input += 1;
        let (offset, result) = match item {
            Acquired::Valid(offset, v) => {
                let stored = v.clone();
                (offset, state.log.store(v).map(|_| stored))
            }
            Acquired::Rejected(offset, r) => (offset, Err(r)),
        };
        match result {
            Ok(v) => {
                state.counts.stored += 1;
                apply_incentives(&mut state, &v);
            }
            Err(r) => {
                state.counts.rejected += 1;
                state.rejections.push(RejectionEntry {
                    offset,
                    reason: r.code().to_string(),
                });
            }
        }
    }
    state
}

/// Rider events drive enrollment and awards. Consent to the activity
/// category enrolls the user; an explicit denial revokes.
fn apply_incentives(state: &mut PipelineState, v: &ValidatedRecord) {
    if v.source != Source::RiderApp {
        return;
    }
    let Some(ev) = &v.payload.event else {
        return;
    };
    let activity = v.consent.as_ref().and_then(|c| c.get(&FieldCategory::Activity)).copied();
    match activity {
        Some(true) => state.ledger.enroll(&ev.user_token),
        Some(false) => state.ledger.revoke(&ev.user_token),
        None => {}
    }
    let Some(hub) = &v.hub_id else { return };
    let event = match ev.kind {
        RiderEventKind::ChargeStart => IncentiveEvent::HubChargeSession,
        RiderEventKind::TransitBoarding => IncentiveEvent::SyncedTransitTrip,
    };
    let ctx = EventContext {
        hub_id: hub.clone(),
        timestamp: v.timestamp,
    };
    if let Err(e) = state.ledger.award_points(&ev.user_token, event, &ctx) {
        *state.incentive_errors.entry(format!("{e:?}")).or_insert(0) += 1;
    }
}

/// Feed `items` through a fresh pipeline from a single producer.
pub fn run(config: PipelineConfig, items: impl IntoIterator<Item = Inbound>) -> PipelineState {
    let (collector, handle) = spawn(config);
    for item in items {
        if !collector.send(item) {
            break;
        }
    }
    drop(collector);
    handle.join().expect("pipeline panicked")
}

/// Parse line-delimited JSON. Blank lines are skipped; undecodable lines
/// become `Err` so they are rejected rather than lost.
pub fn read_ndjson<R: BufRead>(reader: R) -> io::Result<Vec<Inbound>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str::<TelemetryRecord>(&line).map_err(|e| format!("line {}: {}", out.len(), e.classify_name())));
    }
    Ok(out)
}

trait ClassifyName {
    fn classify_name(&self) -> &'static str;
}

impl ClassifyName for serde_json::Error {
    // the message could echo raw ids back, so only the error class is kept
    fn classify_name(&self) -> &'static str {
        match self.classify() {
            serde_json::error::Category::Io => "io",
            serde_json::error::Category::Syntax => "syntax",
            serde_json::error::Category::Data => "data",
            serde_json::error::Category::Eof => "eof",
        }
    }
}

pub fn write_ndjson<W: Write>(mut out: W, records: &[TelemetryRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

impl PipelineState {
    pub fn aggregates(&self, window: BatchWindow) -> Result<Aggregates, ProcessError> {
        process(&self.log.replay(0), window)
    }

    /// Aggregates for each non-empty window of `width` seconds, in order.
    pub fn windowed_aggregates(&self, width: i64) -> Vec<Aggregates> {
        windowed(&self.log.replay(0), width)
    }

    pub fn write_rejections<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rejections {
            w.serialize(r).map_err(io::Error::other)?;
        }
        w.flush()
    }

    /// Stored records as the principal may see them, or the denial. Each
    /// category check is recorded by `auth`.
    pub fn view(&self, principal: &str, user_token: Option<&str>, auth: &mut Authorizer) -> Result<Vec<ValidatedRecord>, Decision> {
        let records = self.log.replay(0);
        let base = auth.authorize(principal, FieldCategory::Occupancy, scope_for(principal, user_token.is_some()));
        if base != Decision::Allow {
            return Err(base);
        }
        let mut allowed = BTreeMap::new();
        for c in FieldCategory::ALL {
            let d = auth.authorize(principal, c, scope_for(principal, user_token.is_some()));
            allowed.insert(c, d == Decision::Allow);
        }
        let operator = principal == "Operator";
        Ok(records
            .into_iter()
            .filter(|r| match user_token {
                Some(t) if !operator => r.payload.event.as_ref().is_some_and(|e| e.user_token == t),
                _ => true,
            })
            .map(|r| {
                let mut r = if operator { r } else { r.redacted() };
                if !allowed[&FieldCategory::Location] {
                    r.payload.zone_id = None;
                    r.operator_gps = None;
                }
                if !allowed[&FieldCategory::Energy] {
                    r.payload.kwh = None;
                    r.payload.port = None;
                }
                if !allowed[&FieldCategory::Media] {
                    r.payload.image_ref = None;
                }
                if !allowed[&FieldCategory::Activity] {
                    r.payload.event = None;
                }
                r
            })
            .collect())
    }
}

fn scope_for(principal: &str, own: bool) -> RecordScope {
    let granularity = if principal == "Operator" || own {
        Granularity::Raw
    } else {
        Granularity::Zone
    };
    RecordScope {
        granularity,
        own_records: own,
        consented: true,
    }
}

/// Pure fold over a log: one aggregate per non-empty window.
pub fn windowed(records: &[ValidatedRecord], width: i64) -> Vec<Aggregates> {
    assert!(width > 0, "window width must be positive");
    let mut starts: Vec<i64> = records.iter().map(|r| r.timestamp.div_euclid(width) * width).collect();
    starts.sort_unstable();
    starts.dedup();
    starts
        .into_iter()
        .filter_map(|s| process(records, BatchWindow { start: s, end: s + width }).ok())
        .collect()
}
