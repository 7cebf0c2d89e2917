//! Simulation runs behind the API: a five-state lifecycle, one worker
//! thread per run fed by a mailbox, and snapshot fan-out to subscribers.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, MutexGuard, RwLock};
use std::thread;
use std::time::Duration;

use decarb_mobsim::{LeverChange, LeverPatch, PolicyLevers, RunSpec, SimResult, SimRun, SimWorld, Snapshot, SnapshotStatus};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, watch};

use crate::config::GatewayConfig;
use crate::error::GatewayError;
use crate::ops::{self, SimSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RunState {
    Created,
    Running,
    Paused,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunEvent {
    Start,
    Pause,
    Complete,
    Fail,
}

impl RunState {
    pub const ALL: [RunState; 5] = [RunState::Created, RunState::Running, RunState::Paused, RunState::Completed, RunState::Failed];

    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Completed | RunState::Failed)
    }
}

impl RunEvent {
    pub const ALL: [RunEvent; 4] = [RunEvent::Start, RunEvent::Pause, RunEvent::Complete, RunEvent::Fail];
}

/// The only legal moves. Resuming a paused run is another `Start`.
pub fn transition(from: RunState, event: RunEvent) -> Option<RunState> {
    use RunEvent::*;
    use RunState::*;
    match (from, event) {
        (Created, Start) | (Paused, Start) => Some(Running),
        (Running, Pause) => Some(Paused),
        (Running, Complete) => Some(Completed),
        (Running, Fail) => Some(Failed),
        _ => None,
    }
}

/// Body of `POST /runs`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateRun {
    pub world: Option<String>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub levers: Option<LeverPatch>,
    pub cadence: Option<u32>,
    pub tick_ms: Option<u64>,
    /// Override the world's agent count.
    pub n_agents: Option<usize>,
    /// Compare cumulative VMT against a no-lever day with the same seed.
    pub reference: Option<bool>,
}

/// Public view of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunView {
    pub run_id: String,
    pub state: RunState,
    pub world: String,
    pub seed: u64,
    pub cadence: u32,
    pub levers: PolicyLevers,
    pub lever_history: Vec<LeverChange>,
    pub snapshots: usize,
    pub last_tick: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SimSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Command {
    Wake,
    Levers(PolicyLevers, oneshot::Sender<Result<LeverChange, GatewayError>>),
}

struct RunInner {
    state: RunState,
    snapshots: Vec<Arc<Snapshot>>,
    lever_history: Vec<LeverChange>,
    result: Option<Arc<SimResult>>,
    error: Option<String>,
}

pub struct RunHandle {
    pub id: String,
    pub world_name: String,
    pub world: Arc<SimWorld>,
    pub seed: u64,
    pub cadence: u32,
    inner: Mutex<RunInner>,
    version: watch::Sender<u64>,
    mailbox: Mutex<mpsc::Sender<Command>>,
}

impl RunHandle {
    fn lock(&self) -> MutexGuard<'_, RunInner> {
        self.inner.lock().expect("run lock poisoned")
    }

    fn bump(&self) {
        self.version.send_modify(|v| *v += 1);
    }

    pub fn state(&self) -> RunState {
        self.lock().state
    }

    /// Change state through the lifecycle, or report the illegal move.
    pub fn fire(&self, event: RunEvent) -> Result<RunState, GatewayError> {
        let next = {
            let mut inner = self.lock();
            let next = transition(inner.state, event).ok_or_else(|| {
                GatewayError::Conflict(format!("run {} cannot {event:?} while {:?}", self.id, inner.state))
            })?;
            inner.state = next;
            next
        };
        self.bump();
        let _ = self.mailbox.lock().expect("mailbox lock poisoned").send(Command::Wake);
        Ok(next)
    }

    /// Levers that the next accepted change would be merged onto.
    pub fn latest_levers(&self) -> PolicyLevers {
        self.lock().lever_history.last().map(|c| c.levers.clone()).unwrap_or_default()
    }

    /// Queue levers through the worker's mailbox.
    pub async fn apply_levers(&self, levers: PolicyLevers) -> Result<LeverChange, GatewayError> {
        if self.state().is_terminal() {
            return Err(GatewayError::Conflict(format!("run {} is {:?}", self.id, self.state())));
        }
        let (tx, rx) = oneshot::channel();
        self.mailbox
            .lock()
            .expect("mailbox lock poisoned")
            .send(Command::Levers(levers, tx))
            .map_err(|_| GatewayError::Conflict(format!("run {} has stopped", self.id)))?;
        rx.await.map_err(|_| GatewayError::Conflict(format!("run {} has stopped", self.id)))?
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.version.subscribe()
    }

    /// Snapshots with tick above `since` (all when `None`).
    pub fn snapshots_since(&self, since: Option<i64>) -> Vec<Arc<Snapshot>> {
        let inner = self.lock();
        inner
            .snapshots
            .iter()
            .filter(|s| since.is_none_or(|t| i64::from(s.tick) > t))
            .cloned()
            .collect()
    }

    pub fn latest_snapshot(&self) -> Option<Arc<Snapshot>> {
        self.lock().snapshots.last().cloned()
    }

    pub fn result(&self) -> Option<Arc<SimResult>> {
        self.lock().result.clone()
    }

    pub fn error(&self) -> Option<String> {
        self.lock().error.clone()
    }

    pub fn view(&self) -> RunView {
        let inner = self.lock();
        RunView {
            run_id: self.id.clone(),
            state: inner.state,
            world: self.world_name.clone(),
            seed: self.seed,
            cadence: self.cadence,
            levers: inner.lever_history.last().map(|c| c.levers.clone()).unwrap_or_default(),
            lever_history: inner.lever_history.clone(),
            snapshots: inner.snapshots.len(),
            last_tick: inner.snapshots.last().map(|s| s.tick),
            summary: inner.result.as_deref().map(SimSummary::from),
            error: inner.error.clone(),
        }
    }
}

/// Worker loop. Steps only while `Running`; otherwise blocks on the
/// mailbox. Each step runs under the run lock so a pause cannot interleave
/// with completion.
fn worker(handle: Arc<RunHandle>, mut run: SimRun, rx: mpsc::Receiver<Command>, tick_ms: u64) {
    let reply_levers = |run: &mut SimRun, handle: &RunHandle, levers: PolicyLevers, tx: oneshot::Sender<Result<LeverChange, GatewayError>>| {
        let res = run.apply_levers(levers).map_err(GatewayError::from);
        if res.is_ok() {
            handle.lock().lever_history = run.lever_history().to_vec();
            handle.bump();
        }
        let _ = tx.send(res);
    };
    loop {
        let state = handle.state();
        if state.is_terminal() {
            // dropping the mailbox turns later lever requests into conflicts
            return;
        }
        if state != RunState::Running {
            match rx.recv() {
                Ok(Command::Wake) => continue,
                Ok(Command::Levers(l, tx)) => {
                    reply_levers(&mut run, &handle, l, tx);
                    continue;
                }
                Err(_) => return,
            }
        }
        while let Ok(cmd) = rx.try_recv() {
            if let Command::Levers(l, tx) = cmd {
                reply_levers(&mut run, &handle, l, tx);
            }
        }
        {
            let mut inner = handle.lock();
            if inner.state != RunState::Running {
                continue;
            }
            match run.step() {
                Ok(Some(snap)) => {
                    let done = snap.status == SnapshotStatus::Completed;
                    inner.snapshots.push(Arc::new(snap));
                    if done {
                        match run.finish() {
                            Ok(r) => {
                                inner.result = Some(Arc::new(r));
                                inner.state = transition(inner.state, RunEvent::Complete).expect("running run completes");
                            }
                            Err(e) => {
                                inner.error = Some(e.to_string());
                                inner.state = transition(inner.state, RunEvent::Fail).expect("running run fails");
                            }
                        }
                    }
                }
                Ok(None) => {}
                Err(e) => {
                    inner.error = Some(e.to_string());
                    inner.state = transition(inner.state, RunEvent::Fail).expect("running run fails");
                }
            }
        }
        handle.bump();
        if tick_ms > 0 {
            thread::sleep(Duration::from_millis(tick_ms));
        }
    }
}

/// Stored outcome of a mutating request, replayed on retry.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredResponse {
    pub fingerprint: String,
    pub status: u16,
    pub body: serde_json::Value,
}

type IdempotencySlot = Arc<tokio::sync::Mutex<Option<StoredResponse>>>;
/// World name and agent-count override.
type WorldKey = (String, Option<usize>);
/// Cumulative reference VMT per tick, by world and seed.
type ReferenceCache = Mutex<HashMap<(WorldKey, u64), Arc<Vec<f64>>>>;

pub struct RunRegistry {
    pub config: Arc<GatewayConfig>,
    worlds: Mutex<HashMap<WorldKey, Arc<SimWorld>>>,
    references: ReferenceCache,
    runs: RwLock<BTreeMap<String, Arc<RunHandle>>>,
    next_id: AtomicU64,
    idempotency: Mutex<HashMap<String, IdempotencySlot>>,
}

impl RunRegistry {
    pub fn new(config: GatewayConfig) -> Self {
        RunRegistry {
            config: Arc::new(config),
            worlds: Mutex::new(HashMap::new()),
            references: Mutex::new(HashMap::new()),
            runs: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            idempotency: Mutex::new(HashMap::new()),
        }
    }

    pub fn world(&self, name: &str, n_agents: Option<usize>) -> Result<Arc<SimWorld>, GatewayError> {
        let key = (name.to_string(), n_agents);
        if let Some(w) = self.worlds.lock().expect("world cache poisoned").get(&key) {
            return Ok(Arc::clone(w));
        }
        let mut world = ops::load_world(&self.config, name)?;
        if let Some(n) = n_agents {
            world = ops::with_agents(&world, n)?;
        }
        self.worlds.lock().expect("world cache poisoned").insert(key, Arc::clone(&world));
        Ok(world)
    }

    fn reference(&self, name: &str, n_agents: Option<usize>, world: &Arc<SimWorld>, seed: u64) -> Result<Arc<Vec<f64>>, GatewayError> {
        let key = ((name.to_string(), n_agents), seed);
        if let Some(r) = self.references.lock().expect("reference cache poisoned").get(&key) {
            return Ok(Arc::clone(r));
        }
        let day = ops::simulate(world, &PolicyLevers::default(), seed)?;
        let r = Arc::new(day.cumulative_vmt_by_tick);
        self.references.lock().expect("reference cache poisoned").insert(key, Arc::clone(&r));
        Ok(r)
    }

    /// Validate a request and start its worker in the `Created` state.
    /// Blocking: population synthesis and the reference day run here.
    pub fn create(&self, req: CreateRun) -> Result<RunView, GatewayError> {
        let name = req.world.clone().unwrap_or_else(|| self.config.world.clone());
        let world = self.world(&name, req.n_agents).map_err(|e| match e {
            GatewayError::Io(m) => GatewayError::Validation(m),
            other => other,
        })?;
        let seed = req.seed.unwrap_or(self.config.seed);
        let base = match &req.preset {
            Some(p) => world.preset(p)?,
            None => PolicyLevers::default(),
        };
        let levers = match &req.levers {
            Some(patch) => base.merged(patch)?,
            None => base,
        };
        self.config.check_levers(&levers)?;
        let cadence = req.cadence.unwrap_or(self.config.cadence);
        if cadence > decarb_mobsim::sim::TICKS_PER_DAY {
            return Err(GatewayError::Validation(format!("cadence {cadence} exceeds one day")));
        }
        let id = format!("run-{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let mut spec = RunSpec::new(id.clone(), seed, levers);
        spec.cadence = cadence;
        if req.reference.unwrap_or(true) {
            spec.reference_vmt = Some(self.reference(&name, req.n_agents, &world, seed)?.to_vec());
        }
        let run = SimRun::new(Arc::clone(&world), spec)?;
        let (tx, rx) = mpsc::channel();
        let handle = Arc::new(RunHandle {
            id: id.clone(),
            world_name: name,
            world,
            seed,
            cadence,
            inner: Mutex::new(RunInner {
                state: RunState::Created,
                snapshots: Vec::new(),
                lever_history: run.lever_history().to_vec(),
                result: None,
                error: None,
            }),
            version: watch::Sender::new(0),
            mailbox: Mutex::new(tx),
        });
        let tick_ms = req.tick_ms.unwrap_or(self.config.tick_ms);
        let h = Arc::clone(&handle);
        thread::Builder::new()
            .name(format!("decarb-{id}"))
            .spawn(move || worker(h, run, rx, tick_ms))
            .map_err(|e| GatewayError::Io(e.to_string()))?;
        self.runs.write().expect("run table poisoned").insert(id, Arc::clone(&handle));
        Ok(handle.view())
    }

    pub fn get(&self, id: &str) -> Result<Arc<RunHandle>, GatewayError> {
        self.runs
            .read()
            .expect("run table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::NotFound(format!("unknown run {id}")))
    }

    pub fn list(&self) -> Vec<RunView> {
        self.runs.read().expect("run table poisoned").values().map(|h| h.view()).collect()
    }

    /// Slot for an idempotency key. Holding its lock serializes retries of
    /// the same request.
    pub fn idempotency_slot(&self, key: &str) -> IdempotencySlot {
        Arc::clone(self.idempotency.lock().expect("idempotency table poisoned").entry(key.to_string()).or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_graph_by_enumeration() {
        use RunEvent::*;
        use RunState::*;
        let legal = [
            (Created, Start, Running),
            (Paused, Start, Running),
            (Running, Pause, Paused),
            (Running, Complete, Completed),
            (Running, Fail, Failed),
        ];
        let mut count = 0;
        for s in RunState::ALL {
            for e in RunEvent::ALL {
                let expected = legal.iter().find(|(f, ev, _)| *f == s && *ev == e).map(|t| t.2);
                assert_eq!(transition(s, e), expected, "{s:?} --{e:?}-->");
                count += 1;
            }
        }
        assert_eq!(count, 20);
        // terminal states have no way out
        for s in [Completed, Failed] {
            assert!(RunEvent::ALL.iter().all(|e| transition(s, *e).is_none()));
        }
        // every state is reachable from Created
        let mut seen = vec![Created];
        let mut frontier = vec![Created];
        while let Some(s) = frontier.pop() {
            for e in RunEvent::ALL {
                if let Some(n) = transition(s, e) {
                    if !seen.contains(&n) {
                        seen.push(n);
                        frontier.push(n);
                    }
                }
            }
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn every_event_sequence_stays_in_the_graph() {
        // all sequences up to length 6 from Created; illegal events leave the
        // state unchanged and never yield an undefined state
        fn walk(s: RunState, depth: usize, visited: &mut u64) {
            *visited += 1;
            if depth == 0 {
                return;
            }
            for e in RunEvent::ALL {
                let next = transition(s, e).unwrap_or(s);
                assert!(RunState::ALL.contains(&next));
                if s.is_terminal() {
                    assert_eq!(next, s);
                }
                walk(next, depth - 1, visited);
            }
        }
        let mut visited = 0;
        walk(RunState::Created, 6, &mut visited);
        assert_eq!(visited, (0..=6).map(|d| 4u64.pow(d)).sum::<u64>());
    }
}
