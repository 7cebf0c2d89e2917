//! FIFO multi-server charger queue in continuous time, advanced per tick.
//!
//! Requests carry exact arrival times and pre-drawn service times, so the
//! queue is independent of tick length. A completion and an arrival at the
//! same instant are ordered completion first.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeRequest {
    pub id: u64,
    pub arrival_min: f64,
    pub service_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Busy {
    end: f64,
    id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargerQueue {
    servers: Vec<Option<Busy>>,
    /// Ports to remove as soon as they go idle.
    retiring: usize,
    incoming: VecDeque<ChargeRequest>,
    waiting: VecDeque<ChargeRequest>,
    clock: f64,
    requests: u64,
    started: u64,
    completed: u64,
    wait_sum: f64,
    wait_max: f64,
    waiting_area: f64,
}

/// Counters for one `step` call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub arrived: u64,
    pub started: u64,
    pub completed: u64,
    pub queue_len: usize,
    pub in_service: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub ports: usize,
    pub requests: u64,
    pub started: u64,
    pub completed: u64,
    pub in_progress: u64,
    pub queued: u64,
    /// Mean wait of sessions that have started.
    pub mean_wait_min: f64,
    pub max_wait_min: f64,
    /// Integral of the number waiting over time, minutes.
    pub waiting_area: f64,
    pub clock_min: f64,
}

impl ChargerQueue {
    pub fn new(ports: usize) -> Self {
        Self {
            servers: vec![None; ports],
            retiring: 0,
            incoming: VecDeque::new(),
            waiting: VecDeque::new(),
            clock: 0.0,
            requests: 0,
            started: 0,
            completed: 0,
            wait_sum: 0.0,
            wait_max: 0.0,
            waiting_area: 0.0,
        }
    }

    pub fn ports(&self) -> usize {
        self.servers.len() - self.retiring
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn queue_len(&self) -> usize {
        self.waiting.len()
    }

    pub fn in_service(&self) -> usize {
        self.servers.iter().filter(|s| s.is_some()).count()
    }

    /// Queue a request. Arrivals earlier than the clock are treated as
    /// arriving now.
    pub fn arrive(&mut self, mut req: ChargeRequest) {
        self.requests += 1;
        req.arrival_min = req.arrival_min.max(self.clock);
        let pos = self
            .incoming
            .iter()
            .position(|r| (r.arrival_min, r.id) > (req.arrival_min, req.id))
            .unwrap_or(self.incoming.len());
        self.incoming.insert(pos, req);
    }

    /// Change the port count at the current clock.
    pub fn set_ports(&mut self, ports: usize) {
        let current = self.ports();
        if ports >= current {
            let mut add = ports - current;
            let cancel = add.min(self.retiring);
            self.retiring -= cancel;
            add -= cancel;
            self.servers.extend(std::iter::repeat_n(None, add));
        } else {
            self.retiring += current - ports;
            self.drop_idle_retiring();
        }
        let now = self.clock;
        self.dispatch(now);
    }

    fn drop_idle_retiring(&mut self) {
        while self.retiring > 0 {
            match self.servers.iter().rposition(|s| s.is_none()) {
                Some(i) => {
                    self.servers.remove(i);
                    self.retiring -= 1;
                }
                None => break,
            }
        }
    }

    fn dispatch(&mut self, now: f64) {
        while !self.waiting.is_empty() {
            let Some(slot) = self.servers.iter().position(|s| s.is_none()) else {
                break;
            };
            let req = self.waiting.pop_front().expect("non-empty");
            self.start(slot, req, now);
        }
    }

    fn start(&mut self, slot: usize, req: ChargeRequest, now: f64) {
        let wait = now - req.arrival_min;
        self.started += 1;
        self.wait_sum += wait;
        self.wait_max = self.wait_max.max(wait);
        self.servers[slot] = Some(Busy {
            end: now + req.service_min,
            id: req.id,
        });
    }

    fn next_completion(&self) -> Option<(usize, f64)> {
        self.servers
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|b| (i, b.end, b.id)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
            .map(|(i, end, _)| (i, end))
    }

    /// Process every event up to `t_end` (exclusive for arrivals and
    /// completions strictly after it).
    pub fn advance_to(&mut self, t_end: f64) -> StepStats {
        let mut stats = StepStats::default();
        loop {
            let completion = self.next_completion().filter(|(_, t)| *t <= t_end);
            let arrival = self.incoming.front().map(|r| r.arrival_min).filter(|t| *t <= t_end);
            let (t, is_completion) = match (completion, arrival) {
                (Some((_, tc)), Some(ta)) if tc <= ta => (tc, true),
                (Some((_, tc)), None) => (tc, true),
                (_, Some(ta)) => (ta, false),
                (None, None) => break,
            };
            self.waiting_area += self.waiting.len() as f64 * (t - self.clock);
            self.clock = t;
            if is_completion {
                let (slot, _) = completion.expect("completion event");
                self.servers[slot] = None;
                self.completed += 1;
                stats.completed += 1;
                self.drop_idle_retiring();
            } else {
                let req = self.incoming.pop_front().expect("arrival event");
                self.waiting.push_back(req);
                stats.arrived += 1;
            }
            let before = self.started;
            self.dispatch(t);
            stats.started += self.started - before;
        }
        if t_end > self.clock {
            self.waiting_area += self.waiting.len() as f64 * (t_end - self.clock);
            self.clock = t_end;
        }
        stats.queue_len = self.waiting.len();
        stats.in_service = self.in_service();
        stats
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            ports: self.ports(),
            requests: self.requests,
            started: self.started,
            completed: self.completed,
            in_progress: self.in_service() as u64,
            queued: (self.waiting.len() + self.incoming.len()) as u64,
            mean_wait_min: if self.started > 0 {
                self.wait_sum / self.started as f64
            } else {
                0.0
            },
            max_wait_min: self.wait_max,
            waiting_area: self.waiting_area,
            clock_min: self.clock,
        }
    }
}

/// Queue `arrivals` and advance the clock by one tick of `tick_minutes`.
pub fn charger_queue_step(
    queue: &mut ChargerQueue,
    arrivals: &[ChargeRequest],
    tick_minutes: f64,
) -> StepStats {
    for a in arrivals {
        queue.arrive(*a);
    }
    let end = queue.clock() + tick_minutes;
    queue.advance_to(end)
}

/// Closed-form M/M/c quantities for arrival rate `lambda` and per-server
/// service rate `mu` (same time unit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmcMetrics {
    pub p0: f64,
    /// Probability an arrival waits (Erlang C).
    pub prob_wait: f64,
    pub mean_wait: f64,
    pub mean_queue_len: f64,
}

pub fn mmc_metrics(lambda: f64, mu: f64, servers: u32) -> Option<MmcMetrics> {
    let c = servers as f64;
    let a = lambda / mu;
    let rho = a / c;
    if servers == 0 || rho >= 1.0 {
        return None;
    }
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..servers {
        if k > 0 {
            term *= a / k as f64;
        }
        sum += term;
    }
    let tail = term * a / c / (1.0 - rho);
    let p0 = 1.0 / (sum + tail);
    let prob_wait = tail * p0;
    let mean_queue_len = prob_wait * rho / (1.0 - rho);
    Some(MmcMetrics {
        p0,
        prob_wait,
        mean_wait: mean_queue_len / lambda,
        mean_queue_len,
    })
}
