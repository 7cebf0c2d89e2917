use decarb_mobsim::{charger_queue_step, mmc_metrics, ChargeRequest, ChargerQueue};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

const HOURS: f64 = 10_000.0;

/// Poisson arrivals at `lambda_per_hour` with exponential service of mean
/// `service_min`, over `hours`.
fn poisson_requests(seed: u64, lambda_per_hour: f64, service_min: f64, hours: f64) -> Vec<ChargeRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Exp::new(lambda_per_hour / 60.0).unwrap();
    let service = Exp::new(1.0 / service_min).unwrap();
    let mut t = 0.0;
    let mut out = Vec::new();
    let mut id = 0;
    loop {
        t += gap.sample(&mut rng);
        if t >= hours * 60.0 {
            return out;
        }
        out.push(ChargeRequest {
            id,
            arrival_min: t,
            service_min: service.sample(&mut rng),
        });
        id += 1;
    }
}

/// Feed requests tick by tick and return the final queue.
fn run(requests: &[ChargeRequest], ports: usize, tick_min: f64) -> ChargerQueue {
    let mut q = ChargerQueue::new(ports);
    let mut next = 0;
    let end = requests.last().map_or(0.0, |r| r.arrival_min) + tick_min;
    while q.clock() < end {
        let horizon = q.clock() + tick_min;
        let start = next;
        while next < requests.len() && requests[next].arrival_min < horizon {
            next += 1;
        }
        charger_queue_step(&mut q, &requests[start..next], tick_min);
    }
    q
}

#[test]
fn mm2_mean_wait_matches_closed_form() {
    let reqs = poisson_requests(2024, 4.0, 20.0, HOURS);
    let q = run(&reqs, 2, 60.0);
    let s = q.stats();
    let analytic = mmc_metrics(4.0, 3.0, 2).unwrap().mean_wait * 60.0;
    assert!((analytic - 16.0).abs() < 1e-9);
    let rel = (s.mean_wait_min - analytic).abs() / analytic;
    assert!(rel < 0.15, "simulated {:.2} min vs {analytic:.2} (rel {rel:.3})", s.mean_wait_min);
    assert!(s.clock_min >= HOURS * 60.0);
}

#[test]
fn littles_law_holds_at_steady_state() {
    let reqs = poisson_requests(99, 4.0, 20.0, HOURS);
    let q = run(&reqs, 2, 1.0);
    let s = q.stats();
    let l_q = s.waiting_area / s.clock_min;
    let lambda = s.started as f64 / s.clock_min;
    let rel = (l_q - lambda * s.mean_wait_min).abs() / l_q;
    assert!(rel < 0.10, "Lq {l_q:.4} vs lambda W {:.4}", lambda * s.mean_wait_min);
}

#[test]
fn tick_length_does_not_change_waits() {
    let reqs = poisson_requests(5, 4.0, 20.0, 500.0);
    let drained = |tick: f64| {
        let mut q = run(&reqs, 2, tick);
        q.advance_to(1e6);
        q.stats()
    };
    let (a, b) = (drained(1.0), drained(15.0));
    assert_eq!(a.completed, reqs.len() as u64);
    assert_eq!(a.started, b.started);
    assert!((a.mean_wait_min - b.mean_wait_min).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn more_ports_never_lengthen_waits(seed in any::<u64>(), ports in 1usize..4, rate in 1.0f64..10.0) {
        let reqs = poisson_requests(seed, rate, 30.0, 200.0);
        let base = run(&reqs, ports, 5.0).stats();
        let more = run(&reqs, ports + 1, 5.0).stats();
        prop_assert!(more.mean_wait_min <= base.mean_wait_min + 1e-9);
        prop_assert!(more.max_wait_min <= base.max_wait_min + 1e-9);
    }

    #[test]
    fn sessions_are_conserved(seed in any::<u64>(), ports in 0usize..4, rate in 0.5f64..12.0, cut in 10.0f64..300.0) {
        let reqs = poisson_requests(seed, rate, 25.0, 50.0);
        let mut q = ChargerQueue::new(ports);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for r in &reqs {
            q.arrive(*r);
        }
        while q.clock() < cut {
            let step = rng.random_range(0.5..20.0);
            let t = q.clock() + step;
            q.advance_to(t);
            if rng.random_bool(0.1) {
                q.set_ports(rng.random_range(0..4));
            }
        }
        let s = q.stats();
        prop_assert_eq!(s.requests, reqs.len() as u64);
        prop_assert_eq!(s.started, s.completed + s.in_progress);
        prop_assert_eq!(s.requests, s.started + s.queued);
        prop_assert!(s.mean_wait_min >= 0.0 && s.max_wait_min >= s.mean_wait_min);
    }
}
