mod common;

use common::{brute_force_mk, brute_force_schedule, random_task_set, rng, rta, OracleJob, PERIODS_MS};
use proptest::prelude::*;
use rand::Rng;
use weakhard::scheduler::{
    mine_mk, place_controller_priority, run_to_steady_state, simulate_schedule,
    steady_state_pattern, Placement,
};
use weakhard::taskmodel::{assign_rm_priorities, lcm_of};
use weakhard::{MissPattern, Task, TaskSet, Time, WeaklyHardConstraint};

fn event_jobs(tasks: &[Task], horizon: Time) -> Vec<OracleJob> {
    let trace = simulate_schedule(tasks, horizon).unwrap();
    let mut jobs: Vec<OracleJob> = trace
        .jobs
        .iter()
        .map(|j| OracleJob {
            rank: j.task,
            index: j.job,
            finish_us: j.finish.as_us(),
            missed: j.missed,
        })
        .collect();
    jobs.sort();
    jobs
}

#[test]
fn event_simulator_matches_tick_oracle() {
    let mut r = rng(21);
    for case in 0..120 {
        let tasks = random_task_set(&mut r, 1.05);
        let periods: Vec<Time> = tasks.iter().map(|t| t.period).collect();
        let horizon = lcm_of(&periods).unwrap() * 4;
        let want = brute_force_schedule(&tasks, horizon.as_us());
        let got = event_jobs(&tasks, horizon);
        assert_eq!(got, want, "case {case}: {tasks:?}");
    }
}

#[test]
fn first_job_response_matches_rta() {
    let mut r = rng(22);
    let mut checked = 0;
    while checked < 100 {
        let tasks = assign_rm_priorities(&random_task_set(&mut r, 1.0));
        let bounds: Option<Vec<Time>> = (0..tasks.len()).map(|i| rta(&tasks, i)).collect();
        let Some(bounds) = bounds else { continue };
        let periods: Vec<Time> = tasks.iter().map(|t| t.period).collect();
        let trace = simulate_schedule(&tasks, lcm_of(&periods).unwrap()).unwrap();
        for (i, t) in tasks.iter().enumerate() {
            // Synchronous release is the critical instant.
            assert_eq!(trace.worst_response_time(&t.id).unwrap(), bounds[i]);
        }
        assert!(trace.jobs.iter().all(|j| !j.missed));
        checked += 1;
    }
}

#[test]
fn mk_miner_matches_sliding_windows() {
    let mut r = rng(23);
    for _ in 0..50 {
        let n = r.random_range(1..=40);
        let density = r.random_range(0.0..1.0);
        let bits: Vec<bool> = (0..n).map(|_| r.random_bool(density)).collect();
        let pattern = MissPattern::new(bits.clone());
        for k in 1..=30 {
            let m = mine_mk(&pattern, k);
            assert_eq!(m, brute_force_mk(&bits, k), "{bits:?}, K = {k}");
            assert!(WeaklyHardConstraint { m, k }.is_satisfied_by(&pattern));
            if m > 0 {
                assert!(!WeaklyHardConstraint { m: m - 1, k }.is_satisfied_by(&pattern));
            }
        }
    }
}

#[test]
fn hand_traced_controller_pair() {
    let ts = TaskSet::new(vec![
        Task::hard("hi", Time::from_ms(4), Time::from_ms(2)).with_priority(1),
        Task::controller("ctrl", Time::from_ms(6), Time::from_ms(3)).with_priority(2),
    ])
    .unwrap();
    let pat = steady_state_pattern(&ts).unwrap();
    assert_eq!(pat.misses.bits, [true, false]);
    assert_eq!(pat.delays.delays, [2, 1]);
    assert_eq!(pat.delays.max_delay(), 2);
    assert_eq!(pat.worst_response.div_ceil(Time::from_ms(6)), 2);
}

#[test]
fn placement_is_highest_safe_position() {
    let mut r = rng(24);
    for _ in 0..40 {
        let regular = assign_rm_priorities(&random_task_set(&mut r, 0.8));
        let t = PERIODS_MS[r.random_range(0..PERIODS_MS.len())];
        let ctrl = Task::controller("ctrl", Time::from_ms(t), Time::from_ms(r.random_range(1..=t)));
        match place_controller_priority(&regular, &ctrl).unwrap() {
            Placement::Feasible(ts) => {
                let order = ts.by_priority().unwrap();
                let pos = order.iter().position(|t| t.is_controller()).unwrap();
                // Every regular task below the controller keeps its deadlines.
                if pos < regular.len() {
                    let steady = run_to_steady_state(&order).unwrap();
                    assert!(steady
                        .trace
                        .jobs
                        .iter()
                        .all(|j| !j.missed || order[j.task].is_controller()));
                }
                // One level higher would break someone.
                if pos > 0 {
                    let mut higher = order.clone();
                    higher.swap(pos - 1, pos);
                    for (i, t) in higher.iter_mut().enumerate() {
                        t.priority = Some(i as u32 + 1);
                    }
                    let broken = match run_to_steady_state(&higher) {
                        Ok(s) => s.trace.jobs.iter().any(|j| j.missed && !higher[j.task].is_controller()),
                        Err(_) => true,
                    };
                    assert!(broken, "{higher:?}");
                }
            }
            Placement::Infeasible { violated } => {
                assert!(regular.iter().any(|t| t.id == violated));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delay_sequence_invariants(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let regular = assign_rm_priorities(&random_task_set(&mut r, 0.7));
        let t = PERIODS_MS[r.random_range(0..PERIODS_MS.len())];
        let ctrl = Task::controller("ctrl", Time::from_ms(t), Time::from_ms(r.random_range(1..=t)));
        if let Ok(Placement::Feasible(ts)) = place_controller_priority(&regular, &ctrl) {
            let Ok(pat) = steady_state_pattern(&ts) else { return Ok(()) };
            let d = &pat.delays.delays;
            prop_assert_eq!(d.len(), pat.misses.len());
            prop_assert!(d.iter().all(|&p| p >= 1));
            // The delay can grow by at most one per period (cyclically).
            for i in 0..d.len() {
                prop_assert!(d[(i + 1) % d.len()] <= d[i] + 1);
            }
            prop_assert_eq!(pat.delays.max_delay(), pat.worst_response.div_ceil(ctrl.period) as usize);
            // A met deadline means the delay at that deadline is one.
            for (i, &missed) in pat.misses.bits.iter().enumerate() {
                prop_assert_eq!(!missed, d[i] == 1);
            }
        }
    }

    #[test]
    fn mk_monotone_in_k(bits in proptest::collection::vec(any::<bool>(), 1..30), k in 1usize..40) {
        let p = MissPattern::new(bits);
        let (a, b) = (mine_mk(&p, k), mine_mk(&p, k + 1));
        prop_assert!(a <= b && b <= a + 1);
        prop_assert!(a <= k);
    }
}
