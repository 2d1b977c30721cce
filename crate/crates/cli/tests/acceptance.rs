//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use common::{
    brute_force_mk, brute_force_schedule, expm_series, norm, random_matrix, random_task_set, rng,
    OracleJob,
};
use rand::Rng;
use weakhard::config::load_config;
use weakhard::control::{augment_let, discretize, gain_at_ratio};
use weakhard::numerics::{lqr_gain, mat_exp, solve_dare, spectral_radius, Matrix};
use weakhard::perfsim::{draw_sample, simulate_closed_loop, SimConfig};
use weakhard::scheduler::{mine_mk, simulate_schedule, steady_state_pattern};
use weakhard::stability::{build_phis, hyperperiod_products, verify};
use weakhard::sweep::{analyze_period, run_sweep, SweepRow};
use weakhard::taskmodel::lcm_of;
use weakhard::{DelaySequence, MissPattern, PlantCT, PlantDT, SweepConfig, Task, TaskSet, Time};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn reference() -> SweepConfig {
    load_config(&reference_path()).expect("reference config loads")
}

fn dare_scalar() -> Outcome {
    let start = Instant::now();
    let one = Matrix::identity(1);
    let p = solve_dare(&one, &one, &one, &one).map_err(|e| e.to_string())?[(0, 0)];
    let f = lqr_gain(&one, &one, &one, &one).map_err(|e| e.to_string())?[(0, 0)];
    let secs = start.elapsed().as_secs_f64();
    check(
        (p - 1.6180339887).abs() <= 1e-8 && (f - 0.6180339887).abs() <= 1e-8 && secs < 1.0,
        format!("P = {p:.12}, F = {f:.12}, {secs:.4} s"),
    )
}

fn expm_oracle() -> Outcome {
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(2..=8);
        let m = random_matrix(&mut r, n, n, 1.0);
        let m = m.scale(r.random_range(0.01..2.0) / m.norm_2().unwrap());
        let want = expm_series(&m);
        let got = mat_exp(&m).map_err(|e| e.to_string())?;
        worst = worst.max((&got - &want).norm_fro() / want.norm_fro());
    }
    check(worst <= 1e-9, format!("worst relative error {worst:.2e} over 50 matrices"))
}

fn scheduler_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(102);
    for case in 0..100 {
        let tasks = random_task_set(&mut r, 1.05);
        let periods: Vec<Time> = tasks.iter().map(|t| t.period).collect();
        let horizon = lcm_of(&periods).unwrap() * 4;
        let want = brute_force_schedule(&tasks, horizon.as_us());
        let trace = simulate_schedule(&tasks, horizon).map_err(|e| e.to_string())?;
        let mut got: Vec<OracleJob> = trace
            .jobs
            .iter()
            .map(|j| OracleJob {
                rank: j.task,
                index: j.job,
                finish_us: j.finish.as_us(),
                missed: j.missed,
            })
            .collect();
        got.sort();
        if got != want {
            return Err(format!("case {case} differs: {tasks:?}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("100 task sets identical, {secs:.2} s"))
}

fn hand_traced() -> Outcome {
    let ts = TaskSet::new(vec![
        Task::hard("hi", Time::from_ms(4), Time::from_ms(2)).with_priority(1),
        Task::controller("ctrl", Time::from_ms(6), Time::from_ms(3)).with_priority(2),
    ])
    .map_err(|e| e.to_string())?;
    let pat = steady_state_pattern(&ts).map_err(|e| e.to_string())?;
    let p_hat = pat.delays.max_delay();
    let rta_bound = pat.worst_response.div_ceil(Time::from_ms(6));
    check(
        pat.misses.bits == [true, false]
            && pat.delays.delays == [2, 1]
            && p_hat == 2
            && pat.worst_response == Time::from_ms(7)
            && rta_bound == 2,
        format!(
            "misses {:?}, p = {:?}, p_hat = {p_hat}, R_c = {}",
            pat.misses.bits, pat.delays.delays, pat.worst_response
        ),
    )
}

fn mk_miner() -> Outcome {
    let mut r = rng(103);
    for _ in 0..50 {
        let n = r.random_range(1..=40);
        let density = r.random_range(0.0..1.0);
        let bits: Vec<bool> = (0..n).map(|_| r.random_bool(density)).collect();
        let pattern = MissPattern::new(bits.clone());
        for k in 1..=30 {
            let (got, want) = (mine_mk(&pattern, k), brute_force_mk(&bits, k));
            if got != want {
                return Err(format!("{bits:?} K = {k}: {got} vs {want}"));
            }
        }
    }
    Ok("50 patterns, K = 1..30".into())
}

fn spectrum_invariance() -> Outcome {
    let mut r = rng(104);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(1..=4);
        let plant = PlantDT {
            period: Time::from_ms(1),
            a: random_matrix(&mut r, n, n, 1.2),
            b: random_matrix(&mut r, n, 1, 1.0),
        };
        let f = random_matrix(&mut r, 1, n + 1, 0.8);
        let len = r.random_range(1..=8);
        let mut d: Vec<usize> = (0..len).map(|_| r.random_range(1..=3)).collect();
        d[0] = 3;
        let d = DelaySequence::new(d);
        let acl = build_phis(&plant, &f, 3).map_err(|e| e.to_string())?;
        let prods = hyperperiod_products(&acl, &d).map_err(|e| e.to_string())?;
        let radii: Vec<f64> = prods.iter().map(|p| spectral_radius(p).unwrap()).collect();
        for rho in &radii {
            worst = worst.max((rho - radii[0]).abs() / (1.0 + radii[0]));
        }
    }
    check(worst <= 1e-8, format!("largest spread {worst:.2e}"))
}

fn unit_delay_reduction() -> Outcome {
    let mut r = rng(105);
    let q = [1.0, 1.0, 0.0, 0.0];
    let (mut stable, mut unstable) = (0, 0);
    for i in 0..20 {
        let plant = discretize(&PlantCT::furuta(), Time::from_ms(r.random_range(20..250)))
            .map_err(|e| e.to_string())?;
        let (az, bz) = augment_let(&plant);
        let f = if i % 2 == 0 {
            gain_at_ratio(&az, &bz, &q, r.random_range(0.01..10.0)).map_err(|e| e.to_string())?
        } else {
            random_matrix(&mut r, 1, 5, 20.0)
        };
        let nominal = spectral_radius(&(&az - &(&bz * &f))).unwrap() < 1.0 - 1e-9;
        let v = verify(&plant, &f, &DelaySequence::new(vec![1; 3]), 1e-9).map_err(|e| e.to_string())?;
        if v.stable != nominal {
            return Err(format!("case {i}: verdict {} vs nominal {nominal}", v.stable));
        }
        if nominal {
            stable += 1;
        } else {
            unstable += 1;
        }
    }
    Ok(format!("20 gains agree ({stable} stable, {unstable} unstable)"))
}

fn simulation_consistency(cfg: &SweepConfig) -> Outcome {
    let mut quick = cfg.clone();
    quick.sim.n_samples = 1;
    quick.sim.horizon_s = 0.0;
    let long = SimConfig { horizon_s: 30.0, ..cfg.sim.clone() };
    let mut failures = Vec::new();
    let (mut stable, mut diverging) = (0, Vec::new());
    for t in cfg.periods() {
        let a = analyze_period(&quick, t);
        let (Some(gain), Some(pat), Some(is_stable)) = (&a.gain, &a.pattern, a.row.stable) else {
            continue;
        };
        let (x0, phase) = draw_sample(&long, pat.delays.jobs_per_hyper_period(), 0);
        let tr = simulate_closed_loop(&cfg.plant, t, &gain.f, &pat.delays, &x0, phase, &long)
            .map_err(|e| e.to_string())?;
        let depth = pat.delays.max_delay();
        let start = norm(&tr.xi_at(0, depth));
        let end = if tr.diverged {
            f64::INFINITY
        } else {
            norm(&tr.xi_at(tr.sampling_instants() - 1, depth))
        };
        if is_stable {
            stable += 1;
            if end > 1e-3 * start {
                failures.push(format!("{}:{:.1e}", t.as_ms(), end / start));
            }
        } else if end > 10.0 * start {
            diverging.push(t.as_ms());
        }
    }
    let detail = format!(
        "{stable} stable periods, {} miss the 1e-3 decay at 30 s [{}]; {} unstable periods diverge",
        failures.len(),
        failures.join(" "),
        diverging.len()
    );
    check(failures.is_empty() && !diverging.is_empty(), detail)
}

fn stable_band(rows: &[SweepRow]) -> Vec<u64> {
    rows.iter().filter(|r| r.stable == Some(true)).map(|r| r.period_ms).collect()
}

fn fig3_shape(cfg: &SweepConfig, rows: &[SweepRow], secs: f64) -> Outcome {
    let regular: f64 = cfg.regular.iter().map(|t| t.utilization()).sum();
    let stable = stable_band(rows);
    let hard: Vec<u64> = rows
        .iter()
        .filter(|r| r.hard_feasible == Some(true))
        .map(|r| r.period_ms)
        .collect();
    let hard_stable: Vec<u64> = rows
        .iter()
        .filter(|r| r.hard_feasible == Some(true) && r.stable == Some(true))
        .map(|r| r.period_ms)
        .collect();
    let subset = !hard_stable.is_empty()
        && hard_stable.iter().all(|t| stable.contains(t))
        && stable.len() > hard_stable.len();

    let best = rows
        .iter()
        .filter(|r| r.stable == Some(true) && r.mean_cost.is_some_and(f64::is_finite))
        .min_by(|a, b| a.mean_cost.unwrap().total_cmp(&b.mean_cost.unwrap()));
    let best_weakly_hard = best.is_some_and(|r| r.m_min.unwrap_or(0) >= 1);

    let large_unstable = rows.iter().filter(|r| r.period_ms >= 250).all(|r| r.stable != Some(true));
    let first_stable = rows.iter().find(|r| r.stable == Some(true));
    let degraded = match (first_stable, best) {
        (Some(f), Some(b)) => f.mean_cost.unwrap_or(f64::INFINITY) > 2.0 * b.mean_cost.unwrap(),
        _ => false,
    };
    let detail = format!(
        "U = {regular:.4}; stable {}..{} ({} periods); hard-deadline design space (m = 0 and stable) {}..{}, m = 0 at {} periods; \
         best J_c {:.4} at {} ms (m = {}); smallest stable {} ms has J_c {:.4}; {secs:.1} s",
        stable.first().unwrap_or(&0),
        stable.last().unwrap_or(&0),
        stable.len(),
        hard_stable.first().unwrap_or(&0),
        hard_stable.last().unwrap_or(&0),
        hard.len(),
        best.and_then(|r| r.mean_cost).unwrap_or(f64::NAN),
        best.map_or(0, |r| r.period_ms),
        best.and_then(|r| r.m_min).unwrap_or(0),
        first_stable.map_or(0, |r| r.period_ms),
        first_stable.and_then(|r| r.mean_cost).unwrap_or(f64::NAN),
    );
    check(
        (regular - 0.72).abs() <= 0.005
            && cfg.controller_wcet == Time::from_ms(15)
            && cfg.k == 20
            && cfg.norm_bound == 35.0
            && subset
            && best_weakly_hard
            && large_unstable
            && degraded
            && secs < 300.0,
        detail,
    )
}

fn norm_bound_trend(cfg: &SweepConfig, rows35: &[SweepRow]) -> Outcome {
    let mut tight = cfg.clone();
    tight.norm_bound = 30.0;
    let rows30 = run_sweep(&tight);
    let top = |rows: &[SweepRow]| stable_band(rows).last().copied();
    let (a, b) = (top(rows35), top(&rows30));
    check(
        matches!((a, b), (Some(a), Some(b)) if b < a),
        format!("stable band ends at {a:?} ms with bound 35, {b:?} ms with bound 30"),
    )
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("weakhard-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_weakhard"))
            .args(["sweep", "--config"])
            .arg(reference_path())
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("sweep exited with {status}"));
        }
        std::fs::read(&out).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.csv")?, run("b.csv")?);
    let _ = std::fs::remove_dir_all(&dir);
    check(
        a == b && !a.is_empty(),
        format!("{} bytes, {} lines, identical: {}", a.len(), a.iter().filter(|&&c| c == b'\n').count(), a == b),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag}  {name}: {detail}");
    };

    report(1, "DARE analytic case", dare_scalar());
    report(2, "mat_exp series oracle", expm_oracle());
    report(3, "scheduler tick oracle", scheduler_oracle());
    report(4, "hand-traced pair", hand_traced());
    report(5, "(m,K) miner brute force", mk_miner());
    report(6, "spectrum invariance", spectrum_invariance());
    report(7, "unit-delay reduction", unit_delay_reduction());

    let cfg = reference();
    report(8, "stability vs simulation", simulation_consistency(&cfg));
    let start = Instant::now();
    let rows = run_sweep(&cfg);
    let secs = start.elapsed().as_secs_f64();
    report(9, "sweep shape", fig3_shape(&cfg, &rows, secs));
    report(10, "norm-bound trend", norm_bound_trend(&cfg, &rows));
    report(11, "CLI determinism", determinism());

    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
