//! Period sweep: for every candidate controller period, place the controller,
//! extract its steady-state miss pattern, design the gain and judge the loop.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::control::{design_gain, discretize, ControlError, GainDesign, PlantCT, RatioRange};
use crate::perfsim::{evaluate_performance, SimConfig};
use crate::scheduler::{
    mine_mk, place_controller_priority, steady_state_pattern, ControllerPattern, Placement,
};
use crate::stability::{verify, StabilityVerdict};
use crate::taskmodel::{assign_rm_priorities, Task, TaskSet, Time};

/// Everything a sweep needs; see [`crate::config`] for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Regular (hard) tasks; priorities are assigned rate-monotonically.
    pub regular: Vec<Task>,
    pub controller_id: String,
    pub controller_wcet: Time,
    /// Period used by single-period commands when none is given.
    pub controller_period: Option<Time>,
    pub plant: PlantCT,
    pub q_template: Vec<f64>,
    pub period_min_ms: u64,
    pub period_max_ms: u64,
    pub period_step_ms: u64,
    pub k: usize,
    pub norm_bound: f64,
    pub ratio_range: RatioRange,
    pub tol_margin: f64,
    pub sim: SimConfig,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn periods(&self) -> impl Iterator<Item = Time> {
        (self.period_min_ms..=self.period_max_ms)
            .step_by(self.period_step_ms.max(1) as usize)
            .map(Time::from_ms)
    }

    pub fn controller_task(&self, period: Time) -> Task {
        Task::controller(self.controller_id.clone(), period, self.controller_wcet)
    }

    /// Total utilization of the regular tasks plus the controller at `period`.
    pub fn utilization(&self, period: Time) -> f64 {
        self.regular.iter().map(Task::utilization).sum::<f64>()
            + self.controller_wcet.as_us() as f64 / period.as_us() as f64
    }
}

/// One sampling period's joint schedulability and control record.
/// Fields after `feasible` are `None` when an earlier stage failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub period_ms: u64,
    pub feasible: bool,
    pub m_min: Option<usize>,
    pub k: usize,
    pub p_hat: Option<usize>,
    pub n_c: Option<usize>,
    pub hard_feasible: Option<bool>,
    pub ratio: Option<f64>,
    pub gain_norm: Option<f64>,
    /// `Some(false)` also when no gain satisfies the norm bound.
    pub stable: Option<bool>,
    pub max_rho: Option<f64>,
    pub mean_cost: Option<f64>,
    /// Why the row is incomplete, if it is.
    pub note: Option<String>,
}

impl SweepRow {
    fn empty(period: Time, k: usize) -> Self {
        SweepRow {
            period_ms: period.whole_ms().unwrap_or(0),
            feasible: false,
            m_min: None,
            k,
            p_hat: None,
            n_c: None,
            hard_feasible: None,
            ratio: None,
            gain_norm: None,
            stable: None,
            max_rho: None,
            mean_cost: None,
            note: None,
        }
    }
}

/// Full intermediate results for one period, kept for the `analyze` report.
#[derive(Debug, Clone)]
pub struct PeriodAnalysis {
    pub period: Time,
    pub utilization: f64,
    pub task_set: Option<TaskSet>,
    /// Regular task that misses when the controller is placed lowest.
    pub violated: Option<String>,
    pub pattern: Option<ControllerPattern>,
    pub gain: Option<GainDesign>,
    pub verdict: Option<StabilityVerdict>,
    pub row: SweepRow,
}

/// Runs every pipeline stage for one controller period. Failures stop the
/// pipeline and are recorded in `row.note`.
pub fn analyze_period(cfg: &SweepConfig, period: Time) -> PeriodAnalysis {
    let mut out = PeriodAnalysis {
        period,
        utilization: cfg.utilization(period),
        task_set: None,
        violated: None,
        pattern: None,
        gain: None,
        verdict: None,
        row: SweepRow::empty(period, cfg.k),
    };
    let regular = assign_rm_priorities(&cfg.regular);
    let ctrl = cfg.controller_task(period);
    let ts = match place_controller_priority(&regular, &ctrl) {
        Ok(Placement::Feasible(ts)) => ts,
        Ok(Placement::Infeasible { violated }) => {
            out.row.note = Some(format!("placement infeasible: {violated} misses"));
            out.violated = Some(violated);
            return out;
        }
        Err(e) => {
            out.row.note = Some(format!("placement: {e}"));
            return out;
        }
    };
    out.row.feasible = true;
    out.task_set = Some(ts.clone());

    let pattern = match steady_state_pattern(&ts) {
        Ok(p) => p,
        Err(e) => {
            out.row.note = Some(format!("schedule: {e}"));
            return out;
        }
    };
    let m = mine_mk(&pattern.misses, cfg.k);
    out.row.m_min = Some(m);
    out.row.hard_feasible = Some(m == 0);
    out.row.p_hat = Some(pattern.delays.max_delay());
    out.row.n_c = Some(pattern.delays.jobs_per_hyper_period());
    let delays = pattern.delays.clone();
    out.pattern = Some(pattern);

    let plant = match discretize(&cfg.plant, period) {
        Ok(p) => p,
        Err(e) => {
            out.row.note = Some(format!("discretization: {e}"));
            return out;
        }
    };
    let gain = match design_gain(&plant, &cfg.q_template, cfg.ratio_range, cfg.norm_bound) {
        Ok(g) => g,
        Err(e @ ControlError::InfeasibleGain { .. }) => {
            out.row.stable = Some(false);
            out.row.note = Some(e.to_string());
            return out;
        }
        Err(e) => {
            out.row.note = Some(format!("gain design: {e}"));
            return out;
        }
    };
    out.row.ratio = Some(gain.ratio);
    out.row.gain_norm = Some(gain.achieved_norm);

    match verify(&plant, &gain.f, &delays, cfg.tol_margin) {
        Ok(v) => {
            out.row.stable = Some(v.stable);
            out.row.max_rho = Some(v.max_spectral_radius);
            out.verdict = Some(v);
        }
        Err(e) => {
            out.row.note = Some(format!("stability: {e}"));
            out.gain = Some(gain);
            return out;
        }
    }

    match evaluate_performance(&cfg.plant, period, &gain.f, &delays, &cfg.sim) {
        Ok(j) => out.row.mean_cost = Some(j),
        Err(e) => out.row.note = Some(format!("simulation: {e}")),
    }
    out.gain = Some(gain);
    out
}

/// Analyzes every period of the configured range in parallel. Rows come
/// back ordered by period and do not depend on the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Vec<SweepRow> {
    let periods: Vec<Time> = cfg.periods().collect();
    periods
        .par_iter()
        .map(|&t| analyze_period(cfg, t).row)
        .collect()
}

pub const CSV_HEADER: &str =
    "T_c_ms,feasible,m_min,K,p_hat,N_c,hard_feasible,ratio,gain_norm,stable,max_rho,mean_Jc";

/// `%.9g`-style rendering, independent of locale.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return "0".into();
    }
    const DIGITS: i32 = 9;
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let fixed = format!("{:.*}", (DIGITS - 1 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn csv_line(row: &SweepRow) -> String {
    let mut s = String::new();
    write!(
        s,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        row.period_ms,
        row.feasible,
        opt(row.m_min, |v| v.to_string()),
        row.k,
        opt(row.p_hat, |v| v.to_string()),
        opt(row.n_c, |v| v.to_string()),
        opt(row.hard_feasible, |v| v.to_string()),
        opt(row.ratio, format_float),
        opt(row.gain_norm, format_float),
        opt(row.stable, |v| v.to_string()),
        opt(row.max_rho, format_float),
        opt(row.mean_cost, format_float),
    )
    .expect("writing to a String");
    s
}

/// Writes the header and one line per row.
pub fn emit_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", csv_line(row))?;
    }
    out.flush()
}
