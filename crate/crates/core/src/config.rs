//! Sweep configuration files.
//!
//! The format is TOML with a fixed set of tables; unknown keys are rejected.
//!
//! ```toml
//! [sweep]
//! period_min_ms = 55        # integer ms
//! period_max_ms = 300
//! period_step_ms = 1
//! k = 20                    # window length for (m, K) mining
//! norm_bound = 35.0         # bound on the spectral norm of F
//! ratio_min = 1e-4          # searched alpha/beta interval
//! ratio_max = 100.0
//! tol_margin = 1e-9         # optional
//! output = "results.csv"    # optional, relative to the config file
//!
//! [simulation]
//! horizon_s = 10.0
//! substep_us = 1000
//! samples = 100
//! seed = 2020
//! init_bounds = [[-0.3, 0.3], [-0.3, 0.3], [0.0, 0.0], [0.0, 0.0]]
//!
//! [plant]
//! a = [[0.0, 0.0, 1.0, 0.0], ...]   # row by row
//! b = [[0.0], [0.0], [3.8998], [4.0122]]
//! state_labels = ["theta_r", "theta_p", "theta_r_dot", "theta_p_dot"]
//! cost_states = [0, 1]              # states integrated in the cost
//! q_template = [1.0, 1.0, 0.0, 0.0] # Q = diag(ratio * q_template, 0)
//!
//! [controller]
//! id = "ctrl"
//! wcet_ms = 15.0            # microsecond resolution
//! period_ms = 132           # optional default for single-period commands
//!
//! [[task]]                  # one table per regular task
//! id = "t1"
//! period_ms = 60
//! wcet_ms = 8.0
//! deadline_ms = 60          # optional, defaults to the period
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ControlError, PlantCT, RatioRange};
use crate::numerics::Matrix;
use crate::perfsim::SimConfig;
use crate::stability::DEFAULT_TOL_MARGIN;
use crate::sweep::SweepConfig;
use crate::taskmodel::{Task, TaskError, Time};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    sweep: RawSweep,
    simulation: RawSimulation,
    plant: RawPlant,
    controller: RawController,
    #[serde(default, rename = "task")]
    tasks: Vec<RawTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    period_min_ms: u64,
    period_max_ms: u64,
    period_step_ms: u64,
    k: usize,
    norm_bound: f64,
    ratio_min: f64,
    ratio_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tol_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    horizon_s: f64,
    substep_us: u64,
    samples: usize,
    seed: u64,
    init_bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    #[serde(default)]
    state_labels: Vec<String>,
    cost_states: Vec<usize>,
    q_template: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    id: String,
    wcet_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    id: String,
    period_ms: u64,
    wcet_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deadline_ms: Option<u64>,
}

fn wcet(field: &str, ms: f64) -> Result<Time, ConfigError> {
    match Time::from_ms_f64(ms) {
        Some(t) if t > Time::ZERO => Ok(t),
        _ => Err(invalid(
            field,
            format!("{ms} is not a positive multiple of 0.001 ms"),
        )),
    }
}

fn positive_ms(field: &str, ms: u64) -> Result<Time, ConfigError> {
    if ms == 0 {
        return Err(invalid(field, "must be positive"));
    }
    Ok(Time::from_ms(ms))
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, ConfigError> {
    Matrix::from_rows(rows).map_err(|e| invalid(field, e))
}

/// Parses configuration text. Relative output paths are kept as written.
pub fn parse_config(text: &str) -> Result<SweepConfig, ConfigError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    from_raw(raw)
}

/// Reads and validates a configuration file. A relative `output` path is
/// resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<SweepConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(out) = cfg.output.as_mut() {
        if out.is_relative() {
            if let Some(dir) = path.parent() {
                *out = dir.join(&*out);
            }
        }
    }
    Ok(cfg)
}

fn from_raw(raw: RawFile) -> Result<SweepConfig, ConfigError> {
    let s = &raw.sweep;
    if s.period_min_ms == 0 {
        return Err(invalid("sweep.period_min_ms", "must be positive"));
    }
    if s.period_min_ms > s.period_max_ms {
        return Err(invalid(
            "sweep.period_max_ms",
            format!("{} is below period_min_ms {}", s.period_max_ms, s.period_min_ms),
        ));
    }
    if s.period_step_ms == 0 {
        return Err(invalid("sweep.period_step_ms", "must be at least 1"));
    }
    if s.k == 0 {
        return Err(invalid("sweep.k", "must be at least 1"));
    }
    if s.norm_bound.is_nan() || s.norm_bound < 0.0 {
        return Err(invalid("sweep.norm_bound", "must be non-negative"));
    }
    if !(s.ratio_min > 0.0 && s.ratio_min <= s.ratio_max && s.ratio_max.is_finite()) {
        return Err(invalid(
            "sweep.ratio_max",
            format!("[{}, {}] is not a positive interval", s.ratio_min, s.ratio_max),
        ));
    }
    let tol_margin = s.tol_margin.unwrap_or(DEFAULT_TOL_MARGIN);
    if !(0.0..1.0).contains(&tol_margin) {
        return Err(invalid("sweep.tol_margin", "must lie in [0, 1)"));
    }

    let p = &raw.plant;
    let a = matrix("plant.a", &p.a)?;
    let b = matrix("plant.b", &p.b)?;
    let n = a.rows();
    let plant = PlantCT::new(a, b, p.state_labels.clone(), p.cost_states.clone()).map_err(|e| {
        let field = match &e {
            ControlError::Plant(msg) if msg.starts_with("cost") => "plant.cost_states",
            ControlError::Plant(msg) if msg.contains("label") => "plant.state_labels",
            ControlError::Plant(msg) if msg.starts_with("B") => "plant.b",
            _ => "plant.a",
        };
        invalid(field, e)
    })?;
    if p.q_template.len() != n {
        return Err(invalid(
            "plant.q_template",
            format!("{} entries for {n} states", p.q_template.len()),
        ));
    }
    if p.q_template.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
        return Err(invalid("plant.q_template", "weights must be finite and non-negative"));
    }

    let sim = &raw.simulation;
    if sim.init_bounds.len() != n {
        return Err(invalid(
            "simulation.init_bounds",
            format!("{} bounds for {n} states", sim.init_bounds.len()),
        ));
    }
    if sim.init_bounds.iter().any(|[lo, hi]| !(lo <= hi)) {
        return Err(invalid("simulation.init_bounds", "each bound needs low <= high"));
    }
    if sim.substep_us == 0 {
        return Err(invalid("simulation.substep_us", "must be positive"));
    }
    if sim.samples == 0 {
        return Err(invalid("simulation.samples", "must be at least 1"));
    }
    if !(sim.horizon_s.is_finite() && sim.horizon_s >= 0.0) {
        return Err(invalid("simulation.horizon_s", "must be finite and non-negative"));
    }

    let c = &raw.controller;
    let ctrl_wcet = wcet("controller.wcet_ms", c.wcet_ms)?;
    let ctrl_period = c
        .period_ms
        .map(|ms| positive_ms("controller.period_ms", ms))
        .transpose()?;

    let mut tasks = Vec::with_capacity(raw.tasks.len());
    for (i, t) in raw.tasks.iter().enumerate() {
        let period = positive_ms(&format!("task[{i}].period_ms"), t.period_ms)?;
        let deadline = match t.deadline_ms {
            Some(d) => positive_ms(&format!("task[{i}].deadline_ms"), d)?,
            None => period,
        };
        let wcet = wcet(&format!("task[{i}].wcet_ms"), t.wcet_ms)?;
        tasks.push(Task::hard(t.id.clone(), period, wcet).with_deadline(deadline));
    }
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    ids.push(c.id.as_str());
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(invalid("task.id", TaskError::DuplicateId(w[0].to_string())));
    }

    Ok(SweepConfig {
        regular: tasks,
        controller_id: c.id.clone(),
        controller_wcet: ctrl_wcet,
        controller_period: ctrl_period,
        plant,
        q_template: p.q_template.clone(),
        period_min_ms: s.period_min_ms,
        period_max_ms: s.period_max_ms,
        period_step_ms: s.period_step_ms,
        k: s.k,
        norm_bound: s.norm_bound,
        ratio_range: RatioRange {
            lo: s.ratio_min,
            hi: s.ratio_max,
        },
        tol_margin,
        sim: SimConfig {
            horizon_s: sim.horizon_s,
            substep: Time::from_us(sim.substep_us),
            n_samples: sim.samples,
            seed: sim.seed,
            init_bounds: sim.init_bounds.iter().map(|&[lo, hi]| (lo, hi)).collect(),
        },
        output: s.output.as_ref().map(PathBuf::from),
    })
}

fn to_raw(cfg: &SweepConfig) -> RawFile {
    RawFile {
        sweep: RawSweep {
            period_min_ms: cfg.period_min_ms,
            period_max_ms: cfg.period_max_ms,
            period_step_ms: cfg.period_step_ms,
            k: cfg.k,
            norm_bound: cfg.norm_bound,
            ratio_min: cfg.ratio_range.lo,
            ratio_max: cfg.ratio_range.hi,
            tol_margin: Some(cfg.tol_margin),
            output: cfg.output.as_ref().map(|p| p.display().to_string()),
        },
        simulation: RawSimulation {
            horizon_s: cfg.sim.horizon_s,
            substep_us: cfg.sim.substep.as_us(),
            samples: cfg.sim.n_samples,
            seed: cfg.sim.seed,
            init_bounds: cfg.sim.init_bounds.iter().map(|&(lo, hi)| [lo, hi]).collect(),
        },
        plant: RawPlant {
            a: cfg.plant.a.to_rows(),
            b: cfg.plant.b.to_rows(),
            state_labels: cfg.plant.state_labels.clone(),
            cost_states: cfg.plant.cost_states.clone(),
            q_template: cfg.q_template.clone(),
        },
        controller: RawController {
            id: cfg.controller_id.clone(),
            wcet_ms: cfg.controller_wcet.as_ms(),
            period_ms: cfg.controller_period.and_then(Time::whole_ms),
        },
        tasks: cfg
            .regular
            .iter()
            .map(|t| RawTask {
                id: t.id.clone(),
                period_ms: t.period.whole_ms().unwrap_or(0),
                wcet_ms: t.wcet.as_ms(),
                deadline_ms: (t.deadline != t.period).then(|| t.deadline.whole_ms().unwrap_or(0)),
            })
            .collect(),
    }
}

/// Serializes a configuration in the format [`parse_config`] reads.
pub fn write_config(cfg: &SweepConfig) -> String {
    toml::to_string(&to_raw(cfg)).expect("configuration serializes")
}
