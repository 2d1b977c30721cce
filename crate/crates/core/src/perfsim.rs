//! Closed-loop simulation of the continuous plant under LET actuation and
//! the quadratic control cost.
//!
//! The controller samples `x[k]` at every sampling instant and computes
//! `u[k] = −F [x[k]; u[k−1]]`, where `u[k−1]` is its own previous command.
//! During `[t_k, t_{k+1})` the plant holds the input `u[k − p]`, `p` being
//! the delay factor the schedule produced for that step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{discretize, ControlError, PlantCT};
use crate::numerics::Matrix;
use crate::scheduler::DelaySequence;
use crate::taskmodel::Time;

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Length of each run, seconds.
    pub horizon_s: f64,
    /// Integration step; must divide the sampling period.
    pub substep: Time,
    pub n_samples: usize,
    pub seed: u64,
    /// Per-state `(low, high)` bounds of the uniform initial-state draw.
    pub init_bounds: Vec<(f64, f64)>,
}

impl SimConfig {
    /// 10 s runs, 1 ms steps, 100 samples, angles in ±0.3 rad and zero
    /// velocities for a four-state pendulum.
    pub fn furuta_default() -> Self {
        Self {
            horizon_s: 10.0,
            substep: Time::from_ms(1),
            n_samples: 100,
            seed: 0x5eed,
            init_bounds: vec![(-0.3, 0.3), (-0.3, 0.3), (0.0, 0.0), (0.0, 0.0)],
        }
    }

    fn validate(&self, period: Time, states: usize) -> Result<usize, SimError> {
        if self.substep == Time::ZERO || !period.as_us().is_multiple_of(self.substep.as_us()) {
            return Err(SimError::Setup(format!(
                "substep {} does not divide the sampling period {period}",
                self.substep
            )));
        }
        if !(self.horizon_s.is_finite() && self.horizon_s >= 0.0) {
            return Err(SimError::Setup(format!("bad horizon {}", self.horizon_s)));
        }
        if self.n_samples == 0 {
            return Err(SimError::Setup("need at least one sample".into()));
        }
        if self.init_bounds.len() != states {
            return Err(SimError::Setup(format!(
                "{} initial-state bounds for {states} states",
                self.init_bounds.len()
            )));
        }
        if let Some((lo, hi)) = self.init_bounds.iter().find(|(lo, hi)| !(lo <= hi)) {
            return Err(SimError::Setup(format!("empty bound [{lo}, {hi}]")));
        }
        Ok((period.as_us() / self.substep.as_us()) as usize)
    }
}

/// Simulated run on the substep grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Seconds since the disturbance.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Input held by the plant on `[times[i], times[i+1])`.
    pub applied: Vec<Vec<f64>>,
    /// `u[k]` computed at each sampling instant.
    pub commands: Vec<Vec<f64>>,
    /// Substeps between consecutive sampling instants.
    pub steps_per_period: usize,
    pub diverged: bool,
}

impl Trajectory {
    /// `ξ[k] = [x[k]; u[k−1]; …; u[k−depth]]` at sampling instant `k`.
    pub fn xi_at(&self, k: usize, depth: usize) -> Vec<f64> {
        let mut xi = self.states[k * self.steps_per_period].clone();
        for back in 1..=depth {
            match k.checked_sub(back) {
                Some(j) => xi.extend_from_slice(&self.commands[j]),
                None => xi.extend(std::iter::repeat_n(0.0, self.commands[0].len())),
            }
        }
        xi
    }

    /// Rows of `t, x…, u…` on the substep grid. `labels` names the states;
    /// missing labels fall back to `x0, x1, …`.
    pub fn write_csv<W: std::io::Write>(&self, labels: &[String], mut out: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.applied.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| labels.get(i).cloned().unwrap_or_else(|| format!("x{i}"))));
        header.extend((0..m).map(|j| format!("u{j}")));
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let mut line = format!("{t:.6}");
            for v in self.states[i].iter().chain(&self.applied[i]) {
                line.push(',');
                line.push_str(&format!("{v:.9e}"));
            }
            writeln!(out, "{line}")?;
        }
        out.flush()
    }

    /// Number of sampling instants whose state was recorded.
    pub fn sampling_instants(&self) -> usize {
        if self.states.is_empty() {
            0
        } else {
            (self.states.len() - 1) / self.steps_per_period + 1
        }
    }
}

struct Stepper {
    a: Matrix,
    b: Matrix,
    f: Matrix,
    steps_per_period: usize,
    n: usize,
    m: usize,
}

impl Stepper {
    fn new(plant: &PlantCT, period: Time, f: &Matrix, cfg: &SimConfig) -> Result<Self, SimError> {
        let (n, m) = (plant.states(), plant.inputs());
        if f.shape() != (m, n + m) {
            return Err(SimError::Setup(format!(
                "gain is {:?}, expected ({m}, {})",
                f.shape(),
                n + m
            )));
        }
        let steps_per_period = cfg.validate(period, n)?;
        let sub = discretize(plant, cfg.substep)?;
        Ok(Self {
            a: sub.a,
            b: sub.b,
            f: f.clone(),
            steps_per_period,
            n,
            m,
        })
    }

    /// Runs one disturbance response and reports every substep to `visit` as
    /// `(step, x, applied_u)`, plus each command to `on_command`. Returns
    /// `true` if the state norm blew past [`DIVERGENCE_NORM`].
    fn run(
        &self,
        delays: &DelaySequence,
        x0: &[f64],
        phase: usize,
        total_steps: usize,
        mut visit: impl FnMut(usize, &[f64], &[f64]),
        mut on_command: impl FnMut(&[f64]),
    ) -> bool {
        let (n, m) = (self.n, self.m);
        let mut x = x0.to_vec();
        let mut next = vec![0.0; n];
        let mut commands: Vec<Vec<f64>> = Vec::new();
        let mut applied = vec![0.0; m];
        let mut z = vec![0.0; n + m];
        for step in 0..=total_steps {
            if step % self.steps_per_period == 0 {
                let k = step / self.steps_per_period;
                z[..n].copy_from_slice(&x);
                match commands.last() {
                    Some(prev) => z[n..].copy_from_slice(prev),
                    None => z[n..].fill(0.0),
                }
                let u: Vec<f64> = self.f.mul_vec(&z).into_iter().map(|v| -v).collect();
                on_command(&u);
                commands.push(u);
                let p = delays.at(phase + k);
                applied = match k.checked_sub(p) {
                    Some(j) => commands[j].clone(),
                    None => vec![0.0; m],
                };
            }
            visit(step, &x, &applied);
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() > DIVERGENCE_NORM
                || x.iter().any(|v| !v.is_finite())
            {
                return true;
            }
            if step == total_steps {
                break;
            }
            for (i, xi) in next.iter_mut().enumerate() {
                let ax: f64 = self.a.row(i).iter().zip(&x).map(|(a, v)| a * v).sum();
                let bu: f64 = self.b.row(i).iter().zip(&applied).map(|(b, u)| b * u).sum();
                *xi = ax + bu;
            }
            std::mem::swap(&mut x, &mut next);
        }
        false
    }
}

fn total_steps(cfg: &SimConfig) -> usize {
    (cfg.horizon_s * 1e6 / cfg.substep.as_us() as f64).round() as usize
}

/// Response of the sampled loop to initial state `x0` (zero input history),
/// with the disturbance arriving at hyper-period offset `phase`.
pub fn simulate_closed_loop(
    plant: &PlantCT,
    period: Time,
    f: &Matrix,
    delays: &DelaySequence,
    x0: &[f64],
    phase: usize,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let stepper = Stepper::new(plant, period, f, cfg)?;
    if x0.len() != plant.states() {
        return Err(SimError::Setup(format!(
            "initial state has {} entries for {} states",
            x0.len(),
            plant.states()
        )));
    }
    let h = cfg.substep.as_secs();
    let mut tr = Trajectory {
        steps_per_period: stepper.steps_per_period,
        ..Default::default()
    };
    let mut commands = Vec::new();
    tr.diverged = stepper.run(
        delays,
        x0,
        phase,
        total_steps(cfg),
        |step, x, u| {
            tr.times.push(step as f64 * h);
            tr.states.push(x.to_vec());
            tr.applied.push(u.to_vec());
        },
        |u| commands.push(u.to_vec()),
    );
    tr.commands = commands;
    Ok(tr)
}

/// Trapezoidal integral of `Σ x_i²` over the weighted states; `+∞` for a
/// divergent run.
pub fn control_cost(tr: &Trajectory, weighted: &[usize]) -> f64 {
    if tr.diverged {
        return f64::INFINITY;
    }
    let mut cost = CostAccumulator::default();
    for (t, x) in tr.times.iter().zip(&tr.states) {
        cost.push(*t, weighted.iter().map(|&i| x[i] * x[i]).sum());
    }
    cost.total
}

#[derive(Default)]
struct CostAccumulator {
    last: Option<(f64, f64)>,
    total: f64,
}

impl CostAccumulator {
    fn push(&mut self, t: f64, v: f64) {
        if let Some((t0, v0)) = self.last {
            self.total += 0.5 * (t - t0) * (v0 + v);
        }
        self.last = Some((t, v));
    }
}

/// Seeded draw of sample `index`: every sample owns ChaCha stream `index`
/// of generator `seed`, so samples are independent of evaluation order.
pub fn draw_sample(cfg: &SimConfig, n_c: usize, index: usize) -> (Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let x0 = cfg
        .init_bounds
        .iter()
        .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect();
    let phase = rng.random_range(0..n_c.max(1));
    (x0, phase)
}

/// Mean cost over `cfg.n_samples` random initial states and disturbance
/// phases. `+∞` if any sample diverges.
pub fn evaluate_performance(
    plant: &PlantCT,
    period: Time,
    f: &Matrix,
    delays: &DelaySequence,
    cfg: &SimConfig,
) -> Result<f64, SimError> {
    let stepper = Stepper::new(plant, period, f, cfg)?;
    let steps = total_steps(cfg);
    let h = cfg.substep.as_secs();
    let mut sum = 0.0;
    for index in 0..cfg.n_samples {
        let (x0, phase) = draw_sample(cfg, delays.jobs_per_hyper_period(), index);
        let mut cost = CostAccumulator::default();
        let diverged = stepper.run(
            delays,
            &x0,
            phase,
            steps,
            |step, x, _| {
                cost.push(
                    step as f64 * h,
                    plant.cost_states.iter().map(|&i| x[i] * x[i]).sum(),
                )
            },
            |_| {},
        );
        if diverged {
            return Ok(f64::INFINITY);
        }
        sum += cost.total;
    }
    Ok(sum / cfg.n_samples as f64)
}
