//! Plant discretization, LET augmentation and the norm-bounded LQR design.

use crate::numerics::{lqr_gain, mat_exp, Matrix, NumericError};
use crate::taskmodel::Time;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid plant: {0}")]
    Plant(String),
    #[error("invalid gain design request: {0}")]
    Request(String),
    #[error("no weight ratio in [{lo:e}, {hi:e}] keeps the gain norm within {bound} (smallest norm found {min_norm})")]
    InfeasibleGain {
        lo: f64,
        hi: f64,
        bound: f64,
        min_norm: f64,
    },
}

/// Continuous-time LTI plant `ẋ = A_c x + B_c u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantCT {
    pub a: Matrix,
    pub b: Matrix,
    pub state_labels: Vec<String>,
    /// States whose squares make up the control cost.
    pub cost_states: Vec<usize>,
}

impl PlantCT {
    pub fn new(
        a: Matrix,
        b: Matrix,
        state_labels: Vec<String>,
        cost_states: Vec<usize>,
    ) -> Result<Self, ControlError> {
        let n = a.rows();
        if !a.is_square() || n == 0 {
            return Err(ControlError::Plant(format!(
                "A must be square and non-empty, got {:?}",
                a.shape()
            )));
        }
        if b.rows() != n || b.cols() == 0 {
            return Err(ControlError::Plant(format!(
                "B must have {n} rows and at least one column, got {:?}",
                b.shape()
            )));
        }
        if !state_labels.is_empty() && state_labels.len() != n {
            return Err(ControlError::Plant(format!(
                "{} state labels for {n} states",
                state_labels.len()
            )));
        }
        if let Some(&bad) = cost_states.iter().find(|&&i| i >= n) {
            return Err(ControlError::Plant(format!(
                "cost state index {bad} out of range for {n} states"
            )));
        }
        Ok(Self {
            a,
            b,
            state_labels,
            cost_states,
        })
    }

    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    /// The rotary inverted (Furuta) pendulum, state `[θ_r, θ_p, θ̇_r, θ̇_p]`,
    /// input motor voltage.
    pub fn furuta() -> Self {
        let a = Matrix::from_rows(&[
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.6907, -2.9968, -0.0048],
            vec![0.0, 21.9176, -3.0831, 0.0626],
        ])
        .expect("static matrix");
        let b = Matrix::column(&[0.0, 0.0, 3.8998, 4.0122]);
        Self {
            a,
            b,
            state_labels: ["theta_r", "theta_p", "theta_r_dot", "theta_p_dot"]
                .map(String::from)
                .to_vec(),
            cost_states: vec![0, 1],
        }
    }
}

/// Zero-order-hold discretization at a fixed period.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantDT {
    pub period: Time,
    pub a: Matrix,
    pub b: Matrix,
}

impl PlantDT {
    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }
}

/// `A = e^{A_c T}` and `B = ∫₀ᵀ e^{A_c t} B_c dt`, both read off
/// `exp([[A_c, B_c], [0, 0]]·T)`.
pub fn discretize(plant: &PlantCT, period: Time) -> Result<PlantDT, ControlError> {
    if period == Time::ZERO {
        return Err(ControlError::Request("sampling period must be positive".into()));
    }
    let (n, m) = (plant.states(), plant.inputs());
    let t = period.as_secs();
    let mut big = Matrix::zeros(n + m, n + m);
    big.set_block(0, 0, &plant.a.scale(t));
    big.set_block(0, n, &plant.b.scale(t));
    let e = mat_exp(&big)?;
    Ok(PlantDT {
        period,
        a: e.block(0, 0, n, n),
        b: e.block(0, n, n, m),
    })
}

/// LET augmentation on `z[k] = [x[k]; u[k−1]]`:
/// `A_z = [[A, B], [0, 0]]`, `B_z = [[0], [I]]`.
pub fn augment_let(plant: &PlantDT) -> (Matrix, Matrix) {
    let (n, m) = (plant.states(), plant.inputs());
    let mut az = Matrix::zeros(n + m, n + m);
    az.set_block(0, 0, &plant.a);
    az.set_block(0, n, &plant.b);
    let mut bz = Matrix::zeros(n + m, m);
    bz.set_block(n, 0, &Matrix::identity(m));
    (az, bz)
}

/// Norm used for the gain bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainNorm {
    /// Largest singular value; the Euclidean norm for a single input.
    #[default]
    Spectral,
}

impl GainNorm {
    pub fn of(self, f: &Matrix) -> Result<f64, NumericError> {
        match self {
            GainNorm::Spectral => f.norm_2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign {
    /// `m × (n+m)` gain on `z = [x; u_prev]`; the law is `u = −F z`.
    pub f: Matrix,
    /// State-to-input weight ratio `α/β` that produced `f`.
    pub ratio: f64,
    pub norm_bound: f64,
    pub achieved_norm: f64,
    pub norm: GainNorm,
}

/// Inclusive search interval for the weight ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRange {
    pub lo: f64,
    pub hi: f64,
}

impl RatioRange {
    /// `α ∈ [0.1, 10]`, `β ∈ [0.1, 1000]`.
    pub const DEFAULT: RatioRange = RatioRange { lo: 1e-4, hi: 100.0 };
}

/// Number of log-spaced ratios checked before refining by bisection.
pub const RATIO_GRID_POINTS: usize = 400;
const BISECTION_STEPS: usize = 60;

/// LQR gain on the LET-augmented plant with `Q = diag(ratio·q_template, 0)`
/// and `R = I`.
pub fn gain_at_ratio(
    az: &Matrix,
    bz: &Matrix,
    q_template: &[f64],
    ratio: f64,
) -> Result<Matrix, NumericError> {
    let mut diag = vec![0.0; az.rows()];
    for (d, q) in diag.iter_mut().zip(q_template) {
        *d = ratio * q;
    }
    lqr_gain(az, bz, &Matrix::from_diag(&diag), &Matrix::identity(bz.cols()))
}

/// Largest weight ratio in `range` whose LQR gain satisfies
/// `‖F‖ ≤ norm_bound`.
///
/// A log-spaced grid locates the largest admissible grid point, so a
/// non-monotone norm curve cannot hide a better ratio; bisection then refines
/// between it and the next grid point.
pub fn design_gain(
    plant: &PlantDT,
    q_template: &[f64],
    range: RatioRange,
    norm_bound: f64,
) -> Result<GainDesign, ControlError> {
    let n = plant.states();
    if q_template.len() != n {
        return Err(ControlError::Request(format!(
            "state weight template has {} entries for {n} states",
            q_template.len()
        )));
    }
    if q_template.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
        return Err(ControlError::Request(
            "state weights must be finite and non-negative".into(),
        ));
    }
    if !(range.lo > 0.0 && range.lo <= range.hi && range.hi.is_finite()) {
        return Err(ControlError::Request(format!(
            "bad ratio range [{}, {}]",
            range.lo, range.hi
        )));
    }
    if norm_bound.is_nan() || norm_bound < 0.0 {
        return Err(ControlError::Request(format!("bad norm bound {norm_bound}")));
    }

    let (az, bz) = augment_let(plant);
    let norm = GainNorm::Spectral;
    let eval = |ratio: f64| -> Result<(Matrix, f64), ControlError> {
        let f = gain_at_ratio(&az, &bz, q_template, ratio)?;
        let nf = norm.of(&f)?;
        Ok((f, nf))
    };
    let design = |ratio: f64, f: Matrix, achieved: f64| GainDesign {
        f,
        ratio,
        norm_bound,
        achieved_norm: achieved,
        norm,
    };

    let (llo, lhi) = (range.lo.ln(), range.hi.ln());
    let grid: Vec<f64> = if range.lo == range.hi {
        vec![range.lo]
    } else {
        (0..RATIO_GRID_POINTS)
            .map(|i| {
                if i + 1 == RATIO_GRID_POINTS {
                    range.hi
                } else {
                    (llo + (lhi - llo) * i as f64 / (RATIO_GRID_POINTS - 1) as f64).exp()
                }
            })
            .collect()
    };

    let mut min_norm = f64::INFINITY;
    let mut best: Option<usize> = None;
    let mut best_eval = None;
    for (i, &ratio) in grid.iter().enumerate().rev() {
        let (f, nf) = eval(ratio)?;
        min_norm = min_norm.min(nf);
        if nf <= norm_bound {
            best = Some(i);
            best_eval = Some((f, nf));
            break;
        }
    }
    let (Some(i), Some((f, nf))) = (best, best_eval) else {
        return Err(ControlError::InfeasibleGain {
            lo: range.lo,
            hi: range.hi,
            bound: norm_bound,
            min_norm,
        });
    };
    if i + 1 == grid.len() {
        return Ok(design(grid[i], f, nf));
    }

    let (mut lo, mut hi) = (grid[i].ln(), grid[i + 1].ln());
    let mut feasible = (grid[i], f, nf);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (f, nf) = eval(mid.exp())?;
        if nf <= norm_bound {
            lo = mid;
            feasible = (mid.exp(), f, nf);
        } else {
            hi = mid;
        }
    }
    Ok(design(feasible.0, feasible.1, feasible.2))
}
