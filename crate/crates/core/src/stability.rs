//! Closed-loop stability of the LET controller under a periodic delay pattern.
//!
//! With `ξ[k] = [x[k]; u[k−1]; …; u[k−p̂]]`, each sampling step multiplies the
//! state by `φ_p = A_ξ(p) − B_ξ F_ξ`, where `p` is the delay of the input
//! applied in that step. Over one hyper-period of `N_c` steps the state maps
//! through `Φ_k = φ_{p_{k+N_c−1}} ⋯ φ_{p_k}`; the loop is asymptotically
//! stable if every `Φ_k` has spectral radius below one.

use crate::control::PlantDT;
use crate::numerics::{spectral_radius, Matrix, NumericError};
use crate::scheduler::DelaySequence;

/// Margin applied to the strict `ρ < 1` test.
pub const DEFAULT_TOL_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("delay {delay} at step {step} exceeds the augmentation depth {max}")]
    DelayTooLarge { step: usize, delay: usize, max: usize },
    #[error("empty product list")]
    Empty,
}

/// The `p̂` possible one-step closed-loop matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedClosedLoop {
    pub max_delay: usize,
    /// `phis[p − 1]` is `φ_p`.
    pub phis: Vec<Matrix>,
    pub states: usize,
    pub inputs: usize,
}

impl AugmentedClosedLoop {
    pub fn phi(&self, delay: usize) -> &Matrix {
        &self.phis[delay - 1]
    }

    pub fn dim(&self) -> usize {
        self.states + self.max_delay * self.inputs
    }

    /// Builds `ξ[0] = [x0; u_hist]`, where `u_hist` lists `u[−1], u[−2], …`
    /// (missing entries are zero).
    pub fn initial_state(&self, x0: &[f64], u_hist: &[Vec<f64>]) -> Vec<f64> {
        let mut xi = vec![0.0; self.dim()];
        xi[..self.states].copy_from_slice(x0);
        for (slot, u) in u_hist.iter().take(self.max_delay).enumerate() {
            let at = self.states + slot * self.inputs;
            xi[at..at + self.inputs].copy_from_slice(u);
        }
        xi
    }
}

/// Delay-augmented closed-loop matrices `φ_1 … φ_p̂` for gain `f` (`m × (n+m)`).
pub fn build_phis(
    plant: &PlantDT,
    f: &Matrix,
    max_delay: usize,
) -> Result<AugmentedClosedLoop, StabilityError> {
    let (n, m) = (plant.states(), plant.inputs());
    if f.shape() != (m, n + m) {
        return Err(StabilityError::Dimension(format!(
            "gain is {:?}, expected ({m}, {})",
            f.shape(),
            n + m
        )));
    }
    if max_delay == 0 {
        return Err(StabilityError::Dimension("maximum delay must be at least 1".into()));
    }
    let dim = n + max_delay * m;
    let id = Matrix::identity(m);

    // Rows shared by every φ_p: the fresh command −F·[x; u[k−1]] and the shift.
    let mut common = Matrix::zeros(dim, dim);
    common.set_block(0, 0, &plant.a);
    common.set_block(n, 0, &(-&f.block(0, 0, m, n)));
    common.set_block(n, n, &(-&f.block(0, n, m, m)));
    for slot in 1..max_delay {
        common.set_block(n + slot * m, n + (slot - 1) * m, &id);
    }

    let phis = (1..=max_delay)
        .map(|p| {
            let mut phi = common.clone();
            phi.set_block(0, n + (p - 1) * m, &plant.b);
            phi
        })
        .collect();
    Ok(AugmentedClosedLoop {
        max_delay,
        phis,
        states: n,
        inputs: m,
    })
}

/// `Φ_k` for every start offset `k ∈ [0, N_c)`, each the time-ordered product
/// of one full period of the delay sequence starting at `k`.
pub fn hyperperiod_products(
    acl: &AugmentedClosedLoop,
    delays: &DelaySequence,
) -> Result<Vec<Matrix>, StabilityError> {
    let n_c = delays.jobs_per_hyper_period();
    if n_c == 0 {
        return Err(StabilityError::Empty);
    }
    for (step, &d) in delays.delays.iter().enumerate() {
        if d == 0 || d > acl.max_delay {
            return Err(StabilityError::DelayTooLarge {
                step,
                delay: d,
                max: acl.max_delay,
            });
        }
    }
    let phi = |i: usize| acl.phi(delays.delays[i]);
    let id = Matrix::identity(acl.dim());

    // prefix[k] = φ(k−1)⋯φ(0), suffix[k] = φ(N−1)⋯φ(k), Φ_k = prefix[k]·suffix[k].
    let mut prefix = Vec::with_capacity(n_c + 1);
    prefix.push(id.clone());
    for i in 0..n_c {
        let next = phi(i) * &prefix[i];
        prefix.push(next);
    }
    let mut suffix = vec![id; n_c + 1];
    for k in (0..n_c).rev() {
        suffix[k] = &suffix[k + 1] * phi(k);
    }
    Ok((0..n_c).map(|k| &prefix[k] * &suffix[k]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub max_spectral_radius: f64,
    pub worst_k: usize,
}

/// Asymptotically stable iff `ρ(Φ_k) < 1 − tol_margin` for every `k`.
/// A product that overflowed counts as radius `+∞`.
pub fn check_stability(
    products: &[Matrix],
    tol_margin: f64,
) -> Result<StabilityVerdict, StabilityError> {
    if products.is_empty() {
        return Err(StabilityError::Empty);
    }
    let mut worst = (0, f64::NEG_INFINITY);
    for (k, p) in products.iter().enumerate() {
        let rho = if p.is_finite() {
            spectral_radius(p)?
        } else {
            f64::INFINITY
        };
        if rho > worst.1 {
            worst = (k, rho);
        }
    }
    Ok(StabilityVerdict {
        stable: worst.1 < 1.0 - tol_margin,
        max_spectral_radius: worst.1,
        worst_k: worst.0,
    })
}

/// Convenience wrapper: build, multiply and check.
pub fn verify(
    plant: &PlantDT,
    f: &Matrix,
    delays: &DelaySequence,
    tol_margin: f64,
) -> Result<StabilityVerdict, StabilityError> {
    let acl = build_phis(plant, f, delays.max_delay())?;
    let products = hyperperiod_products(&acl, delays)?;
    check_stability(&products, tol_margin)
}
