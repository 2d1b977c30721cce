//! Discrete algebraic Riccati equation and the infinite-horizon LQR gain.
//!
//! The stabilizing solution of
//!
//! ```text
//! P = AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q
//! ```
//!
//! is computed with the structure-preserving doubling algorithm when `R` is
//! invertible. If doubling is unavailable or misses the residual contract the
//! plain Riccati recursion from `P₀ = Q` is used instead.

use super::{Matrix, NumericError};

/// Convergence threshold on successive iterates, relative to `1 + ‖P‖`.
pub const DARE_TOLERANCE: f64 = 1e-12;
/// Iteration cap for the Riccati recursion.
pub const DARE_MAX_ITERATIONS: usize = 100_000;
/// Accepted residual, relative to `1 + ‖P‖`.
pub const DARE_RESIDUAL_BOUND: f64 = 1e-9;

const DOUBLING_MAX_ITERATIONS: usize = 200;

fn check_shapes(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(), NumericError> {
    let n = a.rows();
    let m = b.cols();
    let ok = a.is_square()
        && b.rows() == n
        && q.shape() == (n, n)
        && r.shape() == (m, m);
    if !ok {
        return Err(NumericError::Dimension(format!(
            "DARE shapes A {:?}, B {:?}, Q {:?}, R {:?} are inconsistent",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    for (name, mat) in [("A", a), ("B", b), ("Q", q), ("R", r)] {
        if !mat.is_finite() {
            return Err(NumericError::Domain(format!("{name} has non-finite entries")));
        }
    }
    Ok(())
}

/// Right-hand side of the Riccati equation evaluated at `p`.
pub fn riccati_map(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    p: &Matrix,
) -> Result<Matrix, NumericError> {
    let at = a.transpose();
    let pa = p * a;
    let pb = p * b;
    let s = r + &(&b.transpose() * &pb);
    let k = s.solve(&(&b.transpose() * &pa))?;
    let next = &(&(&at * &pa) - &(&(&at * &pb) * &k)) + q;
    Ok(next.symmetrize())
}

/// `‖P − Ric(P)‖_F`.
pub fn dare_residual(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    p: &Matrix,
) -> Result<f64, NumericError> {
    Ok((p - &riccati_map(a, b, q, r, p)?).norm_fro())
}

fn residual_ok(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> bool {
    matches!(dare_residual(a, b, q, r, p), Ok(res) if res <= DARE_RESIDUAL_BOUND * (1.0 + p.norm_fro()))
}

fn solve_doubling(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, NumericError> {
    let n = a.rows();
    let id = Matrix::identity(n);
    let mut ak = a.clone();
    let mut gk = &(b * &r.inverse()?) * &b.transpose();
    let mut hk = q.clone();
    for _ in 0..DOUBLING_MAX_ITERATIONS {
        let w = (&id + &(&gk * &hk)).lu()?;
        let w_a = w.solve(&ak)?;
        let w_g = w.solve(&gk)?;
        let a_next = &ak * &w_a;
        let g_next = (&gk + &(&(&ak * &w_g) * &ak.transpose())).symmetrize();
        let h_next = (&hk + &(&(&ak.transpose() * &hk) * &w_a)).symmetrize();
        if !h_next.is_finite() {
            return Err(NumericError::NoConvergence(
                "doubling iterates overflowed".into(),
            ));
        }
        let delta = (&h_next - &hk).norm_fro();
        let done = delta <= DARE_TOLERANCE * (1.0 + h_next.norm_fro());
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if done {
            return Ok(hk);
        }
    }
    Err(NumericError::NoConvergence(format!(
        "doubling did not converge in {DOUBLING_MAX_ITERATIONS} steps"
    )))
}

/// Riccati recursion `P ← Ric(P)` from `P₀ = Q`.
pub fn solve_dare_recursion(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
) -> Result<Matrix, NumericError> {
    check_shapes(a, b, q, r)?;
    let mut p = q.symmetrize();
    for _ in 0..DARE_MAX_ITERATIONS {
        let next = riccati_map(a, b, q, r, &p)?;
        if !next.is_finite() {
            return Err(NumericError::NoConvergence(
                "Riccati recursion diverged".into(),
            ));
        }
        let delta = (&next - &p).norm_fro();
        p = next;
        if delta <= DARE_TOLERANCE * (1.0 + p.norm_fro()) {
            return Ok(p);
        }
    }
    Err(NumericError::NoConvergence(format!(
        "Riccati recursion did not converge in {DARE_MAX_ITERATIONS} iterations"
    )))
}

/// Stabilizing solution of the DARE.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, NumericError> {
    check_shapes(a, b, q, r)?;
    if let Ok(p) = solve_doubling(a, b, q, r) {
        if residual_ok(a, b, q, r, &p) {
            return Ok(p);
        }
    }
    let p = solve_dare_recursion(a, b, q, r)?;
    let res = dare_residual(a, b, q, r, &p)?;
    if res > DARE_RESIDUAL_BOUND * (1.0 + p.norm_fro()) {
        return Err(NumericError::NoConvergence(format!(
            "DARE residual {res:e} exceeds bound"
        )));
    }
    Ok(p)
}

/// LQR state-feedback gain `F = (R + BᵀPB)⁻¹ BᵀPA`, for the control law `u = −F x`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, NumericError> {
    let p = solve_dare(a, b, q, r)?;
    gain_from_riccati(a, b, r, &p)
}

pub fn gain_from_riccati(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix, NumericError> {
    let bt_p = &b.transpose() * p;
    let s = r + &(&bt_p * b);
    s.solve(&(&bt_p * a))
}
