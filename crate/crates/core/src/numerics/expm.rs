//! Matrix exponential by scaling and squaring around a degree-13 Padé
//! approximant (Higham, 2005).

use super::{Matrix, NumericError};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the unscaled [13/13] approximant is accurate to
/// double precision.
const THETA_13: f64 = 5.371920351148152;

/// Computes `e^M`.
pub fn mat_exp(m: &Matrix) -> Result<Matrix, NumericError> {
    if !m.is_square() {
        return Err(NumericError::Dimension(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(NumericError::Domain(
            "matrix exponential of a non-finite matrix".into(),
        ));
    }
    let n = m.rows();
    let norm = m.norm_1();
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale(0.5f64.powi(squarings));

    let id = Matrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> Matrix {
        let mut acc = a6.scale(c6);
        acc = &acc + &a4.scale(c4);
        acc = &acc + &a2.scale(c2);
        &acc + &id.scale(c0)
    };

    let u_inner = &(&a6 * &lin(b[13], b[11], b[9], 0.0)) + &lin(b[7], b[5], b[3], b[1]);
    let u = &a * &u_inner;
    let v = &(&a6 * &lin(b[12], b[10], b[8], 0.0)) + &lin(b[6], b[4], b[2], b[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.solve(&p)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}
