//! Eigenvalues of a dense real matrix: balancing, reduction to upper
//! Hessenberg form by stabilized elimination, then Francis double-shift QR.

use num_complex::Complex64;

use super::{Matrix, NumericError};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// 1-based square work array, so the QR sweep reads like the classic
/// EISPACK-style recurrences it follows.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    fn new(m: &Matrix) -> Self {
        let n = m.rows();
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m[(i, j)];
            }
        }
        Self { n, a }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.a[i * (n + 1) + j] = v;
    }

    #[inline]
    fn sub(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.a[i * (n + 1) + j] -= v;
    }

    fn swap(&mut self, (i1, j1): (usize, usize), (i2, j2): (usize, usize)) {
        let n = self.n;
        self.a.swap(i1 * (n + 1) + j1, i2 * (n + 1) + j2);
    }

    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let sqrdx = RADIX * RADIX;
        let n = self.n;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let mut r = 0.0;
                let mut c = 0.0;
                for j in 1..=n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c != 0.0 && r != 0.0 {
                    let mut g = r / RADIX;
                    let mut f = 1.0;
                    let s = c + r;
                    while c < g {
                        f *= RADIX;
                        c *= sqrdx;
                    }
                    g = r * RADIX;
                    while c > g {
                        f /= RADIX;
                        c /= sqrdx;
                    }
                    if (c + r) / f < 0.95 * s {
                        done = false;
                        let g = 1.0 / f;
                        for j in 1..=n {
                            let v = self.at(i, j) * g;
                            self.set(i, j, v);
                        }
                        for j in 1..=n {
                            let v = self.at(j, i) * f;
                            self.set(j, i, v);
                        }
                    }
                }
            }
        }
    }

    fn hessenberg(&mut self) {
        let n = self.n;
        for m in 2..n {
            let mut x: f64 = 0.0;
            let mut i = m;
            for j in m..=n {
                if self.at(j, m - 1).abs() > x.abs() {
                    x = self.at(j, m - 1);
                    i = j;
                }
            }
            if i != m {
                for j in m - 1..=n {
                    self.swap((i, j), (m, j));
                }
                for j in 1..=n {
                    self.swap((j, i), (j, m));
                }
            }
            if x != 0.0 {
                for i in m + 1..=n {
                    let mut y = self.at(i, m - 1);
                    if y != 0.0 {
                        y /= x;
                        self.set(i, m - 1, y);
                        for j in m..=n {
                            let v = y * self.at(m, j);
                            self.sub(i, j, v);
                        }
                        for j in 1..=n {
                            let v = y * self.at(j, i);
                            self.sub(j, m, -v);
                        }
                    }
                }
            }
        }
        // Drop the elimination multipliers stored below the subdiagonal.
        for i in 1..=n {
            for j in 1..i.saturating_sub(1) {
                self.set(i, j, 0.0);
            }
        }
    }

    fn hqr(&mut self) -> Result<Vec<Complex64>, NumericError> {
        let n = self.n;
        let eps = f64::EPSILON;
        let mut wr = vec![0.0; n + 1];
        let mut wi = vec![0.0; n + 1];

        let mut anorm = 0.0;
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += self.at(i, j).abs();
            }
        }

        let mut nn = n;
        let mut t = 0.0;
        while nn >= 1 {
            let mut its = 0;
            loop {
                let mut l = nn;
                while l >= 2 {
                    let mut s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    // The absolute floor lets blocks far below the matrix
                    // norm deflate; they cannot move the dominant spectrum.
                    let sub = self.at(l, l - 1).abs();
                    if sub <= eps * s || sub <= eps * eps * anorm {
                        self.set(l, l - 1, 0.0);
                        break;
                    }
                    l -= 1;
                }
                let mut x = self.at(nn, nn);
                if l == nn {
                    wr[nn] = x + t;
                    wi[nn] = 0.0;
                    nn -= 1;
                    break;
                }
                let mut y = self.at(nn - 1, nn - 1);
                let mut w = self.at(nn, nn - 1) * self.at(nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn = nn.saturating_sub(2);
                    break;
                }
                if its == MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(NumericError::NoConvergence(format!(
                        "QR iteration stalled on eigenvalue {nn} of {n} after {its} sweeps \
                         (subdiagonal {:e})",
                        self.at(nn, nn - 1)
                    )));
                }
                if its == 10 || its == 20 || its == 40 {
                    // Exceptional shift.
                    t += x;
                    for i in 1..=nn {
                        self.sub(i, i, x);
                    }
                    let s = self.at(nn, nn - 1).abs() + self.at(nn - 1, nn - 2).abs();
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                its += 1;

                let mut m = nn - 2;
                let (mut p, mut q, mut r, mut z);
                loop {
                    z = self.at(m, m);
                    r = x - z;
                    let s = y - z;
                    p = (r * s - w) / self.at(m + 1, m) + self.at(m, m + 1);
                    q = self.at(m + 1, m + 1) - z - r - s;
                    r = self.at(m + 2, m + 1);
                    let s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    let u = self.at(m, m - 1).abs() * (q.abs() + r.abs());
                    let v = p.abs()
                        * (self.at(m - 1, m - 1).abs() + z.abs() + self.at(m + 1, m + 1).abs());
                    if u <= eps * v {
                        break;
                    }
                    m -= 1;
                }
                for i in m + 2..=nn {
                    self.set(i, i - 2, 0.0);
                    if i != m + 2 {
                        self.set(i, i - 3, 0.0);
                    }
                }
                let mut k = m;
                while k < nn {
                    if k != m {
                        p = self.at(k, k - 1);
                        q = self.at(k + 1, k - 1);
                        r = 0.0;
                        if k != nn - 1 {
                            r = self.at(k + 2, k - 1);
                        }
                        x = p.abs() + q.abs() + r.abs();
                        if x != 0.0 {
                            p /= x;
                            q /= x;
                            r /= x;
                        }
                    }
                    let s = (p * p + q * q + r * r).sqrt().copysign(p);
                    if s != 0.0 {
                        if k == m {
                            if l != m {
                                let v = -self.at(k, k - 1);
                                self.set(k, k - 1, v);
                            }
                        } else {
                            self.set(k, k - 1, -s * x);
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for j in k..=nn {
                            p = self.at(k, j) + q * self.at(k + 1, j);
                            if k != nn - 1 {
                                p += r * self.at(k + 2, j);
                                self.sub(k + 2, j, p * z);
                            }
                            self.sub(k + 1, j, p * y);
                            self.sub(k, j, p * x);
                        }
                        let mmin = nn.min(k + 3);
                        for i in l..=mmin {
                            p = x * self.at(i, k) + y * self.at(i, k + 1);
                            if k != nn - 1 {
                                p += z * self.at(i, k + 2);
                                self.sub(i, k + 2, p * r);
                            }
                            self.sub(i, k + 1, p * q);
                            self.sub(i, k, p);
                        }
                    }
                    k += 1;
                }
                if l + 1 >= nn {
                    break;
                }
            }
        }
        Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
    }
}

/// All eigenvalues of `m`, with multiplicity. Complex eigenvalues come in
/// conjugate pairs.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>, NumericError> {
    if !m.is_square() {
        return Err(NumericError::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(NumericError::Domain(
            "eigenvalues of a non-finite matrix".into(),
        ));
    }
    match m.rows() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex64::new(m[(0, 0)], 0.0)]),
        _ => {
            // Power-of-two rescaling is exact and keeps products of many
            // contractions or expansions away from underflow and overflow.
            let exp = m.max_abs().log2().floor().clamp(-1000.0, 1000.0);
            if m.max_abs() == 0.0 {
                return Ok(vec![Complex64::new(0.0, 0.0); m.rows()]);
            }
            let (down, up) = (2f64.powi(-exp as i32), 2f64.powi(exp as i32));
            let mut w = Work::new(&m.scale(down));
            w.balance();
            w.hessenberg();
            Ok(w.hqr()?.into_iter().map(|z| z * up).collect())
        }
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64, NumericError> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}
