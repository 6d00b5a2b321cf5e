//! Small shared numerical kernels: a banded SPD Cholesky solver for the
//! time stepper, Hermitian eigenvalue helpers, sampled-series quadrature and
//! least-squares line fits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Symmetric positive-definite banded matrix stored by diagonals.
///
/// `diag[d][i]` holds entry `(i, i + d)` for `d = 0..=bandwidth`. Built for
/// the interleaved finite-element ordering, where the half-bandwidth is 3.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    pub n: usize,
    pub bandwidth: usize,
    diags: Vec<Vec<f64>>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let diags = (0..=bandwidth).map(|d| vec![0.0; n - d.min(n)]).collect();
        Self {
            n,
            bandwidth,
            diags,
        }
    }

    /// Add `v` to entry `(i, j)`; only the upper triangle within the band is
    /// stored, so `(i, j)` and `(j, i)` address the same slot.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let d = c - r;
        assert!(d <= self.bandwidth, "entry ({i}, {j}) outside the band");
        self.diags[d][r] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let d = c - r;
        if d > self.bandwidth {
            0.0
        } else {
            self.diags[d][r]
        }
    }

    /// y = self * x, exploiting symmetry.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = self.diags[0][i] * x[i];
            for d in 1..=self.bandwidth {
                if i + d < self.n {
                    acc += self.diags[d][i] * x[i + d];
                }
                if i >= d {
                    acc += self.diags[d][i - d] * x[i - d];
                }
            }
            y[i] = acc;
        }
        y
    }

    /// x^T self x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// In-place banded Cholesky factorization, `self = L L^T`.
    /// Fails on a nonpositive pivot.
    pub fn cholesky(mut self) -> Option<BandedCholesky> {
        let bw = self.bandwidth;
        for j in 0..self.n {
            let mut d = self.diags[0][j];
            let lo = j.saturating_sub(bw);
            for k in lo..j {
                let l = self.diags[j - k][k];
                d -= l * l;
            }
            if d <= 0.0 {
                return None;
            }
            let d = d.sqrt();
            self.diags[0][j] = d;
            let hi = (j + bw).min(self.n - 1);
            for i in j + 1..=hi {
                let mut s = self.diags[i - j][j];
                let lo2 = i.saturating_sub(bw);
                for k in lo2..j {
                    s -= self.diags[i - k][k] * self.diags[j - k][k];
                }
                self.diags[i - j][j] = s / d;
            }
        }
        Some(BandedCholesky {
            n: self.n,
            bandwidth: bw,
            diags: self.diags,
        })
    }
}

/// Factorized form of [`BandedSpd`]; `diags[d][j]` holds `L(j + d, j)`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    diags: Vec<Vec<f64>>,
}

impl BandedCholesky {
    /// Solve `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let bw = self.bandwidth;
        let mut x = b.to_vec();
        // forward: L y = b
        for j in 0..self.n {
            let lo = j.saturating_sub(bw);
            let mut s = x[j];
            for k in lo..j {
                s -= self.diags[j - k][k] * x[k];
            }
            x[j] = s / self.diags[0][j];
        }
        // backward: L^T x = y
        for j in (0..self.n).rev() {
            let hi = (j + bw).min(self.n - 1);
            let mut s = x[j];
            for i in j + 1..=hi {
                s -= self.diags[i - j][j] * x[i];
            }
            x[j] = s / self.diags[0][j];
        }
        x
    }
}

/// Overflow-safe `r / z` for real `r`: the naive complex division squares
/// `|z|`, which overflows once `|z|` passes about 1e154 even when the
/// quotient is tiny. Scaling by the larger component first avoids that.
pub fn div_real_by_complex(r: f64, z: Complex64) -> Complex64 {
    let t = z.re.abs().max(z.im.abs());
    if t == 0.0 {
        return Complex64::new(r / 0.0, 0.0);
    }
    let cn = z.re / t;
    let dn = z.im / t;
    let denom = cn * cn + dn * dn;
    let rt = r / t;
    Complex64::new(rt * cn / denom, -rt * dn / denom)
}

/// Eigenvalue range `(min, max)` of a Hermitian matrix, computed through the
/// real symmetric embedding `[[Re, -Im], [Im, Re]]` (eigenvalues appear with
/// doubled multiplicity; the extremes are unchanged).
pub fn hermitian_eig_range(a: &DMatrix<Complex64>) -> (f64, f64) {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            m[(i, j)] = z.re;
            m[(i + n, j + n)] = z.re;
            m[(i, j + n)] = -z.im;
            m[(i + n, j)] = z.im;
        }
    }
    // symmetrize away roundoff
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Solve the Hermitian positive-definite system `A x = b` by Cholesky with
/// one step of iterative refinement. Returns the solution and the relative
/// residual `|A x - b| / |b|`.
pub fn hermitian_solve(
    a: &DMatrix<Complex64>,
    b: &DVector<Complex64>,
) -> Option<(DVector<Complex64>, f64)> {
    let chol = a.clone().cholesky()?;
    let mut x = chol.solve(b);
    let r = b - a * &x;
    x += chol.solve(&r);
    let res = (b - a * &x).norm() / b.norm().max(f64::MIN_POSITIVE);
    Some((x, res))
}

/// Composite Simpson rule over uniformly sampled values (odd sample count
/// preferred; a trapezoid patch covers a trailing even interval).
pub fn simpson_sampled(values: &[Complex64], h: f64) -> Complex64 {
    let n = values.len();
    assert!(n >= 3, "need at least 3 samples");
    let m = if n % 2 == 1 { n } else { n - 1 };
    let mut acc = values[0] + values[m - 1];
    for (j, &v) in values.iter().enumerate().take(m - 1).skip(1) {
        acc += v * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    let mut out = acc * (h / 3.0);
    if n.is_multiple_of(2) {
        out += (values[n - 2] + values[n - 1]) * (h / 2.0);
    }
    out
}

/// Least-squares slope and intercept of `y` against `x`, plus the RMS
/// residual of the fit.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let e = b - (slope * a + intercept);
        ss += e * e;
    }
    (slope, intercept, (ss / n).sqrt())
}
