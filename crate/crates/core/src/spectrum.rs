//! Damped and conservative spectra of the beam.
//!
//! The damped eigenvalues are the zeros of a 2x2 characteristic determinant
//! built from the quartic dispersion roots and the closed-form diffusive
//! integral; they are located by Newton iteration seeded with asymptotic
//! expansions. The conservative spectrum (clamped control configuration,
//! `phi(0) = phi(1) = 0`, `psi_x(0) = psi_x(1) = 0`) comes in closed form
//! from a quadratic in `mu^2` together with explicit sine/cosine mode shapes.

use crate::fractional::diffusive_integral;
use crate::model::{classify_speeds, resonance_class, ResonanceClass, SpeedTag, SystemParams};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Four dispersion roots, paired as `(r1, -r1, r2, -r2)` with `r1`, `r2`
/// carrying nonnegative real part.
#[derive(Debug, Clone, Copy)]
pub struct QuarticRoots {
    pub r1: Complex64,
    pub r2: Complex64,
    /// Set when the two root pairs collide, `(rho2 k1 - rho1 k2)^2 lambda^2
    /// = 4 rho1 k1^2 k2`; the determinant formula is unreliable there.
    pub degenerate: bool,
}

impl QuarticRoots {
    pub fn all(&self) -> [Complex64; 4] {
        [self.r1, -self.r1, self.r2, -self.r2]
    }
}

fn positive_half(z: Complex64) -> Complex64 {
    if z.re < 0.0 || (z.re == 0.0 && z.im < 0.0) {
        -z
    } else {
        z
    }
}

/// Roots of `Q(r) = r^4 - (rho2/k2 + rho1/k1) lambda^2 r^2
/// + rho1 rho2/(k1 k2) lambda^2 (lambda^2 + k1/rho2)`.
pub fn quartic_roots(lambda: Complex64, p: &SystemParams) -> QuarticRoots {
    if lambda == Complex64::new(0.0, 0.0) {
        return QuarticRoots {
            r1: Complex64::new(0.0, 0.0),
            r2: Complex64::new(0.0, 0.0),
            degenerate: true,
        };
    }
    let s = p.rho2 / p.k2 + p.rho1 / p.k1;
    let dif = p.rho2 / p.k2 - p.rho1 / p.k1;
    let disc = Complex64::new(dif * dif, 0.0) - 4.0 * p.rho1 / (p.k2 * lambda * lambda);
    let sq = disc.sqrt();
    let r1 = positive_half(lambda * ((s + sq) / 2.0).sqrt());
    let r2 = positive_half(lambda * ((s - sq) / 2.0).sqrt());
    let degenerate = {
        let lhs = (p.rho2 * p.k1 - p.rho1 * p.k2).powi(2) * (lambda * lambda).norm();
        let rhs = 4.0 * p.rho1 * p.k1 * p.k1 * p.k2;
        (lhs - rhs).abs() <= 1e-12 * rhs
    };
    QuarticRoots { r1, r2, degenerate }
}

/// Value of the characteristic determinant together with the scale used to
/// normalize its residual.
#[derive(Debug, Clone, Copy)]
pub struct DetValue {
    /// det(M) rescaled by `exp(-|Re r1| - |Re r2|)`; the factor never
    /// vanishes, so the zero set is unchanged.
    pub value: Complex64,
    /// Sum of the magnitudes of the three rescaled terms; dividing by it
    /// yields a scale-free residual.
    pub scale: f64,
}

impl DetValue {
    pub fn relative_residual(&self) -> f64 {
        self.value.norm() / self.scale.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DetError {
    #[error("lambda = 0 is outside the determinant's domain")]
    ZeroLambda,
    #[error("lambda + eta on the closed negative real axis")]
    OutsideDomain,
}

/// Characteristic determinant of the damped system,
/// `det(M) = (f(r1) - f(r2)) R sinh r1 sinh r2
///   + f(r1) g(r2) sinh r1 cosh r2 - f(r2) g(r1) sinh r2 cosh r1`,
/// with `f(r) = r^2 - (rho1/k1) lambda^2`,
/// `g(r) = (r^2 - (rho1/k1 + rho2/k2) lambda^2) r` and
/// `R = -((rho2 lambda^2 + k1)/(k1 k2)) lambda gamma (lambda + eta)^(alpha-1)`.
///
/// Hyperbolic factors are evaluated with `exp(-|Re r|)` pulled out so large
/// `|lambda|` cannot overflow.
pub fn char_determinant(lambda: Complex64, p: &SystemParams) -> Result<DetValue, DetError> {
    if lambda == Complex64::new(0.0, 0.0) {
        return Err(DetError::ZeroLambda);
    }
    let roots = quartic_roots(lambda, p);
    let (r1, r2) = (roots.r1, roots.r2);
    let l2 = lambda * lambda;
    let f1 = r1 * r1 - (p.rho1 / p.k1) * l2;
    let f2 = r2 * r2 - (p.rho1 / p.k1) * l2;
    let sum = p.rho1 / p.k1 + p.rho2 / p.k2;
    let g1 = (r1 * r1 - sum * l2) * r1;
    let g2 = (r2 * r2 - sum * l2) * r2;
    let kernel = diffusive_integral(lambda, p.eta, p.alpha).map_err(|_| DetError::OutsideDomain)?;
    let r_lam = -((p.rho2 * l2 + p.k1) / (p.k1 * p.k2)) * lambda * p.gamma * kernel;

    let (a1, a2) = (r1.re.abs(), r2.re.abs());
    let sh = |r: Complex64, a: f64| ((r - a).exp() - (-r - a).exp()) * 0.5;
    let ch = |r: Complex64, a: f64| ((r - a).exp() + (-r - a).exp()) * 0.5;
    let (s1, c1) = (sh(r1, a1), ch(r1, a1));
    let (s2, c2) = (sh(r2, a2), ch(r2, a2));

    let t1 = (f1 - f2) * r_lam * s1 * s2;
    let t2 = f1 * g2 * s1 * c2;
    let t3 = -(f2 * g1 * s2 * c1);
    Ok(DetValue {
        value: t1 + t2 + t3,
        scale: t1.norm() + t2.norm() + t3.norm(),
    })
}

/// Asymptotic eigenvalue seed with the order of the neglected remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticSeed {
    pub value: Complex64,
    /// Order of the first term the printed expansion drops, as a power of n
    /// (`o(n^remainder_order)` or sharper).
    pub remainder_order: f64,
}

/// Evaluate the damped eigenvalue expansion for the given branch and index.
///
/// Branch labels: equal speeds use 1 and 2 (`lambda_{1,n}` near
/// `i n pi sqrt(k1/rho1)`, `lambda_{2,n}` offset by `i pi/2 sqrt(k1/rho1)`);
/// different speeds use 0 and 1 (`lambda^(0)` near the shifted `k1/rho1`
/// lattice, `lambda^(1)` near the `k2/rho2` lattice). Negative `n` returns
/// the conjugate of the value at `|n|`.
pub fn asymptotic_eigenvalue(branch: u8, n: i32, p: &SystemParams) -> AsymptoticSeed {
    assert!(n != 0, "index n must be nonzero");
    if n < 0 {
        let s = asymptotic_eigenvalue(branch, -n, p);
        return AsymptoticSeed {
            value: s.value.conj(),
            ..s
        };
    }
    let nf = n as f64;
    let speeds = classify_speeds(p);
    match speeds.tag {
        SpeedTag::DifferentSpeeds => {
            let value = match branch {
                0 => {
                    let c = (p.k1 / p.rho1).sqrt();
                    Complex64::new(0.0, nf * PI * c + PI / 2.0 * c)
                }
                1 => {
                    let c = (p.k2 / p.rho2).sqrt();
                    Complex64::new(0.0, nf * PI * c)
                }
                _ => panic!("different-speed branches are 0 and 1"),
            };
            AsymptoticSeed {
                value,
                remainder_order: 0.0,
            }
        }
        SpeedTag::EqualSpeeds => {
            assert!(
                branch == 1 || branch == 2,
                "equal-speed branches are 1 and 2"
            );
            equal_speed_seed(branch, nf, p)
        }
    }
}

fn equal_speed_seed(branch: u8, n: f64, p: &SystemParams) -> AsymptoticSeed {
    let s = (p.k1 / p.rho1).sqrt();
    let alpha = p.alpha;
    let half_shift = Complex64::new(0.0, PI * s / 2.0);
    let lead = Complex64::new(0.0, n * PI * s);
    // Complex damping factor (-sin(pi a / 2) + i cos(pi a / 2)).
    let phase = Complex64::new(-(PI * alpha / 2.0).sin(), (PI * alpha / 2.0).cos());
    let k_ratio_sqrt = (p.k1 / p.k2).sqrt();
    let denom_pow = (p.rho1.powf(1.0 + alpha) * p.k1.powf(1.0 - alpha)).sqrt();
    let order1 =
        |weight: f64| phase * (p.gamma * weight / (2.0 * denom_pow * (n * PI).powf(1.0 - alpha)));
    // Fifth-order damping term of the resonant branches:
    // gamma sqrt(k1^{5+alpha}) (i cos - sin) / (256 k2^3 sqrt(rho1^{1+alpha}) pi^{5-a} n^{5-a}).
    let deep_term = phase * (p.gamma * p.k1.powf((5.0 + alpha) / 2.0))
        / (256.0
            * p.k2.powi(3)
            * p.rho1.powf((1.0 + alpha) / 2.0)
            * PI.powf(5.0 - alpha)
            * n.powf(5.0 - alpha));
    let kk = p.k1 / p.k2;
    match resonance_class(p) {
        ResonanceClass::NonResonant => {
            let w = 1.0 - k_ratio_sqrt.cos();
            let value = if branch == 1 {
                lead + order1(w)
            } else {
                lead + half_shift + order1(1.0 + k_ratio_sqrt.cos())
            };
            AsymptoticSeed {
                value,
                remainder_order: alpha - 1.0,
            }
        }
        ResonanceClass::EvenResonant(_) => {
            if branch == 1 {
                let value = lead
                    + Complex64::new(0.0, kk * s / (8.0 * n * PI))
                    + Complex64::new(0.0, -kk * kk * s / (128.0 * PI.powi(3) * n.powi(3)))
                    + deep_term;
                AsymptoticSeed {
                    value,
                    remainder_order: -5.0,
                }
            } else {
                let value = lead + half_shift + 2.0 * order1(1.0);
                AsymptoticSeed {
                    value,
                    remainder_order: alpha - 1.0,
                }
            }
        }
        ResonanceClass::OddResonant(_) => {
            if branch == 1 {
                let value = lead + 2.0 * order1(1.0);
                AsymptoticSeed {
                    value,
                    remainder_order: alpha - 1.0,
                }
            } else {
                let value = lead
                    + half_shift
                    + Complex64::new(0.0, kk * s / (8.0 * n * PI))
                    + Complex64::new(0.0, -kk * s / (16.0 * PI * n.powi(2)))
                    + Complex64::new(
                        0.0,
                        kk * s * (4.0 * PI * PI - kk) / (128.0 * PI.powi(3) * n.powi(3)),
                    )
                    + Complex64::new(
                        0.0,
                        -kk * s * (4.0 * PI * PI - 3.0 * kk) / (256.0 * PI.powi(3) * n.powi(4)),
                    )
                    + deep_term;
                AsymptoticSeed {
                    value,
                    remainder_order: -5.0,
                }
            }
        }
    }
}

/// Eigenvalue kind tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    Damped,
    Conservative,
}

/// One located damped eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct EigenMode {
    pub branch: u8,
    pub n: i32,
    pub lambda: Complex64,
    /// First-order root displacement `|det/det'| / (1 + |lambda|)` at the
    /// accepted iterate; a scale-free measure of how well the determinant
    /// vanishes.
    pub residual: f64,
    /// Asymptotic seed the search started from.
    pub seed: Complex64,
    pub kind: ModeKind,
}

/// Per-index search failure.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SolveFailure {
    #[error("Newton did not converge at branch {branch}, n = {n}")]
    NonConvergence { branch: u8, n: i32 },
    #[error("root left the seed basin at branch {branch}, n = {n}")]
    BasinEscape { branch: u8, n: i32 },
}

/// Output of [`find_eigenvalues`]; failures are reported, never dropped.
#[derive(Debug, Clone, Default)]
pub struct SpectrumResult {
    pub modes: Vec<EigenMode>,
    pub failures: Vec<SolveFailure>,
}

fn branches_for(p: &SystemParams) -> [u8; 2] {
    match classify_speeds(p).tag {
        SpeedTag::EqualSpeeds => [1, 2],
        SpeedTag::DifferentSpeeds => [0, 1],
    }
}

/// Half the distance from this seed to its nearest neighboring seed, used as
/// the Newton basin guard.
fn basin_radius(branch: u8, n: i32, p: &SystemParams) -> f64 {
    let me = asymptotic_eigenvalue(branch, n, p).value;
    let mut best = f64::INFINITY;
    for b in branches_for(p) {
        for dn in -1i32..=1 {
            let m = n + dn;
            if m == 0 || (b == branch && m == n) {
                continue;
            }
            let other = asymptotic_eigenvalue(b, m, p).value;
            best = best.min((me - other).norm());
        }
        if b != branch {
            let other = asymptotic_eigenvalue(b, n, p).value;
            best = best.min((me - other).norm());
        }
    }
    best / 2.0
}

/// Locate damped eigenvalues by damped Newton iteration on the
/// characteristic determinant, one search per `(branch, n)` with `n` over
/// `n_range` (zero skipped) and the regime's two branches.
///
/// A root must satisfy `residual <= tol` and stay within half the local
/// seed gap; anything else is reported in `failures`.
pub fn find_eigenvalues(
    p: &SystemParams,
    n_range: std::ops::RangeInclusive<i32>,
    tol: f64,
) -> SpectrumResult {
    assert!(tol > 0.0);
    let mut out = SpectrumResult::default();
    for branch in branches_for(p) {
        for n in n_range.clone() {
            if n == 0 {
                continue;
            }
            match newton_root(branch, n, p, tol) {
                Ok(mode) => out.modes.push(mode),
                Err(f) => out.failures.push(f),
            }
        }
    }
    out.modes.sort_by_key(|a| (a.branch, a.n));
    out
}

fn newton_root(branch: u8, n: i32, p: &SystemParams, tol: f64) -> Result<EigenMode, SolveFailure> {
    let seed = asymptotic_eigenvalue(branch, n, p).value;
    let guard = basin_radius(branch, n, p);
    let eval = |z: Complex64| char_determinant(z, p);
    let mut z = seed;
    let mut best = z;
    let mut best_res = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..120 {
        let v = eval(z).map_err(|_| SolveFailure::NonConvergence { branch, n })?;
        // central-difference derivative; the determinant is analytic so the
        // O(h^2) error is far below Newton's own increments
        let h = 1e-6 * z.norm().max(1.0);
        let fp = eval(z + Complex64::new(h, 0.0))
            .map_err(|_| SolveFailure::NonConvergence { branch, n })?;
        let fm = eval(z - Complex64::new(h, 0.0))
            .map_err(|_| SolveFailure::NonConvergence { branch, n })?;
        let deriv = (fp.value - fm.value) / (2.0 * h);
        if deriv.norm() == 0.0 {
            return Err(SolveFailure::NonConvergence { branch, n });
        }
        // first-order root displacement |det/det'| relative to |lambda|:
        // the raw |det| carries an arbitrary lambda-dependent scale, this
        // does not (and it degrades, correctly, near double roots)
        let res = (v.value / deriv).norm() / (1.0 + z.norm());
        if res < best_res {
            best_res = res;
            best = z;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 4 && best_res <= tol {
                break;
            }
        }
        let mut step = v.value / deriv;
        // keep every iterate inside the basin guard
        let max_step = 0.45 * guard;
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        z -= step;
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(SolveFailure::NonConvergence { branch, n });
        }
        if step.norm() <= 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    if best_res > tol {
        return Err(SolveFailure::NonConvergence { branch, n });
    }
    if (best - seed).norm() > guard {
        return Err(SolveFailure::BasinEscape { branch, n });
    }
    // gamma = 0 turns the generator skew-adjoint: the true root is purely
    // imaginary, so the round-off real residue is projected away
    let (kind, lambda) = if p.gamma == 0.0 {
        (ModeKind::Conservative, Complex64::new(0.0, best.im))
    } else {
        (ModeKind::Damped, best)
    };
    Ok(EigenMode {
        branch,
        n,
        lambda,
        residual: best_res,
        seed,
        kind,
    })
}

/// Branch label of the conservative spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// Larger `mu^2` root.
    One = 1,
    /// Smaller `mu^2` root.
    Two = 2,
}

impl Branch {
    pub fn index(&self) -> u8 {
        *self as u8
    }
}

/// One conservative eigenpair: `lambda = i mu`, shapes
/// `phi = C sin(n pi x)`, `psi = D cos(n pi x)`.
#[derive(Debug, Clone, Copy)]
pub struct ConservativeMode {
    pub branch: Branch,
    pub n: i32,
    pub mu_squared: f64,
    pub lambda: Complex64,
    pub c_amp: f64,
    pub d_amp: f64,
    /// `phi_x(1) + psi(1)` for this mode.
    pub trace_coeff: f64,
}

/// Both `mu^2` roots of
/// `mu^4 - ((k1/rho1 + k2/rho2)(n pi)^2 + k1/rho2) mu^2
///  + k1 k2/(rho1 rho2) (n pi)^4 = 0`
/// for the given index, via the cancellation-free quadratic formula.
/// Returns `(mu1^2, mu2^2)` with `mu1^2 >= mu2^2`.
pub fn conservative_mu_squared(n: i32, p: &SystemParams) -> (f64, f64) {
    let npi2 = (n as f64 * PI) * (n as f64 * PI);
    let b = (p.k1 / p.rho1 + p.k2 / p.rho2) * npi2 + p.k1 / p.rho2;
    let c = (p.k1 * p.k2 / (p.rho1 * p.rho2)) * npi2 * npi2;
    let disc = b * b - 4.0 * c;
    debug_assert!(disc > 0.0, "discriminant is positive for all n != 0");
    let q = (b + disc.sqrt()) / 2.0;
    (q, c / q)
}

/// Closed-form conservative spectrum over the symmetric index range.
///
/// For `n < 0` the eigenvalue is the conjugate of the one at `|n|`
/// (`mu_{j,-n} = -mu_{j,n}`), with amplitudes evaluated by the same formulas
/// at the signed index. Assumes condition (A1) holds over the scanned range
/// so that the sine/cosine ansatz spans every eigenfunction.
pub fn conservative_spectrum(
    p: &SystemParams,
    n_range: std::ops::RangeInclusive<i32>,
) -> Vec<ConservativeMode> {
    let mut out = Vec::new();
    for n in n_range {
        if n == 0 {
            continue;
        }
        let (m1, m2) = conservative_mu_squared(n, p);
        for (branch, mu2) in [(Branch::One, m1), (Branch::Two, m2)] {
            out.push(build_mode(branch, n, mu2, p));
        }
    }
    out
}

fn build_mode(branch: Branch, n: i32, mu2: f64, p: &SystemParams) -> ConservativeMode {
    let npi = n as f64 * PI;
    let mu = (n as f64).signum() * mu2.sqrt();
    let (c_amp, d_amp) = match branch {
        Branch::One => {
            let c = 1.0 / npi;
            let d = c * ((p.rho1 / p.k1) * mu2 - npi * npi) / npi;
            (c, d)
        }
        Branch::Two => {
            let d = 1.0 / npi;
            let c = npi * d / ((p.rho1 / p.k1) * mu2 - npi * npi);
            (c, d)
        }
    };
    let mut m = ConservativeMode {
        branch,
        n,
        mu_squared: mu2,
        lambda: Complex64::new(0.0, mu),
        c_amp,
        d_amp,
        trace_coeff: 0.0,
    };
    m.trace_coeff = boundary_trace_coeff(&m);
    m
}

/// Boundary observation coefficient `phi_x(1) + psi(1)
/// = C n pi cos(n pi) + D cos(n pi)`.
pub fn boundary_trace_coeff(m: &ConservativeMode) -> f64 {
    let npi = m.n as f64 * PI;
    let cosn = if m.n % 2 == 0 { 1.0 } else { -1.0 };
    m.c_amp * npi * cosn + m.d_amp * cosn
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(gamma: f64) -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 1.0, gamma, 1.0, 0.5).unwrap()
    }

    /// Durand-Kerner roots of a monic complex polynomial, the independent
    /// oracle for root computations.
    fn durand_kerner(coeffs: &[Complex64]) -> Vec<Complex64> {
        let deg = coeffs.len() - 1;
        let eval = |z: Complex64| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &c in coeffs {
                acc = acc * z + c;
            }
            acc
        };
        let mut roots: Vec<Complex64> = (0..deg)
            .map(|k| Complex64::new(0.4, 0.9).powu(k as u32 + 1))
            .collect();
        for _ in 0..500 {
            let mut moved = 0.0_f64;
            for i in 0..deg {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..deg {
                    if i != j {
                        denom *= roots[i] - roots[j];
                    }
                }
                let delta = eval(roots[i]) / denom;
                roots[i] -= delta;
                moved = moved.max(delta.norm());
            }
            if moved < 1e-14 {
                break;
            }
        }
        roots
    }

    #[test]
    fn quartic_all_params_one() {
        // params 1, lambda = 1: Q(r) = r^4 - 2 r^2 + 2, roots r^2 = 1 +- i.
        let p = unit(1.0);
        let r = quartic_roots(Complex64::new(1.0, 0.0), &p);
        let sq = [r.r1 * r.r1, r.r2 * r.r2];
        let mut expect = [Complex64::new(1.0, 1.0), Complex64::new(1.0, -1.0)];
        expect.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        let mut got = sq;
        got.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        for (g, e) in got.iter().zip(expect.iter()) {
            assert!((g - e).norm() < 1e-12, "{g} vs {e}");
        }
        // cross-check against Durand-Kerner on the quartic itself
        let coeffs = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(2.0, 0.0),
        ];
        let mut oracle = durand_kerner(&coeffs);
        let mut mine: Vec<Complex64> = r.all().to_vec();
        let key = |z: &Complex64| (z.re * 1e6 + z.im, z.im);
        oracle.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        mine.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in mine.iter().zip(oracle.iter()) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn quartic_zero_lambda_degenerate() {
        let p = unit(1.0);
        let r = quartic_roots(Complex64::new(0.0, 0.0), &p);
        assert!(r.degenerate);
        assert_eq!(r.r1, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn quartic_equal_speed_sum_rule() {
        // equal speeds, lambda = 50i: r1 + r2 = 2 lambda sqrt(rho1/k1) + O(1/lambda)
        let p = unit(1.0);
        let lam = Complex64::new(0.0, 50.0);
        let r = quartic_roots(lam, &p);
        let sum = r.r1 + r.r2;
        let target = 2.0 * lam; // sqrt(rho1/k1) = 1
        assert!((sum - target).norm() < 0.5 / 50.0, "{sum} vs {target}");
    }

    #[test]
    fn det_conjugate_symmetry() {
        let p = unit(1.0);
        for &(re, im) in &[(-0.05, 10.0), (-0.01, 33.3), (-0.2, 7.7)] {
            let lam = Complex64::new(re, im);
            let a = char_determinant(lam, &p).unwrap().value;
            let b = char_determinant(lam.conj(), &p).unwrap().value;
            assert!((a.conj() - b).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn det_small_at_seeds_and_shrinking() {
        // |det| at the asymptotic seeds decreases along n (trend oracle).
        let p = unit(1.0);
        let mut res: Vec<f64> = Vec::new();
        for n in (10..=60).step_by(10) {
            let seed = asymptotic_eigenvalue(1, n, &p).value;
            res.push(char_determinant(seed, &p).unwrap().relative_residual());
        }
        for w in res.windows(2) {
            assert!(w[1] < w[0] * 1.5, "no growth along seeds: {res:?}");
        }
        assert!(res.last().unwrap() < &2e-3);
    }

    #[test]
    fn gamma_zero_free_spectrum_vs_conservative() {
        // With gamma = 0 the damped boundary condition turns into a free
        // shear end, which is NOT the clamped conservative configuration:
        // at a conservative eigenvalue i mu exactly one dispersion root is
        // i n pi (its sinh vanishes at round-off), yet det(M) itself stays
        // away from zero. In the resonant case the gamma = 0 zeros approach
        // the conservative ones at rate O(n^-2).
        let k = 4.0 * PI * PI;
        let p = SystemParams::new(k, 1.0, k, 1.0, 0.0, 1.0, 0.5).unwrap();
        for n in [5, 10, 20] {
            let (m1, _) = conservative_mu_squared(n, &p);
            let lam = Complex64::new(0.0, m1.sqrt());
            let r = quartic_roots(lam, &p);
            let s1 = r.r1.sinh().norm();
            let s2 = r.r2.sinh().norm();
            assert!(s1.min(s2) < 1e-10, "one sinh vanishes, got {s1}, {s2}");
            // Newton from i mu finds the gamma = 0 zero nearby; distance
            // shrinks like n^-2 but is far above round-off.
            let mut z = lam;
            for _ in 0..60 {
                let v = char_determinant(z, &p).unwrap();
                let h = 1e-6 * z.norm().max(1.0);
                let hc = Complex64::new(h, 0.0);
                let d = (char_determinant(z + hc, &p).unwrap().value
                    - char_determinant(z - hc, &p).unwrap().value)
                    / (2.0 * h);
                let step = v.value / d;
                z -= step;
                if step.norm() < 1e-13 * z.norm() {
                    break;
                }
            }
            let dist = (z - lam).norm() * (n as f64).powi(2);
            assert!(
                dist > 1e-2 && dist < 50.0,
                "n^2-scaled distance {dist} at n = {n}"
            );
        }
    }

    #[test]
    fn asymptotic_examples() {
        // different speeds, branch 0, n = 7, rho1 = k1 = 1 -> 7 pi i + (pi/2) i
        let p = SystemParams::new(1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.5).unwrap();
        let s = asymptotic_eigenvalue(0, 7, &p).value;
        assert_relative_eq!(s.im, 7.0 * PI + PI / 2.0, max_relative = 1e-14);
        assert_eq!(s.re, 0.0);

        // equal speeds Case 1, params 1, n = 10:
        // Re = -(1 - cos 1) sin(pi/4) / (2 (10 pi)^{1/2})
        let p = unit(1.0);
        let s = asymptotic_eigenvalue(1, 10, &p).value;
        let expect = -(1.0 - 1.0_f64.cos()) * (PI / 4.0).sin() / (2.0 * (10.0 * PI).sqrt());
        assert_relative_eq!(s.re, expect, max_relative = 1e-13);
        assert_relative_eq!(expect, -0.0290, max_relative = 2e-3);

        // Case 2 magnitude of the deep damping term at sqrt(k1/k2) = 2 pi
        let k = 4.0 * PI * PI;
        let p2 = SystemParams::new(k, 1.0, k, 1.0, 1.0, 1.0, 0.5).unwrap();
        let alpha = 0.5;
        let n = 12.0_f64;
        let s2 = asymptotic_eigenvalue(1, 12, &p2).value;
        let mag = p2.gamma * p2.k1.powf((5.0 + alpha) / 2.0) * (PI * alpha / 2.0).sin()
            / (256.0
                * p2.k2.powi(3)
                * p2.rho1.powf((1.0 + alpha) / 2.0)
                * PI.powf(5.0 - alpha)
                * n.powf(5.0 - alpha));
        assert_relative_eq!(s2.re, -mag, max_relative = 1e-12);
    }

    fn branch_slope(result: &SpectrumResult, branch: u8) -> f64 {
        let mut ln_n = Vec::new();
        let mut ln_re = Vec::new();
        for m in result.modes.iter().filter(|m| m.branch == branch) {
            ln_n.push((m.n as f64).ln());
            ln_re.push(m.lambda.re.abs().ln());
        }
        let n = ln_n.len() as f64;
        let mx = ln_n.iter().sum::<f64>() / n;
        let my = ln_re.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (x, y) in ln_n.iter().zip(&ln_re) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        sxy / sxx
    }

    #[test]
    fn odd_resonant_case_swaps_branch_rates() {
        // sqrt(k1/k2) = pi (odd resonance): the slow n^{-(1-alpha)} real
        // part moves to branch 1, the deep n^{-(5-alpha)} one to branch 2.
        let p = SystemParams::new(PI * PI, 1.0, PI * PI, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(
            crate::model::resonance_class(&p),
            crate::model::ResonanceClass::OddResonant(1)
        );
        let result = find_eigenvalues(&p, 20..=40, 1e-10);
        assert!(result.failures.is_empty(), "{:?}", result.failures);
        for m in &result.modes {
            assert!(m.lambda.re < 0.0, "branch {} n {}", m.branch, m.n);
            // the printed expansions land close to the true roots
            let ratio = m.lambda.re / m.seed.re;
            assert!(
                (0.85..1.1).contains(&ratio),
                "real-part ratio {ratio} at branch {} n {}",
                m.branch,
                m.n
            );
        }
        let s1 = branch_slope(&result, 1);
        let s2 = branch_slope(&result, 2);
        assert!((s1 + 0.5).abs() <= 0.1, "branch 1 slope {s1}");
        assert!((s2 + 4.5).abs() <= 0.5, "branch 2 slope {s2}");
    }

    #[test]
    fn different_speed_roots_track_both_lattices() {
        // ratio 9/4: branch 0 near i pi (n + 1/2) sqrt(k1/rho1), branch 1
        // near i n pi sqrt(k2/rho2); the expansions carry no damping term,
        // so only closeness and dissipativity are asserted.
        let p = SystemParams::new(1.0, 1.0, 9.0, 4.0, 1.0, 1.0, 0.5).unwrap();
        let result = find_eigenvalues(&p, 15..=40, 1e-10);
        assert!(result.failures.is_empty(), "{:?}", result.failures);
        for m in &result.modes {
            assert!(m.lambda.re < 0.0, "branch {} n {}", m.branch, m.n);
            let lattice = match m.branch {
                0 => 3.0 * PI * (m.n as f64 + 0.5),
                _ => 2.0 * PI * m.n as f64,
            };
            assert!(
                (m.lambda.im - lattice).abs() < 0.15,
                "branch {} n {} strayed {} from its lattice",
                m.branch,
                m.n,
                (m.lambda.im - lattice).abs()
            );
        }
    }

    #[test]
    fn newton_matches_asymptotics_case1() {
        let p = unit(1.0);
        let result = find_eigenvalues(&p, 20..=40, 1e-10);
        assert!(result.failures.is_empty(), "{:?}", result.failures);
        for m in result.modes.iter().filter(|m| m.branch == 1) {
            // imaginary parts pinned to the seeds
            assert!(
                (m.lambda.im - m.seed.im).abs() <= 1e-3 * m.seed.im.abs(),
                "n = {}",
                m.n
            );
            assert!(m.lambda.re < 0.0, "dissipativity at n = {}", m.n);
            assert!(m.residual <= 1e-10);
        }
        // |lambda - seed| n^{1-alpha} stays bounded
        let scaled: Vec<f64> = result
            .modes
            .iter()
            .filter(|m| m.branch == 1)
            .map(|m| (m.lambda - m.seed).norm() * (m.n as f64).powf(0.5))
            .collect();
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        assert!(max < 1.0, "scaled deviations {scaled:?}");
    }

    #[test]
    fn seed_deviation_decays_at_next_order() {
        // |lambda_found - seed| follows the first neglected term of the
        // expansion: for Case 1 branch 1 that term is O(n^-1), so the
        // log-log slope sits at -1 within +-0.5.
        let p = unit(1.0);
        let result = find_eigenvalues(&p, 20..=60, 1e-10);
        let mut ln_n = Vec::new();
        let mut ln_dev = Vec::new();
        for m in result.modes.iter().filter(|m| m.branch == 1) {
            ln_n.push((m.n as f64).ln());
            ln_dev.push((m.lambda - m.seed).norm().ln());
        }
        let n = ln_n.len() as f64;
        let mx = ln_n.iter().sum::<f64>() / n;
        let my = ln_dev.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (x, y) in ln_n.iter().zip(&ln_dev) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        let slope = sxy / sxx;
        assert!(
            (-1.5..=-0.5).contains(&slope),
            "deviation slope {slope} should be -1 +- 0.5"
        );
    }

    #[test]
    fn newton_conjugate_pairing() {
        let p = unit(1.0);
        let result = find_eigenvalues(&p, -25..=25, 1e-10);
        assert!(result.failures.is_empty());
        for m in &result.modes {
            if m.n > 20 {
                let partner = result
                    .modes
                    .iter()
                    .find(|q| q.branch == m.branch && q.n == -m.n)
                    .expect("conjugate partner present");
                assert!(
                    (partner.lambda - m.lambda.conj()).norm() <= 1e-10 * m.lambda.norm().max(1.0),
                    "pairing at branch {} n {}",
                    m.branch,
                    m.n
                );
            }
        }
    }

    #[test]
    fn conservative_mu_example_and_vieta() {
        let p = unit(1.0);
        let (m1, m2) = conservative_mu_squared(1, &p);
        // frozen from the quadratic-formula oracle: (2 pi^2 + 1 +- sqrt(4 pi^2 + 1))/2
        assert_relative_eq!(m1, 13.550736966873021, max_relative = 1e-12);
        assert_relative_eq!(m2, 7.188471835305694, max_relative = 1e-12);
        assert_relative_eq!(m1 * m2, PI.powi(4), max_relative = 1e-12);
        assert_relative_eq!(m1 + m2, 2.0 * PI * PI + 1.0, max_relative = 1e-12);
    }

    #[test]
    fn conservative_vs_durand_kerner_oracle() {
        // quadratic-in-mu^2 formula against dense polynomial roots, n <= 200
        let p = SystemParams::new(2.0, 0.7, 3.0, 1.3, 0.5, 0.2, 0.33).unwrap();
        for n in (1..=200).step_by(13) {
            let (m1, m2) = conservative_mu_squared(n, &p);
            let npi2 = (n as f64 * PI).powi(2);
            let b = (p.k1 / p.rho1 + p.k2 / p.rho2) * npi2 + p.k1 / p.rho2;
            let c = (p.k1 * p.k2 / (p.rho1 * p.rho2)) * npi2 * npi2;
            let roots = durand_kerner(&[
                Complex64::new(1.0, 0.0),
                Complex64::new(-b, 0.0),
                Complex64::new(c, 0.0),
            ]);
            let mut re: Vec<f64> = roots.iter().map(|z| z.re).collect();
            re.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(roots.iter().all(|z| z.im.abs() < 1e-9 * b));
            assert_relative_eq!(m1, re[0], max_relative = 1e-12);
            assert_relative_eq!(m2, re[1], max_relative = 1e-12);
        }
    }

    #[test]
    fn conservative_large_n_expansion_equal_speeds() {
        // mu1^2 - ((n pi)^2 k1/rho1 + n pi k1/sqrt(rho1 rho2) + k1/(2 rho2)) -> 0
        let p = unit(1.0);
        let mut prev = f64::INFINITY;
        for n in [20, 40, 80, 160] {
            let (m1, _) = conservative_mu_squared(n, &p);
            let npi = n as f64 * PI;
            let approx = npi * npi + npi + 0.5;
            let gap = (m1 - approx).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn trace_coefficients() {
        let p = unit(1.0);
        let modes = conservative_spectrum(&p, 1..=40);
        for m in &modes {
            // branch 1, n even: coefficient = 1 + sqrt(k1/k2)/(n pi) + O(n^-2)
            if m.branch == Branch::One && m.n % 2 == 0 && m.n >= 20 {
                let expect = 1.0 + 1.0 / (m.n as f64 * PI);
                assert_relative_eq!(m.trace_coeff, expect, max_relative = 2e-3);
                assert!(m.trace_coeff > 0.0);
            }
        }
        // parity: branch 1 coefficient unchanged under n -> -n,
        // branch 2 flips sign with the whole eigenvector
        let both = conservative_spectrum(&p, -10..=10);
        for m in &both {
            if m.n > 0 {
                let partner = both
                    .iter()
                    .find(|q| q.branch == m.branch && q.n == -m.n)
                    .unwrap();
                match m.branch {
                    Branch::One => assert_relative_eq!(
                        partner.trace_coeff,
                        m.trace_coeff,
                        max_relative = 1e-13
                    ),
                    Branch::Two => assert_relative_eq!(
                        partner.trace_coeff,
                        -m.trace_coeff,
                        max_relative = 1e-13
                    ),
                }
            }
        }
    }

    #[test]
    fn trace_branch2_different_speeds_decays() {
        // (phi_{2,n})_x(1) + psi_{2,n}(1) = O(1/n)
        let p = SystemParams::new(1.0, 1.0, 9.0, 4.0, 0.0, 0.0, 0.5).unwrap();
        let modes = conservative_spectrum(&p, 1..=100);
        for m in modes.iter().filter(|m| m.branch == Branch::Two) {
            let scaled = m.trace_coeff.abs() * m.n as f64;
            assert!(scaled < 2.0, "n = {}, scaled = {scaled}", m.n);
        }
    }

    #[test]
    fn damped_spectrum_closed_under_conjugation() {
        let p = unit(0.7);
        let r = find_eigenvalues(&p, -12..=12, 1e-9);
        for m in &r.modes {
            let c = r
                .modes
                .iter()
                .find(|q| q.branch == m.branch && q.n == -m.n)
                .unwrap();
            assert!((c.lambda - m.lambda.conj()).norm() <= 1e-8 * m.lambda.norm().max(1.0));
        }
    }
}
