//! Diffusive realization of the Caputo boundary damper.
//!
//! The fractional derivative acting at `x = 1` is replaced by a family of
//! first-order ODEs in an auxiliary variable `omega(xi, t)` indexed by a real
//! frequency `xi`, coupled through the singular weight
//! `mu(xi) = |xi|^{(2 alpha - 1)/2}` and the kernel constant
//! `kappa(alpha) = sin(alpha pi)/pi`. The continuum identity
//!
//! ```text
//! kappa(alpha) * Int_R |xi|^{2 alpha - 1} / (xi^2 + eta + lambda) dxi
//!     = (lambda + eta)^(alpha - 1)
//! ```
//!
//! holds on the cut plane; [`DiffusiveGrid`] discretizes the xi-axis so the
//! left-hand side is reproduced by a finite sum, and every constructed grid
//! is checked against the closed form before it is handed out.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FractionalError {
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("mu is singular at xi = 0 for alpha < 1/2")]
    MuSingularAtZero,
    #[error("lambda + eta = {0} lies on the closed negative real axis")]
    OutsideDomain(Complex64),
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error(transparent)]
    Fractional(#[from] FractionalError),
    #[error("need at least 8 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("cutoff must be a finite value > 1, got {0}")]
    BadCutoff(f64),
    #[error("eta must be nonnegative, got {0}")]
    NegativeEta(f64),
    #[error(
        "closed-form check failed: relative error {achieved:.3e} exceeds {tolerance:.3e} \
         (increase n_nodes or the cutoff)"
    )]
    ConstructionFailure { achieved: f64, tolerance: f64 },
}

/// Kernel normalization `kappa(alpha) = sin(alpha pi) / pi`.
pub fn kappa(alpha: f64) -> Result<f64, FractionalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FractionalError::AlphaOutOfRange(alpha));
    }
    Ok((alpha * std::f64::consts::PI).sin() / std::f64::consts::PI)
}

/// Singular coupling weight `mu(xi) = |xi|^{(2 alpha - 1)/2}`.
///
/// For `alpha < 1/2` the exponent is negative and `xi = 0` is outside the
/// domain.
pub fn mu(xi: f64, alpha: f64) -> Result<f64, FractionalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FractionalError::AlphaOutOfRange(alpha));
    }
    let expo = (2.0 * alpha - 1.0) / 2.0;
    if xi == 0.0 && expo < 0.0 {
        return Err(FractionalError::MuSingularAtZero);
    }
    Ok(xi.abs().powf(expo))
}

/// Closed form of the diffusive spectral integral: the principal branch of
/// `(lambda + eta)^(alpha - 1)`.
///
/// Defined for `lambda + eta` off the closed negative real axis, which
/// covers `Re(lambda) + eta > 0 or Im(lambda) != 0` (the identity's domain
/// of validity).
pub fn diffusive_integral(
    lambda: Complex64,
    eta: f64,
    alpha: f64,
) -> Result<Complex64, FractionalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FractionalError::AlphaOutOfRange(alpha));
    }
    let z = lambda + eta;
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(FractionalError::OutsideDomain(z));
    }
    Ok(z.powf(alpha - 1.0))
}

/// Default relative tolerance every grid must meet against the closed form.
pub const GRID_TOLERANCE: f64 = 1e-6;

/// Quadrature discretization of the diffusive xi-axis.
///
/// Nodes live on the positive half-line; the weights carry a factor 2 so that
/// sums over the grid stand in for integrals over all of R (the integrands
/// are even in xi). The rule is a trapezoid in `s = ln(xi)`, which clusters
/// nodes both at the `xi -> 0` singularity of `mu^2` and in the tail; no node
/// sits at `xi = 0`, so `alpha < 1/2` is handled without special cases.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusiveGrid {
    /// Strictly increasing quadrature nodes, all positive.
    pub nodes: Vec<f64>,
    /// Matching weights, all positive, including the half-line doubling.
    pub weights: Vec<f64>,
    /// `mu(xi_j)` at the nodes.
    pub mu_values: Vec<f64>,
    pub alpha: f64,
    pub eta: f64,
    /// Largest represented `|xi|`.
    pub cutoff: f64,
    /// Declared relative tolerance of the rule.
    pub tolerance: f64,
    /// Relative error actually achieved on the closed-form check at lambda = 1.
    pub achieved: f64,
    /// Largest `|lambda|` on the imaginary axis for which the closed-form
    /// check stayed within `tolerance` (scanned up to 1e3).
    pub validated_imag_range: f64,
}

/// Cutoff for which the truncated tails of the mapped integrand drop below
/// `tail` in relative terms.
pub fn recommended_cutoff(alpha: f64, tail: f64) -> f64 {
    (tail.ln() / (2.0 * alpha - 2.0)).exp()
}

/// Build a diffusive quadrature grid and verify it against
/// [`diffusive_integral`].
///
/// Fails with [`GridError::ConstructionFailure`] when the rule cannot
/// reproduce the closed form at `lambda = 1` to [`GRID_TOLERANCE`], which
/// signals too few nodes or a bad cutoff.
pub fn build_diffusive_grid(
    alpha: f64,
    eta: f64,
    n_nodes: usize,
    cutoff: f64,
) -> Result<DiffusiveGrid, GridError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FractionalError::AlphaOutOfRange(alpha).into());
    }
    if eta < 0.0 {
        return Err(GridError::NegativeEta(eta));
    }
    if n_nodes < 8 {
        return Err(GridError::TooFewNodes(n_nodes));
    }
    if !(cutoff.is_finite() && cutoff > 1.0) {
        return Err(GridError::BadCutoff(cutoff));
    }

    let s_max = cutoff.ln();
    // Balance the two truncated tails: e^{2 alpha s_min} = e^{(2 alpha - 2) s_max}.
    let s_min = (1.0 - 1.0 / alpha) * s_max;
    let h = (s_max - s_min) / (n_nodes - 1) as f64;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    let mut mu_values = Vec::with_capacity(n_nodes);
    for j in 0..n_nodes {
        let s = s_min + h * j as f64;
        let xi = s.exp();
        let end = j == 0 || j == n_nodes - 1;
        nodes.push(xi);
        weights.push(2.0 * h * xi * if end { 0.5 } else { 1.0 });
        mu_values.push(xi.powf((2.0 * alpha - 1.0) / 2.0));
    }

    let mut grid = DiffusiveGrid {
        nodes,
        weights,
        mu_values,
        alpha,
        eta,
        cutoff,
        tolerance: GRID_TOLERANCE,
        achieved: f64::NAN,
        validated_imag_range: 0.0,
    };

    let achieved = grid.closed_form_error(Complex64::new(1.0, 0.0));
    if achieved.is_nan() || achieved > GRID_TOLERANCE {
        return Err(GridError::ConstructionFailure {
            achieved,
            tolerance: GRID_TOLERANCE,
        });
    }
    grid.achieved = achieved;

    // Record how far up the imaginary axis the rule keeps its tolerance.
    let mut validated = 0.0;
    for k in 0..=12 {
        let mag = 10.0_f64.powf(k as f64 / 4.0);
        if grid.closed_form_error(Complex64::new(0.0, mag)) <= GRID_TOLERANCE {
            validated = mag;
        } else {
            break;
        }
    }
    grid.validated_imag_range = validated;
    Ok(grid)
}

impl DiffusiveGrid {
    /// Discrete transfer sum `sum_j w_j mu_j^2 / (xi_j^2 + eta + lambda)`;
    /// approximates `diffusive_integral(lambda) / kappa(alpha)`.
    pub fn transfer_sum(&self, lambda: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.nodes.len() {
            let m = self.mu_values[j];
            // scaled division: xi^4 can overflow near alpha = 1 where the
            // balanced cutoff is enormous
            acc += crate::numerics::div_real_by_complex(
                self.weights[j] * m * m,
                self.nodes[j] * self.nodes[j] + self.eta + lambda,
            );
        }
        acc
    }

    /// Relative error of [`Self::transfer_sum`] against the closed form.
    pub fn closed_form_error(&self, lambda: Complex64) -> f64 {
        let kap = kappa(self.alpha).expect("alpha validated at construction");
        let exact = diffusive_integral(lambda, self.eta, self.alpha)
            .expect("lambda off the negative real axis")
            / kap;
        (self.transfer_sum(lambda) - exact).norm() / exact.norm()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn kappa_values() {
        assert_relative_eq!(kappa(0.5).unwrap(), 1.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(
            kappa(0.25).unwrap(),
            (PI / 4.0).sin() / PI,
            max_relative = 1e-15
        );
        // sin(alpha pi) -> 0 as alpha -> 0+
        assert!(kappa(1e-9).unwrap() < 1e-8);
        assert!(kappa(0.0).is_err());
        assert!(kappa(1.0).is_err());
    }

    #[test]
    fn mu_values() {
        assert_eq!(mu(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(mu(7.0, 0.5).unwrap(), 1.0);
        assert_relative_eq!(mu(4.0, 0.75).unwrap(), 2.0_f64.sqrt(), max_relative = 1e-15);
        assert_eq!(mu(0.0, 0.25), Err(FractionalError::MuSingularAtZero));
        assert!(mu(0.0, 0.75).is_ok());
    }

    #[test]
    fn diffusive_integral_closed_form_points() {
        // 1^{-1/2} = 1
        let v = diffusive_integral(Complex64::new(1.0, 0.0), 0.0, 0.5).unwrap();
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-15);
        // 4^{-1/2} = 0.5
        let v = diffusive_integral(Complex64::new(3.0, 0.0), 1.0, 0.5).unwrap();
        assert_relative_eq!(v.re, 0.5, max_relative = 1e-15);
        // i^{-1/2} = e^{-i pi/4}
        let v = diffusive_integral(Complex64::new(0.0, 1.0), 0.0, 0.5).unwrap();
        assert_relative_eq!(v.re, (PI / 4.0).cos(), max_relative = 1e-14);
        assert_relative_eq!(v.im, -(PI / 4.0).sin(), max_relative = 1e-14);
        // closed negative real axis rejected
        assert!(diffusive_integral(Complex64::new(-2.0, 0.0), 1.0, 0.5).is_err());
        assert!(diffusive_integral(Complex64::new(0.0, 0.0), 0.0, 0.5).is_err());
    }

    /// Adaptive Simpson quadrature of the defining integral, used as the
    /// independent oracle for the closed form. Integrates
    /// `2 kappa(a) Int_0^oo xi^{2a-1}/(xi^2+eta+lambda) dxi` after the
    /// substitution `xi = e^s` with generous truncation.
    fn oracle_integral(lambda: Complex64, eta: f64, alpha: f64) -> Complex64 {
        let f = |s: f64| -> Complex64 {
            let xi = s.exp();
            Complex64::new((2.0 * alpha * s).exp(), 0.0)
                / (Complex64::new(xi * xi + eta, 0.0) + lambda)
        };
        let (a, b) = (-60.0 / (2.0 * alpha), 60.0 / (2.0 - 2.0 * alpha));
        let n = 200_001;
        let h = (b - a) / (n - 1) as f64;
        let mut acc = f(a) + f(b);
        for j in 1..n - 1 {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + h * j as f64);
        }
        2.0 * kappa(alpha).unwrap() * acc * (h / 3.0)
    }

    #[test]
    fn closed_form_matches_quadrature_oracle() {
        for &(lam, eta, alpha) in &[
            (Complex64::new(0.0, 1.0), 0.0, 0.5),
            (Complex64::new(1.0, 0.0), 0.0, 0.25),
            (Complex64::new(3.0, 0.0), 1.0, 0.75),
            (Complex64::new(0.0, 10.0), 1.0, 0.33),
        ] {
            let exact = diffusive_integral(lam, eta, alpha).unwrap();
            let quad = oracle_integral(lam, eta, alpha);
            assert_relative_eq!(exact.re, quad.re, max_relative = 1e-8);
            assert_relative_eq!(exact.im, quad.im, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_reproduces_closed_form() {
        // alpha = 0.5, eta = 1: kappa * Int mu^2/(xi^2+eta+1) = 2^{-1/2}
        let g = build_diffusive_grid(0.5, 1.0, 200, recommended_cutoff(0.5, 1e-12)).unwrap();
        let kap = kappa(0.5).unwrap();
        let got = kap * g.transfer_sum(Complex64::new(1.0, 0.0));
        assert_relative_eq!(got.re, 0.5_f64.sqrt(), max_relative = 1e-6);
        assert!(g.achieved <= 1e-6);
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert!(g.nodes.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn grid_refinement_is_monotone() {
        // Pre-asymptotic refinement: errors strictly decrease as nodes double.
        let cutoff = recommended_cutoff(0.5, 1e-12);
        let errs: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| {
                build_diffusive_grid(0.5, 1.0, n, cutoff)
                    .map(|g| g.achieved)
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "errors {errs:?}");
    }

    #[test]
    fn grid_valid_independent_of_gamma() {
        // The grid never sees gamma; a zero-gain damper still gets a valid grid.
        let g = build_diffusive_grid(0.25, 0.0, 300, recommended_cutoff(0.25, 1e-12)).unwrap();
        assert!(g.achieved <= g.tolerance);
    }

    #[test]
    fn grid_construction_failure_reports() {
        // 8 nodes cannot meet 1e-6 over the required range.
        let err = build_diffusive_grid(0.5, 1.0, 8, recommended_cutoff(0.5, 1e-12)).unwrap_err();
        assert!(matches!(err, GridError::ConstructionFailure { .. }));
    }

    #[test]
    fn grid_validated_range_covers_1e3() {
        let g = build_diffusive_grid(0.5, 1.0, 400, recommended_cutoff(0.5, 1e-13)).unwrap();
        assert!(
            g.validated_imag_range >= 1.0e3,
            "{}",
            g.validated_imag_range
        );
    }

    proptest! {
        // Conjugate symmetry and positivity on the real axis.
        #[test]
        fn diffusive_integral_conjugate_symmetry(
            re in -0.9f64..10.0, im in 0.01f64..100.0, alpha in 0.05f64..0.95, eta in 0.0f64..2.0
        ) {
            let lam = Complex64::new(re, im);
            let a = diffusive_integral(lam, eta, alpha).unwrap();
            let b = diffusive_integral(lam.conj(), eta, alpha).unwrap();
            prop_assert!((a.conj() - b).norm() <= 1e-14 * a.norm());
        }

        #[test]
        fn diffusive_integral_real_positive_on_axis(
            re in 0.01f64..50.0, alpha in 0.05f64..0.95, eta in 0.0f64..2.0
        ) {
            let v = diffusive_integral(Complex64::new(re, 0.0), eta, alpha).unwrap();
            prop_assert!(v.im == 0.0 && v.re > 0.0);
        }
    }
}
