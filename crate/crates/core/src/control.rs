//! HUM boundary control at truncated spectral scale.
//!
//! Within the span of the retained conservative modes, steering the beam to
//! rest by a Dirichlet control at `x = 1` reduces to a moment problem: the
//! control must reproduce, against every retained adjoint exponential, the
//! duality pairing of the initial data. Choosing the control as the boundary
//! output of an adjoint trajectory turns the moment equations into a
//! Hermitian positive-definite Gram system (the truncated Lambda operator)
//! whose solution is the minimizing adjoint datum. When cross-branch
//! eigenvalues cluster, the raw system is nearly singular; the solve then
//! goes through the divided-difference factorization, while the weighted
//! space only decides how targets and residuals are measured.

use crate::model::SystemParams;
use crate::numerics::{hermitian_eig_range, hermitian_solve, simpson_sampled};
use crate::observability::{boundary_output, ExpMode, MomentSystem, TimeSeries};
use crate::spectrum::ConservativeMode;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("gram matrix numerically singular; raise T or weaken the space")]
    SingularGram,
    #[error("target excites mode (branch {0}, n {1}) outside the truncated span")]
    TargetOutsideSpan(u8, i32),
    #[error("coefficient vector length {0} does not match the {1} retained modes")]
    LengthMismatch(usize, usize),
    #[error("moment solve residual {0:.3e} exceeds 1e-12")]
    SolveResidual(f64),
    #[error("time quadrature under-resolved: Richardson gap {gap:.3e} exceeds 10% of the residual {residual:.3e}")]
    QuadratureUnderResolved { gap: f64, residual: f64 },
}

/// Weighted coefficient space for targets and adjoint data.
///
/// Weights apply to the raw Riesz coefficients: a datum
/// `Phi0 = sum x_{j,n} E_{j,n}` has squared norm
/// `sum (w_{j,n} |x_{j,n}|)^2`. `H2` is the identity; `D` divides both
/// branches by `n^2`; `D1` divides branch 1 by `|n|` and branch 2 by `n^2`;
/// `D1Log` adds the `ln^2 |n|` factor (omitted for `|n| = 1`); `Vs(s)`
/// divides both branches by `|n|^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpaceSpec {
    H2,
    D,
    D1,
    D1Log,
    Vs(f64),
}

impl SpaceSpec {
    /// Per-mode weight; strictly positive.
    pub fn weight(&self, branch: u8, n: i32) -> f64 {
        let an = n.unsigned_abs() as f64;
        match self {
            SpaceSpec::H2 => 1.0,
            SpaceSpec::D => 1.0 / (an * an),
            SpaceSpec::D1 => {
                if branch == 1 {
                    1.0 / an
                } else {
                    1.0 / (an * an)
                }
            }
            SpaceSpec::D1Log => {
                let log_factor = if n.abs() == 1 { 1.0 } else { an.ln() * an.ln() };
                if branch == 1 {
                    1.0 / (an * log_factor)
                } else {
                    1.0 / (an * an * log_factor)
                }
            }
            SpaceSpec::Vs(s) => an.powf(-s),
        }
    }
}

/// Weighted coefficient norm of `coeffs` against the mode list.
pub fn weighted_norm(coeffs: &[Complex64], modes: &[ExpMode], spec: SpaceSpec) -> f64 {
    assert_eq!(coeffs.len(), modes.len());
    coeffs
        .iter()
        .zip(modes)
        .map(|(c, m)| {
            let w = spec.weight(m.branch, m.n);
            (w * c.norm()).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Residual tolerance (relative to the target norm) below which a verified
/// control counts as a null control.
pub const NULL_CONTROL_TOLERANCE: f64 = 1e-6;

/// Solved HUM control problem for one configuration.
#[derive(Debug, Clone)]
pub struct HumProblem {
    pub params: SystemParams,
    /// Retained conservative modes, in the moment system's ordering.
    pub modes: Vec<ConservativeMode>,
    pub ms: MomentSystem,
    pub space: SpaceSpec,
    /// Success threshold for `residual_norm / target_norm`.
    pub declared_tolerance: f64,
    /// Duality pairing matrix `P[l][k] = (lambda_k + lambda_l) m_{lk}` with
    /// `m_{lk} = rho1 C_k C_l S_{lk} + rho2 D_k D_l Q_{lk}`; block-diagonal
    /// over `|n|`.
    pairing: DMatrix<Complex64>,
    /// Weighted Gram of the moment problem (the truncated Lambda in Riesz
    /// coordinates).
    weighted: DMatrix<Complex64>,
    /// Extreme eigenvalues of the space-measured weighted Gram:
    /// truncated `(ell0_hat, ell1_hat)`.
    pub ell: (f64, f64),
}

/// Result of a full solve-synthesize-verify pass.
#[derive(Debug, Clone)]
pub struct ControlResult {
    pub phi0_coeffs: Vec<Complex64>,
    pub control: TimeSeries,
    pub control_l2_norm: f64,
    pub residual_norm: f64,
    pub target_norm: f64,
    pub gram_condition: f64,
}

impl HumProblem {
    /// Build the problem from a moment system and the matching conservative
    /// modes (same ordering).
    pub fn new(
        params: SystemParams,
        modes: Vec<ConservativeMode>,
        ms: MomentSystem,
        space: SpaceSpec,
    ) -> Result<Self, ControlError> {
        if modes.len() != ms.len() {
            return Err(ControlError::LengthMismatch(modes.len(), ms.len()));
        }
        let k = modes.len();
        let pairing = DMatrix::from_fn(k, k, |l, c| {
            (ms.modes[c].lambda + ms.modes[l].lambda)
                * pairing_overlap(&modes[c], &modes[l], &params)
        });
        let weighted = ms.weighted_gram();
        let wvec: Vec<f64> = ms
            .modes
            .iter()
            .map(|m| space.weight(m.branch, m.n))
            .collect();
        let scaled = DMatrix::from_fn(k, k, |l, c| weighted[(l, c)] / (wvec[l] * wvec[c]));
        let ell_range = hermitian_eig_range(&scaled);
        if ell_range.0 < 1e-14 {
            return Err(ControlError::SingularGram);
        }
        Ok(HumProblem {
            params,
            modes,
            ms,
            space,
            declared_tolerance: NULL_CONTROL_TOLERANCE,
            pairing,
            weighted,
            ell: (ell_range.1, ell_range.0),
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Moment right-hand side of a target datum
    /// `U0 = sum tau_k E_k`: `b_l = (1/k1) <J U0, E_l>` where `J` maps
    /// `(u0, u1, y0, y1)` to `(rho1 u1, -rho1 u0, rho2 y1, -rho2 y0)`.
    pub fn duality_rhs(&self, target: &[Complex64]) -> Result<DVector<Complex64>, ControlError> {
        if target.len() != self.len() {
            return Err(ControlError::LengthMismatch(target.len(), self.len()));
        }
        let t = DVector::from_column_slice(target);
        Ok(&self.pairing * t / Complex64::new(self.params.k1, 0.0))
    }

    /// Solve the truncated moment problem `Lambda x = target` for the
    /// adjoint Riesz coefficients.
    ///
    /// With chains present, the system is factored through the
    /// divided-difference family: the weighted Gram is
    /// `D^H L G_adapted L^H D`, with `D` the modal output weights and `L`
    /// the sparse chain transform, so a well-conditioned solve of
    /// `G_adapted` plus exact triangular sweeps replaces a direct solve of
    /// the nearly singular raw system.
    pub fn solve_moment_problem(
        &self,
        target: &[Complex64],
    ) -> Result<Vec<Complex64>, ControlError> {
        let b = self.duality_rhs(target)?;
        let bnorm = b.norm();
        if bnorm == 0.0 {
            return Ok(vec![Complex64::new(0.0, 0.0); self.len()]);
        }
        let mut x = self.adapted_solve(&b)?;
        // one round of iterative refinement through the same route
        let r = &b - &self.weighted * &x;
        x += self.adapted_solve(&r)?;
        let res = (&self.weighted * &x - &b).norm() / bnorm;
        if res > 1e-12 {
            return Err(ControlError::SolveResidual(res));
        }
        Ok(x.iter().copied().collect())
    }

    /// One pass of the chain-adapted solve `D^H L G~ L^H D x = b`.
    fn adapted_solve(&self, b: &DVector<Complex64>) -> Result<DVector<Complex64>, ControlError> {
        let k = self.len();
        let w: Vec<f64> = self.ms.modes.iter().map(|m| m.weight).collect();
        if w.iter().any(|v| v.abs() < 1e-300) {
            return Err(ControlError::SingularGram);
        }
        let deltas: Vec<(usize, Complex64)> = self
            .ms
            .chains
            .iter()
            .map(|&i| (i, self.ms.modes[i + 1].lambda - self.ms.modes[i].lambda))
            .collect();
        // c = L^{-1} D^{-1} b  (D real diagonal; L differs from identity only
        // on chain rows i+1: L[i+1, i] = 1, L[i+1, i+1] = delta)
        let mut c = DVector::from_fn(k, |l, _| b[l] / w[l]);
        for &(i, d) in &deltas {
            c[i + 1] = (c[i + 1] - c[i]) / d;
        }
        let (mut y, _) = hermitian_solve(&self.ms.gram, &c).ok_or(ControlError::SingularGram)?;
        // x = D^{-1} L^{-H} y: chain rows give t_{i+1} = y_{i+1}/conj(delta),
        // t_i = y_i - t_{i+1}
        for &(i, d) in &deltas {
            y[i + 1] /= d.conj();
            let corr = y[i + 1];
            y[i] -= corr;
        }
        Ok(DVector::from_fn(k, |l, _| y[l] / w[l]))
    }

    /// Sample the control `v(t)`: the boundary output of the adjoint
    /// trajectory generated by the solved coefficients.
    pub fn synthesize_control(&self, phi0_coeffs: &[Complex64], n_samples: usize) -> TimeSeries {
        boundary_output(phi0_coeffs, &self.ms.modes, self.ms.horizon, n_samples)
    }

    /// Verify a candidate control against the target through the weak form:
    /// recompute every retained moment by time quadrature of the samples,
    /// map the mismatches back to final-state coefficients through the
    /// duality pairing, and measure them in the target space norm.
    ///
    /// A Richardson check (full- vs half-resolution quadrature, requiring an
    /// even number of sample intervals) estimates the quadrature error of
    /// the reported residual; the verdict is rejected when that estimate
    /// exceeds 10% of the residual being judged, i.e. of
    /// `max(residual, declared_tolerance * target_norm)`.
    pub fn verify_null_control(
        &self,
        target: &[Complex64],
        control: &TimeSeries,
    ) -> Result<f64, ControlError> {
        let b = self.duality_rhs(target)?;
        let fine = self.moment_mismatch(control, &b, 1);
        let coarse = self.moment_mismatch(control, &b, 2);
        let res_fine = self.final_state_norm(&fine);
        let res_coarse = self.final_state_norm(&coarse);
        // Simpson is fourth order: the fine-rule error is about the
        // fine/coarse gap over 2^4 - 1
        let quad_err = (res_fine - res_coarse).abs() / 15.0;
        let judged = res_fine.max(self.declared_tolerance * self.target_scale(target));
        if quad_err > 0.1 * judged {
            return Err(ControlError::QuadratureUnderResolved {
                gap: quad_err,
                residual: res_fine,
            });
        }
        Ok(res_fine)
    }

    fn target_scale(&self, target: &[Complex64]) -> f64 {
        let exp_modes = &self.ms.modes;
        weighted_norm(target, exp_modes, self.space).max(f64::MIN_POSITIVE)
    }

    /// Moment mismatch vector `k1 Int v conj(c_l e^{l t}) dt - k1 b_l`
    /// scaled by `1/k1`, evaluated by Simpson with the given stride.
    fn moment_mismatch(
        &self,
        control: &TimeSeries,
        b: &DVector<Complex64>,
        stride: usize,
    ) -> DVector<Complex64> {
        let k = self.len();
        assert!(
            (control.times.len() - 1).is_multiple_of(2 * stride),
            "verification needs a sample count of the form 2 m stride + 1 \
             so the strided rule still ends at T"
        );
        let times: Vec<f64> = control.times.iter().copied().step_by(stride).collect();
        let h = times[1] - times[0];
        let values: Vec<Complex64> = control.values.iter().copied().step_by(stride).collect();
        DVector::from_fn(k, |l, _| {
            let m = &self.ms.modes[l];
            let integrand: Vec<Complex64> = times
                .iter()
                .zip(&values)
                .map(|(&t, &v)| v * (Complex64::new(m.weight, 0.0) * (m.lambda * t).exp()).conj())
                .collect();
            simpson_sampled(&integrand, h) - b[l]
        })
    }

    /// Map moment mismatches to final-state Riesz coefficients and take the
    /// space norm: the mismatch vector equals
    /// `-e^{-lambda_l T} (P beta)_l` for the final state `sum beta_k E_k`.
    fn final_state_norm(&self, mismatch: &DVector<Complex64>) -> f64 {
        let k = self.len();
        let rhs = DVector::from_fn(k, |l, _| {
            -(self.ms.modes[l].lambda * self.ms.horizon).exp() * mismatch[l]
        });
        let beta = self
            .pairing
            .clone()
            .lu()
            .solve(&rhs)
            .expect("duality pairing is invertible on the truncated span");
        let coeffs: Vec<Complex64> = beta.iter().copied().collect();
        weighted_norm(&coeffs, &self.ms.modes, self.space)
    }

    /// Full pipeline: solve, synthesize, verify.
    pub fn control_result(
        &self,
        target: &[Complex64],
        n_samples: usize,
    ) -> Result<ControlResult, ControlError> {
        let phi0 = self.solve_moment_problem(target)?;
        let control = self.synthesize_control(&phi0, n_samples);
        let residual_norm = self.verify_null_control(target, &control)?;
        let l2 = control.l2_norm_squared().sqrt();
        Ok(ControlResult {
            phi0_coeffs: phi0,
            control,
            control_l2_norm: l2,
            residual_norm,
            target_norm: self.target_scale(target),
            gram_condition: self.ms.condition.1 / self.ms.condition.0,
        })
    }

    /// Dual-norm size of the moment data: `|| b ||` with coordinates scaled
    /// by the inverse space weights. The duality bound reads
    /// `||v||_{L^2} <= ell1_hat^{-1/2} * dual_target_norm`.
    pub fn dual_target_norm(&self, target: &[Complex64]) -> Result<f64, ControlError> {
        let b = self.duality_rhs(target)?;
        let mut acc = 0.0;
        for (l, m) in self.ms.modes.iter().enumerate() {
            let w = self.space.weight(m.branch, m.n);
            acc += (b[l].norm() / w).powi(2);
        }
        Ok(acc.sqrt())
    }
}

/// Overlap `rho1 Int phi_k phi_l + rho2 Int psi_k psi_l` of two conservative
/// mode shapes; nonzero only for equal `|n|` thanks to sine/cosine
/// orthogonality.
fn pairing_overlap(a: &ConservativeMode, b: &ConservativeMode, p: &SystemParams) -> Complex64 {
    if a.n.abs() != b.n.abs() {
        return Complex64::new(0.0, 0.0);
    }
    let same = a.n == b.n;
    let sin_overlap = if same { 0.5 } else { -0.5 };
    let cos_overlap = 0.5;
    Complex64::new(
        p.rho1 * a.c_amp * b.c_amp * sin_overlap + p.rho2 * a.d_amp * b.d_amp * cos_overlap,
        0.0,
    )
}

/// Impose the conjugate symmetry that makes the synthesized data real:
/// `x_{1,-n} = conj(x_{1,n})`, `x_{2,-n} = -conj(x_{2,n})` (the branch-2
/// eigenvectors flip sign under `n -> -n`).
pub fn symmetrize_conjugate(coeffs: &mut [Complex64], modes: &[ExpMode]) {
    let idx = |branch: u8, n: i32| modes.iter().position(|m| m.branch == branch && m.n == n);
    for i in 0..modes.len() {
        let m = modes[i];
        if m.n > 0 {
            if let Some(j) = idx(m.branch, -m.n) {
                coeffs[j] = if m.branch == 1 {
                    coeffs[i].conj()
                } else {
                    -coeffs[i].conj()
                };
            }
        }
    }
}

/// Resolve a sparse `(branch, n, amplitude)` target list against the
/// retained modes; amplitudes on excluded modes are an error.
pub fn project_target(
    entries: &[(u8, i32, Complex64)],
    modes: &[ExpMode],
) -> Result<Vec<Complex64>, ControlError> {
    let mut out = vec![Complex64::new(0.0, 0.0); modes.len()];
    for &(branch, n, amp) in entries {
        match modes.iter().position(|m| m.branch == branch && m.n == n) {
            Some(i) => out[i] += amp,
            None => return Err(ControlError::TargetOutsideSpan(branch, n)),
        }
    }
    Ok(out)
}
