//! Gap structure, Diophantine classification and Ingham-type Gram systems
//! for the conservative spectrum.
//!
//! The boundary output `phi_x(1, t) + psi(1, t)` of the conservative system
//! is a sum of complex exponentials whose frequencies come in two branches.
//! Cross-branch frequencies can cluster; this module detects the clusters
//! ("chains of close exponents", always of length two), classifies the
//! clustering law from the wave-speed ratio, and assembles the `L^2(0, T)`
//! Gram matrix of the exponential family. Replacing the second member of
//! each chain by the divided difference
//! `e_{n+1}(t) = (e^{l_{n+1} t} - e^{l_n t}) / (l_{n+1} - l_n)` restores a
//! Riesz sequence when `T` exceeds the regime's Ingham horizon, and the
//! extreme eigenvalues of the weighted Gram form give truncated estimates of
//! the observability constants.

use crate::model::{classify_speeds, SpeedTag, SystemParams};
use crate::numerics::{hermitian_eig_range, simpson_sampled};
use crate::spectrum::ConservativeMode;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GapError {
    #[error("three consecutive gaps at positions {0}.. are all below the threshold; chains must have length 2")]
    ChainTooLong(usize),
    #[error("need at least 4 modes, got {0}")]
    TooFewModes(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum MomentError {
    #[error("horizon T = {t} is at or below the Ingham threshold {threshold}")]
    ThresholdViolation { t: f64, threshold: f64 },
    #[error("chain index {0} out of range")]
    BadChainIndex(usize),
    #[error("weights/modes length mismatch")]
    LengthMismatch,
}

#[derive(Debug, Error, PartialEq)]
pub enum ObservabilityError {
    #[error("gram matrix numerically singular (smallest eigenvalue {0:.3e}); raise T or add divided differences")]
    SingularGram(f64),
    #[error("space weights length mismatch")]
    LengthMismatch,
}

/// One exponential of the boundary-output family.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpMode {
    pub branch: u8,
    pub n: i32,
    #[serde(skip)]
    pub lambda: Complex64,
    /// Modal output weight (the boundary trace coefficient).
    pub weight: f64,
}

impl ExpMode {
    pub fn from_conservative(m: &ConservativeMode) -> Self {
        ExpMode {
            branch: m.branch.index(),
            n: m.n,
            lambda: m.lambda,
            weight: m.trace_coeff,
        }
    }
}

/// Merged gap structure of a mode family.
#[derive(Debug, Clone)]
pub struct GapReport {
    /// Modes sorted by increasing `Im lambda`.
    pub sorted_modes: Vec<ExpMode>,
    /// Start index of each chain: the pair `(i, i+1)` in `sorted_modes` is
    /// closer than the threshold.
    pub chains: Vec<usize>,
    pub gamma_gap: f64,
    pub min_same_branch_gap: f64,
    pub min_cross_branch_gap: f64,
    /// Power-law fit of chain gaps against the branch-1 index, when chains
    /// exist: `gap ~ n^-beta`, with the band `[c1, c2]` of `gap * n^beta`.
    pub scaling_fit: Option<GapScaling>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapScaling {
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Half the minimum same-branch gap: the default chain threshold. Same-branch
/// gaps are uniformly bounded below, so chains are necessarily cross-branch.
pub fn default_gamma_gap(modes: &[ExpMode]) -> f64 {
    let mut min_gap = f64::INFINITY;
    for branch in [
        modes.iter().map(|m| m.branch).min().unwrap_or(1),
        modes.iter().map(|m| m.branch).max().unwrap_or(2),
    ] {
        let mut ims: Vec<f64> = modes
            .iter()
            .filter(|m| m.branch == branch)
            .map(|m| m.lambda.im)
            .collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in ims.windows(2) {
            min_gap = min_gap.min(w[1] - w[0]);
        }
    }
    min_gap / 2.0
}

/// Detect chains of close exponents in the merged ordering.
///
/// A chain is a pair of adjacent exponents with gap at most `gamma_gap`;
/// three consecutive small gaps violate the structure and yield
/// [`GapError::ChainTooLong`].
pub fn gap_report(modes: &[ExpMode], gamma_gap: Option<f64>) -> Result<GapReport, GapError> {
    if modes.len() < 4 {
        return Err(GapError::TooFewModes(modes.len()));
    }
    let mut sorted: Vec<ExpMode> = modes.to_vec();
    sorted.sort_by(|a, b| a.lambda.im.partial_cmp(&b.lambda.im).unwrap());
    let threshold = gamma_gap.unwrap_or_else(|| default_gamma_gap(modes));

    let mut min_same = f64::INFINITY;
    let mut min_cross = f64::INFINITY;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let gap = sorted[j].lambda.im - sorted[i].lambda.im;
            if sorted[i].branch == sorted[j].branch {
                min_same = min_same.min(gap);
            } else {
                min_cross = min_cross.min(gap);
            }
            // sorted by Im, so once the gap exceeds both minima we can stop
            if gap > min_same.max(min_cross) {
                break;
            }
        }
    }

    let gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| w[1].lambda.im - w[0].lambda.im)
        .collect();
    let mut chains = Vec::new();
    let mut i = 0;
    while i < gaps.len() {
        if gaps[i] <= threshold {
            if i + 1 < gaps.len() && gaps[i + 1] <= threshold {
                return Err(GapError::ChainTooLong(i));
            }
            chains.push(i);
            i += 2;
        } else {
            i += 1;
        }
    }

    let scaling_fit = fit_chain_scaling(&sorted, &chains);
    Ok(GapReport {
        sorted_modes: sorted,
        chains,
        gamma_gap: threshold,
        min_same_branch_gap: min_same,
        min_cross_branch_gap: min_cross,
        scaling_fit,
    })
}

fn fit_chain_scaling(sorted: &[ExpMode], chains: &[usize]) -> Option<GapScaling> {
    let mut logs_n = Vec::new();
    let mut logs_gap = Vec::new();
    let mut pairs = Vec::new();
    for &i in chains {
        let a = &sorted[i];
        let b = &sorted[i + 1];
        let n = if a.branch == 1 { a.n } else { b.n }.unsigned_abs() as f64;
        let gap = b.lambda.im - a.lambda.im;
        if gap > 0.0 && n >= 1.0 {
            logs_n.push(n.ln());
            logs_gap.push(gap.ln());
            pairs.push((n, gap));
        }
    }
    if pairs.len() < 3 {
        return None;
    }
    let (slope, _, _) = crate::numerics::line_fit(&logs_n, &logs_gap);
    let beta = -slope;
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0_f64;
    for &(n, gap) in &pairs {
        let v = gap * n.powf(beta);
        c1 = c1.min(v);
        c2 = c2.max(v);
    }
    Some(GapScaling { beta, c1, c2 })
}

/// Wave-speed-ratio input for the Diophantine case split. Exact rationals
/// come as integer pairs; machine reals are never promoted to rationals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioInput {
    ExactRational(u64, u64),
    MachineReal(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DiophantineTag {
    /// Trivial ratio 1 (equal speeds); the cross-branch gap law is decided
    /// by pi-resonance instead.
    UniformGap,
    /// Rational, not a ratio of perfect squares: the speed ratio is a
    /// quadratic irrational, gap law `1/n` by Liouville's bound.
    RationalNonSquare,
    /// `p0^2/q0^2`: the speed ratio is rational, exact collisions along
    /// `(m, n) = (q0 k, p0 k)`, gap law `1/n`.
    PerfectRationalSquare(u32, u32),
    /// Machine real: gap law `1/(n ln^2 n)` for almost all reals; the
    /// almost-all caveat is recorded, nothing is certified for a specific
    /// input.
    GenericIrrational,
}

/// Predicted cross-branch gap law `gap >= c / n^beta`, with an optional
/// squared-log correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapLaw {
    pub beta: f64,
    pub log_squared_correction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiophantineClass {
    pub tag: DiophantineTag,
    pub predicted_gap_law: GapLaw,
    /// True when the law holds only for almost all reals (machine input).
    pub almost_all_caveat: bool,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn integer_sqrt(v: u64) -> Option<u64> {
    let r = (v as f64).sqrt().round() as u64;
    (r.saturating_sub(1)..=r + 1).find(|&c| c * c == v)
}

/// Classify the squared speed ratio `k1 rho2 / (k2 rho1)` for the
/// different-speed gap laws.
pub fn classify_ratio(ratio: RatioInput) -> DiophantineClass {
    match ratio {
        RatioInput::ExactRational(p, q) => {
            assert!(p > 0 && q > 0, "ratio must be positive");
            let g = gcd(p, q);
            let (p, q) = (p / g, q / g);
            if p == q {
                return DiophantineClass {
                    tag: DiophantineTag::UniformGap,
                    predicted_gap_law: GapLaw {
                        beta: 0.0,
                        log_squared_correction: false,
                    },
                    almost_all_caveat: false,
                };
            }
            match (integer_sqrt(p), integer_sqrt(q)) {
                (Some(p0), Some(q0)) => DiophantineClass {
                    tag: DiophantineTag::PerfectRationalSquare(p0 as u32, q0 as u32),
                    predicted_gap_law: GapLaw {
                        beta: 1.0,
                        log_squared_correction: false,
                    },
                    almost_all_caveat: false,
                },
                _ => DiophantineClass {
                    tag: DiophantineTag::RationalNonSquare,
                    predicted_gap_law: GapLaw {
                        beta: 1.0,
                        log_squared_correction: false,
                    },
                    almost_all_caveat: false,
                },
            }
        }
        RatioInput::MachineReal(r) => {
            assert!(r > 0.0, "ratio must be positive");
            DiophantineClass {
                tag: DiophantineTag::GenericIrrational,
                predicted_gap_law: GapLaw {
                    beta: 1.0,
                    log_squared_correction: true,
                },
                almost_all_caveat: true,
            }
        }
    }
}

/// Minimal Ingham horizon of the regime:
/// `4 sqrt(rho1/k1)` at equal speeds,
/// `2 (sqrt(rho1/k1) + sqrt(rho2/k2))` otherwise.
pub fn ingham_threshold(p: &SystemParams) -> f64 {
    match classify_speeds(p).tag {
        SpeedTag::EqualSpeeds => 4.0 * (p.rho1 / p.k1).sqrt(),
        SpeedTag::DifferentSpeeds => 2.0 * ((p.rho1 / p.k1).sqrt() + (p.rho2 / p.k2).sqrt()),
    }
}

/// Truncated exponential family on `(0, T)` with its Gram data.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    pub modes: Vec<ExpMode>,
    pub horizon: f64,
    /// Chain starts (indices into `modes`, which are sorted by `Im lambda`).
    pub chains: Vec<usize>,
    /// Gram matrix of the chain-adapted family: divided differences replace
    /// the second member of each chain.
    pub gram: DMatrix<Complex64>,
    /// Gram matrix of the plain exponential family.
    pub raw_gram: DMatrix<Complex64>,
    /// Extreme eigenvalues `(min, max)` of the chain-adapted Gram.
    pub condition: (f64, f64),
}

fn exp_gram(lambdas: &[Complex64], t_end: f64) -> DMatrix<Complex64> {
    let k = lambdas.len();
    DMatrix::from_fn(k, k, |l, c| {
        let s = lambdas[c] + lambdas[l].conj();
        if s.norm() < 1e-14 {
            Complex64::new(t_end, 0.0)
        } else {
            ((s * t_end).exp() - 1.0) / s
        }
    })
}

/// Assemble the moment system: closed-form Gram entries
/// `((e^{(l_j + conj l_k) T} - 1)/(l_j + conj l_k)`, with the limit `T` on
/// vanishing exponents), plus the chain-adapted variant.
///
/// `min_horizon`, when given, enforces `T` above the Ingham threshold;
/// pass `None` to override for experiments below the threshold.
pub fn assemble_moment_system(
    modes: &[ExpMode],
    chains: &[usize],
    t_end: f64,
    min_horizon: Option<f64>,
) -> Result<MomentSystem, MomentError> {
    if let Some(t0) = min_horizon {
        if t_end <= t0 {
            return Err(MomentError::ThresholdViolation {
                t: t_end,
                threshold: t0,
            });
        }
    }
    let k = modes.len();
    for &c in chains {
        if c + 1 >= k {
            return Err(MomentError::BadChainIndex(c));
        }
    }
    let lambdas: Vec<Complex64> = modes.iter().map(|m| m.lambda).collect();
    let raw = exp_gram(&lambdas, t_end);

    // chain-adapted family: row i+1 of the transform becomes the divided
    // difference (E_{i+1} - E_i)/(l_{i+1} - l_i)
    let mut v = DMatrix::<Complex64>::identity(k, k);
    for &i in chains {
        let d = lambdas[i + 1] - lambdas[i];
        v[(i + 1, i)] = -1.0 / d;
        v[(i + 1, i + 1)] = 1.0 / d;
    }
    let adapted = &v * &raw * v.adjoint();
    let condition = hermitian_eig_range(&adapted);
    Ok(MomentSystem {
        modes: modes.to_vec(),
        horizon: t_end,
        chains: chains.to_vec(),
        gram: adapted,
        raw_gram: raw,
        condition,
    })
}

impl MomentSystem {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Weighted Gram form `W^H G W` with `W = diag(modal output weights)`:
    /// its quadratic form is `Int_0^T |output|^2 dt` in Riesz coordinates.
    pub fn weighted_gram(&self) -> DMatrix<Complex64> {
        let k = self.len();
        DMatrix::from_fn(k, k, |l, c| {
            self.raw_gram[(l, c)] * self.modes[l].weight * self.modes[c].weight
        })
    }
}

/// Truncated observability constants: extreme Rayleigh quotients of the
/// weighted Gram form against the space norm `sum (w_l |x_l|)^2`.
///
/// Returns `(ell0_hat, ell1_hat)`, both labeled estimates at this truncation.
pub fn observability_constants(
    ms: &MomentSystem,
    space_weights: &[f64],
) -> Result<(f64, f64), ObservabilityError> {
    if space_weights.len() != ms.len() {
        return Err(ObservabilityError::LengthMismatch);
    }
    let a = ms.weighted_gram();
    let k = ms.len();
    let scaled = DMatrix::from_fn(k, k, |l, c| {
        a[(l, c)] / (space_weights[l] * space_weights[c])
    });
    let (lo, hi) = hermitian_eig_range(&scaled);
    if lo < 1e-14 {
        return Err(ObservabilityError::SingularGram(lo));
    }
    Ok((hi, lo))
}

/// Uniformly sampled synthesis of the boundary output
/// `sum_k coeffs_k weight_k e^{lambda_k t}` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl TimeSeries {
    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// `Int |v|^2 dt` by composite Simpson.
    pub fn l2_norm_squared(&self) -> f64 {
        let sq: Vec<Complex64> = self
            .values
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect();
        simpson_sampled(&sq, self.step()).re
    }
}

/// Sample the boundary output of the coefficient vector over `n_samples`
/// uniform points on `[0, T]`.
pub fn boundary_output(
    coeffs: &[Complex64],
    modes: &[ExpMode],
    t_end: f64,
    n_samples: usize,
) -> TimeSeries {
    assert_eq!(coeffs.len(), modes.len());
    assert!(n_samples >= 2);
    let h = t_end / (n_samples - 1) as f64;
    let mut times = Vec::with_capacity(n_samples);
    let mut values = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t = h * i as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, m) in coeffs.iter().zip(modes) {
            acc += c * m.weight * (m.lambda * t).exp();
        }
        times.push(t);
        values.push(acc);
    }
    TimeSeries { times, values }
}
