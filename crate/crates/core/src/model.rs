//! System parameters and arithmetic regime classification.
//!
//! A beam configuration is a set of seven constants: densities `rho1`, `rho2`,
//! stiffnesses `k1`, `k2`, the damper gain `gamma`, the diffusive shift `eta`
//! and the fractional order `alpha`. Everything downstream dispatches on two
//! arithmetic properties of these constants: whether the two wave families
//! travel at the same speed, and whether `sqrt(k1/k2)` resonates with integer
//! multiples of pi.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Relative tolerance used for all floating-point regime decisions
/// (speed equality, pi-resonance, condition (A1) violations).
pub const REGIME_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} must be strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("alpha must lie in the open interval (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
}

/// Physical constants of the damped Timoshenko system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Mass density of the transverse displacement equation (> 0).
    pub rho1: f64,
    /// Rotational density (> 0).
    pub rho2: f64,
    /// Shear stiffness (> 0).
    pub k1: f64,
    /// Bending stiffness (> 0).
    pub k2: f64,
    /// Boundary damper gain (>= 0).
    pub gamma: f64,
    /// Exponential shift of the diffusive kernel (>= 0).
    pub eta: f64,
    /// Fractional order of the boundary damper, in (0, 1).
    pub alpha: f64,
}

impl SystemParams {
    pub fn new(
        rho1: f64,
        rho2: f64,
        k1: f64,
        k2: f64,
        gamma: f64,
        eta: f64,
        alpha: f64,
    ) -> Result<Self, ParamError> {
        let p = Self {
            rho1,
            rho2,
            k1,
            k2,
            gamma,
            eta,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    /// Check the type invariants. Deserialized values must be passed through
    /// this before use.
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("k1", self.k1),
            ("k2", self.k2),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("alpha", self.alpha),
        ] {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { name, value });
            }
        }
        for (name, value) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("k1", self.k1),
            ("k2", self.k2),
        ] {
            if value <= 0.0 {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        for (name, value) in [("gamma", self.gamma), ("eta", self.eta)] {
            if value < 0.0 {
                return Err(ParamError::Negative { name, value });
            }
        }
        if self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(ParamError::AlphaOutOfRange(self.alpha));
        }
        Ok(())
    }

    /// Squared speed of the first wave family, `k1/rho1`.
    pub fn wave_speed_1(&self) -> f64 {
        self.k1 / self.rho1
    }

    /// Squared speed of the second wave family, `k2/rho2`.
    pub fn wave_speed_2(&self) -> f64 {
        self.k2 / self.rho2
    }

    /// All-ones configuration with the given damper `(gamma, eta, alpha)`;
    /// the standard equal-speed, non-resonant test point.
    pub fn unit_beam(gamma: f64, eta: f64, alpha: f64) -> Self {
        Self {
            rho1: 1.0,
            rho2: 1.0,
            k1: 1.0,
            k2: 1.0,
            gamma,
            eta,
            alpha,
        }
    }
}

/// Wave-speed regime tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedTag {
    EqualSpeeds,
    DifferentSpeeds,
}

/// Result of the wave-speed classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedClass {
    pub tag: SpeedTag,
    pub wave_speed_1: f64,
    pub wave_speed_2: f64,
    /// `(k1 * rho2) / (k2 * rho1)`, the square of the speed ratio.
    pub ratio: f64,
}

/// Classify the wave-speed regime of `p`.
///
/// Speeds are considered equal when they agree to [`REGIME_REL_TOL`]
/// relative tolerance.
pub fn classify_speeds(p: &SystemParams) -> SpeedClass {
    let c1 = p.wave_speed_1();
    let c2 = p.wave_speed_2();
    let tag = if (c1 - c2).abs() <= REGIME_REL_TOL * c1.max(c2) {
        SpeedTag::EqualSpeeds
    } else {
        SpeedTag::DifferentSpeeds
    };
    SpeedClass {
        tag,
        wave_speed_1: c1,
        wave_speed_2: c2,
        ratio: (p.k1 * p.rho2) / (p.k2 * p.rho1),
    }
}

/// Resonance class of `sqrt(k1/k2)` against integer multiples of pi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonanceClass {
    /// `sqrt(k1/k2)` is not an integer multiple of pi.
    NonResonant,
    /// `sqrt(k1/k2) = k0 * pi` with `k0` even.
    EvenResonant(u32),
    /// `sqrt(k1/k2) = k0 * pi` with `k0` odd.
    OddResonant(u32),
}

impl ResonanceClass {
    pub fn is_resonant(&self) -> bool {
        !matches!(self, ResonanceClass::NonResonant)
    }

    pub fn k0(&self) -> Option<u32> {
        match self {
            ResonanceClass::NonResonant => None,
            ResonanceClass::EvenResonant(k) | ResonanceClass::OddResonant(k) => Some(*k),
        }
    }
}

/// Test whether `sqrt(k1/k2)` equals `k0 * pi` for some positive integer
/// `k0`, within [`REGIME_REL_TOL`].
pub fn resonance_class(p: &SystemParams) -> ResonanceClass {
    let khat = (p.k1 / p.k2).sqrt() / PI;
    let k0 = khat.round();
    if k0 >= 1.0 && (khat - k0).abs() <= REGIME_REL_TOL * khat.max(1.0) {
        let k0 = k0 as u32;
        if k0.is_multiple_of(2) {
            ResonanceClass::EvenResonant(k0)
        } else {
            ResonanceClass::OddResonant(k0)
        }
    } else {
        ResonanceClass::NonResonant
    }
}

/// Outcome of a finite scan of condition (A1).
///
/// The condition quantifies over all integer pairs, so a scan can only
/// certify it up to `scan_limit`; `nearest_violation_gap` lets callers judge
/// how close the scanned pairs came to a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Report {
    pub holds_on_range: bool,
    pub scan_limit: u32,
    /// Smallest `|k1/rho2 - rhs(m1, m2)|` seen over the scan.
    pub nearest_violation_gap: f64,
    /// Pair realizing a violation, when one exists.
    pub witness: Option<(i64, i64)>,
    /// Relative tolerance that decided violations.
    pub tolerance: f64,
}

/// Scan condition (A1) over all integer pairs with `|m1|, |m2| <= scan_limit`
/// and `m1^2 + m2^2 > 0`.
///
/// The condition compares `k1/rho2` against
/// `((k2 m1^2/rho2 - k1 m2^2/rho1)(k1 m1^2/rho1 - k2 m2^2/rho2) pi^2)
///  / ((k1/rho1 + k2/rho2)(m1^2 + m2^2))`.
/// Both sides depend on the pair only through `m1^2`, `m2^2`, so scanning
/// nonnegative pairs covers all sign combinations.
pub fn check_condition_a1(p: &SystemParams, scan_limit: u32) -> A1Report {
    assert!(scan_limit >= 1, "scan_limit must be >= 1");
    let lhs = p.k1 / p.rho2;
    let denom_const = p.k1 / p.rho1 + p.k2 / p.rho2;
    let mut nearest = f64::INFINITY;
    let mut witness = None;
    for m1 in 0..=(scan_limit as i64) {
        for m2 in 0..=(scan_limit as i64) {
            if m1 == 0 && m2 == 0 {
                continue;
            }
            let m1s = (m1 * m1) as f64;
            let m2s = (m2 * m2) as f64;
            let num = (p.k2 * m1s / p.rho2 - p.k1 * m2s / p.rho1)
                * (p.k1 * m1s / p.rho1 - p.k2 * m2s / p.rho2)
                * PI
                * PI;
            let rhs = num / (denom_const * (m1s + m2s));
            let gap = (lhs - rhs).abs();
            nearest = nearest.min(gap);
            if witness.is_none() && gap <= REGIME_REL_TOL * lhs.abs().max(rhs.abs()) {
                witness = Some((m1, m2));
            }
        }
    }
    A1Report {
        holds_on_range: witness.is_none(),
        scan_limit,
        nearest_violation_gap: nearest,
        witness,
        tolerance: REGIME_REL_TOL,
    }
}
