//! Versioned JSON run configurations, one schema per command.

use serde::{Deserialize, Serialize};
use timobeam::SystemParams;

pub const SCHEMA_VERSION: u32 = 1;

fn default_seed() -> u64 {
    0
}

/// Top-level configuration file. Exactly one command block must be present
/// and it must match the invoked subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: SystemParams,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default)]
    pub decay: Option<DecayConfig>,
    #[serde(default)]
    pub gaps: Option<GapsConfig>,
    #[serde(default)]
    pub observability: Option<ObservabilityConfig>,
    #[serde(default)]
    pub control: Option<ControlConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub n_min: i32,
    pub n_max: i32,
    pub tol: f64,
}

fn default_scheme() -> String {
    "midpoint".to_string()
}

fn default_modal_exponent() -> f64 {
    3.0
}

fn default_n_modes() -> usize {
    40
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub n_elems: usize,
    pub n_nodes: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Fit window `[t_lo, t_hi]`; defaults to five fundamental periods in
    /// and 95% of the horizon out.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_modal_exponent")]
    pub modal_exponent: f64,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// `"midpoint"` (default) or `"backward_euler"`.
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapsConfig {
    pub n_max: i32,
    /// Chain threshold; defaults to half the minimum same-branch gap.
    #[serde(default)]
    pub gamma_gap: Option<f64>,
    /// Scan limit for the condition (A1) report.
    #[serde(default = "default_a1_scan")]
    pub a1_scan_limit: u32,
}

fn default_a1_scan() -> u32 {
    50
}

fn default_space() -> String {
    "H2".to_string()
}

fn default_t_factor() -> f64 {
    1.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilityConfig {
    /// Truncation levels to sweep.
    pub truncations: Vec<i32>,
    /// Horizon as a multiple of the Ingham threshold.
    #[serde(default = "default_t_factor")]
    pub t_factor: f64,
    #[serde(default = "default_space")]
    pub space: String,
    #[serde(default)]
    pub gamma_gap: Option<f64>,
}

fn default_n_max() -> i32 {
    30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default = "default_n_max")]
    pub n_max: i32,
    /// Explicit horizon; overrides `t_factor` when present.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_t_factor")]
    pub t_factor: f64,
    #[serde(default = "default_space")]
    pub space: String,
    /// Explicit target amplitudes; empty plus `random_target` draws a
    /// conjugate-symmetric target from the seed.
    #[serde(default)]
    pub target: Vec<TargetEntry>,
    #[serde(default)]
    pub random_target: bool,
    /// Uniform sample count for the control series; odd, and dense enough
    /// for the verification quadrature. Defaults to at least 40 samples per
    /// shortest modal period.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Allow horizons at or below the Ingham threshold (experiments only).
    #[serde(default)]
    pub allow_below_threshold: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub branch: u8,
    pub n: i32,
    pub re: f64,
    pub im: f64,
}
