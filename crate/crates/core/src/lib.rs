//! Numerical toolkit for a 1-D Timoshenko beam with one fractional boundary
//! damper: damped spectra and decay-rate asymptotics, a dissipation-exact
//! time-domain simulator for the augmented diffusive model, eigenvalue gap
//! and Diophantine analysis of the conservative system, Ingham-type Gram
//! estimates of observability constants, and HUM boundary-control synthesis
//! at truncated spectral scale.

// numeric kernels pair several arrays by dof index; the indexed loops are
// the readable form there
#![allow(clippy::needless_range_loop)]

pub mod control;
pub mod fractional;
pub mod model;
pub mod numerics;
pub mod observability;
pub mod simulator;
pub mod spectrum;

pub use model::{
    check_condition_a1, classify_speeds, resonance_class, A1Report, ResonanceClass, SpeedClass,
    SpeedTag, SystemParams,
};
