//! Library surface of the command-line driver, exposed for integration
//! tests.

pub mod config;
pub mod run;
