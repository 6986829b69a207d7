//! End-to-end experiments built on the core modules.

pub mod config;
pub mod functional;
pub mod identities;
pub mod ladder;
pub mod line;
pub mod weyl;

pub use config::{ExperimentConfig, Overrides};
pub use weyl::{run_ensemble, WeylReport};
