#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod exec;
pub mod experiments;
pub mod modified;
pub mod operator;
pub mod perturbation;
pub mod phase;
pub mod region;
pub mod rng;
pub mod sobolev;
pub mod spectral;
pub mod symbol;
pub mod trig;

pub use error::{LabError, Result};
pub use exec::Execution;
