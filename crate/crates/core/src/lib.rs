//! Bayesian Cox proportional hazards models for patient subgroups with joint
//! variable selection and graph structure learning across subgroups.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coxmodel;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod graph;
pub mod numeric;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
