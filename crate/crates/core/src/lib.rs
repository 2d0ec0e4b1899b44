//! Average treatment effect estimation with neural-network nuisance fits.

pub mod data;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod gradcheck;
pub mod harness;
pub mod ingest;
pub mod net;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
