//! Trajectory prediction with a dual-path transformer encoder, a CVAE
//! prediction head, and a meta-learning trainer for cross-domain
//! generalization, plus synthetic data generation and a leave-one-domain-out
//! evaluation harness.

pub mod checkpoint;
pub mod cvae_head;
pub mod data;
pub mod dual_tt;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod mgtp;
pub mod params;

pub use error::{CoreError, Result};
pub use params::ParameterSnapshot;
