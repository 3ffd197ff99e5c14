//! Soft-wrist peg-in-hole simulation and a privileged teacher-student
//! reinforcement learning pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::field_reassign_with_default, clippy::type_complexity)]

pub mod config;
pub mod distill;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod evalsuite;
pub mod geometry;
pub mod nn;
pub mod physcheck;
pub mod rl;
pub mod seed;

pub use config::ExperimentConfig;
pub use error::{EnvError, Error, GeometryError, NnError, Result, SimError};
