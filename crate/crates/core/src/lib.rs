//! Tube model predictive control with a persistently exciting input
//! component and recursive least-squares identification of the plant.
//!
//! The controller splits the input into a regulating part, computed from a
//! nominal QP around a robust tube, and an exciting part chosen so that the
//! windowed information matrix of past excitation stays positive definite.
//! Estimated models are published to the controller periodically.

// Negated comparisons are used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod error;
pub mod excitation;
pub mod experiments;
pub mod linalg;
pub mod lp;
pub mod polytope;
pub mod qp;
pub mod sets;
pub mod simulator;
pub mod sysid;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use polytope::Polytope;
