//! Numerical laboratory for the graphical mean curvature flow of maps between
//! flat tori and Euclidean spaces.
//!
//! A map `f: T^n -> R^m` (or `T^m`) is stored as a winding matrix plus a
//! periodic part, and its graph is evolved by the nonparametric system
//! `df^a/dt = g^{ij} d_i d_j f^a` with `g = I + df^T df`.

pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
mod linalg;
pub mod maps;
pub mod verification;

pub use config::{parse_config, ExperimentConfig};
pub use error::{Error, Result};
pub use flow::{run, FlowState, RunOutcome, RunSettings, StopKind, StopStatus};
pub use grid::{GridSpec, ScalarField, StencilOrder};
pub use maps::{MapFamily, MapField, TargetKind, Winding};
pub use verification::DiagnosticsRecord;
