//! Pseudospectral laboratory for singular limits of stochastic PDEs on the
//! two-dimensional torus.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod check;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod field;
pub mod grid;
pub mod models;
pub mod noise;
pub mod output;
pub mod renorm;
pub mod stats;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
pub use field::{dealiased_cube, dealiased_square, forward, inverse, RealField, SpectralField};
pub use grid::{make_grid, FourierGrid};
pub use models::{Model, ModelSpec, Mollifier, ScheduleKind, SigmaSchedule};
pub use noise::{NoiseSeed, OUState};
pub use trajectory::Trajectory;
