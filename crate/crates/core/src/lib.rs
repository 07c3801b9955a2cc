//! Numerical laboratory for quantum traversal times.
//!
//! Complex tunnelling, reflection and dwell times are obtained from derivatives of
//! scattering or transition amplitudes with respect to an auxiliary potential `λ`
//! switched on inside a region of interest Ω. The same machinery drives a
//! simulated spin-j Salecker-Wigner-Peres clock, whose weak-coupling readout is
//! cross-checked against the closed-form expressions.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clock;
pub mod ctime;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod io;
pub mod ionise;
pub mod model;
pub mod quad;
pub mod scatter;
pub mod taudist;

pub use error::{Error, ErrorCategory, Result};
pub use model::{HeightProfile, PotentialSpec, Region, Segment, SpatialGrid, Units};
pub use scatter::{rectangular_barrier_oracle, scattering_amplitudes, step_reflection_oracle, ScatteringResult};
