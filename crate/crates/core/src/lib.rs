//! Maximum compatibility estimation (MCE) for inverse problems with several
//! complementary data modes.
//!
//! Each data mode contributes its own goodness-of-fit measure. Rather than
//! choosing relative weights from noise levels or point counts, the toolkit
//! locates the model whose log-χ² vector lies closest to the *ideal point*
//! formed by the single-mode minima, which makes the estimate invariant to
//! per-mode unit and scale changes.
//!
//! The crate is organised in layers:
//!
//! * [`shape`]: exponential spherical-harmonics surfaces, icosphere
//!   meshes and spin-state rotations.
//! * [`projection`]: ray-traced visibility, disk-integrated brightness and
//!   starlike profile radii of a triangulated body.
//! * [`gof`]: χ² measures for brightness and profile data, the smoothness
//!   regularizer and mode evaluators for the shape problem.
//! * [`optimizer`]: trust-region quasi-Newton minimizer with finite
//!   difference gradients and multi-start support.
//! * [`mce`]: ideal point, S-curve tracing, MCE/MCW, feasibility clipping
//!   and continuity diagnostics for any set of modes.
//! * [`cli`]: configuration, simulation, file formats and the command
//!   implementations behind the `mce` binary.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gof;
pub mod mce;
pub mod optimizer;
pub mod projection;
pub mod shape;

pub use error::{Error, Result};
