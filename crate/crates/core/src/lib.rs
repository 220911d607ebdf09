//! Temporal quantum correlations for N-level systems probed by sequential
//! projective measurements with M outcome blocks.
//!
//! The crate evaluates the three-time Leggett-Garg quantity
//! `K3 = C21 + C32 - C31` and bounds it in three ways:
//!
//! * [`spinmodel`]: a spin-j precessing under `H = Omega Jx`, measured in the
//!   `Jz` basis, with exact closed forms for the special timing
//!   `Omega tau = pi/2` and its large-spin asymptote.
//! * [`maxviol`]: direct maximisation over the two inter-measurement
//!   unitaries (and the initial state) at fixed `N` and `M`.
//! * [`momentsdp`]: a dimension-independent upper bound from a moment-matrix
//!   semidefinite relaxation, solved by the dense interior-point method in
//!   [`sdp`].
//!
//! The building blocks live in [`qcore`] (dense complex linear algebra and
//! spin operators) and [`measure`] (measurement schemes, state update,
//! correlators).

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod maxviol;
pub mod measure;
pub mod momentsdp;
pub mod qcore;
pub mod reference;
pub mod sdp;
pub mod sdpa;
pub mod spinmodel;

pub use error::{Error, Result};
pub use measure::{DensityMatrix, LgiResult, MeasurementScheme};
pub use qcore::{CMatrix, SpinParams};
