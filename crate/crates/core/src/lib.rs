//! Frequency-domain FMCW radar forward modeling and volumetric reconstruction.
//!
//! The crate is organized around a small set of interchangeable strategies,
//! each selected by name at runtime:
//!
//! - forward models ([`forward::ForwardModel`]): `spectral`, `time`, `rq`
//! - scene fields ([`field::SceneField`]): `grid`, `net`
//! - supervision objectives ([`train::Objective`]): `spectral`, `tf-ts`,
//!   `tf-ss`, `rq`
//!
//! Around them sit the FMCW signal math ([`signal`]), aperture generation
//! ([`aperture`]), coherent backprojection ([`backprojection`]), evaluation
//! metrics ([`metrics`]) and persistence ([`dataset`], [`volume`],
//! [`checkpoint`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aperture;
pub mod backprojection;
pub mod bench;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod field;
pub mod forward;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod registry;
pub mod signal;
pub mod simulate;
pub mod train;
pub mod volume;

pub use error::{Result, SpinrError};

/// Complex sample type used throughout the signal core.
pub type C64 = num_complex::Complex64;

/// Cartesian position or offset, meters.
pub type Vec3 = nalgebra::Vector3<f64>;
