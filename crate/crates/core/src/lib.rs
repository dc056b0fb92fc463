//! Device, photonic and system models for a photonic phase-change main
//! memory, plus an event-driven simulator and an electro-optic crossbar
//! baseline.
//!
//! The analytic models (`pcm_cell`, `photonics`, `integrity`) are generic
//! over [`Scalar`] and run in `f32` or `f64`. The simulator, the baseline
//! and the aliases below use [`Real`].

// `!(x > y)` is how NaN-rejecting range checks are written here
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod integrity;
pub mod pcm_cell;
pub mod photonics;
pub mod scalar;
pub mod trace_synth;

pub use error::{Error, Result};
pub use geometry::{BitsPerCell, GeometrySpec, LineBytes, MemoryGeometry};
pub use scalar::Scalar;

/// Scalar used by the simulator and CLI.
pub type Real = f64;

pub type LevelTable = pcm_cell::LevelTable<Real>;
pub type LevelTableF32 = pcm_cell::LevelTable<f32>;
pub type LevelOverrides = pcm_cell::LevelOverrides<Real>;
pub type LossParams = photonics::LossParams<Real>;
pub type LossParamsF32 = photonics::LossParams<f32>;
pub type PowerParams = photonics::PowerParams<Real>;
pub type PowerParamsF32 = photonics::PowerParams<f32>;
pub type PathDescriptor = photonics::PathDescriptor<Real>;
pub type PowerStack = photonics::PowerStack<Real>;
pub type GainLut = integrity::GainLut<Real>;
pub type GainLutF32 = integrity::GainLut<f32>;
