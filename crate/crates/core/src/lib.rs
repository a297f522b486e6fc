//! Synthetic cartoon-head dataset generation and landmark-proxy pose mapping.
//!
//! The pipeline: characters carry annotated target morphs ([`catalog`]),
//! poses are drawn per character ([`sampler`]), rendered by a parametric
//! head ([`head`]), mapped to morphable-model parameters ([`mapping`]) and
//! written to a manifest ([`dataset`]).

pub mod angles;
pub mod catalog;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod head;
pub mod mapping;
pub mod metrics;
pub mod pose;
pub mod raster;
pub mod rng;
pub mod sampler;
#[cfg(feature = "serve")]
pub mod service;

pub use error::{Error, Result};
pub use pose::{PoseVector, TargetMorph};
