//! Unsupervised discovery of predictive texture patterns in volumetric
//! images.
//!
//! Patches drawn from a region of interest are encoded and clustered jointly
//! by a convolutional deep clustering network ([`dcn`]). Each case is then
//! summarized by the proportions of its sliding windows falling in every
//! cluster ([`signature`]), and those signatures are linked to an ordinal
//! grade with random forests and LASSO under leave-one-out cross-validation
//! ([`linker`]). [`synth`] generates texture phantoms with known ground truth.

pub mod dcn;
pub mod error;
pub mod gradcheck;
pub mod kmeans;
pub mod linker;
pub mod net;
pub mod seed;
pub mod signature;
pub mod synth;
pub mod tensor;
pub mod volume_io;

pub use error::{Error, Result};
