//! Geodesic data augmentation for segmented ECG beats.
//!
//! Beats are read as densities over time, compared with a closed-form 1-D
//! Wasserstein cost, coupled across classes with minibatch entropic optimal
//! transport and interpolated along the Wasserstein geodesic. The crate also
//! carries the preprocessing chain, feature extraction, a softmax-linear
//! classifier with PGD robustness evaluation, file formats and the CLI.

pub mod augment;
pub mod beat;
pub mod bench;
pub mod density;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod io;
pub mod metric;
pub mod ot;
pub mod signal;

pub use beat::{BeatTensor, ClassId};
pub use density::DensityOnGrid;
pub use error::{Error, Result};
