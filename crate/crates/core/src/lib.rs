//! Topological feature stitching for handwritten-digit classification.
//!
//! The crate turns grayscale digit images into persistence images computed
//! from cubical persistent homology of 17 height/radial filtrations, stacks
//! them with the raw pixels, and trains small convolutional networks on the
//! result. Everything needed to run the noisy-data experiments end to end
//! lives here: IDX loading and noise injection ([`dataset`]), filtrations
//! ([`filtration`]), persistence ([`persistence`]), vectorization
//! ([`vectorize`]), the network stack ([`nn`]), and the experiment harness
//! with its CSV/SVG reporting ([`experiment`]).

pub mod dataset;
pub mod experiment;
pub mod filtration;
pub mod npy;
pub mod nn;
pub mod persistence;
pub mod rng;
pub mod vectorize;

pub use dataset::{GrayImage, NoiseConfig, NoiseKind, NoiseSpec, SplitSpec};
pub use filtration::{BinaryImage, FilteredImage, FiltrationSpec};
pub use persistence::{PersistenceDiagram, PersistencePair};
pub use vectorize::{ModelInput, PIStack, PipelineConfig, TrainingStats, Variant};

