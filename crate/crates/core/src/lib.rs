//! Multiple kernel learning with MMD-weighted mixtures and random Fourier features.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod mmd;
pub mod rff;
pub mod rng;
pub mod select;
pub mod svm;
pub mod synthetic;

pub use data::{DataFormat, Label, LabeledDataset};
pub use error::{Error, Result};
pub use kernels::{BaseKernel, KernelFamily, KernelMatrix};
pub use mmd::{MixtureWeights, MmdScore};
pub use rff::{FeatureBank, FeatureMatrix};
pub use svm::{SvmModel, TrainConfig};
