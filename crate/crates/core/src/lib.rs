//! Verification-cascade ensembles of small CNN classifiers over frame sequences.
//!
//! A color model proposes positives frame by frame, a model on fewer color
//! channels confirms or vetoes them, and for video the color predictions are
//! majority-packed and confirmed against a neighborhood of frames. The crate
//! covers frame I/O, preprocessing, a CNN inference engine, the fusion rules,
//! and interval-based evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! name the common instantiations.

pub mod ensemble;
pub mod error;
pub mod eval;
pub mod frameio;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use ensemble::{
    chain_fuse, fuse_video, neighbor_validate, pack_mode, verify_combine, FusionConfig, Label, Prediction,
    PredictionSeries,
};
pub use error::{Error, Result};
pub use frameio::{Frame, GroundTruth, Interval};
pub use preprocess::ChannelSubset;
pub use scalar::Scalar;
pub use tensor::FeatureTensor;

pub type Tensor32 = tensor::FeatureTensor<f32>;
pub type Tensor64 = tensor::FeatureTensor<f64>;
pub type Model32 = nn::Model<f32>;
pub type Model64 = nn::Model<f64>;
pub type Weights32 = nn::WeightStore<f32>;
pub type Weights64 = nn::WeightStore<f64>;
pub type Score32 = nn::Score<f32>;
pub type Score64 = nn::Score<f64>;
