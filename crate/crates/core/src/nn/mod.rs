//! Small CNN inference engine: layer kernels, shape-checked model specs,
//! the weight container, and the forward pass.

mod layers;
mod model;
mod spec;
mod weights;

pub use layers::{batchnorm_infer, conv2d, dense, flatten, max_pool, maxpool2, relu, sigmoid, Activation, Padding};
pub use model::{classify, forward, Model, Score};
pub use spec::{LayerKind, LayerSpec, ModelSpec, ParamSlot, Shape};
pub use weights::{
    decode_weights, encode_weights, load_weights, save_weights, WeightArray, WeightStore, MAGIC, VERSION,
};

pub const BATCHNORM_EPS: f64 = 0.001;

/// Default decision threshold on the sigmoid output.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `count_params` as a free function.
pub fn count_params(spec: &ModelSpec) -> usize {
    spec.count_params()
}
