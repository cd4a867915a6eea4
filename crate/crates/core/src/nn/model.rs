use std::path::Path;

use crate::ensemble::Label;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureTensor;

use super::layers::{batchnorm_infer, conv2d, dense, flatten, max_pool};
use super::spec::{LayerKind, ModelSpec};
use super::weights::{load_weights, WeightStore};

/// Positive-class probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score<T>(T);

impl<T: Scalar> Score<T> {
    pub fn new(p: T) -> Result<Self> {
        if p >= T::zero() && p <= T::one() {
            Ok(Self(p))
        } else {
            Err(Error::Argument(format!("score {p} outside [0, 1]")))
        }
    }

    pub fn probability(self) -> T {
        self.0
    }
}

/// Positive iff `probability >= threshold`.
pub fn classify<T: Scalar>(score: Score<T>, threshold: T) -> Label {
    if score.0 >= threshold {
        Label::Positive
    } else {
        Label::Negative
    }
}

enum Activations<T> {
    Spatial(FeatureTensor<T>),
    Flat(Vec<T>),
}

/// A validated spec/weights pair ready for inference.
#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    weights: WeightStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(spec: ModelSpec, weights: WeightStore<T>) -> Result<Self> {
        weights.validate(&spec)?;
        Ok(Self { spec, weights })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (spec, weights) = load_weights(path)?;
        Self::new(spec, weights.cast())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightStore<T> {
        &self.weights
    }

    pub fn count_params(&self) -> usize {
        self.spec.count_params()
    }

    fn param(&self, layer: &str, key: &str) -> &[T] {
        // presence guaranteed by validate()
        self.weights
            .get(&format!("{layer}/{key}"))
            .expect("validated weights")
            .data()
    }

    pub fn forward(&self, input: &FeatureTensor<T>) -> Result<Score<T>> {
        if input.shape() != self.spec.input() {
            return Err(Error::shape(
                "input",
                format!("model expects {:?}, got {:?}", self.spec.input(), input.shape()),
            ));
        }
        let mut act = Activations::Spatial(input.clone());
        for layer in self.spec.layers() {
            let name = layer.name.as_str();
            let tag = |e: Error| match e {
                Error::Shape { msg, .. } => Error::shape(name, msg),
                Error::Weights { msg, .. } => Error::weights(name, msg),
                other => other,
            };
            act = match (&layer.kind, act) {
                (
                    LayerKind::Conv2D {
                        stride,
                        padding,
                        activation,
                        ..
                    },
                    Activations::Spatial(x),
                ) => {
                    let kernel = self.weights.get(&format!("{name}/kernel")).expect("validated weights");
                    let mut y = conv2d(&x, kernel, self.param(name, "bias"), *stride, *padding).map_err(tag)?;
                    if let Some(a) = activation {
                        a.apply_slice(y.data_mut());
                    }
                    Activations::Spatial(y)
                }
                (LayerKind::MaxPool2D { pool }, Activations::Spatial(x)) => {
                    Activations::Spatial(max_pool(&x, *pool).map_err(tag)?)
                }
                (LayerKind::BatchNorm { eps }, a) => {
                    let p = |k| self.param(name, k);
                    let eps = T::from_f64_lossy(*eps);
                    let run = |x: &FeatureTensor<T>| {
                        batchnorm_infer(x, p("gamma"), p("beta"), p("moving_mean"), p("moving_variance"), eps)
                            .map_err(tag)
                    };
                    match a {
                        Activations::Spatial(x) => Activations::Spatial(run(&x)?),
                        Activations::Flat(v) => {
                            let n = v.len();
                            Activations::Flat(run(&FeatureTensor::new(1, 1, n, v)?)?.into_data())
                        }
                    }
                }
                (LayerKind::Flatten, Activations::Spatial(x)) => Activations::Flat(flatten(&x)),
                (LayerKind::Flatten, a @ Activations::Flat(_)) => a,
                (LayerKind::Dense { activation, .. }, Activations::Flat(v)) => {
                    let w = self.weights.get(&format!("{name}/kernel")).expect("validated weights");
                    Activations::Flat(dense(&v, w, self.param(name, "bias"), *activation).map_err(tag)?)
                }
                // inference-time dropout is the identity
                (LayerKind::Dropout { .. }, a) => a,
                (LayerKind::Activation { activation }, mut a) => {
                    match &mut a {
                        Activations::Spatial(x) => activation.apply_slice(x.data_mut()),
                        Activations::Flat(v) => activation.apply_slice(v),
                    }
                    a
                }
                _ => return Err(Error::shape(name, "layer does not accept the incoming activation")),
            };
        }
        match act {
            Activations::Flat(v) if v.len() == 1 => Score::new(v[0]),
            _ => Err(Error::shape("output", "model did not produce a single value")),
        }
    }
}

/// Free-function form of [`Model::forward`] for callers holding the parts separately.
pub fn forward<T: Scalar>(spec: &ModelSpec, weights: &WeightStore<T>, input: &FeatureTensor<T>) -> Result<Score<T>> {
    Model::new(spec.clone(), weights.clone())?.forward(input)
}
