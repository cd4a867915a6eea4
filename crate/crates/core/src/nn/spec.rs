use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::{Activation, Padding};

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn default_eps() -> f64 {
    super::BATCHNORM_EPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum LayerKind {
    Conv2D {
        filters: usize,
        kernel: [usize; 2],
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activation: Option<Activation>,
    },
    MaxPool2D {
        #[serde(default = "two")]
        pool: usize,
    },
    BatchNorm {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Flatten,
    Dense {
        units: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activation: Option<Activation>,
    },
    Dropout {
        rate: f64,
    },
    Activation {
        activation: Activation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn conv(name: &str, filters: usize, kernel: usize) -> Self {
        Self::new(
            name,
            LayerKind::Conv2D {
                filters,
                kernel: [kernel, kernel],
                stride: 1,
                padding: Padding::Same,
                activation: Some(Activation::Relu),
            },
        )
    }

    pub fn dense(name: &str, units: usize, activation: Activation) -> Self {
        Self::new(
            name,
            LayerKind::Dense {
                units,
                activation: Some(activation),
            },
        )
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// height, width, channels
    Spatial([usize; 3]),
    Flat(usize),
}

impl Shape {
    pub fn channels(self) -> usize {
        match self {
            Shape::Spatial([_, _, c]) => c,
            Shape::Flat(n) => n,
        }
    }
}

/// One named weight array a layer owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: String,
    pub key: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelSpec {
    input: [usize; 3],
    layers: Vec<LayerSpec>,
}

/// A shape-checked layer stack. Construction validates the whole chain, so
/// every accessor can assume a well-formed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    input: [usize; 3],
    layers: Vec<LayerSpec>,
    // output shape of each layer
    shapes: Vec<Shape>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        ModelSpec::new(raw.input, raw.layers)
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(s: ModelSpec) -> Self {
        RawModelSpec {
            input: s.input,
            layers: s.layers,
        }
    }
}

fn layer_output(layer: &LayerSpec, input: Shape) -> Result<Shape> {
    let err = |msg: String| Error::shape(&layer.name, msg);
    match (&layer.kind, input) {
        (
            LayerKind::Conv2D {
                filters,
                kernel: [kh, kw],
                stride,
                padding,
                ..
            },
            Shape::Spatial([h, w, _]),
        ) => {
            if *filters == 0 || *kh == 0 || *kw == 0 || *stride == 0 {
                return Err(err("filters, kernel and stride must be >= 1".into()));
            }
            let (oh, _) = padding
                .resolve(h, *kh, *stride)
                .ok_or_else(|| err(format!("height {h} < kernel {kh}")))?;
            let (ow, _) = padding
                .resolve(w, *kw, *stride)
                .ok_or_else(|| err(format!("width {w} < kernel {kw}")))?;
            Ok(Shape::Spatial([oh, ow, *filters]))
        }
        (LayerKind::MaxPool2D { pool }, Shape::Spatial([h, w, c])) => {
            if *pool == 0 || h < *pool || w < *pool {
                return Err(err(format!("cannot pool {h}x{w} with window {pool}")));
            }
            Ok(Shape::Spatial([h / pool, w / pool, c]))
        }
        (LayerKind::BatchNorm { eps }, s) => {
            if eps.is_nan() || *eps <= 0.0 {
                return Err(err(format!("eps must be > 0, got {eps}")));
            }
            Ok(s)
        }
        (LayerKind::Flatten, Shape::Spatial([h, w, c])) => Ok(Shape::Flat(h * w * c)),
        (LayerKind::Flatten, s @ Shape::Flat(_)) => Ok(s),
        (LayerKind::Dense { units, .. }, Shape::Flat(_)) => {
            if *units == 0 {
                return Err(err("dense units must be >= 1".into()));
            }
            Ok(Shape::Flat(*units))
        }
        (LayerKind::Dropout { rate }, s) => {
            if !(0.0..1.0).contains(rate) {
                return Err(err(format!("dropout rate {rate} outside [0, 1)")));
            }
            Ok(s)
        }
        (LayerKind::Activation { .. }, s) => Ok(s),
        (kind, s) => Err(err(format!("{kind:?} cannot follow a layer producing {s:?}"))),
    }
}

impl ModelSpec {
    pub fn new(input: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        if input.contains(&0) {
            return Err(Error::shape(
                "input",
                format!("input shape {input:?} has a zero dimension"),
            ));
        }
        let mut seen = HashSet::new();
        for l in &layers {
            if l.name.is_empty() || l.name.contains('/') {
                return Err(Error::shape(
                    &l.name,
                    "layer names must be non-empty and contain no '/'",
                ));
            }
            if !seen.insert(l.name.as_str()) {
                return Err(Error::shape(&l.name, "duplicate layer name"));
            }
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut cur = Shape::Spatial(input);
        for l in &layers {
            cur = layer_output(l, cur)?;
            shapes.push(cur);
        }
        if cur != Shape::Flat(1) {
            return Err(Error::shape(
                "output",
                format!("model must end in a single unit, ends in {cur:?}"),
            ));
        }
        let last_act = layers.iter().rev().find_map(|l| match &l.kind {
            LayerKind::Dropout { .. } => None,
            LayerKind::Dense { activation, .. } | LayerKind::Conv2D { activation, .. } => Some(*activation),
            LayerKind::Activation { activation } => Some(Some(*activation)),
            _ => Some(None),
        });
        if last_act != Some(Some(Activation::Sigmoid)) {
            return Err(Error::shape("output", "final layer must apply a sigmoid"));
        }
        Ok(Self { input, layers, shapes })
    }

    /// Five conv blocks (16, 32, 64, 128, 128 filters; 3×3 same conv with
    /// ReLU, 2×2 max-pool, batch norm), dropout 0.2, flatten, then dense
    /// 64 → dropout 0.2 → 16 → 1 (sigmoid).
    pub fn default_model(height: usize, width: usize, channels: usize) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, filters) in [16, 32, 64, 128, 128].into_iter().enumerate() {
            let n = i + 1;
            layers.push(LayerSpec::conv(&format!("conv{n}"), filters, 3));
            layers.push(LayerSpec::new(format!("pool{n}"), LayerKind::MaxPool2D { pool: 2 }));
            layers.push(LayerSpec::new(
                format!("bn{n}"),
                LayerKind::BatchNorm {
                    eps: super::BATCHNORM_EPS,
                },
            ));
        }
        layers.push(LayerSpec::new("dropout1", LayerKind::Dropout { rate: 0.2 }));
        layers.push(LayerSpec::new("flatten", LayerKind::Flatten));
        layers.push(LayerSpec::dense("dense1", 64, Activation::Relu));
        layers.push(LayerSpec::new("dropout2", LayerKind::Dropout { rate: 0.2 }));
        layers.push(LayerSpec::dense("dense2", 16, Activation::Relu));
        layers.push(LayerSpec::dense("dense3", 1, Activation::Sigmoid));
        Self::new([height, width, channels], layers)
    }

    /// Default architecture on 300×300 RGB.
    pub fn model_c() -> Self {
        Self::default_model(300, 300, 3).expect("default architecture is valid")
    }

    /// Default architecture on 300×300 luma.
    pub fn model_l() -> Self {
        Self::default_model(300, 300, 1).expect("default architecture is valid")
    }

    pub fn input(&self) -> [usize; 3] {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape of each layer, in order.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn input_shape_of(&self, layer: usize) -> Shape {
        if layer == 0 {
            Shape::Spatial(self.input)
        } else {
            self.shapes[layer - 1]
        }
    }

    /// Every weight array the model needs, in container order.
    pub fn param_slots(&self) -> Vec<ParamSlot> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let c_in = self.input_shape_of(i).channels();
            let mut slot = |key: &str, shape: Vec<usize>| {
                out.push(ParamSlot {
                    layer: l.name.clone(),
                    key: format!("{}/{key}", l.name),
                    shape,
                })
            };
            match &l.kind {
                LayerKind::Conv2D {
                    filters,
                    kernel: [kh, kw],
                    ..
                } => {
                    slot("kernel", vec![*kh, *kw, c_in, *filters]);
                    slot("bias", vec![*filters]);
                }
                LayerKind::BatchNorm { .. } => {
                    for key in ["gamma", "beta", "moving_mean", "moving_variance"] {
                        slot(key, vec![c_in]);
                    }
                }
                LayerKind::Dense { units, .. } => {
                    slot("kernel", vec![c_in, *units]);
                    slot("bias", vec![*units]);
                }
                _ => {}
            }
        }
        out
    }

    /// Trainable plus batch-norm statistics parameters.
    pub fn count_params(&self) -> usize {
        self.param_slots()
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("model spec: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head() -> Vec<LayerSpec> {
        vec![
            LayerSpec::new("flat", LayerKind::Flatten),
            LayerSpec::dense("out", 1, Activation::Sigmoid),
        ]
    }

    #[test]
    fn single_dense_count() {
        let spec = ModelSpec::new(
            [1, 1, 10],
            vec![
                LayerSpec::new("flat", LayerKind::Flatten),
                LayerSpec::dense("d", 1, Activation::Sigmoid),
            ],
        )
        .unwrap();
        assert_eq!(spec.count_params(), 11);
    }

    #[test]
    fn single_conv_count() {
        let mut layers = vec![LayerSpec::conv("c", 16, 3)];
        layers.extend(head());
        let spec = ModelSpec::new([4, 4, 3], layers).unwrap();
        // 448 conv + dense 4*4*16 -> 1
        assert_eq!(spec.count_params(), 448 + 4 * 4 * 16 + 1);
    }

    #[test]
    fn default_ladder_and_counts() {
        let c = ModelSpec::model_c();
        let spatial: Vec<usize> = c
            .layers()
            .iter()
            .zip(c.shapes())
            .filter(|(l, _)| matches!(l.kind, LayerKind::MaxPool2D { .. }))
            .map(|(_, s)| match s {
                Shape::Spatial([h, w, _]) => {
                    assert_eq!(h, w);
                    *h
                }
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(spatial, [150, 75, 37, 18, 9]);
        let flat = c.layers().iter().position(|l| l.name == "flatten").unwrap();
        assert_eq!(c.shapes()[flat], Shape::Flat(9 * 9 * 128));

        // per-layer table summed by hand
        let convs = (27 * 16 + 16) + (144 * 32 + 32) + (288 * 64 + 64) + (576 * 128 + 128) + (1152 * 128 + 128);
        let bns = 4 * (16 + 32 + 64 + 128 + 128);
        let denses = (10368 * 64 + 64) + (64 * 16 + 16) + (16 + 1);
        assert_eq!(c.count_params(), convs + bns + denses);
        assert_eq!(c.count_params(), 911_169);
        assert_eq!(ModelSpec::model_l().count_params(), 910_881);
    }

    #[test]
    fn rejects_bad_chains() {
        // dense straight after spatial input
        assert!(ModelSpec::new([2, 2, 1], vec![LayerSpec::dense("d", 1, Activation::Sigmoid)]).is_err());
        // no sigmoid at the end
        assert!(ModelSpec::new(
            [2, 2, 1],
            vec![
                LayerSpec::new("f", LayerKind::Flatten),
                LayerSpec::dense("d", 1, Activation::Relu)
            ]
        )
        .is_err());
        // two outputs
        assert!(ModelSpec::new(
            [2, 2, 1],
            vec![
                LayerSpec::new("f", LayerKind::Flatten),
                LayerSpec::dense("d", 2, Activation::Sigmoid)
            ]
        )
        .is_err());
        let mut layers = vec![LayerSpec::new("drop", LayerKind::Dropout { rate: 1.0 })];
        layers.extend(head());
        assert!(ModelSpec::new([2, 2, 1], layers).is_err());
        let mut layers = vec![LayerSpec::new("flat", LayerKind::Dropout { rate: 0.1 })];
        layers.extend(head());
        assert!(matches!(ModelSpec::new([2, 2, 1], layers), Err(Error::Shape { .. })));
    }

    #[test]
    fn trailing_dropout_after_sigmoid_is_fine() {
        let mut layers = head();
        layers.push(LayerSpec::new("drop", LayerKind::Dropout { rate: 0.2 }));
        assert!(ModelSpec::new([2, 2, 1], layers).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let c = ModelSpec::model_c();
        assert_eq!(ModelSpec::from_json(&c.to_json()).unwrap(), c);
        assert!(ModelSpec::from_json(r#"{"input":[2,2,1],"layers":[],"extra":1}"#).is_err());
    }
}
