//! Inference kernels. Each function is a plain, allocation-per-call layer op;
//! shape problems come back as [`Error::Shape`] tagged with the op name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureTensor;

use super::weights::WeightArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => relu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn apply_slice<T: Scalar>(self, xs: &mut [T]) {
        for v in xs {
            *v = self.apply(*v);
        }
    }
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

impl Padding {
    /// Output length and leading pad along one axis.
    pub fn resolve(self, len: usize, kernel: usize, stride: usize) -> Option<(usize, usize)> {
        match self {
            Padding::Same => {
                let out = len.div_ceil(stride);
                let total = ((out - 1) * stride + kernel).saturating_sub(len);
                Some((out, total / 2))
            }
            Padding::Valid => (len >= kernel).then(|| ((len - kernel) / stride + 1, 0)),
        }
    }
}

/// 2-D cross-correlation. `kernel` is `[kh, kw, in, out]`, `bias` has `out` entries.
pub fn conv2d<T: Scalar>(
    input: &FeatureTensor<T>,
    kernel: &WeightArray<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<FeatureTensor<T>> {
    let [h, w, c] = input.shape();
    let &[kh, kw, kin, kout] = kernel.shape() else {
        return Err(Error::shape(
            "conv2d",
            format!("kernel rank {} != 4", kernel.shape().len()),
        ));
    };
    if kin != c {
        return Err(Error::shape(
            "conv2d",
            format!("kernel expects {kin} input channels, tensor has {c}"),
        ));
    }
    if bias.len() != kout {
        return Err(Error::shape(
            "conv2d",
            format!("bias has {} entries for {kout} filters", bias.len()),
        ));
    }
    if stride == 0 {
        return Err(Error::shape("conv2d", "stride must be >= 1"));
    }
    let (oh, pad_y) = padding
        .resolve(h, kh, stride)
        .ok_or_else(|| Error::shape("conv2d", format!("input height {h} < kernel {kh}")))?;
    let (ow, pad_x) = padding
        .resolve(w, kw, stride)
        .ok_or_else(|| Error::shape("conv2d", format!("input width {w} < kernel {kw}")))?;

    let src = input.data();
    let k = kernel.data();
    let mut out = vec![T::zero(); oh * ow * kout];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * kout..][..kout];
            acc.copy_from_slice(bias);
            for ky in 0..kh {
                let Some(iy) = (oy * stride + ky).checked_sub(pad_y).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..kw {
                    let Some(ix) = (ox * stride + kx).checked_sub(pad_x).filter(|&v| v < w) else {
                        continue;
                    };
                    let px = &src[(iy * w + ix) * c..][..c];
                    let taps = &k[(ky * kw + kx) * c * kout..][..c * kout];
                    for (&v, row) in px.iter().zip(taps.chunks_exact(kout)) {
                        for (a, &kv) in acc.iter_mut().zip(row) {
                            *a += v * kv;
                        }
                    }
                }
            }
        }
    }
    FeatureTensor::new(oh, ow, kout, out)
}

/// Non-overlapping `size × size` max pooling; trailing rows/columns that do
/// not fill a window are dropped.
pub fn max_pool<T: Scalar>(input: &FeatureTensor<T>, size: usize) -> Result<FeatureTensor<T>> {
    let [h, w, c] = input.shape();
    if size == 0 {
        return Err(Error::shape("maxpool", "pool size must be >= 1"));
    }
    if h < size || w < size {
        return Err(Error::shape(
            "maxpool",
            format!("{h}x{w} input smaller than {size}x{size} window"),
        ));
    }
    let (oh, ow) = (h / size, w / size);
    let mut out = vec![T::neg_infinity(); oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut out[(oy * ow + ox) * c..][..c];
            for y in oy * size..(oy + 1) * size {
                for x in ox * size..(ox + 1) * size {
                    let px = &input.data()[(y * w + x) * c..][..c];
                    for (d, &v) in dst.iter_mut().zip(px) {
                        if v > *d {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
    FeatureTensor::new(oh, ow, c, out)
}

pub fn maxpool2<T: Scalar>(input: &FeatureTensor<T>) -> Result<FeatureTensor<T>> {
    max_pool(input, 2)
}

/// Inference-mode batch normalization over the channel axis.
pub fn batchnorm_infer<T: Scalar>(
    input: &FeatureTensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<FeatureTensor<T>> {
    let c = input.channels();
    if [gamma.len(), beta.len(), mean.len(), var.len()].iter().any(|&n| n != c) {
        return Err(Error::shape(
            "batchnorm",
            format!("parameter arrays must have {c} entries"),
        ));
    }
    if let Some(v) = var.iter().find(|v| v.is_nan() || **v < T::zero()) {
        return Err(Error::weights("batchnorm", format!("moving variance {v} is negative")));
    }
    let scale: Vec<T> = gamma.iter().zip(var).map(|(&g, &v)| g / (v + eps).sqrt()).collect();
    let mut out = input.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (i, x) in px.iter_mut().enumerate() {
            *x = scale[i] * (*x - mean[i]) + beta[i];
        }
    }
    Ok(out)
}

/// `act(Wᵀx + b)` with `W` stored `[in, out]`.
pub fn dense<T: Scalar>(
    input: &[T],
    weights: &WeightArray<T>,
    bias: &[T],
    activation: Option<Activation>,
) -> Result<Vec<T>> {
    let &[n_in, n_out] = weights.shape() else {
        return Err(Error::shape(
            "dense",
            format!("weight rank {} != 2", weights.shape().len()),
        ));
    };
    if n_in != input.len() {
        return Err(Error::shape(
            "dense",
            format!("weights expect {n_in} inputs, got {}", input.len()),
        ));
    }
    if bias.len() != n_out {
        return Err(Error::shape(
            "dense",
            format!("bias has {} entries for {n_out} units", bias.len()),
        ));
    }
    let mut out = bias.to_vec();
    for (&x, row) in input.iter().zip(weights.data().chunks_exact(n_out)) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += x * wv;
        }
    }
    if let Some(act) = activation {
        act.apply_slice(&mut out);
    }
    Ok(out)
}

/// Row-major, channel-last flattening: index `(y·W + x)·C + c`.
pub fn flatten<T: Scalar>(input: &FeatureTensor<T>) -> Vec<T> {
    input.data().to_vec()
}
