//! Frame preprocessing: anti-aliased resize, luma conversion and channel
//! selection into normalized feature tensors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frameio::Frame;
use crate::scalar::Scalar;
use crate::tensor::FeatureTensor;

/// Model input edge length used by the default pipeline.
pub const DEFAULT_SIZE: usize = 300;

/// Rounds half up after absorbing float noise just below a half.
fn round_half_up(v: f64) -> u8 {
    (v + 0.5 + 1e-7).floor().clamp(0.0, 255.0) as u8
}

/// Per-output-sample source taps along one axis.
fn axis_taps(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    if src == dst {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    let scale = src as f64 / dst as f64;
    if dst < src {
        // box filter: every source sample contributes by its overlap with the output footprint
        (0..dst)
            .map(|o| {
                let lo = o as f64 * scale;
                let hi = (o + 1) as f64 * scale;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(src);
                (first..last)
                    .filter_map(|i| {
                        let overlap = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                        (overlap > 0.0).then_some((i, overlap / scale))
                    })
                    .collect()
            })
            .collect()
    } else {
        // bilinear with pixel-center alignment, clamped at the borders
        (0..dst)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = pos.floor() as usize;
                let frac = pos - i0 as f64;
                if frac == 0.0 || i0 + 1 >= src {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - frac), (i0 + 1, frac)]
                }
            })
            .collect()
    }
}

/// Resizes to `out_w × out_h`. Shrinking axes use area averaging, growing
/// axes bilinear interpolation; each output byte is the round-half-up of the
/// real-valued resample.
pub fn resize_aa(frame: &Frame, out_w: usize, out_h: usize) -> Result<Frame> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Argument(format!(
            "resize target {out_w}x{out_h} has a zero dimension"
        )));
    }
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    if w == 0 || h == 0 {
        return Err(Error::Argument("cannot resize an empty frame".into()));
    }
    if (w, h) == (out_w, out_h) {
        return Ok(frame.clone());
    }
    let src = frame.pixels();
    let xs = axis_taps(w, out_w);
    let ys = axis_taps(h, out_h);

    let mut rows = vec![0.0f64; h * out_w * c];
    for y in 0..h {
        for (ox, taps) in xs.iter().enumerate() {
            let dst = &mut rows[(y * out_w + ox) * c..][..c];
            for &(sx, wt) in taps {
                let px = &src[(y * w + sx) * c..][..c];
                for (d, &s) in dst.iter_mut().zip(px) {
                    *d += wt * s as f64;
                }
            }
        }
    }

    let mut out = vec![0u8; out_h * out_w * c];
    let mut acc = vec![0.0f64; out_w * c];
    for (oy, taps) in ys.iter().enumerate() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for &(sy, wt) in taps {
            let row = &rows[sy * out_w * c..][..out_w * c];
            for (a, &r) in acc.iter_mut().zip(row) {
                *a += wt * r;
            }
        }
        for (o, &a) in out[oy * out_w * c..][..out_w * c].iter_mut().zip(&acc) {
            *o = round_half_up(a);
        }
    }
    Frame::new(frame.index, out_w, out_h, c, out)
}

/// Weights of the RGB → luma transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumaCoefficients {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl LumaCoefficients {
    pub const BT601: LumaCoefficients = LumaCoefficients {
        r: 0.299,
        g: 0.587,
        b: 0.114,
    };

    pub fn apply(&self, px: &[u8]) -> u8 {
        round_half_up(self.r * px[0] as f64 + self.g * px[1] as f64 + self.b * px[2] as f64)
    }
}

impl Default for LumaCoefficients {
    fn default() -> Self {
        Self::BT601
    }
}

pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    to_grayscale_with(frame, &LumaCoefficients::BT601)
}

pub fn to_grayscale_with(frame: &Frame, luma: &LumaCoefficients) -> Result<Frame> {
    if frame.channels() != 3 {
        return Err(Error::Argument(format!(
            "grayscale conversion needs 3 channels, frame has {}",
            frame.channels()
        )));
    }
    let pixels = frame.pixels().chunks_exact(3).map(|p| luma.apply(p)).collect();
    Frame::new(frame.index, frame.width(), frame.height(), 1, pixels)
}

/// Color features a stage consumes. `L` is derived luma, the rest select stored channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelSubset {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "RG")]
    Rg,
    #[serde(rename = "GB")]
    Gb,
    #[serde(rename = "BR")]
    Br,
    R,
    G,
    B,
    L,
}

impl ChannelSubset {
    pub const ALL: [ChannelSubset; 8] = [
        ChannelSubset::Rgb,
        ChannelSubset::Rg,
        ChannelSubset::Gb,
        ChannelSubset::Br,
        ChannelSubset::R,
        ChannelSubset::G,
        ChannelSubset::B,
        ChannelSubset::L,
    ];

    pub fn cardinality(self) -> usize {
        match self {
            ChannelSubset::Rgb => 3,
            ChannelSubset::Rg | ChannelSubset::Gb | ChannelSubset::Br => 2,
            _ => 1,
        }
    }

    /// Source channel indices in output order; `None` for luma.
    pub fn indices(self) -> Option<&'static [usize]> {
        match self {
            ChannelSubset::Rgb => Some(&[0, 1, 2]),
            ChannelSubset::Rg => Some(&[0, 1]),
            ChannelSubset::Gb => Some(&[1, 2]),
            ChannelSubset::Br => Some(&[2, 0]),
            ChannelSubset::R => Some(&[0]),
            ChannelSubset::G => Some(&[1]),
            ChannelSubset::B => Some(&[2]),
            ChannelSubset::L => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelSubset::Rgb => "RGB",
            ChannelSubset::Rg => "RG",
            ChannelSubset::Gb => "GB",
            ChannelSubset::Br => "BR",
            ChannelSubset::R => "R",
            ChannelSubset::G => "G",
            ChannelSubset::B => "B",
            ChannelSubset::L => "L",
        }
    }
}

impl fmt::Display for ChannelSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelSubset::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown channel subset `{s}`")))
    }
}

pub fn extract_features<T: Scalar>(frame: &Frame, subset: ChannelSubset) -> Result<FeatureTensor<T>> {
    extract_features_with(frame, subset, &LumaCoefficients::BT601)
}

/// Selects `subset` from the frame and scales bytes into `[0, 1]`.
/// A 1-channel frame is accepted only for `L` and taken as luma already.
pub fn extract_features_with<T: Scalar>(
    frame: &Frame,
    subset: ChannelSubset,
    luma: &LumaCoefficients,
) -> Result<FeatureTensor<T>> {
    let scale = T::from_f64_lossy(255.0);
    let norm = |b: u8| T::from_f64_lossy(b as f64) / scale;
    let data: Vec<T> = match (subset.indices(), frame.channels()) {
        (None, 1) => frame.pixels().iter().map(|&b| norm(b)).collect(),
        (None, 3) => frame.pixels().chunks_exact(3).map(|p| norm(luma.apply(p))).collect(),
        (Some(idx), 3) => frame
            .pixels()
            .chunks_exact(3)
            .flat_map(|p| idx.iter().map(move |&i| norm(p[i])))
            .collect(),
        (_, n) => {
            return Err(Error::Argument(format!(
                "subset {subset} cannot be taken from a {n}-channel frame"
            )));
        }
    };
    FeatureTensor::new(frame.height(), frame.width(), subset.cardinality(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_frame(w: usize, h: usize, c: usize, seed: u64) -> Frame {
        let mut g = crate::rng::SplitMix64::new(seed);
        let px = (0..w * h * c).map(|_| g.next_u64() as u8).collect();
        Frame::new(0, w, h, c, px).unwrap()
    }

    /// Direct box filter over the real-valued footprint of each output pixel.
    fn box_oracle(f: &Frame, out_w: usize, out_h: usize) -> Vec<u8> {
        let (w, h, c) = (f.width(), f.height(), f.channels());
        let sx = w as f64 / out_w as f64;
        let sy = h as f64 / out_h as f64;
        let mut out = Vec::new();
        for oy in 0..out_h {
            for ox in 0..out_w {
                for ch in 0..c {
                    let mut sum = 0.0;
                    for y in 0..h {
                        let wy = ((oy + 1) as f64 * sy).min(y as f64 + 1.0) - (oy as f64 * sy).max(y as f64);
                        if wy <= 0.0 {
                            continue;
                        }
                        for x in 0..w {
                            let wx = ((ox + 1) as f64 * sx).min(x as f64 + 1.0) - (ox as f64 * sx).max(x as f64);
                            if wx > 0.0 {
                                sum += wx * wy * f.pixel(x, y)[ch] as f64;
                            }
                        }
                    }
                    let v = sum / (sx * sy);
                    out.push((v + 0.5 + 1e-7).floor() as u8);
                }
            }
        }
        out
    }

    #[test]
    fn identity_resize() {
        let f = random_frame(300, 300, 3, 1);
        assert_eq!(resize_aa(&f, 300, 300).unwrap(), f);
    }

    #[test]
    fn two_to_one_rounds_half_up() {
        let f = Frame::new(0, 2, 1, 1, vec![0, 255]).unwrap();
        let r = resize_aa(&f, 1, 1).unwrap();
        assert_eq!(r.pixels(), &[128]);
        assert_eq!(box_oracle(&f, 1, 1), vec![128]);
    }

    #[test]
    fn constant_downscale() {
        let f = Frame::filled(0, 600, 600, &[12, 200, 77]).unwrap();
        let r = resize_aa(&f, 300, 300).unwrap();
        assert_eq!((r.width(), r.height()), (300, 300));
        assert!(r.pixels().chunks(3).all(|p| p == [12, 200, 77]));
    }

    #[test]
    fn zero_target_rejected() {
        let f = Frame::filled(0, 4, 4, &[1]).unwrap();
        assert!(matches!(resize_aa(&f, 0, 3), Err(Error::Argument(_))));
        assert!(matches!(resize_aa(&f, 3, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn upscale_is_bilinear() {
        let f = Frame::new(0, 2, 1, 1, vec![0, 100]).unwrap();
        let r = resize_aa(&f, 4, 1).unwrap();
        // centers map to -0.25, 0.25, 0.75, 1.25 → clamped 0, 0.25, 0.75, 1
        assert_eq!(r.pixels(), &[0, 25, 75, 100]);
    }

    #[test]
    fn downscale_matches_box_oracle_on_fractional_ratios() {
        for (seed, (w, h, ow, oh)) in [(7, 5, 3, 2), (10, 10, 3, 7), (9, 4, 4, 3), (13, 11, 5, 5)]
            .into_iter()
            .enumerate()
        {
            let f = random_frame(w, h, 3, seed as u64);
            assert_eq!(resize_aa(&f, ow, oh).unwrap().pixels(), &box_oracle(&f, ow, oh)[..]);
        }
    }

    #[test]
    fn grayscale_examples() {
        let f = Frame::new(0, 3, 1, 3, vec![255, 255, 255, 255, 0, 0, 0, 255, 0]).unwrap();
        assert_eq!(to_grayscale(&f).unwrap().pixels(), &[255, 76, 150]);
        let g = Frame::filled(0, 1, 1, &[9]).unwrap();
        assert!(matches!(to_grayscale(&g), Err(Error::Argument(_))));
    }

    #[test]
    fn gray_pixels_are_fixed_points() {
        let px: Vec<u8> = (0..=255u8).flat_map(|v| [v, v, v]).collect();
        let f = Frame::new(0, 256, 1, 3, px).unwrap();
        let g = to_grayscale(&f).unwrap();
        assert!(g.pixels().iter().enumerate().all(|(i, &v)| v as usize == i));
    }

    #[test]
    fn feature_examples() {
        let red = Frame::filled(0, 1, 1, &[255, 0, 0]).unwrap();
        assert_eq!(
            extract_features::<f64>(&red, ChannelSubset::Rgb).unwrap().data(),
            &[1.0, 0.0, 0.0]
        );
        let l = extract_features::<f64>(&red, ChannelSubset::L).unwrap();
        assert_eq!(l.data(), &[76.0 / 255.0]);
        assert!((l.data()[0] - 0.2980).abs() < 1e-4);
        let px = Frame::filled(0, 1, 1, &[10, 20, 30]).unwrap();
        assert_eq!(
            extract_features::<f64>(&px, ChannelSubset::Gb).unwrap().data(),
            &[20.0 / 255.0, 30.0 / 255.0]
        );
        assert_eq!(
            extract_features::<f64>(&px, ChannelSubset::Br).unwrap().data(),
            &[30.0 / 255.0, 10.0 / 255.0]
        );
    }

    #[test]
    fn single_channel_frames() {
        let gray = Frame::filled(0, 2, 2, &[51]).unwrap();
        assert_eq!(
            extract_features::<f32>(&gray, ChannelSubset::L).unwrap().data(),
            &[0.2f32; 4]
        );
        assert!(matches!(
            extract_features::<f32>(&gray, ChannelSubset::Rgb),
            Err(Error::Argument(_))
        ));
        assert!(matches!("RGBA".parse::<ChannelSubset>(), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn features_in_unit_range(w in 1usize..12, h in 1usize..12, seed in any::<u64>(), k in 0usize..8) {
            let f = random_frame(w, h, 3, seed);
            let t = extract_features::<f32>(&f, ChannelSubset::ALL[k]).unwrap();
            prop_assert_eq!(t.data().len(), w * h * ChannelSubset::ALL[k].cardinality());
            prop_assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn resize_is_idempotent_at_same_size(w in 1usize..20, h in 1usize..20, ow in 1usize..20, oh in 1usize..20, seed in any::<u64>()) {
            let once = resize_aa(&random_frame(w, h, 3, seed), ow, oh).unwrap();
            prop_assert_eq!(resize_aa(&once, ow, oh).unwrap(), once);
        }

        #[test]
        fn integral_downscale_keeps_mean(ow in 1usize..8, oh in 1usize..8, fx in 1usize..5, fy in 1usize..5, seed in any::<u64>()) {
            let f = random_frame(ow * fx, oh * fy, 1, seed);
            let r = resize_aa(&f, ow, oh).unwrap();
            let mean = |p: &[u8]| p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
            prop_assert!((mean(f.pixels()) - mean(r.pixels())).abs() <= 0.5);
            prop_assert_eq!(r.pixels(), &box_oracle(&f, ow, oh)[..]);
        }
    }
}
