//! Brute-force reference implementations. These work on plain `Vec`s and
//! nested loops and share no code with the library paths they check.
#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// --- fusion ------------------------------------------------------------------

/// Majority of each non-overlapping pack, computed per frame from its pack bounds.
pub fn oracle_pack(c: &[bool], pack: usize) -> Vec<bool> {
    let n = c.len();
    (0..n)
        .map(|i| {
            let start = (i / pack) * pack;
            let end = (start + pack).min(n);
            let votes = (start..end).filter(|&j| c[j]).count();
            let members = end - start;
            votes * 2 > members
        })
        .collect()
}

/// `gate[i] && exists j: |i - j| <= half && confirm[j]`.
pub fn oracle_confirm(gate: &[bool], confirm: &[bool], half: usize) -> Vec<bool> {
    let n = gate.len();
    (0..n)
        .map(|i| gate[i] && (0..n).any(|j| confirm[j] && i.abs_diff(j) <= half))
        .collect()
}

pub fn oracle_fuse(c: &[bool], l: &[bool], pack: usize, window: usize, packing: bool) -> Vec<bool> {
    if packing {
        oracle_confirm(&oracle_pack(c, pack), l, window / 2)
    } else {
        (0..c.len()).map(|i| c[i] && l[i]).collect()
    }
}

pub fn oracle_chain(stages: &[Vec<bool>], pack: usize, window: usize, packing: bool) -> Vec<bool> {
    let mut acc = if packing {
        oracle_pack(&stages[0], pack)
    } else {
        stages[0].clone()
    };
    let half = if packing { window / 2 } else { 0 };
    for s in &stages[1..] {
        acc = oracle_confirm(&acc, s, half);
    }
    acc
}

pub fn bits_of(mask: u32, len: usize) -> Vec<bool> {
    (0..len).map(|i| mask >> i & 1 == 1).collect()
}

// --- layers ------------------------------------------------------------------

/// Dense `[h][w][c]` array in f64.
pub type Grid = Vec<Vec<Vec<f64>>>;

pub fn grid(h: usize, w: usize, c: usize, flat: &[f64]) -> Grid {
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| (0..c).map(|k| flat[(y * w + x) * c + k]).collect())
                .collect()
        })
        .collect()
}

/// Zero-pads explicitly, then slides the kernel. `kernel[ky][kx][ci][co]`.
pub fn oracle_conv(input: &Grid, kernel: &[Vec<Vec<Vec<f64>>>], bias: &[f64], stride: usize, same: bool) -> Grid {
    let (h, w) = (input.len(), input[0].len());
    let c = input[0][0].len();
    let (kh, kw) = (kernel.len(), kernel[0].len());
    let f = bias.len();
    let (oh, ow, pt, pl) = if same {
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let ph = ((oh - 1) * stride + kh).saturating_sub(h);
        let pw = ((ow - 1) * stride + kw).saturating_sub(w);
        (oh, ow, ph / 2, pw / 2)
    } else {
        ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
    };
    let ph = (oh - 1) * stride + kh;
    let pw = (ow - 1) * stride + kw;
    let mut padded = vec![vec![vec![0.0; c]; pw.max(w + pl)]; ph.max(h + pt)];
    for y in 0..h {
        for x in 0..w {
            padded[y + pt][x + pl] = input[y][x].clone();
        }
    }
    let mut out = vec![vec![vec![0.0; f]; ow]; oh];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..f {
                let mut s = bias[co];
                for ky in 0..kh {
                    for kx in 0..kw {
                        for ci in 0..c {
                            s += padded[oy * stride + ky][ox * stride + kx][ci] * kernel[ky][kx][ci][co];
                        }
                    }
                }
                out[oy][ox][co] = s;
            }
        }
    }
    out
}

pub fn oracle_maxpool2(input: &Grid) -> Grid {
    let (h, w) = (input.len() / 2, input[0].len() / 2);
    let c = input[0][0].len();
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    (0..c)
                        .map(|k| {
                            let a = input[2 * y][2 * x][k];
                            let b = input[2 * y][2 * x + 1][k];
                            let d = input[2 * y + 1][2 * x][k];
                            let e = input[2 * y + 1][2 * x + 1][k];
                            a.max(b).max(d).max(e)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn oracle_batchnorm(input: &Grid, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Grid {
    input
        .iter()
        .map(|row| {
            row.iter()
                .map(|px| {
                    px.iter()
                        .enumerate()
                        .map(|(k, &x)| gamma[k] * (x - mean[k]) / (var[k] + eps).sqrt() + beta[k])
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `w[i][o]`, activation 0 = none, 1 = relu, 2 = sigmoid.
pub fn oracle_dense(x: &[f64], w: &[Vec<f64>], b: &[f64], act: u8) -> Vec<f64> {
    (0..b.len())
        .map(|o| {
            let mut s = b[o];
            for i in 0..x.len() {
                s += w[i][o] * x[i];
            }
            match act {
                1 => s.max(0.0),
                2 => 1.0 / (1.0 + (-s).exp()),
                _ => s,
            }
        })
        .collect()
}

pub fn oracle_flatten(g: &Grid) -> Vec<f64> {
    let mut out = Vec::new();
    for row in g {
        for px in row {
            for &v in px {
                out.push(v);
            }
        }
    }
    out
}

pub fn flat_grid(g: &Grid) -> Vec<f64> {
    oracle_flatten(g)
}

// --- matching ------------------------------------------------------------------

/// All-pairs matcher: (matched events, recalled intervals).
pub fn oracle_match(events: &[f64], intervals: &[(f64, f64)], tol: f64) -> (usize, usize) {
    let near = |t: f64, (s, e): (f64, f64)| {
        let d = if t < s {
            s - t
        } else if t > e {
            t - e
        } else {
            0.0
        };
        d <= tol
    };
    let matched = events
        .iter()
        .filter(|&&t| intervals.iter().any(|&iv| near(t, iv)))
        .count();
    let recalled = intervals
        .iter()
        .filter(|&&iv| events.iter().any(|&t| near(t, iv)))
        .count();
    (matched, recalled)
}
