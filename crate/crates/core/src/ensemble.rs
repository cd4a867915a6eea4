//! Verification-based fusion of per-frame predictions.
//!
//! The first stage proposes positives; every later stage can only confirm or
//! veto them. For video, the first stage is smoothed by majority packing and
//! confirmation looks at a small neighborhood of frames in the next stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ChannelSubset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub frame_index: usize,
    pub label: Label,
    pub score: f64,
}

/// Per-frame predictions with indices `0..len`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSeries {
    items: Vec<Prediction>,
}

impl PredictionSeries {
    pub fn new(items: Vec<Prediction>) -> Result<Self> {
        for (i, p) in items.iter().enumerate() {
            if p.frame_index != i {
                return Err(Error::Contract(format!(
                    "prediction {i} has frame index {}, series must be contiguous from 0",
                    p.frame_index
                )));
            }
            if !(0.0..=1.0).contains(&p.score) {
                return Err(Error::Contract(format!("frame {i} score {} outside [0, 1]", p.score)));
            }
        }
        Ok(Self { items })
    }

    /// Hard labels with score 1 for positives and 0 for negatives.
    pub fn from_labels(labels: &[bool]) -> Self {
        Self {
            items: labels
                .iter()
                .enumerate()
                .map(|(i, &b)| Prediction {
                    frame_index: i,
                    label: Label::from_bool(b),
                    score: if b { 1.0 } else { 0.0 },
                })
                .collect(),
        }
    }

    pub fn from_scores(scores: &[f64], threshold: f64) -> Result<Self> {
        Self::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| Prediction {
                    frame_index: i,
                    label: Label::from_bool(s >= threshold),
                    score: s,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Prediction] {
        &self.items
    }

    pub fn get(&self, i: usize) -> Option<&Prediction> {
        self.items.get(i)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.items.iter().map(|p| p.label.is_positive()).collect()
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.items[i].label.is_positive()
    }

    pub fn positive_count(&self) -> usize {
        self.items.iter().filter(|p| p.label.is_positive()).count()
    }

    fn map_labels(&self, mut f: impl FnMut(usize, &Prediction) -> (Label, f64)) -> Self {
        Self {
            items: self
                .items
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let (label, score) = f(i, p);
                    Prediction {
                        frame_index: i,
                        label,
                        score,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Frames per majority pack on the first stage.
    pub pack_size: usize,
    /// Width of the confirmation window in later stages.
    pub neighbor_window: usize,
    pub packing_enabled: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            pack_size: 3,
            neighbor_window: 3,
            packing_enabled: true,
        }
    }
}

impl FusionConfig {
    /// Frame-by-frame verification only.
    pub fn frame_wise() -> Self {
        Self {
            packing_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_odd("pack_size", self.pack_size)?;
        check_odd("neighbor_window", self.neighbor_window)
    }
}

fn check_odd(what: &str, v: usize) -> Result<()> {
    if v.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "{what} must be a positive odd number, got {v}"
        )));
    }
    Ok(())
}

fn check_aligned(a: &PredictionSeries, b: &PredictionSeries) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "prediction series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Frame-wise AND: a frame stays positive only if both series call it positive.
/// The fused score is the smaller of the two.
pub fn verify_combine(c: &PredictionSeries, l: &PredictionSeries) -> Result<PredictionSeries> {
    check_aligned(c, l)?;
    Ok(c.map_labels(|i, p| {
        let q = &l.items[i];
        (
            Label::from_bool(p.label.is_positive() && q.label.is_positive()),
            p.score.min(q.score),
        )
    }))
}

/// Majority label over consecutive non-overlapping packs, broadcast back to
/// every member frame. A short trailing pack uses its own majority; ties go negative.
pub fn pack_mode(c: &PredictionSeries, pack_size: usize) -> Result<PredictionSeries> {
    check_odd("pack_size", pack_size)?;
    let mut out = c.clone();
    for pack in out.items.chunks_mut(pack_size) {
        let pos = pack.iter().filter(|p| p.label.is_positive()).count();
        let label = Label::from_bool(2 * pos > pack.len());
        pack.iter_mut().for_each(|p| p.label = label);
    }
    Ok(out)
}

/// 1-N validation: a positive at frame `i` survives iff some frame of `l`
/// within `(window - 1) / 2` of `i` is positive. The window is clipped at
/// the sequence ends.
pub fn neighbor_validate(packed_c: &PredictionSeries, l: &PredictionSeries, window: usize) -> Result<PredictionSeries> {
    check_aligned(packed_c, l)?;
    check_odd("neighbor_window", window)?;
    let half = window / 2;
    let n = l.len();
    Ok(packed_c.map_labels(|i, p| {
        let span = &l.items[i.saturating_sub(half)..(i + half + 1).min(n)];
        let best = span.iter().map(|q| q.score).fold(0.0f64, f64::max);
        let confirmed = p.label.is_positive() && span.iter().any(|q| q.label.is_positive());
        (Label::from_bool(confirmed), p.score.min(best))
    }))
}

/// Two-model video fusion: packing plus neighborhood validation when enabled,
/// otherwise plain frame-wise verification.
pub fn fuse_video(c: &PredictionSeries, l: &PredictionSeries, config: &FusionConfig) -> Result<PredictionSeries> {
    config.validate()?;
    if config.packing_enabled {
        neighbor_validate(&pack_mode(c, config.pack_size)?, l, config.neighbor_window)
    } else {
        verify_combine(c, l)
    }
}

/// Left fold of verification over any number of stages. Each stage confirms
/// the running result of the stages before it.
pub fn chain_fuse(stages: &[PredictionSeries], config: &FusionConfig) -> Result<PredictionSeries> {
    config.validate()?;
    let (first, rest) = stages
        .split_first()
        .ok_or_else(|| Error::Argument("chain needs at least one stage".into()))?;
    if let Some(bad) = rest.iter().find(|s| s.len() != first.len()) {
        return Err(Error::Contract(format!(
            "chain stage lengths differ: {} vs {}",
            first.len(),
            bad.len()
        )));
    }
    let (mut acc, window) = if config.packing_enabled {
        (pack_mode(first, config.pack_size)?, config.neighbor_window)
    } else {
        (first.clone(), 1)
    };
    for stage in rest {
        acc = neighbor_validate(&acc, stage, window)?;
    }
    Ok(acc)
}

/// One link of a verification chain: the features it sees and the model that scores them.
#[derive(Debug, Clone)]
pub struct ChainStage<M> {
    pub name: String,
    pub subset: ChannelSubset,
    pub model: M,
}

/// Each stage must see no more channels than the one it verifies.
pub fn check_contracting<'a>(subsets: impl IntoIterator<Item = &'a ChannelSubset>) -> Result<()> {
    let mut prev = usize::MAX;
    for s in subsets {
        if s.cardinality() > prev {
            return Err(Error::Config(format!(
                "stage subset {s} has more channels than the stage it verifies"
            )));
        }
        prev = s.cardinality();
    }
    Ok(())
}
