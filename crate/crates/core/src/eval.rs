//! Scoring fused predictions against interval ground truth, synthetic
//! predictors, and inference timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Label, Prediction, PredictionSeries};
use crate::error::{Error, Result};
use crate::frameio::{Frame, GroundTruth};
use crate::nn::Model;
use crate::preprocess::{extract_features_with, ChannelSubset, LumaCoefficients};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Default matching tolerance, seconds.
pub const MATCH_TOLERANCE_S: f64 = 1.0;

/// A maximal run of positive frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub start_frame: usize,
    pub end_frame: usize,
    pub timestamp_s: f64,
}

pub fn events_from_series(series: &PredictionSeries, fps: f64) -> Result<Vec<DetectionEvent>> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Argument(format!("fps must be > 0, got {fps}")));
    }
    let mut events = Vec::new();
    let mut start = None;
    let n = series.len();
    for i in 0..=n {
        let pos = i < n && series.is_positive(i);
        match (pos, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                events.push(DetectionEvent {
                    start_frame: s,
                    end_frame: i - 1,
                    timestamp_s: s as f64 / fps,
                });
                start = None;
            }
            _ => {}
        }
    }
    Ok(events)
}

/// Precision/recall/F1 for one video. `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// number of detection events scored
    pub events: usize,
    /// events within tolerance of some interval
    pub matched: usize,
    pub unmatched: usize,
    pub intervals: usize,
    pub recalled_intervals: usize,
}

pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

impl ScoreReport {
    fn from_counts(events: usize, matched: usize, intervals: usize, recalled: usize) -> Self {
        let precision = (events > 0).then(|| matched as f64 / events as f64);
        let recall = (intervals > 0).then(|| recalled as f64 / intervals as f64);
        Self {
            id: None,
            precision,
            recall,
            f1: f1_score(precision, recall),
            events,
            matched,
            unmatched: events - matched,
            intervals,
            recalled_intervals: recalled,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }
}

/// Scores event timestamps against ground truth: an event matches when it lies
/// within `tol` seconds of any interval, and an interval is recalled when at
/// least one event matches it.
pub fn match_score(timestamps: &[f64], gt: &GroundTruth, tol: f64) -> Result<ScoreReport> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Argument(format!("tolerance must be >= 0, got {tol}")));
    }
    let mut sorted: Vec<f64> = timestamps.to_vec();
    sorted.sort_by(f64::total_cmp);
    // difference array over sorted events: +1 at a covered range start, -1 past its end
    let mut cover = vec![0i64; sorted.len() + 1];
    let mut recalled = 0;
    for iv in gt.intervals() {
        // both predicates are monotone in t and agree with Interval::distance <= tol
        let lo = sorted.partition_point(|&t| t < iv.start_s && iv.start_s - t > tol);
        let hi = sorted.partition_point(|&t| t <= iv.end_s || t - iv.end_s <= tol);
        if lo < hi {
            recalled += 1;
            cover[lo] += 1;
            cover[hi] -= 1;
        }
    }
    let mut depth = 0;
    let matched = cover[..sorted.len()]
        .iter()
        .filter(|&&d| {
            depth += d;
            depth > 0
        })
        .count();
    Ok(ScoreReport::from_counts(sorted.len(), matched, gt.len(), recalled))
}

pub fn match_events(events: &[DetectionEvent], gt: &GroundTruth, tol: f64) -> Result<ScoreReport> {
    let ts: Vec<f64> = events.iter().map(|e| e.timestamp_s).collect();
    match_score(&ts, gt, tol)
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

/// Component-wise median over defined values. Counts are summed.
pub fn median_report(reports: &[ScoreReport]) -> Result<ScoreReport> {
    if reports.is_empty() {
        return Err(Error::Argument("median of zero reports".into()));
    }
    let defined = |f: fn(&ScoreReport) -> Option<f64>| median(reports.iter().filter_map(f).collect());
    let sum = |f: fn(&ScoreReport) -> usize| reports.iter().map(f).sum();
    Ok(ScoreReport {
        id: Some("median".into()),
        precision: defined(|r| r.precision),
        recall: defined(|r| r.recall),
        f1: defined(|r| r.f1),
        events: sum(|r| r.events),
        matched: sum(|r| r.matched),
        unmatched: sum(|r| r.unmatched),
        intervals: sum(|r| r.intervals),
        recalled_intervals: sum(|r| r.recalled_intervals),
    })
}

/// Independent Bernoulli predictor: positive with probability `tpr` on true
/// frames and `fpr` on false ones. One uniform draw per frame, in order.
pub fn simulate_predictor(gt_labels: &[bool], tpr: f64, fpr: f64, seed: u64) -> Result<PredictionSeries> {
    for (what, v) in [("tpr", tpr), ("fpr", fpr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Argument(format!("{what} must be in [0, 1], got {v}")));
        }
    }
    let mut rng = SplitMix64::new(seed);
    let items = gt_labels
        .iter()
        .enumerate()
        .map(|(i, &truth)| {
            let p = if truth { tpr } else { fpr };
            let pos = rng.next_f64() < p;
            Prediction {
                frame_index: i,
                label: Label::from_bool(pos),
                score: if pos { 1.0 } else { 0.0 },
            }
        })
        .collect();
    PredictionSeries::new(items)
}

/// Frame-level confusion counts of a prediction series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn of(series: &PredictionSeries, truth: &[bool]) -> Result<Self> {
        if series.len() != truth.len() {
            return Err(Error::Contract(format!(
                "{} predictions for {} ground-truth frames",
                series.len(),
                truth.len()
            )));
        }
        let mut c = Confusion::default();
        for (p, &t) in series.labels().into_iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        f1_score(self.precision(), self.recall())
    }

    pub fn fpr(&self) -> Option<f64> {
        let d = self.fp + self.tn;
        (d > 0).then(|| self.fp as f64 / d as f64)
    }
}

// --- Benchmarking ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::Argument("no latency samples".into()));
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        // nearest-rank percentile
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            mean: s.iter().sum::<f64>() / n as f64,
            median: median(s.clone()).unwrap_or_default(),
            p95: s[rank - 1],
            min: s[0],
            max: s[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub name: String,
    pub subset: ChannelSubset,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub warmup: usize,
    pub samples_ms: Vec<f64>,
    pub latency_ms: LatencyStats,
    pub params: Vec<ModelParams>,
    pub params_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput: Option<Throughput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub workers: usize,
    pub frames: usize,
    pub wall_ms: f64,
    pub frames_per_s: f64,
}

/// A model under benchmark together with the features it consumes.
pub struct BenchModel<'a, T> {
    pub name: &'a str,
    pub subset: ChannelSubset,
    pub model: &'a Model<T>,
}

fn run_models<T: Scalar>(models: &[BenchModel<'_, T>], frame: &Frame, luma: &LumaCoefficients) -> Result<()> {
    for m in models {
        let x = extract_features_with::<T>(frame, m.subset, luma)?;
        m.model.forward(&x)?;
    }
    Ok(())
}

/// Times feature extraction plus forward passes through every model, one
/// sample per frame, on the calling thread. `warmup` extra passes (cycling
/// over `frames`) run first and are not recorded.
pub fn bench_inference<T: Scalar>(
    models: &[BenchModel<'_, T>],
    frames: &[Frame],
    warmup: usize,
    luma: &LumaCoefficients,
) -> Result<BenchReport> {
    if frames.is_empty() {
        return Err(Error::Argument("benchmark needs at least one frame".into()));
    }
    for i in 0..warmup {
        run_models(models, &frames[i % frames.len()], luma)?;
    }
    let mut samples = Vec::with_capacity(frames.len());
    for f in frames {
        let t0 = Instant::now();
        run_models(models, f, luma)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let params: Vec<ModelParams> = models
        .iter()
        .map(|m| ModelParams {
            name: m.name.to_string(),
            subset: m.subset,
            params: m.model.count_params(),
        })
        .collect();
    Ok(BenchReport {
        frames: frames.len(),
        warmup,
        latency_ms: LatencyStats::from_samples(&samples)?,
        samples_ms: samples,
        params_total: params.iter().map(|p| p.params).sum(),
        params,
        throughput: None,
    })
}

/// Wall-clock throughput with `workers` threads sharing the frames.
pub fn bench_throughput<T: Scalar>(
    models: &[BenchModel<'_, T>],
    frames: &[Frame],
    workers: usize,
    luma: &LumaCoefficients,
) -> Result<Throughput> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let t0 = Instant::now();
    pool.install(|| frames.par_iter().try_for_each(|f| run_models(models, f, luma)))?;
    let wall = t0.elapsed().as_secs_f64();
    Ok(Throughput {
        workers: workers.max(1),
        frames: frames.len(),
        wall_ms: wall * 1e3,
        frames_per_s: if wall > 0.0 {
            frames.len() as f64 / wall
        } else {
            f64::INFINITY
        },
    })
}
