//! End-to-end frame pipeline: resize, per-stage features and scoring,
//! verification fusion, event extraction and scoring.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{chain_fuse, check_contracting, ChainStage, FusionConfig, PredictionSeries};
use crate::error::{Error, Result};
use crate::eval::{
    bench_inference, bench_throughput, events_from_series, match_events, match_score, simulate_predictor, BenchModel,
    BenchReport, Confusion, DetectionEvent, ScoreReport, MATCH_TOLERANCE_S,
};
use crate::frameio::{self, Detection, Frame, SequenceManifest};
use crate::nn::{Model, ModelSpec, WeightStore};
use crate::preprocess::{extract_features_with, resize_aa, ChannelSubset, LumaCoefficients, DEFAULT_SIZE};
use crate::rng::SplitMix64;
use crate::tensor::FeatureTensor;

pub const CONFIG_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSize {
    pub width: usize,
    pub height: usize,
}

impl Default for InputSize {
    fn default() -> Self {
        Self {
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageModelConfig {
    /// Weight container on disk; relative paths resolve against the config file.
    Cnn { weights: PathBuf },
    /// Default architecture with weights drawn from the pipeline seed.
    RandomCnn,
    /// Score is the mean feature intensity; no weights.
    MeanIntensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub subset: ChannelSubset,
    pub model: StageModelConfig,
    /// Overrides the pipeline threshold for this stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

fn default_threshold() -> f64 {
    crate::nn::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub config_version: u32,
    #[serde(default)]
    pub input: InputSize,
    #[serde(default)]
    pub luma: LumaCoefficients,
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Overrides the manifest frame rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    /// Color stage verified by a luma stage, both on the default architecture
    /// with seeded random weights.
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            input: InputSize::default(),
            luma: LumaCoefficients::BT601,
            stages: vec![
                StageConfig {
                    name: "C".into(),
                    subset: ChannelSubset::Rgb,
                    model: StageModelConfig::RandomCnn,
                    threshold: None,
                },
                StageConfig {
                    name: "L".into(),
                    subset: ChannelSubset::L,
                    model: StageModelConfig::RandomCnn,
                    threshold: None,
                },
            ],
            fusion: FusionConfig::default(),
            threshold: default_threshold(),
            fps: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config_version {}, expected {CONFIG_VERSION}",
                self.config_version
            )));
        }
        if self.input.width == 0 || self.input.height == 0 {
            return Err(Error::Config("input dimensions must be >= 1".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("at least one stage is required".into()));
        }
        check_contracting(self.stages.iter().map(|s| &s.subset))?;
        let in_open_unit = |t: f64| t > 0.0 && t < 1.0;
        if !in_open_unit(self.threshold) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        for s in &self.stages {
            if let Some(t) = s.threshold.filter(|t| !in_open_unit(*t)) {
                return Err(Error::Config(format!("stage {} threshold {t} outside (0, 1)", s.name)));
            }
        }
        if let Some(f) = self.fps.filter(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config(format!("fps override {f} must be > 0")));
        }
        self.fusion.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Scores one stage's features.
#[derive(Debug, Clone)]
pub enum StageModel {
    Cnn(Box<Model<f32>>),
    MeanIntensity,
}

impl StageModel {
    pub fn score(&self, x: &FeatureTensor<f32>) -> Result<f64> {
        match self {
            StageModel::Cnn(m) => Ok(m.forward(x)?.probability() as f64),
            StageModel::MeanIntensity => {
                let d = x.data();
                let sum: f64 = d.iter().map(|&v| v as f64).sum();
                Ok(if d.is_empty() {
                    0.0
                } else {
                    (sum / d.len() as f64).clamp(0.0, 1.0)
                })
            }
        }
    }

    pub fn params(&self) -> usize {
        match self {
            StageModel::Cnn(m) => m.count_params(),
            StageModel::MeanIntensity => 0,
        }
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    stages: Vec<ChainStage<StageModel>>,
}

impl Pipeline {
    /// Resolves and loads every stage model. `base_dir` anchors relative weight paths.
    pub fn build(config: PipelineConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::with_capacity(config.stages.len());
        for (k, sc) in config.stages.iter().enumerate() {
            let expect = [config.input.height, config.input.width, sc.subset.cardinality()];
            let model = match &sc.model {
                StageModelConfig::Cnn { weights } => {
                    let path = base_dir.join(weights);
                    let m = Model::<f32>::load(&path)?;
                    if m.spec().input() != expect {
                        return Err(Error::Config(format!(
                            "stage {}: model input {:?} does not match {:?}",
                            sc.name,
                            m.spec().input(),
                            expect
                        )));
                    }
                    StageModel::Cnn(Box::new(m))
                }
                StageModelConfig::RandomCnn => {
                    let spec = ModelSpec::default_model(expect[0], expect[1], expect[2])?;
                    let w = WeightStore::random(&spec, SplitMix64::derive(config.seed, k as u64));
                    StageModel::Cnn(Box::new(Model::new(spec, w)?))
                }
                StageModelConfig::MeanIntensity => StageModel::MeanIntensity,
            };
            stages.push(ChainStage {
                name: sc.name.clone(),
                subset: sc.subset,
                model,
            });
        }
        Ok(Self { config, stages })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn stages(&self) -> &[ChainStage<StageModel>] {
        &self.stages
    }

    /// Resizes a frame to the model input size.
    pub fn prepare(&self, frame: &Frame) -> Result<Frame> {
        resize_aa(frame, self.config.input.width, self.config.input.height)
    }

    fn frame_scores(&self, frame: &Frame) -> Result<Vec<f64>> {
        let frame = self.prepare(frame)?;
        self.stages
            .iter()
            .map(|st| {
                let x = extract_features_with::<f32>(&frame, st.subset, &self.config.luma)?;
                st.model.score(&x)
            })
            .collect()
    }

    /// Per-stage prediction series. Frames are processed on `workers` threads;
    /// results are assembled in frame order.
    pub fn predict(&self, frames: &[Frame], workers: usize) -> Result<Vec<PredictionSeries>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
        let per_frame: Vec<Vec<f64>> =
            pool.install(|| frames.par_iter().map(|f| self.frame_scores(f)).collect::<Result<_>>())?;
        self.stages
            .iter()
            .enumerate()
            .map(|(k, st)| {
                let threshold = self.config.stages[k].threshold.unwrap_or(self.config.threshold);
                let scores: Vec<f64> = per_frame.iter().map(|s| s[k]).collect();
                PredictionSeries::from_scores(&scores, threshold).map_err(|e| match e {
                    Error::Contract(msg) => Error::Contract(format!("stage {}: {msg}", st.name)),
                    other => other,
                })
            })
            .collect()
    }

    pub fn fuse(&self, stage_series: &[PredictionSeries]) -> Result<PredictionSeries> {
        chain_fuse(stage_series, &self.config.fusion)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub fps: f64,
    pub stage_series: Vec<PredictionSeries>,
    pub fused: PredictionSeries,
    pub events: Vec<DetectionEvent>,
    pub report: Option<ScoreReport>,
}

pub struct RunRequest<'a> {
    pub frames_dir: &'a Path,
    /// Defaults to `manifest.json` inside `frames_dir`.
    pub manifest: Option<&'a Path>,
    pub ground_truth: Option<&'a Path>,
    pub out_dir: &'a Path,
    pub workers: usize,
    pub tolerance_s: f64,
}

/// Runs the full pipeline and writes `detections.csv`, `predictions.csv` and,
/// with ground truth, `report.json` into `out_dir`.
pub fn run(pipeline: &Pipeline, req: &RunRequest<'_>) -> Result<RunOutput> {
    let manifest_path = req
        .manifest
        .map(Path::to_path_buf)
        .unwrap_or_else(|| req.frames_dir.join(MANIFEST_NAME));
    let manifest = SequenceManifest::from_path(&manifest_path)?;
    let gt = req.ground_truth.map(frameio::load_ground_truth).transpose()?;
    let frames = frameio::load_sequence_with(req.frames_dir, &manifest)?;
    let fps = pipeline.config.fps.unwrap_or(manifest.fps);

    let stage_series = pipeline.predict(&frames, req.workers)?;
    let fused = pipeline.fuse(&stage_series)?;
    let events = events_from_series(&fused, fps)?;
    let report = gt
        .as_ref()
        .map(|g| match_events(&events, g, req.tolerance_s))
        .transpose()?;

    fs::create_dir_all(req.out_dir).map_err(|e| Error::io(req.out_dir, e))?;
    let detections: Vec<Detection> = events
        .iter()
        .map(|ev| Detection {
            timestamp_s: ev.timestamp_s,
            score: fused.items()[ev.start_frame..=ev.end_frame]
                .iter()
                .map(|p| p.score)
                .fold(0.0, f64::max),
        })
        .collect();
    frameio::write_detections(&detections, &req.out_dir.join("detections.csv"))?;
    let names: Vec<&str> = pipeline.stages.iter().map(|s| s.name.as_str()).collect();
    write_file(
        &req.out_dir.join("predictions.csv"),
        &format_predictions(&fused, &stage_series, &names),
    )?;
    if let Some(r) = &report {
        write_file(&req.out_dir.join("report.json"), &to_json_line(r))?;
    }
    Ok(RunOutput {
        fps,
        stage_series,
        fused,
        events,
        report,
    })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn to_json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// `frame_index,label,score` for the fused series, then one 0/1 column per stage.
pub fn format_predictions(fused: &PredictionSeries, stages: &[PredictionSeries], names: &[&str]) -> String {
    let mut out = String::from("frame_index,label,score");
    for n in names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for (i, p) in fused.items().iter().enumerate() {
        let _ = write!(out, "{},{},{}", i, p.label.is_positive() as u8, p.score);
        for s in stages {
            let _ = write!(out, ",{}", s.is_positive(i) as u8);
        }
        out.push('\n');
    }
    out
}

/// Reads the first three columns of a predictions file back into a series.
pub fn parse_predictions<R: Read>(r: R) -> Result<PredictionSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r);
    let mut items = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let field = |k: usize| {
            rec.get(k).ok_or_else(|| Error::Parse {
                row,
                msg: "missing field".into(),
            })
        };
        let bad = |s: &str| Error::Parse {
            row,
            msg: format!("bad value `{s}`"),
        };
        let idx = field(0)?.parse::<usize>().map_err(|_| bad(&rec[0]))?;
        let label = match field(1)? {
            "1" => true,
            "0" => false,
            s => return Err(bad(s)),
        };
        let score = field(2)?.parse::<f64>().map_err(|_| bad(&rec[2]))?;
        items.push(crate::ensemble::Prediction {
            frame_index: idx,
            label: crate::ensemble::Label::from_bool(label),
            score,
        });
    }
    PredictionSeries::new(items).map_err(|e| Error::Parse {
        row: 0,
        msg: e.to_string(),
    })
}

/// Scores a detections CSV (`timestamp_s,score`) or a predictions CSV
/// (`frame_index,...`, which needs `fps`) against ground truth.
pub fn evaluate(detections: &Path, ground_truth: &Path, fps: Option<f64>, tol: f64) -> Result<ScoreReport> {
    let gt = frameio::load_ground_truth(ground_truth)?;
    let text = fs::read_to_string(detections).map_err(|e| Error::io(detections, e))?;
    let id = detections.file_stem().map(|s| s.to_string_lossy().into_owned());
    let report = if text.starts_with("frame_index") {
        let fps = fps.ok_or_else(|| Error::Argument("per-frame predictions need --fps".into()))?;
        let series = parse_predictions(text.as_bytes())?;
        match_events(&events_from_series(&series, fps)?, &gt, tol)?
    } else {
        let dets = frameio::parse_detections(text.as_bytes())?;
        let ts: Vec<f64> = dets.iter().map(|d| d.timestamp_s).collect();
        match_score(&ts, &gt, tol)?
    };
    Ok(match id {
        Some(id) => report.with_id(id),
        None => report,
    })
}

pub struct BenchRequest {
    pub warmup: usize,
    pub repeats: usize,
    pub workers: usize,
}

/// One [`BenchReport`] per repeat; frames are resized to the model input before timing.
pub fn bench(pipeline: &Pipeline, frames: &[Frame], req: &BenchRequest) -> Result<Vec<BenchReport>> {
    if frames.is_empty() {
        return Err(Error::Argument("benchmark needs at least one frame".into()));
    }
    if req.repeats == 0 {
        return Err(Error::Argument("repeats must be >= 1".into()));
    }
    let prepared = frames.iter().map(|f| pipeline.prepare(f)).collect::<Result<Vec<_>>>()?;
    let models: Vec<BenchModel<'_, f32>> = pipeline
        .stages
        .iter()
        .filter_map(|st| match &st.model {
            StageModel::Cnn(m) => Some(BenchModel {
                name: &st.name,
                subset: st.subset,
                model: m,
            }),
            StageModel::MeanIntensity => None,
        })
        .collect();
    if models.is_empty() {
        return Err(Error::Config("no CNN stages to benchmark".into()));
    }
    (0..req.repeats)
        .map(|_| {
            let mut r = bench_inference(&models, &prepared, req.warmup, &pipeline.config.luma)?;
            if req.workers > 1 {
                r.throughput = Some(bench_throughput(
                    &models,
                    &prepared,
                    req.workers,
                    &pipeline.config.luma,
                )?);
            }
            Ok(r)
        })
        .collect()
}

/// Seeded random RGB frames of the given size.
pub fn synthetic_frames(count: usize, width: usize, height: usize, seed: u64) -> Vec<Frame> {
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|i| {
            let px = (0..width * height * 3).map(|_| (rng.next_u64() >> 56) as u8).collect();
            Frame::new(i, width, height, 3, px).expect("sized buffer")
        })
        .collect()
}

/// Reads one 0/1 (or true/false) label per line; a `label` header and blank lines are skipped.
pub fn parse_labels<R: Read>(mut r: R) -> Result<Vec<bool>> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(|e| Error::Parse {
        row: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v = line.trim();
        match v {
            "" => {}
            "label" if i == 0 => {}
            "1" | "true" => out.push(true),
            "0" | "false" => out.push(false),
            other => {
                return Err(Error::Parse {
                    row: i + 1,
                    msg: format!("expected 0 or 1, got `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub positives: usize,
    pub confusion: Confusion,
}

impl SeriesStats {
    fn of(series: &PredictionSeries, truth: &[bool]) -> Result<Self> {
        let c = Confusion::of(series, truth)?;
        Ok(Self {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            fpr: c.fpr(),
            positives: series.positive_count(),
            confusion: c,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub frames: usize,
    pub seed: u64,
    pub model_c: Rates,
    pub model_l: Rates,
    pub fusion: FusionConfig,
    pub c_only: SeriesStats,
    pub fused: SeriesStats,
}

/// Two independent synthetic predictors fused as C → L. Stage seeds are
/// sub-streams 0 and 1 of `seed`.
pub fn simulate(truth: &[bool], c: Rates, l: Rates, fusion: &FusionConfig, seed: u64) -> Result<SimulationReport> {
    let pc = simulate_predictor(truth, c.tpr, c.fpr, SplitMix64::derive(seed, 0))?;
    let pl = simulate_predictor(truth, l.tpr, l.fpr, SplitMix64::derive(seed, 1))?;
    let fused = crate::ensemble::fuse_video(&pc, &pl, fusion)?;
    Ok(SimulationReport {
        frames: truth.len(),
        seed,
        model_c: c,
        model_l: l,
        fusion: *fusion,
        c_only: SeriesStats::of(&pc, truth)?,
        fused: SeriesStats::of(&fused, truth)?,
    })
}

pub const DEFAULT_TOLERANCE_S: f64 = MATCH_TOLERANCE_S;
