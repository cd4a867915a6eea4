use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use verifuse::frameio::{self, SequenceManifest};
use verifuse::nn::{save_weights, ModelSpec, WeightStore};
use verifuse::pipeline::{self, BenchRequest, Pipeline, PipelineConfig, Rates, RunRequest};
use verifuse::{Error, FusionConfig};

/// Verification-cascade frame classifier.
#[derive(Parser)]
#[command(name = "verifuse", version)]
struct Cli {
    /// Worker threads for per-frame preprocessing and inference.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a frame sequence and write detections.
    Run(RunArgs),
    /// Score detections against ground-truth intervals.
    Eval(EvalArgs),
    /// Time per-frame inference through every CNN stage.
    Bench(BenchArgs),
    /// Fuse two synthetic predictors over a label file.
    Simulate(SimulateArgs),
    /// Print the default pipeline config.
    Config,
    /// Write a weight file for the default architecture with seeded random weights.
    InitWeights(InitWeightsArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory holding the frames and, by default, manifest.json.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Ground-truth CSV; enables report.json.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Match tolerance in seconds.
    #[arg(long, default_value_t = pipeline::DEFAULT_TOLERANCE_S)]
    tol: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// detections.csv or predictions.csv
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Frame rate, needed for per-frame predictions files.
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long, default_value_t = pipeline::DEFAULT_TOLERANCE_S)]
    tol: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Defaults to the built-in two-stage config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame directory with manifest.json; seeded random frames otherwise.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Number of random frames when --frames is absent.
    #[arg(long, default_value_t = 4)]
    synthetic: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Also write the reports to DIR/bench.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// One 0/1 ground-truth label per line.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    tpr_c: f64,
    #[arg(long)]
    fpr_c: f64,
    #[arg(long)]
    tpr_l: f64,
    #[arg(long)]
    fpr_l: f64,
    /// Pipeline config supplying the fusion settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame-wise verification only.
    #[arg(long)]
    no_packing: bool,
}

#[derive(Args)]
struct InitWeightsArgs {
    /// 3 for RGB, 2 for a channel pair, 1 for a single channel.
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 300)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<(PipelineConfig, PathBuf), Error> {
    let (mut cfg, base) = match path {
        Some(p) => (PipelineConfig::load(p)?, config_dir(p)),
        None => (PipelineConfig::default(), PathBuf::from(".")),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((cfg, base))
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(a) => {
            let (cfg, base) = load_config(Some(&a.config), cli.seed)?;
            let pipe = Pipeline::build(cfg, &base)?;
            let out = pipeline::run(
                &pipe,
                &RunRequest {
                    frames_dir: &a.frames,
                    manifest: a.manifest.as_deref(),
                    ground_truth: a.gt.as_deref(),
                    out_dir: &a.out,
                    workers: cli.workers,
                    tolerance_s: a.tol,
                },
            )?;
            eprintln!(
                "{} frames, {} fused positives, {} events -> {}",
                out.fused.len(),
                out.fused.positive_count(),
                out.events.len(),
                a.out.display()
            );
        }
        Command::Eval(a) => {
            let report = pipeline::evaluate(&a.detections, &a.gt, a.fps, a.tol)?;
            print!("{}", pipeline::to_json_line(&report));
        }
        Command::Bench(a) => {
            let (cfg, base) = load_config(a.config.as_deref(), cli.seed)?;
            let frames = match &a.frames {
                Some(dir) => {
                    let manifest = SequenceManifest::from_path(&dir.join(pipeline::MANIFEST_NAME))?;
                    frameio::load_sequence_with(dir, &manifest)?
                }
                None => pipeline::synthetic_frames(a.synthetic, cfg.input.width, cfg.input.height, cfg.seed),
            };
            let pipe = Pipeline::build(cfg, &base)?;
            let reports = pipeline::bench(
                &pipe,
                &frames,
                &BenchRequest {
                    warmup: a.warmup,
                    repeats: a.repeats,
                    workers: cli.workers,
                },
            )?;
            let json = pipeline::to_json_line(&reports);
            if let Some(dir) = &a.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let p = dir.join("bench.json");
                std::fs::write(&p, &json).map_err(|e| Error::Io { path: p, source: e })?;
            }
            print!("{json}");
        }
        Command::Simulate(a) => {
            let file = std::fs::File::open(&a.labels).map_err(|e| Error::Io {
                path: a.labels.clone(),
                source: e,
            })?;
            let truth = pipeline::parse_labels(file)?;
            let mut fusion = match &a.config {
                Some(p) => PipelineConfig::load(p)?.fusion,
                None => FusionConfig::default(),
            };
            if a.no_packing {
                fusion.packing_enabled = false;
            }
            let report = pipeline::simulate(
                &truth,
                Rates {
                    tpr: a.tpr_c,
                    fpr: a.fpr_c,
                },
                Rates {
                    tpr: a.tpr_l,
                    fpr: a.fpr_l,
                },
                &fusion,
                cli.seed.unwrap_or(0),
            )?;
            print!("{}", pipeline::to_json_line(&report));
        }
        Command::Config => println!("{}", PipelineConfig::default().to_json()),
        Command::InitWeights(a) => {
            let spec = ModelSpec::default_model(a.size, a.size, a.channels)?;
            let w = WeightStore::<f32>::random(&spec, cli.seed.unwrap_or(0));
            save_weights(&a.out, &spec, &w)?;
            eprintln!("{} parameters -> {}", spec.count_params(), a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
