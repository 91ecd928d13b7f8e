//! Command-line front end.
//!
//! Every subcommand reads the same JSON configuration layout ([`PipelineConfig`]), writes its
//! artifacts below `--out`, and records the resolved configuration in `<out>/run.json`.
//! Passing that `run.json` back as `--config` repeats the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::io::{
    read_detections_csv, read_instances_png, read_json, read_points_csv, read_rgb_png, write_detections_csv,
    write_instances_png, write_json, write_mask_png, write_points_csv, write_probability_png, write_repel_png,
    write_rgb_png, write_text, write_tristate_png,
};
use crate::data::{
    assign_splits, generate_synthetic, AugmentOp, Manifest, ManifestEntry, NormStats, Provenance, Sample, Split,
    SynthSpec,
};
use crate::error::Error;
use crate::grid::Grid;
use crate::metrics::DEFAULT_MATCH_RADIUS;
use crate::model::{train, ModelParams, TrainConfig, TrainMode};
use crate::pipeline::{
    build_training_set, encode_sample, expand_with_augmentation, predict_sample, score_image, summarize, EncodeConfig,
    PredictConfig, Prediction,
};
use crate::post::{Detection, InstanceMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Ops applied in order to every augmented copy.
    pub ops: Vec<AugmentOp>,
    /// Augmented copies added per training image; 0 disables augmentation.
    pub copies: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            ops: AugmentOp::default_random(),
            copies: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// A detection matches an annotation within this many pixels.
    pub match_radius: f64,
    /// Split that `pipeline` predicts on and scores.
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            match_radius: DEFAULT_MATCH_RADIUS,
            split: Split::Test,
        }
    }
}

/// The whole configuration. Each subcommand uses the sections it needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: SynthSpec,
    pub split_seed: u64,
    pub encode: EncodeConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub mode: TrainMode,
    pub predict: PredictConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Replaces every seed with `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.split_seed = seed;
        self.augment.seed = seed;
        self.train.seed = seed;
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let section = |name: &'static str| move |e: Error| ConfigError::from_error(name, e);
        self.synth.validate().map_err(section("synth"))?;
        self.encode.repel.validate().map_err(section("encode.repel"))?;
        if !(self.encode.dot_radius >= 0.0 && self.encode.dot_radius.is_finite()) {
            return Err(ConfigError::field("encode.dot_radius", "must be finite and >= 0"));
        }
        if !(self.encode.cluster.distance_weight >= 0.0 && self.encode.cluster.distance_weight.is_finite()) {
            return Err(ConfigError::field(
                "encode.cluster.distance_weight",
                "must be finite and >= 0",
            ));
        }
        self.train.validate().map_err(section("train"))?;
        if self.predict.min_distance == 0 {
            return Err(ConfigError::field("predict.min_distance", "must be >= 1"));
        }
        if !(self.eval.match_radius > 0.0) {
            return Err(ConfigError::field("eval.match_radius", "must be > 0"));
        }
        Ok(())
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub command: String,
    /// Inputs given on the command line, other than `--out` and `--config`.
    #[serde(default)]
    pub inputs: serde_json::Map<String, serde_json::Value>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }

    fn from_error(section: &str, e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => Self::field(format!("{section}.{name}"), reason),
            other => Self::field(section, other.to_string()),
        }
    }
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pointseg",
    version,
    about = "Cell detection and segmentation from point annotations"
)]
struct Cli {
    /// Worker threads for per-image stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest and an 80/10/10 split.
    Synth(SynthArgs),
    /// Write Voronoi, cluster, repel and filtered-repel targets for each image.
    Encode(EncodeArgs),
    /// Train on the training split of a dataset.
    Train(TrainArgs),
    /// Predict probability maps, masks, instances, detections and overlays.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Run synth, encode, train, predict and eval in sequence.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON configuration, or a `run.json` from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator spec (JSON). Defaults to the built-in desk-scale spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Dataset directory containing `manifest.json`.
    #[arg(long, conflicts_with_all = ["image", "points"])]
    data: Option<PathBuf>,
    /// Single RGB PNG.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Point CSV for `--image`.
    #[arg(long, requires = "image")]
    points: Option<PathBuf>,
    /// Restrict `--data` to one split.
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory containing `manifest.json`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `predict`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
    #[command(flatten)]
    config: ConfigArg,
    /// Directory for `report.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
    /// Print the default configuration and exit.
    #[arg(long, exclusive = true)]
    print_config: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{s}` (train, val, test)")),
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code: 0 on success,
/// 2 for usage or configuration errors, 1 for runtime failures. Errors are printed to
/// stderr as a single JSON object.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match dispatch(cli.command, cli.seed) {
        Ok(()) => 0,
        Err(Failure::Config(e)) => {
            eprintln!("{}", json!({"error": "config", "field": e.field, "message": e.message}));
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("{}", json!({"error": "runtime", "message": chain_message(&e)}));
            1
        }
    }
}

/// The error and its causes joined by `: `, skipping causes already quoted by their parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if message.contains(&text) {
            continue;
        }
        if !message.is_empty() {
            message.push_str(": ");
        }
        message.push_str(&text);
    }
    message
}

fn dispatch(command: Command, seed: Option<u64>) -> Result<(), Failure> {
    match command {
        Command::Synth(args) => {
            let mut config = load_config(args.config.config.as_deref(), seed)?;
            if let Some(path) = &args.spec {
                config.synth = parse_json_file(path, "synth")?;
                if let Some(s) = seed {
                    config.synth.seed = s;
                }
                config.validate()?;
            }
            cmd_synth(&config, &args.out)?;
            write_run(&args.out, "synth", serde_json::Map::new(), &config)
        }
        Command::Encode(args) => {
            let config = load_config(args.config.config.as_deref(), seed)?;
            let inputs = describe_inputs(&args.inputs);
            cmd_encode(&config, &args.inputs, &args.out)?;
            write_run(&args.out, "encode", inputs, &config)
        }
        Command::Train(args) => {
            let config = load_config(args.config.config.as_deref(), seed)?;
            cmd_train(&config, &args.data, &args.out)?;
            write_run(&args.out, "train", path_input("data", &args.data), &config)
        }
        Command::Predict(args) => {
            let config = load_config(args.config.config.as_deref(), seed)?;
            let mut inputs = describe_inputs(&args.inputs);
            inputs.extend(path_input("model", &args.model));
            cmd_predict(&config, &args.model, &args.inputs, &args.out)?;
            write_run(&args.out, "predict", inputs, &config)
        }
        Command::Eval(args) => {
            let config = load_config(args.config.config.as_deref(), seed)?;
            let split = args.split.unwrap_or(config.eval.split);
            cmd_eval(&config, &args.data, &args.predictions, split, &args.out)?;
            let mut inputs = path_input("data", &args.data);
            inputs.extend(path_input("predictions", &args.predictions));
            write_run(&args.out, "eval", inputs, &config)
        }
        Command::Pipeline(args) => {
            if args.print_config {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&PipelineConfig::default()).expect("serializable")
                );
                return Ok(());
            }
            let out = args.out.expect("clap requires --out without --print-config");
            let config = load_config(args.config.config.as_deref(), seed)?;
            cmd_pipeline(&config, &out)?;
            write_run(&out, "pipeline", serde_json::Map::new(), &config)
        }
    }
}

fn parse_json_file<T: serde::de::DeserializeOwned>(path: &Path, prefix: &str) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)?;
    parse_json_text(&text, prefix).map_err(Failure::Config)
}

fn parse_json_text<T: serde::de::DeserializeOwned>(text: &str, prefix: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = match (prefix.is_empty(), path.as_str()) {
            (true, p) => p.to_string(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        ConfigError::field(field, e.into_inner().to_string())
    })
}

/// Reads a configuration or a `run.json`, applies `--seed`, and validates.
pub fn parse_config(text: &str, seed: Option<u64>) -> Result<PipelineConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::field(".", e.to_string()))?;
    let is_run = value.get("command").is_some() && value.get("config").is_some();
    let mut config: PipelineConfig = if is_run {
        parse_json_text::<RunRecord>(text, "")?.config
    } else {
        parse_json_text(text, "")?
    };
    if let Some(s) = seed {
        config.reseed(s);
    }
    config.validate()?;
    Ok(config)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig, Failure> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Runtime)?;
            Ok(parse_config(&text, seed)?)
        }
        None => Ok(parse_config("{}", seed)?),
    }
}

fn path_input(key: &str, path: &Path) -> serde_json::Map<String, serde_json::Value> {
    let mut map = serde_json::Map::new();
    map.insert(key.into(), json!(path));
    map
}

fn describe_inputs(inputs: &Inputs) -> serde_json::Map<String, serde_json::Value> {
    let mut map = serde_json::Map::new();
    for (key, value) in [
        ("data", &inputs.data),
        ("image", &inputs.image),
        ("points", &inputs.points),
    ] {
        if let Some(v) = value {
            map.insert(key.into(), json!(v));
        }
    }
    if let Some(split) = inputs.split {
        map.insert("split".into(), json!(split));
    }
    map
}

fn write_run(
    dir: &Path,
    command: &str,
    inputs: serde_json::Map<String, serde_json::Value>,
    config: &PipelineConfig,
) -> Result<(), Failure> {
    let record = RunRecord {
        command: command.into(),
        inputs,
        config: config.clone(),
    };
    write_json(&dir.join("run.json"), &record)?;
    Ok(())
}

fn cmd_synth(config: &PipelineConfig, out: &Path) -> anyhow::Result<Vec<(Sample, Split)>> {
    log::info!("generating {} synthetic images", config.synth.num_images);
    let samples = generate_synthetic(&config.synth)?;
    let splits = assign_splits(&samples, config.split_seed);
    let entries = samples
        .par_iter()
        .zip(splits.par_iter())
        .map(|(s, &split)| save_sample(out, s, split))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let manifest = Manifest {
        split_seed: config.split_seed,
        generator: Some(config.synth.clone()),
        samples: entries,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(samples.into_iter().zip(splits).collect())
}

fn save_sample(dir: &Path, s: &Sample, split: Split) -> anyhow::Result<ManifestEntry> {
    let image = PathBuf::from("images").join(format!("{}.png", s.id));
    let points = PathBuf::from("points").join(format!("{}.csv", s.id));
    write_rgb_png(&dir.join(&image), &s.image)?;
    write_points_csv(&dir.join(&points), &s.points)?;
    let instances = match &s.instances {
        Some(mask) => {
            let path = PathBuf::from("instances").join(format!("{}.png", s.id));
            write_instances_png(&dir.join(&path), mask)?;
            Some(path)
        }
        None => None,
    };
    Ok(ManifestEntry {
        id: s.id.clone(),
        split,
        stratum: s.provenance.stratum(),
        image,
        points,
        instances,
        provenance: s.provenance.clone(),
    })
}

/// Loads the samples of a dataset directory, optionally restricted to one split.
pub fn load_manifest_samples(dir: &Path, split: Option<Split>) -> anyhow::Result<Vec<Sample>> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    manifest
        .samples
        .par_iter()
        .filter(|e| split.is_none_or(|s| s == e.split))
        .map(|e| {
            let image = read_rgb_png(&dir.join(&e.image))?;
            let dims = (image.width() as usize, image.height() as usize);
            let points = read_points_csv(&dir.join(&e.points), dims)?;
            let instances = match &e.instances {
                Some(p) => Some(read_instances_png(&dir.join(p))?),
                None => None,
            };
            Ok(Sample {
                id: e.id.clone(),
                image,
                points,
                instances,
                provenance: e.provenance.clone(),
            })
        })
        .collect()
}

fn load_inputs(inputs: &Inputs) -> anyhow::Result<Vec<Sample>> {
    match (&inputs.data, &inputs.image, &inputs.points) {
        (Some(dir), _, _) => load_manifest_samples(dir, inputs.split),
        (None, Some(image), Some(points)) => Ok(crate::data::load_dataset(&[(image.clone(), points.clone())])?),
        _ => anyhow::bail!("give either --data or both --image and --points"),
    }
}

fn load_inputs_for_predict(inputs: &Inputs) -> anyhow::Result<Vec<Sample>> {
    match (&inputs.data, &inputs.image) {
        (Some(dir), _) => load_manifest_samples(dir, inputs.split),
        (None, Some(path)) => {
            let image = read_rgb_png(path)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            let points = match &inputs.points {
                Some(p) => read_points_csv(p, (image.width() as usize, image.height() as usize))?,
                None => Default::default(),
            };
            Ok(vec![Sample {
                id,
                image,
                points,
                instances: None,
                provenance: Provenance::Files {
                    image: path.clone(),
                    points: inputs.points.clone().unwrap_or_default(),
                },
            }])
        }
        _ => anyhow::bail!("give either --data or --image"),
    }
}

fn cmd_encode(config: &PipelineConfig, inputs: &Inputs, out: &Path) -> anyhow::Result<()> {
    let samples = load_inputs(inputs)?;
    write_encodings(config, &samples, out)
}

fn write_encodings(config: &PipelineConfig, samples: &[Sample], out: &Path) -> anyhow::Result<()> {
    samples.par_iter().try_for_each(|s| -> anyhow::Result<()> {
        let e = encode_sample(s, &config.encode).with_context(|| format!("encoding {}", s.id))?;
        let dir = out.join(&s.id);
        write_tristate_png(&dir.join("voronoi.png"), &e.voronoi)?;
        write_tristate_png(&dir.join("cluster.png"), &e.cluster)?;
        write_repel_png(&dir.join("repel.png"), &e.repel, &config.encode.repel)?;
        write_repel_png(&dir.join("filtered_repel.png"), &e.filtered_repel, &config.encode.repel)?;
        Ok(())
    })
}

fn cmd_train(config: &PipelineConfig, data: &Path, out: &Path) -> anyhow::Result<(ModelParams<f32>, NormStats)> {
    let samples = load_manifest_samples(data, Some(Split::Train))?;
    train_on(config, &samples, out)
}

fn train_on(config: &PipelineConfig, samples: &[Sample], out: &Path) -> anyhow::Result<(ModelParams<f32>, NormStats)> {
    let samples = expand_with_augmentation(samples, &config.augment.ops, config.augment.copies, config.augment.seed)?;
    log::info!("training on {} images ({:?} mode)", samples.len(), config.mode);
    let (examples, stats) = build_training_set(&samples, None, &config.encode)?;
    let (params, log) = train(&config.train, &examples, config.mode)?;
    write_json(&out.join("params.json"), &params.to_json())?;
    write_json(&out.join("norm_stats.json"), &stats)?;
    write_text(&out.join("loss_log.csv"), &log.to_csv())?;
    Ok((params, stats))
}

fn load_model(dir: &Path) -> anyhow::Result<(ModelParams<f32>, NormStats)> {
    let value: serde_json::Value = read_json(&dir.join("params.json"))?;
    let params = ModelParams::from_json(value)?;
    let stats: NormStats = read_json(&dir.join("norm_stats.json"))?;
    Ok((params, stats))
}

fn cmd_predict(config: &PipelineConfig, model: &Path, inputs: &Inputs, out: &Path) -> anyhow::Result<()> {
    let (params, stats) = load_model(model)?;
    let samples = load_inputs_for_predict(inputs)?;
    predict_all(config, &params, &stats, &samples, out)?;
    Ok(())
}

fn predict_all(
    config: &PipelineConfig,
    params: &ModelParams<f32>,
    stats: &NormStats,
    samples: &[Sample],
    out: &Path,
) -> anyhow::Result<Vec<Prediction>> {
    samples
        .par_iter()
        .map(|s| {
            let p =
                predict_sample(params, s, stats, &config.predict).with_context(|| format!("predicting {}", s.id))?;
            let dir = out.join(&s.id);
            write_probability_png(&dir.join("nuclei.png"), &p.probability.nuclei)?;
            write_mask_png(&dir.join("mask.png"), &p.mask)?;
            write_instances_png(&dir.join("instances.png"), &p.instances)?;
            write_detections_csv(&dir.join("detections.csv"), &p.detections)?;
            write_rgb_png(&dir.join("overlay.png"), &overlay(&s.image, &p.mask, &p.detections))?;
            Ok(p)
        })
        .collect()
}

/// Mask boundary in green and detections as red crosses over the source image.
pub fn overlay(image: &RgbImage, mask: &Grid<bool>, detections: &[Detection]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = mask.dims();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || mask.neighbors4(x, y).any(|(nx, ny)| !*mask.get(nx, ny));
            if edge {
                out.put_pixel(x as u32, y as u32, Rgb([0, 220, 0]));
            }
        }
    }
    for d in detections {
        let (cx, cy) = (d.x.round() as i64, d.y.round() as i64);
        for k in -2i64..=2 {
            for (x, y) in [(cx + k, cy), (cx, cy + k)] {
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    out.put_pixel(x as u32, y as u32, Rgb([230, 0, 0]));
                }
            }
        }
    }
    out
}

fn cmd_eval(config: &PipelineConfig, data: &Path, predictions: &Path, split: Split, out: &Path) -> anyhow::Result<()> {
    let samples = load_manifest_samples(data, Some(split))?;
    let scores = samples
        .par_iter()
        .map(|s| {
            let dir = predictions.join(&s.id);
            let instances: InstanceMask = read_instances_png(&dir.join("instances.png"))?;
            let detections = read_detections_csv(&dir.join("detections.csv"))?;
            Ok(score_image(&instances, &detections, s, config.eval.match_radius)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = summarize(scores, config.eval.match_radius)?;
    write_json(&out.join("report.json"), &report)?;
    log::info!(
        "ACC {:.4} F1 {:.4} Dice {:.4} AJI {:.4} Precision {:.4} Recall {:.4} CCC {:.4}",
        report.accuracy,
        report.f1,
        report.dice,
        report.aji,
        report.precision,
        report.recall,
        report.ccc
    );
    Ok(())
}

fn cmd_pipeline(config: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let data = out.join("data");
    let all = cmd_synth(config, &data)?;
    let pick =
        |want: Split| -> Vec<Sample> { all.iter().filter(|(_, s)| *s == want).map(|(x, _)| x.clone()).collect() };
    let (train_set, eval_set) = (pick(Split::Train), pick(config.eval.split));
    log::info!("writing encodings for {} training images", train_set.len());
    write_encodings(config, &train_set, &out.join("encode"))?;
    let (params, stats) = train_on(config, &train_set, &out.join("model"))?;
    let predictions = out.join("predictions");
    predict_all(config, &params, &stats, &eval_set, &predictions)?;
    cmd_eval(config, &data, &predictions, config.eval.split, out)
}
