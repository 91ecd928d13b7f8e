//! End-to-end stages shared by the command line and the tests: encode targets, assemble a
//! training set, predict, and evaluate.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment_sample, normalize, AugmentOp, NormStats, NormalizedImage, Sample};
use crate::encode::{
    filtered_repel, local_cluster_encode, repel_encode, voronoi_encode, ClusterParams, RepelMap, RepelParams,
    TriStateLabelMap, VoronoiPartition, DEFAULT_DOT_RADIUS,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::ProbabilityMap;
use crate::metrics::{aji, ccc, detection_metrics, object_dice, pixel_metrics, DetectionCounts};
use crate::model::{forward, ModelParams, TrainingExample};
use crate::post::{
    argmax_mask, detect_cells, extract_instances, Detection, DetectionSet, InstanceMask, DEFAULT_MIN_DISTANCE,
    DEFAULT_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepelTarget {
    /// Repel code masked by the cluster foreground.
    #[default]
    Filtered,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub dot_radius: f64,
    pub cluster: ClusterParams,
    pub repel: RepelParams,
    pub repel_target: RepelTarget,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            dot_radius: DEFAULT_DOT_RADIUS,
            cluster: ClusterParams::default(),
            repel: RepelParams::default(),
            repel_target: RepelTarget::Filtered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub min_distance: usize,
    pub threshold: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            min_distance: DEFAULT_MIN_DISTANCE,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Every encoding of one sample.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub partition: VoronoiPartition,
    pub voronoi: TriStateLabelMap,
    pub cluster: TriStateLabelMap,
    pub repel: RepelMap,
    pub filtered_repel: RepelMap,
    /// Regions whose colors were uniform; their cluster target fell back to the dot.
    pub fallback_regions: Vec<usize>,
}

impl Encoded {
    pub fn repel_target(&self, which: RepelTarget) -> &RepelMap {
        match which {
            RepelTarget::Filtered => &self.filtered_repel,
            RepelTarget::Raw => &self.repel,
        }
    }
}

pub fn encode_sample(sample: &Sample, config: &EncodeConfig) -> Result<Encoded> {
    let dims = sample.dims();
    let (partition, voronoi) = voronoi_encode(&sample.points, dims, config.dot_radius)?;
    let cluster = local_cluster_encode(&sample.image, &partition, &config.cluster)?;
    let repel = repel_encode(&sample.points, dims, &config.repel)?;
    let filtered = filtered_repel(&repel, &cluster.labels)?;
    Ok(Encoded {
        partition,
        voronoi,
        cluster: cluster.labels,
        repel,
        filtered_repel: filtered,
        fallback_regions: cluster.fallback_regions,
    })
}

/// Augmented copies of each sample. Copy `k` of sample `i` uses seed
/// `seed + i * copies + k`; originals come first.
pub fn expand_with_augmentation(
    samples: &[Sample],
    ops: &[AugmentOp],
    copies: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if copies == 0 || ops.is_empty() {
        return Ok(samples.to_vec());
    }
    let extra: Vec<Sample> = samples
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, s)| {
            (0..copies).map(move |k| {
                let (mut out, _) = augment_sample(s, ops, seed.wrapping_add((i * copies + k) as u64))?;
                out.id = format!("{}_aug{k}", s.id);
                Ok(out)
            })
        })
        .collect::<Result<_>>()?;
    let mut all = samples.to_vec();
    // points-free augmentations cannot be encoded; skip them
    all.extend(extra.into_iter().filter(|s| !s.points.is_empty()));
    Ok(all)
}

/// Encodes and normalizes training samples. Statistics are computed from `samples` when
/// `stats` is `None`.
pub fn build_training_set(
    samples: &[Sample],
    stats: Option<NormStats>,
    config: &EncodeConfig,
) -> Result<(Vec<TrainingExample>, NormStats)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let images: Vec<&RgbImage> = samples.iter().map(|s| &s.image).collect();
    let (normalized, stats) = normalize(&images, stats)?;
    let encoded: Vec<Encoded> = samples
        .par_iter()
        .map(|s| encode_sample(s, config))
        .collect::<Result<_>>()?;
    let examples = normalized
        .into_iter()
        .zip(encoded)
        .map(|(image, e)| {
            let repel = e.repel_target(config.repel_target).clone();
            TrainingExample {
                image,
                voronoi: e.voronoi,
                cluster: e.cluster,
                repel,
            }
        })
        .collect();
    Ok((examples, stats))
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub probability: ProbabilityMap<f64>,
    pub mask: Grid<bool>,
    pub instances: InstanceMask,
    pub detections: DetectionSet,
}

pub fn predict(params: &ModelParams<f32>, image: &NormalizedImage, config: &PredictConfig) -> Result<Prediction> {
    let probability = forward(params, image)?.cast::<f64>();
    let mask = argmax_mask(&probability);
    let instances = extract_instances(&mask);
    let detections = detect_cells(&probability, config.min_distance, config.threshold)?;
    Ok(Prediction {
        probability,
        mask,
        instances,
        detections,
    })
}

pub fn predict_sample(
    params: &ModelParams<f32>,
    sample: &Sample,
    stats: &NormStats,
    config: &PredictConfig,
) -> Result<Prediction> {
    predict(params, &NormalizedImage::apply(&sample.image, stats), config)
}

/// Scores of a single image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub id: String,
    #[serde(rename = "ACC")]
    pub accuracy: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "Dice")]
    pub dice: f64,
    #[serde(rename = "AJI")]
    pub aji: f64,
    pub detection: DetectionCounts,
    pub predicted_count: usize,
    pub true_count: usize,
}

/// Dataset-level report. Segmentation scores are per-image means, detection precision and
/// recall pool the counts over all images, and CCC compares per-image cell counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "ACC")]
    pub accuracy: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "Dice")]
    pub dice: f64,
    #[serde(rename = "AJI")]
    pub aji: f64,
    #[serde(rename = "Precision")]
    pub precision: f64,
    #[serde(rename = "Recall")]
    pub recall: f64,
    #[serde(rename = "CCC")]
    pub ccc: f64,
    pub match_radius: f64,
    pub images: Vec<ImageScores>,
}

/// Scores one image. The pixel mask is the foreground of `instances`.
pub fn score_image(
    instances: &InstanceMask,
    detections: &[Detection],
    sample: &Sample,
    match_radius: f64,
) -> Result<ImageScores> {
    let truth = sample
        .instances
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("sample {} has no ground-truth instances", sample.id)))?;
    let pixels = pixel_metrics(&instances.foreground(), &truth.foreground())?;
    Ok(ImageScores {
        id: sample.id.clone(),
        accuracy: pixels.accuracy,
        f1: pixels.f1.value,
        dice: object_dice(instances, truth)?.value,
        aji: aji(instances, truth)?.value,
        detection: detection_metrics(detections, sample.points.as_slice(), match_radius),
        predicted_count: detections.len(),
        true_count: sample.points.len(),
    })
}

pub fn summarize(images: Vec<ImageScores>, match_radius: f64) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = images.len() as f64;
    let mean = |f: fn(&ImageScores) -> f64| images.iter().map(f).sum::<f64>() / n;
    let (tp, fp, fn_) = images.iter().fold((0, 0, 0), |(a, b, c), s| {
        (a + s.detection.tp, b + s.detection.fp, c + s.detection.fn_)
    });
    let pooled = DetectionCounts::from_counts(tp, fp, fn_);
    let predicted: Vec<f64> = images.iter().map(|s| s.predicted_count as f64).collect();
    let truth: Vec<f64> = images.iter().map(|s| s.true_count as f64).collect();
    let ccc = if images.len() >= 2 {
        ccc(&predicted, &truth)?.value
    } else {
        f64::NAN
    };
    Ok(EvalReport {
        accuracy: mean(|s| s.accuracy),
        f1: mean(|s| s.f1),
        dice: mean(|s| s.dice),
        aji: mean(|s| s.aji),
        precision: pooled.precision.value,
        recall: pooled.recall.value,
        ccc,
        match_radius,
        images,
    })
}

/// Predicts and scores every sample against its ground truth.
pub fn evaluate(
    params: &ModelParams<f32>,
    samples: &[Sample],
    stats: &NormStats,
    predict_config: &PredictConfig,
    match_radius: f64,
) -> Result<EvalReport> {
    let scores = samples
        .par_iter()
        .map(|s| {
            let p = predict_sample(params, s, stats, predict_config)?;
            score_image(&p.instances, &p.detections, s, match_radius)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(scores, match_radius)
}
