//! Segmentation and detection scores.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid;
use crate::points::Point;
use crate::post::{Detection, InstanceMask};

/// Default match radius between a detection and an annotation, in pixels.
pub const DEFAULT_MATCH_RADIUS: f64 = 5.0;

/// A score that can be undefined for degenerate inputs. `degenerate` is set when the value
/// is a convention rather than a measurement (for example both masks empty).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    fn measured(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    fn convention(value: f64) -> Self {
        Self {
            value,
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScores {
    pub accuracy: f64,
    pub f1: Score,
}

/// Pixel accuracy and foreground F1 = 2TP / (2TP + FP + FN).
pub fn pixel_metrics(pred: &Grid<bool>, truth: &Grid<bool>) -> Result<PixelScores> {
    pred.ensure_dims(truth.dims())?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let total = tp + fp + fn_ + tn;
    let accuracy = if total == 0 {
        1.0
    } else {
        (tp + tn) as f64 / total as f64
    };
    let f1 = if tp + fp + fn_ == 0 {
        Score::convention(1.0)
    } else {
        Score::measured(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
    };
    Ok(PixelScores { accuracy, f1 })
}

/// Pixel overlap counts between every (truth, prediction) instance pair.
struct Overlaps {
    truth_areas: Vec<usize>,
    pred_areas: Vec<usize>,
    /// `(truth_id - 1, pred_id - 1) -> intersection`
    inter: HashMap<(usize, usize), usize>,
}

impl Overlaps {
    fn new(pred: &InstanceMask, truth: &InstanceMask) -> Result<Self> {
        pred.ids().ensure_dims(truth.dims())?;
        let mut inter = HashMap::new();
        for (&t, &p) in truth.ids().iter().zip(pred.ids().iter()) {
            if t > 0 && p > 0 {
                *inter.entry((t as usize - 1, p as usize - 1)).or_insert(0) += 1;
            }
        }
        Ok(Self {
            truth_areas: truth.areas(),
            pred_areas: pred.areas(),
            inter,
        })
    }

    fn get(&self, t: usize, p: usize) -> usize {
        self.inter.get(&(t, p)).copied().unwrap_or(0)
    }
}

/// Aggregated Jaccard Index.
///
/// Truth instances are visited in id order; each takes the still-unused prediction with the
/// highest IoU (lower id on ties), provided the overlap is non-empty. The score is
/// `Σ matched |G ∩ S| / (Σ matched |G ∪ S| + Σ unmatched |G| + Σ unused |S|)`.
pub fn aji(pred: &InstanceMask, truth: &InstanceMask) -> Result<Score> {
    let ov = Overlaps::new(pred, truth)?;
    if ov.truth_areas.is_empty() {
        return Ok(if ov.pred_areas.is_empty() {
            Score::convention(1.0)
        } else {
            Score::measured(0.0)
        });
    }
    let mut used = vec![false; ov.pred_areas.len()];
    let mut inter_sum = 0usize;
    let mut union_sum = 0usize;
    for (t, &t_area) in ov.truth_areas.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (p, &p_area) in ov.pred_areas.iter().enumerate() {
            if used[p] {
                continue;
            }
            let i = ov.get(t, p);
            if i == 0 {
                continue;
            }
            let iou = i as f64 / (t_area + p_area - i) as f64;
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((p, iou));
            }
        }
        match best {
            Some((p, _)) => {
                used[p] = true;
                let i = ov.get(t, p);
                inter_sum += i;
                union_sum += t_area + ov.pred_areas[p] - i;
            }
            None => union_sum += t_area,
        }
    }
    union_sum += ov
        .pred_areas
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(&a, _)| a)
        .sum::<usize>();
    Ok(Score::measured(inter_sum as f64 / union_sum as f64))
}

/// Symmetric object-level Dice: the area-weighted mean Dice of every truth object against
/// its best-overlapping prediction, averaged with the same quantity computed from the
/// prediction side. Objects without any overlap contribute zero.
pub fn object_dice(pred: &InstanceMask, truth: &InstanceMask) -> Result<Score> {
    let ov = Overlaps::new(pred, truth)?;
    if ov.truth_areas.is_empty() && ov.pred_areas.is_empty() {
        return Ok(Score::convention(1.0));
    }
    let side = |areas: &[usize], others: &[usize], inter: &dyn Fn(usize, usize) -> usize| -> f64 {
        let total: usize = areas.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let weighted: f64 = areas
            .iter()
            .enumerate()
            .map(|(a, &area)| {
                let mut best = (0usize, 0usize);
                for (o, &o_area) in others.iter().enumerate() {
                    let i = inter(a, o);
                    if i > best.0 {
                        best = (i, o_area);
                    }
                }
                let dice = if best.0 == 0 {
                    0.0
                } else {
                    2.0 * best.0 as f64 / (area + best.1) as f64
                };
                area as f64 * dice
            })
            .sum();
        weighted / total as f64
    };
    let from_truth = side(&ov.truth_areas, &ov.pred_areas, &|t, p| ov.get(t, p));
    let from_pred = side(&ov.pred_areas, &ov.truth_areas, &|p, t| ov.get(t, p));
    Ok(Score::measured(0.5 * (from_truth + from_pred)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Score,
    pub recall: Score,
}

impl DetectionCounts {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                Score::convention(1.0)
            } else {
                Score::measured(num as f64 / den as f64)
            }
        };
        Self {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }
}

/// One-to-one matching of detections to annotations within `radius` (inclusive) that
/// maximizes the number of matches and, among those, minimizes the total distance.
/// Returns matched `(pred, truth)` index pairs.
pub fn match_detections(pred: &[Detection], truth: &[Point], radius: f64) -> Vec<(usize, usize)> {
    if pred.is_empty() || truth.is_empty() {
        return Vec::new();
    }
    let n = pred.len().max(truth.len());
    let dist = |p: usize, t: usize| (pred[p].x - truth[t].x).hypot(pred[p].y - truth[t].y);
    // An in-radius pair always beats any number of distance savings.
    let miss = radius * (n as f64 + 1.0) + 1.0;
    let mut cost = vec![vec![miss; n]; n];
    for (p, row) in cost.iter_mut().enumerate().take(pred.len()) {
        for (t, c) in row.iter_mut().enumerate().take(truth.len()) {
            let d = dist(p, t);
            if d <= radius {
                *c = d;
            }
        }
    }
    hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter(|&(p, t)| p < pred.len() && t < truth.len() && dist(p, t) <= radius)
        .collect()
}

pub fn detection_metrics(pred: &[Detection], truth: &[Point], radius: f64) -> DetectionCounts {
    let tp = match_detections(pred, truth, radius).len();
    DetectionCounts::from_counts(tp, pred.len() - tp, truth.len() - tp)
}

/// Minimum-cost perfect assignment on a square matrix. Returns the column of every row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Lin's concordance correlation coefficient with population (1/N) moments.
///
/// Two identical constant sequences score 1 and a zero-variance pair with different means
/// scores 0; both are flagged as degenerate.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<Score> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(crate::Error::InvalidInput(format!(
            "ccc needs two sequences of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let denom = vx + vy + (mx - my).powi(2);
    if denom == 0.0 {
        return Ok(Score::convention(1.0));
    }
    if vx == 0.0 && vy == 0.0 {
        return Ok(Score::convention(0.0));
    }
    Ok(Score::measured(2.0 * cov / denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, ids: &[u32]) -> InstanceMask {
        InstanceMask::from_ids(Grid::from_vec(w, h, ids.to_vec()).unwrap())
    }

    fn bools(v: &[u8]) -> Grid<bool> {
        Grid::from_vec(v.len(), 1, v.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn pixel_metrics_cases() {
        let s = pixel_metrics(&bools(&[1, 1, 0, 0]), &bools(&[1, 0, 1, 0])).unwrap();
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.f1.value, 0.5);
        let t = bools(&[1, 1, 0, 0]);
        let inv = bools(&[0, 0, 1, 1]);
        let s = pixel_metrics(&inv, &t).unwrap();
        assert_eq!((s.accuracy, s.f1.value), (0.0, 0.0));
        let s = pixel_metrics(&t, &t).unwrap();
        assert_eq!((s.accuracy, s.f1.value), (1.0, 1.0));
        let empty = bools(&[0, 0]);
        let s = pixel_metrics(&empty, &empty).unwrap();
        assert!(s.f1.degenerate && s.f1.value == 1.0);
    }

    #[test]
    fn aji_merged_block() {
        // two 2x2 truth squares, one 4x2 prediction covering both
        let truth = mask(4, 2, &[1, 1, 2, 2, 1, 1, 2, 2]);
        let pred = mask(4, 2, &[1; 8]);
        assert!((aji(&pred, &truth).unwrap().value - 4.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn aji_spurious_pixel() {
        let truth = mask(4, 2, &[1, 1, 0, 0, 1, 1, 0, 0]);
        let pred = mask(4, 2, &[1, 1, 0, 0, 1, 1, 0, 2]);
        assert!((aji(&pred, &truth).unwrap().value - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn aji_empty_cases() {
        let empty = InstanceMask::empty(3, 3);
        let one = mask(3, 3, &[0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let both = aji(&empty, &empty).unwrap();
        assert!(both.degenerate && both.value == 1.0);
        assert_eq!(aji(&one, &empty).unwrap().value, 0.0);
        assert_eq!(aji(&empty, &one).unwrap().value, 0.0);
    }

    #[test]
    fn dice_half_square() {
        let truth = mask(4, 4, &[1; 16]);
        let pred = InstanceMask::from_ids(Grid::from_fn(4, 4, |x, _| u32::from(x < 2)));
        assert!((object_dice(&pred, &truth).unwrap().value - 2.0 / 3.0).abs() < 1e-15);
        let far = InstanceMask::from_ids(Grid::from_fn(4, 4, |x, y| u32::from(x == 0 && y == 0)));
        let near = InstanceMask::from_ids(Grid::from_fn(4, 4, |x, y| u32::from(x == 3 && y == 3)));
        assert_eq!(object_dice(&far, &near).unwrap().value, 0.0);
        assert_eq!(object_dice(&truth, &truth).unwrap().value, 1.0);
    }

    #[test]
    fn detection_one_to_one() {
        let truth = vec![Point::new(10.0, 10.0), Point::new(14.0, 10.0)];
        let pred = vec![Detection {
            x: 12.0,
            y: 10.0,
            score: 1.0,
        }];
        let d = detection_metrics(&pred, &truth, 5.0);
        assert_eq!((d.tp, d.fp, d.fn_), (1, 0, 1));
        let d = detection_metrics(&[], &vec![Point::new(1.0, 1.0); 5], 5.0);
        assert_eq!((d.tp, d.fp, d.fn_), (0, 0, 5));
        assert_eq!(d.recall.value, 0.0);
    }

    #[test]
    fn detection_prefers_more_matches_over_nearest() {
        // a greedy nearest-pair pass would match p0-t0 and leave t1, p1 unmatched
        let truth = vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0)];
        let pred = vec![
            Detection {
                x: 1.0,
                y: 0.0,
                score: 1.0,
            },
            Detection {
                x: -3.5,
                y: 0.0,
                score: 1.0,
            },
        ];
        assert_eq!(detection_metrics(&pred, &truth, 5.0).tp, 2);
    }

    #[test]
    fn ccc_cases() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(ccc(&x, &x).unwrap().value, 1.0);
        assert!((ccc(&x, &[3.0, 2.0, 1.0]).unwrap().value + 1.0).abs() < 1e-15);
        let c = ccc(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert!(c.degenerate && c.value == 1.0);
        let c = ccc(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(c.degenerate && c.value == 0.0);
        assert!(ccc(&[1.0], &[1.0]).is_err());
    }
}
