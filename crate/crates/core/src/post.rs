//! From probability maps to binary masks, instances and cell centers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::ProbabilityMap;
use crate::scalar::Scalar;

/// Default minimum spacing between detections, in pixels.
pub const DEFAULT_MIN_DISTANCE: usize = 5;

/// Default lower bound on the nuclei probability of a detection.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Per-pixel instance ids: 0 is background, instances are numbered `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    ids: Grid<u32>,
    count: u32,
}

impl InstanceMask {
    /// Wraps an id map, renumbering ids to `1..=K` in order of first raster appearance.
    /// Connectivity is not checked.
    pub fn from_ids(ids: Grid<u32>) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut next = 0u32;
        let ids = ids.map(|&id| {
            if id == 0 {
                0
            } else {
                *remap.entry(id).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        });
        Self { ids, count: next }
    }

    /// Wraps an id map whose ids are already `0..=count`, keeping their numbering.
    pub(crate) fn from_ordered_ids(ids: Grid<u32>, count: u32) -> Self {
        debug_assert!(ids.iter().all(|&id| id <= count));
        Self { ids, count }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            ids: Grid::new(width, height, 0),
            count: 0,
        }
    }

    pub fn ids(&self) -> &Grid<u32> {
        &self.ids
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ids.dims()
    }

    /// Number of instances `K`.
    pub fn count(&self) -> usize {
        self.count as usize
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        *self.ids.get(x, y)
    }

    pub fn foreground(&self) -> Grid<bool> {
        self.ids.map(|&id| id != 0)
    }

    /// Pixel count of every instance, indexed by `id - 1`.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.count()];
        for &id in self.ids.iter() {
            if id > 0 {
                areas[id as usize - 1] += 1;
            }
        }
        areas
    }
}

/// A detected cell center with its nuclei probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

pub type DetectionSet = Vec<Detection>;

/// Foreground wherever the nuclei probability is strictly higher than the background's.
pub fn argmax_mask<T: Scalar>(prob: &ProbabilityMap<T>) -> Grid<bool> {
    Grid::from_vec(
        prob.nuclei.width(),
        prob.nuclei.height(),
        prob.nuclei
            .iter()
            .zip(prob.background.iter())
            .map(|(n, b)| n > b)
            .collect(),
    )
    .expect("channels share dims")
}

/// 4-connected components of the foreground, numbered in raster order of first encounter.
pub fn extract_instances(mask: &Grid<bool>) -> InstanceMask {
    let (w, h) = mask.dims();
    let mut ids = Grid::new(w, h, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) || *ids.get(x, y) != 0 {
                continue;
            }
            next += 1;
            ids.set(x, y, next);
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                for (nx, ny) in mask.neighbors4(cx, cy) {
                    if *mask.get(nx, ny) && *ids.get(nx, ny) == 0 {
                        ids.set(nx, ny, next);
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
    }
    InstanceMask { ids, count: next }
}

/// Local maxima of the nuclei channel.
///
/// A pixel is a candidate when it equals the maximum of the `(2d+1) x (2d+1)` window around
/// it, reaches `threshold`, and no earlier candidate (in raster order) of equal value lies in
/// that window. Candidates are then accepted greedily by descending value (raster order on
/// ties) while keeping every pair at least `min_distance` apart.
pub fn detect_cells<T: Scalar>(prob: &ProbabilityMap<T>, min_distance: usize, threshold: f64) -> Result<DetectionSet> {
    if min_distance < 1 {
        return Err(Error::param("min_distance", "must be >= 1"));
    }
    let values = prob.nuclei.map(|v| v.f64());
    let window_max = max_filter(&values, min_distance);
    let (w, h) = values.dims();
    let d = min_distance;

    let mut kept = Grid::new(w, h, false);
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = *values.get(x, y);
            if v < threshold || v != *window_max.get(x, y) {
                continue;
            }
            let tied_earlier = (y.saturating_sub(d)..=(y + d).min(h - 1)).any(|yy| {
                (x.saturating_sub(d)..=(x + d).min(w - 1))
                    .any(|xx| (yy, xx) < (y, x) && *kept.get(xx, yy) && *values.get(xx, yy) == v)
            });
            if !tied_earlier {
                kept.set(x, y, true);
                candidates.push((x, y, v));
            }
        }
    }

    // stable sort keeps raster order among equal values
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
    let min_d2 = (min_distance * min_distance) as f64;
    let mut accepted: DetectionSet = Vec::new();
    for (x, y, v) in candidates {
        let (fx, fy) = (x as f64, y as f64);
        if accepted
            .iter()
            .all(|a| (a.x - fx).powi(2) + (a.y - fy).powi(2) >= min_d2)
        {
            accepted.push(Detection { x: fx, y: fy, score: v });
        }
    }
    Ok(accepted)
}

/// Separable square maximum filter with radius `r`, clipped at the borders.
fn max_filter(values: &Grid<f64>, r: usize) -> Grid<f64> {
    let (w, h) = values.dims();
    let rows = Grid::from_fn(w, h, |x, y| {
        (x.saturating_sub(r)..=(x + r).min(w - 1))
            .map(|xx| *values.get(xx, y))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Grid::from_fn(w, h, |x, y| {
        (y.saturating_sub(r)..=(y + r).min(h - 1))
            .map(|yy| *rows.get(x, yy))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}
