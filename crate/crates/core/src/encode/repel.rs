//! Repel center codes.
//!
//! For a pixel at distance `d1` from its nearest annotation and `d2` from the second
//! nearest, the code is
//!
//! ```text
//! value = max(0, 1 - d1/r)^2 * (d2 - d1) / (d2 + d1 + alpha * r)
//! ```
//!
//! and `max(0, 1 - d1/r)^2` when there is a single annotation. The first factor truncates
//! the support at `r`; the second makes the code fall off faster toward a close neighbor.

use serde::{Deserialize, Serialize};

use crate::encode::{check_points_in_bounds, SiteIndex, TriState, TriStateLabelMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepelParams {
    pub alpha: f64,
    /// Support radius in pixels.
    pub radius: f64,
}

impl Default for RepelParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            radius: 70.0,
        }
    }
}

impl RepelParams {
    pub fn new(alpha: f64, radius: f64) -> Result<Self> {
        let params = Self { alpha, radius };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be finite and > 0"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("radius", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Code value for nearest distance `d1` and second-nearest distance `d2`
    /// (`None` when there is no second annotation).
    pub fn value(&self, d1: f64, d2: Option<f64>) -> f64 {
        let falloff = (1.0 - d1 / self.radius).max(0.0).powi(2);
        let v = match d2 {
            None => falloff,
            Some(d2) => falloff * (d2 - d1) / (d2 + d1 + self.alpha * self.radius),
        };
        v.clamp(0.0, 1.0)
    }
}

/// Per-pixel code in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepelMap {
    pub values: Grid<f64>,
}

impl RepelMap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.values.get(x, y)
    }
}

pub fn repel_encode(points: &PointSet, dims: (usize, usize), params: &RepelParams) -> Result<RepelMap> {
    params.validate()?;
    check_points_in_bounds(points, dims)?;
    if points.is_empty() {
        return Ok(RepelMap {
            values: Grid::new(dims.0, dims.1, 0.0),
        });
    }
    let index = SiteIndex::new(&points.pixels(dims), dims);
    let values = Grid::from_fn(dims.0, dims.1, |x, y| {
        let nearest = index.query(x, y);
        params.value(nearest.first.1.sqrt(), nearest.second.map(|(_, d)| d.sqrt()))
    });
    Ok(RepelMap { values })
}

/// Zeroes the code wherever the clustering target is not foreground.
pub fn filtered_repel(repel: &RepelMap, cluster: &TriStateLabelMap) -> Result<RepelMap> {
    cluster.labels().ensure_dims(repel.dims())?;
    let data = repel
        .values
        .iter()
        .zip(cluster.labels().iter())
        .map(|(&v, &s)| if s == TriState::Foreground { v } else { 0.0 })
        .collect();
    Ok(RepelMap {
        values: Grid::from_vec(repel.values.width(), repel.values.height(), data)?,
    })
}
