//! Point-label encodings: Voronoi partition targets, local pixel-clustering targets,
//! and repel center codes.
//!
//! All encodings work on the rounded pixel of each annotation, so every point sits
//! exactly on a pixel center and lies inside its own Voronoi region.

mod cluster;
mod nearest;
mod repel;
mod voronoi;

pub use cluster::{global_cluster_baseline, local_cluster_encode, ClusterEncoding, ClusterParams};
pub use nearest::{Nearest, SiteIndex};
pub use repel::{filtered_repel, repel_encode, RepelMap, RepelParams};
pub use voronoi::{voronoi_encode, VoronoiPartition};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::PointSet;

/// Default radius of the foreground dot drawn around each annotation.
pub const DEFAULT_DOT_RADIUS: f64 = 2.0;

/// Per-pixel supervision state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TriState {
    Background = 0,
    Foreground = 1,
    Ignored = 255,
}

impl TriState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(TriState::Background),
            1 => Some(TriState::Foreground),
            255 => Some(TriState::Ignored),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// A foreground / background / ignored target map.
#[derive(Debug, Clone, PartialEq)]
pub struct TriStateLabelMap {
    labels: Grid<TriState>,
}

impl TriStateLabelMap {
    pub fn new(labels: Grid<TriState>) -> Self {
        Self { labels }
    }

    pub fn filled(width: usize, height: usize, state: TriState) -> Self {
        Self {
            labels: Grid::new(width, height, state),
        }
    }

    pub fn labels(&self) -> &Grid<TriState> {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut Grid<TriState> {
        &mut self.labels
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> TriState {
        *self.labels.get(x, y)
    }

    pub fn count(&self, state: TriState) -> usize {
        self.labels.iter().filter(|&&s| s == state).count()
    }

    /// Number of pixels that take part in supervision (`n*m - |ignored|`).
    pub fn supervised_count(&self) -> usize {
        self.labels.len() - self.count(TriState::Ignored)
    }

    pub fn foreground_mask(&self) -> Grid<bool> {
        self.labels.map(|&s| s == TriState::Foreground)
    }
}

pub(crate) fn check_points_in_bounds(points: &PointSet, dims: (usize, usize)) -> Result<()> {
    let problems = crate::points::validation_problems(points.as_slice(), dims);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(problems.join("; ")))
    }
}
