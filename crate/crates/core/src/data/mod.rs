//! Datasets: synthetic generation, PNG/CSV ingestion, tiling, augmentation, splits and
//! normalization.

mod augment;
pub mod io;
mod normalize;
mod patches;
mod split;
mod synth;

use std::path::PathBuf;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::points::PointSet;
use crate::post::InstanceMask;

pub use augment::{augment_sample, AugmentOp, AugmentReport};
pub use io::load_dataset;
pub use normalize::{normalize, NormStats, NormalizedImage};
pub use patches::extract_patches;
pub use split::{assign_splits, Manifest, ManifestEntry, Split};
pub use synth::{generate_one, generate_synthetic, CellClass, Palette, SynthSpec};

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic {
        seed: u64,
        index: usize,
        clustered: bool,
        weak_cells: usize,
    },
    Files {
        image: PathBuf,
        points: PathBuf,
    },
}

impl Provenance {
    /// Stratification key used when splitting.
    pub fn stratum(&self) -> String {
        match self {
            Provenance::Synthetic {
                clustered, weak_cells, ..
            } => format!(
                "{}-{}",
                if *clustered { "clustered" } else { "sparse" },
                if *weak_cells > 0 { "weak" } else { "strong" }
            ),
            Provenance::Files { .. } => "files".into(),
        }
    }
}

/// An image with its point annotations.
///
/// When `instances` is present, point `i` lies inside instance `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: RgbImage,
    pub points: PointSet,
    pub instances: Option<InstanceMask>,
    pub provenance: Provenance,
}

impl Sample {
    pub fn dims(&self) -> (usize, usize) {
        (self.image.width() as usize, self.image.height() as usize)
    }
}
