//! Seeded, stratified train/val/test assignment and the dataset manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Provenance, Sample, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// 80/10/10 split by whole image. Samples are grouped by stratum, each group is shuffled,
/// the groups are concatenated, and position `i` goes to train, val or test by `i mod 10`
/// (0-7, 8, 9). Every block of ten consecutive positions thus holds an exact 8/1/1.
pub fn assign_splits(samples: &[Sample], seed: u64) -> Vec<Split> {
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        strata.entry(s.provenance.stratum()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(samples.len());
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        order.extend_from_slice(members);
    }
    let mut splits = vec![Split::Train; samples.len()];
    for (pos, &i) in order.iter().enumerate() {
        splits[i] = match pos % 10 {
            8 => Split::Val,
            9 => Split::Test,
            _ => Split::Train,
        };
    }
    splits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub stratum: String,
    /// Paths are relative to the manifest's directory.
    pub image: PathBuf,
    pub points: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<PathBuf>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SynthSpec>,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }
}
