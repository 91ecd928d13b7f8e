//! Synthetic stained-nuclei images with exact instance ground truth.
//!
//! Cells are filled ellipses drawn on a flat background, colored from a three-class
//! palette (strong brown, weak brown, blue) with per-cell jitter and per-pixel Gaussian
//! noise. Images are either sparse (cells keep a gap between them) or clustered (new cells
//! are often placed touching an existing one).

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Provenance, Sample};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::{Point, PointSet};
use crate::post::InstanceMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Palette {
    pub strong: [u8; 3],
    pub weak: [u8; 3],
    pub negative: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub num_images: usize,
    /// Inclusive range of cells per image.
    pub cells: (usize, usize),
    /// Range of the semi-major axis in pixels.
    pub radius: (f64, f64),
    /// Range of ellipse eccentricity; the semi-minor axis is `a * sqrt(1 - e^2)`.
    pub eccentricity: (f64, f64),
    pub palette: Palette,
    pub background: [u8; 3],
    /// Relative frequency of strong, weak and negative cells.
    pub class_weights: [f64; 3],
    /// Per-cell uniform color offset bound, per channel.
    pub contrast_jitter: f64,
    /// Minimum Euclidean RGB distance between background and the strong/negative colors.
    pub min_contrast: f64,
    /// Fraction of images generated in clustered mode.
    pub clustered_fraction: f64,
    /// Probability that a cell in a clustered image is placed against an existing cell.
    pub cluster_tightness: f64,
    /// Minimum empty margin around each cell in sparse mode, in pixels.
    pub sparse_gap: f64,
    pub noise_sigma: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            num_images: 80,
            cells: (8, 24),
            radius: (4.0, 6.0),
            eccentricity: (0.0, 0.6),
            palette: Palette {
                strong: [115, 70, 40],
                weak: [200, 175, 150],
                negative: [80, 90, 165],
            },
            background: [232, 228, 222],
            class_weights: [0.45, 0.2, 0.35],
            contrast_jitter: 12.0,
            min_contrast: 60.0,
            clustered_fraction: 0.5,
            cluster_tightness: 0.6,
            sparse_gap: 2.0,
            noise_sigma: 6.0,
            max_attempts: 200,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    Strong,
    Weak,
    Negative,
}

impl CellClass {
    pub fn name(self) -> &'static str {
        match self {
            CellClass::Strong => "strong",
            CellClass::Weak => "weak",
            CellClass::Negative => "negative",
        }
    }
}

fn rgb_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::param("width/height", "images must be at least 16x16"));
        }
        if self.cells.0 > self.cells.1 {
            return Err(Error::param("cells", "min exceeds max"));
        }
        if !(self.radius.0 >= 2.0 && self.radius.0 <= self.radius.1) {
            return Err(Error::param("radius", "need 2 <= min <= max"));
        }
        if 2.0 * self.radius.1 + 4.0 > self.width.min(self.height) as f64 {
            return Err(Error::param("radius", "cells do not fit in the image"));
        }
        if !(0.0 <= self.eccentricity.0 && self.eccentricity.0 <= self.eccentricity.1 && self.eccentricity.1 < 1.0) {
            return Err(Error::param("eccentricity", "need 0 <= min <= max < 1"));
        }
        if self.class_weights.iter().any(|&w| !(w >= 0.0)) || self.class_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::param(
                "class_weights",
                "must be non-negative with a positive sum",
            ));
        }
        for (name, color) in [
            ("palette.strong", self.palette.strong),
            ("palette.negative", self.palette.negative),
        ] {
            if rgb_distance(color, self.background) < self.min_contrast {
                return Err(Error::param(
                    "palette",
                    format!("{name} is closer than min_contrast to the background"),
                ));
            }
        }
        let palette = [self.palette.strong, self.palette.weak, self.palette.negative];
        for i in 0..3 {
            if palette[i] == self.background {
                return Err(Error::param("palette", "colors must differ from the background"));
            }
            for j in i + 1..3 {
                if palette[i] == palette[j] {
                    return Err(Error::param("palette", "colors must be distinct"));
                }
            }
        }
        for (name, v) in [
            ("clustered_fraction", self.clustered_fraction),
            ("cluster_tightness", self.cluster_tightness),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must be in [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.contrast_jitter >= 0.0 && self.sparse_gap >= 0.0) {
            return Err(Error::param("noise_sigma/contrast_jitter/sparse_gap", "must be >= 0"));
        }
        if self.max_attempts == 0 {
            return Err(Error::param("max_attempts", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    /// Normalized radial coordinate: `<= 1` inside.
    fn level(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v
    }

    /// Pixels inside the ellipse grown by `margin` on both axes.
    fn pixels(&self, margin: f64, dims: (usize, usize)) -> Vec<(usize, usize)> {
        let grown = Ellipse {
            a: self.a + margin,
            b: self.b + margin,
            ..*self
        };
        let reach = grown.a.ceil() as i64 + 1;
        let (cx, cy) = (self.cx.round() as i64, self.cy.round() as i64);
        let mut out = Vec::new();
        for y in (cy - reach).max(0)..=(cy + reach).min(dims.1 as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(dims.0 as i64 - 1) {
                if grown.level(x as f64, y as f64) <= 1.0 {
                    out.push((x as usize, y as usize));
                }
            }
        }
        out
    }
}

/// Generates `spec.num_images` samples. Sample `i` draws from its own RNG stream, so the
/// result does not depend on scheduling.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    (0..spec.num_images)
        .into_par_iter()
        .map(|i| generate_one(spec, i))
        .collect()
}

pub fn generate_one(spec: &SynthSpec, index: usize) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let dims = (spec.width, spec.height);
    let clustered = rng.random_bool(spec.clustered_fraction);
    let requested = rng.random_range(spec.cells.0..=spec.cells.1);

    let mut ids = Grid::new(dims.0, dims.1, 0u32);
    let mut cells: Vec<Ellipse> = Vec::with_capacity(requested);
    let mut attempts = 0usize;
    let budget = spec.max_attempts * requested.max(1);
    while cells.len() < requested {
        if attempts >= budget {
            return Err(Error::Placement {
                sample: index,
                placed: cells.len(),
                requested,
                attempts,
            });
        }
        attempts += 1;
        let a = rng.random_range(spec.radius.0..=spec.radius.1);
        let e = rng.random_range(spec.eccentricity.0..=spec.eccentricity.1);
        let b = (a * (1.0 - e * e).sqrt()).max(2.0);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let adjacent = clustered && !cells.is_empty() && rng.random_bool(spec.cluster_tightness);
        let (cx, cy) = if adjacent {
            let anchor = cells[rng.random_range(0..cells.len())];
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let reach = anchor.a.max(anchor.b) * 0.5 + anchor.b * 0.5 + b + rng.random_range(0.0..1.5);
            (anchor.cx + reach * phi.cos(), anchor.cy + reach * phi.sin())
        } else {
            (
                rng.random_range(a + 1.0..dims.0 as f64 - a - 2.0),
                rng.random_range(a + 1.0..dims.1 as f64 - a - 2.0),
            )
        };
        if cx < a + 1.0 || cy < a + 1.0 || cx > dims.0 as f64 - a - 2.0 || cy > dims.1 as f64 - a - 2.0 {
            continue;
        }
        let cell = Ellipse { cx, cy, a, b, theta };
        let margin = if clustered { 0.0 } else { spec.sparse_gap };
        if cell.pixels(margin, dims).iter().any(|&(x, y)| *ids.get(x, y) != 0) {
            continue;
        }
        let body = cell.pixels(0.0, dims);
        if body.len() < 5 {
            continue;
        }
        let id = cells.len() as u32 + 1;
        for (x, y) in body {
            ids.set(x, y, id);
        }
        cells.push(cell);
    }

    let classes: Vec<CellClass> = (0..cells.len())
        .map(|_| pick_class(&mut rng, &spec.class_weights))
        .collect();
    let colors: Vec<[f64; 3]> = classes
        .iter()
        .map(|&class| {
            let base = match class {
                CellClass::Strong => spec.palette.strong,
                CellClass::Weak => spec.palette.weak,
                CellClass::Negative => spec.palette.negative,
            };
            base.map(|v| f64::from(v) + rng.random_range(-spec.contrast_jitter..=spec.contrast_jitter))
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut image = RgbImage::new(dims.0 as u32, dims.1 as u32);
    for (x, y, px) in image.enumerate_pixels_mut() {
        let id = *ids.get(x as usize, y as usize);
        let base = if id == 0 {
            spec.background.map(f64::from)
        } else {
            colors[id as usize - 1]
        };
        let mut v = [0u8; 3];
        for c in 0..3 {
            let n = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            v[c] = (base[c] + n).round().clamp(0.0, 255.0) as u8;
        }
        *px = Rgb(v);
    }

    // centroid of each instance, in instance order
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); cells.len()];
    for y in 0..dims.1 {
        for x in 0..dims.0 {
            let id = *ids.get(x, y);
            if id > 0 {
                let s = &mut sums[id as usize - 1];
                s.0 += x as f64;
                s.1 += y as f64;
                s.2 += 1;
            }
        }
    }
    let points: Vec<Point> = sums
        .iter()
        .zip(&classes)
        .map(|(&(sx, sy, n), class)| Point::with_class(sx / n as f64, sy / n as f64, class.name()))
        .collect();
    let points = PointSet::new(points, dims)?;
    let weak_cells = classes.iter().filter(|&&c| c == CellClass::Weak).count();

    Ok(Sample {
        id: format!("synth_{index:04}"),
        image,
        points,
        instances: Some(InstanceMask::from_ordered_ids(ids, cells.len() as u32)),
        provenance: Provenance::Synthetic {
            seed: spec.seed,
            index,
            clustered,
            weak_cells,
        },
    })
}

fn pick_class(rng: &mut impl Rng, weights: &[f64; 3]) -> CellClass {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (w, class) in weights
        .iter()
        .zip([CellClass::Strong, CellClass::Weak, CellClass::Negative])
    {
        if u < *w {
            return class;
        }
        u -= w;
    }
    CellClass::Negative
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let spec = SynthSpec {
            width: 64,
            height: 64,
            num_images: 1,
            cells: (1, 1),
            ..SynthSpec::default()
        };
        let samples = generate_synthetic(&spec).unwrap();
        let s = &samples[0];
        let inst = s.instances.as_ref().unwrap();
        assert_eq!(inst.count(), 1);
        assert_eq!(s.points.len(), 1);
        let (px, py) = s.points.as_slice()[0].pixel((64, 64));
        assert_eq!(inst.get(px, py), 1);
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec {
            num_images: 4,
            width: 64,
            height: 64,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.points, y.points);
            assert_eq!(x.instances, y.instances);
        }
    }

    #[test]
    fn impossible_placement_reports() {
        let spec = SynthSpec {
            width: 24,
            height: 24,
            num_images: 1,
            cells: (40, 40),
            radius: (5.0, 5.0),
            max_attempts: 5,
            ..SynthSpec::default()
        };
        match generate_synthetic(&spec) {
            Err(Error::Placement {
                requested: 40, placed, ..
            }) => assert!(placed < 40),
            other => panic!("expected placement error, got {other:?}"),
        }
    }

    #[test]
    fn weak_color_may_be_low_contrast() {
        let spec = SynthSpec {
            palette: Palette {
                weak: [225, 221, 215],
                ..SynthSpec::default().palette
            },
            ..SynthSpec::default()
        };
        spec.validate().unwrap();
        let bad = SynthSpec {
            palette: Palette {
                strong: [220, 220, 220],
                ..SynthSpec::default().palette
            },
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
