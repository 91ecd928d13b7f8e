//! Pixel clustering targets.
//!
//! The local variant runs a 2-means per Voronoi region on `[R, G, B, w * d]`, where the
//! color channels are scaled to `[0, 1]` and `d` is the distance to the region's
//! annotation normalized by the largest such distance in the region. The cluster that
//! holds the annotation pixel becomes foreground. The global variant clusters the whole
//! image on color alone and keeps the darker cluster.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::voronoi::disk_pixels;
use crate::encode::{TriState, TriStateLabelMap, VoronoiPartition, DEFAULT_DOT_RADIUS};
use crate::error::{Error, Result};
use crate::grid::Grid;

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Scale applied to the normalized distance feature.
    pub distance_weight: f64,
    /// Radius of the fallback disk for regions that cannot be clustered.
    pub dot_radius: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            distance_weight: 1.0,
            dot_radius: DEFAULT_DOT_RADIUS,
        }
    }
}

/// A local clustering target together with the regions that fell back to a disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEncoding {
    pub labels: TriStateLabelMap,
    pub fallback_regions: Vec<usize>,
}

pub fn local_cluster_encode(
    image: &RgbImage,
    partition: &VoronoiPartition,
    params: &ClusterParams,
) -> Result<ClusterEncoding> {
    let dims = (image.width() as usize, image.height() as usize);
    partition.region_id.ensure_dims(dims)?;
    if !(params.distance_weight >= 0.0 && params.distance_weight.is_finite()) {
        return Err(Error::param("distance_weight", "must be finite and non-negative"));
    }
    let width = dims.0;
    let regions = partition.region_pixels();

    let outcomes: Vec<Option<Vec<bool>>> = regions
        .par_iter()
        .enumerate()
        .map(|(k, pixels)| {
            let site = partition.sites[k];
            let features = region_features(image, width, site, pixels, params.distance_weight);
            let seed = pixels
                .iter()
                .position(|&i| i == site.1 * width + site.0)
                .expect("annotation pixel lies in its own region");
            two_means_anchored(&features, seed).map(|assign| {
                let fg = assign[seed];
                assign.into_iter().map(|c| c == fg).collect()
            })
        })
        .collect();

    let mut labels = Grid::new(dims.0, dims.1, TriState::Background);
    let mut fallback_regions = Vec::new();
    for (k, (pixels, outcome)) in regions.iter().zip(outcomes).enumerate() {
        match outcome {
            Some(is_fg) => {
                for (&i, fg) in pixels.iter().zip(is_fg) {
                    if fg {
                        labels.as_mut_slice()[i] = TriState::Foreground;
                    }
                }
            }
            None => {
                fallback_regions.push(k);
                for (x, y) in disk_pixels(partition.sites[k], params.dot_radius, dims) {
                    if *partition.region_id.get(x, y) as usize == k {
                        labels.set(x, y, TriState::Foreground);
                    }
                }
            }
        }
    }

    Ok(ClusterEncoding {
        labels: TriStateLabelMap::new(labels),
        fallback_regions,
    })
}

fn region_features(
    image: &RgbImage,
    width: usize,
    site: (usize, usize),
    pixels: &[usize],
    weight: f64,
) -> Vec<[f64; 4]> {
    let dist = |i: usize| {
        let (x, y) = (i % width, i / width);
        (x as f64 - site.0 as f64).hypot(y as f64 - site.1 as f64)
    };
    let max_dist = pixels.iter().map(|&i| dist(i)).fold(0.0, f64::max);
    pixels
        .iter()
        .map(|&i| {
            let px = image.get_pixel((i % width) as u32, (i / width) as u32).0;
            let d = if max_dist > 0.0 { dist(i) / max_dist } else { 0.0 };
            [
                f64::from(px[0]) / 255.0,
                f64::from(px[1]) / 255.0,
                f64::from(px[2]) / 255.0,
                weight * d,
            ]
        })
        .collect()
}

/// 2-means seeded at `features[anchor]` and at the feature farthest from it (lowest index
/// on ties). Returns `None` when the region has a single color: distance alone carries no
/// nuclei/background signal.
fn two_means_anchored(features: &[[f64; 4]], anchor: usize) -> Option<Vec<u8>> {
    let a = features[anchor];
    if features.iter().all(|f| f[..3] == a[..3]) {
        return None;
    }
    let (far, far_d) = features
        .iter()
        .enumerate()
        .map(|(i, f)| (i, sq_dist(f, &a)))
        .fold((anchor, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if far_d == 0.0 {
        return None;
    }
    Some(lloyd(features, [a, features[far]]))
}

/// Lloyd iterations from the given seeds until the assignment stops changing.
/// Ties go to cluster 0; an emptied cluster keeps its previous centroid.
fn lloyd<const D: usize>(features: &[[f64; D]], seeds: [[f64; D]; 2]) -> Vec<u8> {
    let mut centroids = seeds;
    let mut assign: Vec<u8> = vec![u8::MAX; features.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (a, f) in assign.iter_mut().zip(features) {
            let c = u8::from(sq_dist(f, &centroids[1]) < sq_dist(f, &centroids[0]));
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = [[0.0; D]; 2];
        let mut counts = [0usize; 2];
        for (&a, f) in assign.iter().zip(features) {
            counts[a as usize] += 1;
            for (s, v) in sums[a as usize].iter_mut().zip(f) {
                *s += v;
            }
        }
        for c in 0..2 {
            if counts[c] > 0 {
                for d in 0..D {
                    centroids[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }
    }
    assign
}

#[inline]
fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Whole-image 2-means on RGB, seeded at the darkest and brightest pixels. The cluster
/// with the darker mean is foreground.
pub fn global_cluster_baseline(image: &RgbImage) -> Result<TriStateLabelMap> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let features: Vec<[f64; 3]> = image
        .pixels()
        .map(|p| [0, 1, 2].map(|c| f64::from(p.0[c]) / 255.0))
        .collect();
    if features.is_empty() {
        return Err(Error::DegenerateGlobalClustering);
    }
    let brightness = |f: &[f64; 3]| f[0] + f[1] + f[2];
    let mut dark = 0;
    let mut bright = 0;
    for (i, f) in features.iter().enumerate() {
        if brightness(f) < brightness(&features[dark]) {
            dark = i;
        }
        if brightness(f) > brightness(&features[bright]) {
            bright = i;
        }
    }
    if features.iter().all(|f| *f == features[0]) {
        return Err(Error::DegenerateGlobalClustering);
    }
    // Equal brightness but different colors: fall back to the farthest pixel.
    if brightness(&features[dark]) == brightness(&features[bright]) {
        bright = features
            .iter()
            .enumerate()
            .map(|(i, f)| (i, sq_dist(f, &features[dark])))
            .fold((dark, 0.0), |b, c| if c.1 > b.1 { c } else { b })
            .0;
    }
    let assign = lloyd(&features, [features[dark], features[bright]]);

    let mut means = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (&a, f) in assign.iter().zip(&features) {
        means[a as usize] += brightness(f);
        counts[a as usize] += 1;
    }
    for c in 0..2 {
        means[c] = if counts[c] > 0 {
            means[c] / counts[c] as f64
        } else {
            f64::INFINITY
        };
    }
    let fg = u8::from(means[1] < means[0]);
    let labels = Grid::from_vec(
        w,
        h,
        assign
            .into_iter()
            .map(|a| {
                if a == fg {
                    TriState::Foreground
                } else {
                    TriState::Background
                }
            })
            .collect(),
    )?;
    Ok(TriStateLabelMap::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::voronoi_encode;
    use crate::points::{Point, PointSet};
    use image::Rgb;

    fn disk_image(dims: (u32, u32), center: (f64, f64), radius: f64, bg: u8, fg: u8) -> RgbImage {
        RgbImage::from_fn(dims.0, dims.1, |x, y| {
            let d = (x as f64 - center.0).hypot(y as f64 - center.1);
            Rgb([if d <= radius { fg } else { bg }; 3])
        })
    }

    #[test]
    fn recovers_dark_disk_on_white() {
        let img = disk_image((48, 48), (20.0, 24.0), 6.0, 255, 40);
        let points = PointSet::new(vec![Point::new(20.0, 24.0)], (48, 48)).unwrap();
        let (part, _) = voronoi_encode(&points, (48, 48), 2.0).unwrap();
        let enc = local_cluster_encode(&img, &part, &ClusterParams::default()).unwrap();
        assert!(enc.fallback_regions.is_empty());
        assert_eq!(enc.labels.count(TriState::Ignored), 0);
        // oracle: threshold at the midpoint of the two region-local mean intensities
        let threshold = (255.0 + 40.0) / 2.0;
        for y in 0..48 {
            for x in 0..48 {
                let truth = f64::from(img.get_pixel(x, y).0[0]) < threshold;
                let got = enc.labels.get(x as usize, y as usize) == TriState::Foreground;
                if truth != got {
                    let d = (x as f64 - 20.0).hypot(y as f64 - 24.0);
                    assert!((d - 6.0).abs() <= 2.0, "mismatch at ({x},{y}), d={d}");
                }
            }
        }
    }

    #[test]
    fn uniform_region_falls_back_to_disk() {
        let img = RgbImage::from_pixel(16, 16, Rgb([200, 200, 200]));
        let points = PointSet::new(vec![Point::new(8.0, 8.0)], (16, 16)).unwrap();
        let (part, target) = voronoi_encode(&points, (16, 16), 2.0).unwrap();
        let enc = local_cluster_encode(&img, &part, &ClusterParams::default()).unwrap();
        assert_eq!(enc.fallback_regions, vec![0]);
        assert_eq!(enc.labels.foreground_mask(), target.foreground_mask());
    }

    #[test]
    fn global_uniform_is_error() {
        let img = RgbImage::from_pixel(8, 8, Rgb([10, 20, 30]));
        assert!(matches!(
            global_cluster_baseline(&img),
            Err(Error::DegenerateGlobalClustering)
        ));
    }

    #[test]
    fn global_keeps_high_contrast_cells() {
        let mut img = disk_image((40, 40), (10.0, 10.0), 4.0, 240, 30);
        for (x, y, p) in img.enumerate_pixels_mut() {
            if (x as f64 - 28.0).hypot(y as f64 - 28.0) <= 5.0 {
                *p = Rgb([50, 40, 90]);
            }
        }
        let target = global_cluster_baseline(&img).unwrap();
        for (x, y, p) in img.enumerate_pixels() {
            if p.0[0] < 100 {
                assert_eq!(target.get(x as usize, y as usize), TriState::Foreground);
            }
        }
    }
}
