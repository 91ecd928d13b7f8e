//! Geometric augmentation applied jointly to an image, its points and its instance mask.
//!
//! Coordinates refer to pixel centers. Flips, quarter turns and crops permute pixels
//! exactly. Resize and affine warps sample the image bilinearly and the instance mask by
//! nearest neighbor, both through the inverse mapping.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::patches::{crop, retain_instances};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::{Point, PointSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentOp {
    Hflip,
    Vflip,
    /// `turns` clockwise quarter turns.
    Rotate90 {
        turns: u8,
    },
    Resize {
        scale: f64,
    },
    /// Maps `(x, y)` to `(m[0][0] x + m[0][1] y + m[0][2], m[1][0] x + m[1][1] y + m[1][2])`.
    /// The output keeps the input size.
    Affine {
        matrix: [[f64; 3]; 2],
    },
    Crop {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    /// Each flip with probability 1/2.
    RandomFlip,
    RandomRotate90,
    RandomResize {
        min_scale: f64,
        max_scale: f64,
    },
    /// Rotation and shear about the image center, angles in degrees.
    RandomAffine {
        max_rotation: f64,
        max_shear: f64,
    },
    RandomCrop {
        width: usize,
        height: usize,
    },
}

impl AugmentOp {
    /// Resize, affine and flip/rotation ops with the default ranges.
    pub fn default_random() -> Vec<AugmentOp> {
        vec![
            AugmentOp::RandomFlip,
            AugmentOp::RandomRotate90,
            AugmentOp::RandomResize {
                min_scale: 0.8,
                max_scale: 1.2,
            },
            AugmentOp::RandomAffine {
                max_rotation: 15.0,
                max_shear: 5.0,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    /// Points mapped outside the output, removed with their instances.
    pub dropped_points: usize,
}

/// Applies `ops` in order. Random ops draw from a generator seeded with `seed`.
pub fn augment_sample(sample: &Sample, ops: &[AugmentOp], seed: u64) -> Result<(Sample, AugmentReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = sample.clone();
    let mut report = AugmentReport::default();
    for op in ops {
        let op = resolve(op, &mut rng, current.dims())?;
        current = apply(&current, &op, &mut report)?;
    }
    if report.dropped_points > 0 {
        log::debug!(
            "{}: {} points fell outside after augmentation",
            sample.id,
            report.dropped_points
        );
    }
    Ok((current, report))
}

fn resolve(op: &AugmentOp, rng: &mut ChaCha8Rng, dims: (usize, usize)) -> Result<AugmentOp> {
    Ok(match *op {
        AugmentOp::RandomFlip => {
            let h = rng.random_bool(0.5);
            let v = rng.random_bool(0.5);
            // both flips equal a half turn
            match (h, v) {
                (false, false) => AugmentOp::Rotate90 { turns: 0 },
                (true, false) => AugmentOp::Hflip,
                (false, true) => AugmentOp::Vflip,
                (true, true) => AugmentOp::Rotate90 { turns: 2 },
            }
        }
        AugmentOp::RandomRotate90 => AugmentOp::Rotate90 {
            turns: rng.random_range(0..4),
        },
        AugmentOp::RandomResize { min_scale, max_scale } => {
            if !(min_scale > 0.0 && min_scale <= max_scale) {
                return Err(Error::param("random_resize", "need 0 < min_scale <= max_scale"));
            }
            AugmentOp::Resize {
                scale: rng.random_range(min_scale..=max_scale),
            }
        }
        AugmentOp::RandomAffine {
            max_rotation,
            max_shear,
        } => {
            if !(max_rotation >= 0.0 && max_shear >= 0.0) {
                return Err(Error::param("random_affine", "ranges must be >= 0"));
            }
            let theta = rng.random_range(-max_rotation..=max_rotation).to_radians();
            let shear = rng.random_range(-max_shear..=max_shear).to_radians().tan();
            let (s, c) = theta.sin_cos();
            // rotation after a horizontal shear, about the center
            let a = [[c, c * shear - s], [s, s * shear + c]];
            let cx = (dims.0 as f64 - 1.0) / 2.0;
            let cy = (dims.1 as f64 - 1.0) / 2.0;
            AugmentOp::Affine {
                matrix: [
                    [a[0][0], a[0][1], cx - a[0][0] * cx - a[0][1] * cy],
                    [a[1][0], a[1][1], cy - a[1][0] * cx - a[1][1] * cy],
                ],
            }
        }
        AugmentOp::RandomCrop { width, height } => {
            if width == 0 || height == 0 || width > dims.0 || height > dims.1 {
                return Err(Error::param(
                    "random_crop",
                    format!("{width}x{height} does not fit {}x{}", dims.0, dims.1),
                ));
            }
            AugmentOp::Crop {
                x: rng.random_range(0..=dims.0 - width),
                y: rng.random_range(0..=dims.1 - height),
                width,
                height,
            }
        }
        ref other => other.clone(),
    })
}

fn apply(sample: &Sample, op: &AugmentOp, report: &mut AugmentReport) -> Result<Sample> {
    let (w, h) = sample.dims();
    let (wf, hf) = (w as f64, h as f64);
    match *op {
        AugmentOp::Hflip => Ok(permute(sample, (w, h), |x, y| (w - 1 - x, y), |x, y| (wf - 1.0 - x, y))),
        AugmentOp::Vflip => Ok(permute(sample, (w, h), |x, y| (x, h - 1 - y), |x, y| (x, hf - 1.0 - y))),
        AugmentOp::Rotate90 { turns } => Ok(match turns % 4 {
            0 => sample.clone(),
            // clockwise: (x, y) -> (H - 1 - y, x)
            1 => permute(sample, (h, w), |x, y| (y, h - 1 - x), |x, y| (hf - 1.0 - y, x)),
            2 => permute(
                sample,
                (w, h),
                |x, y| (w - 1 - x, h - 1 - y),
                |x, y| (wf - 1.0 - x, hf - 1.0 - y),
            ),
            _ => permute(sample, (h, w), |x, y| (w - 1 - y, x), |x, y| (y, wf - 1.0 - x)),
        }),
        AugmentOp::Crop { x, y, width, height } => {
            if width == 0 || height == 0 || x + width > w || y + height > h {
                return Err(Error::param("crop", format!("rectangle does not fit {w}x{h}")));
            }
            let out = crop(sample, x, y, width, height, sample.id.clone());
            report.dropped_points += sample.points.len() - out.points.len();
            Ok(out)
        }
        AugmentOp::Resize { scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::param("resize", "scale must be positive"));
            }
            let nw = (wf * scale).round() as usize;
            let nh = (hf * scale).round() as usize;
            if nw == 0 || nh == 0 {
                return Err(Error::param("resize", "output would be empty"));
            }
            if (nw, nh) == (w, h) {
                return Ok(sample.clone());
            }
            let (sx, sy) = (nw as f64 / wf, nh as f64 / hf);
            let forward = [[sx, 0.0, 0.5 * sx - 0.5], [0.0, sy, 0.5 * sy - 0.5]];
            warp(sample, forward, (nw, nh), report)
        }
        AugmentOp::Affine { matrix } => warp(sample, matrix, (w, h), report),
        _ => unreachable!("random ops are resolved first"),
    }
}

/// Exact pixel permutation. `src(x', y')` gives the source pixel of an output pixel and
/// `fwd` maps continuous point coordinates.
fn permute(
    sample: &Sample,
    out_dims: (usize, usize),
    src: impl Fn(usize, usize) -> (usize, usize),
    fwd: impl Fn(f64, f64) -> (f64, f64),
) -> Sample {
    let in_dims = sample.dims();
    let image = RgbImage::from_fn(out_dims.0 as u32, out_dims.1 as u32, |x, y| {
        let (sx, sy) = src(x as usize, y as usize);
        *sample.image.get_pixel(sx as u32, sy as u32)
    });
    let instances = sample.instances.as_ref().map(|mask| {
        let ids = Grid::from_fn(out_dims.0, out_dims.1, |x, y| {
            let (sx, sy) = src(x, y);
            mask.get(sx, sy)
        });
        crate::post::InstanceMask::from_ordered_ids(ids, mask.count() as u32)
    });
    let points = sample
        .points
        .iter()
        .map(|p| {
            let (mut x, mut y) = fwd(p.x, p.y);
            // an exact .5 rounds the other way once mirrored; pull it back onto the mirrored pixel
            let (px, py) = p.pixel(in_dims);
            let (tx, ty) = fwd(px as f64, py as f64);
            if x.round() != tx {
                x = tx + (x - tx) * 0.999_999;
            }
            if y.round() != ty {
                y = ty + (y - ty) * 0.999_999;
            }
            Point {
                x,
                y,
                class: p.class.clone(),
            }
        })
        .collect();
    let mut out = Sample {
        id: sample.id.clone(),
        image,
        points: PointSet::from_trusted(points),
        instances,
        provenance: sample.provenance.clone(),
    };
    snap_to_instances(&mut out);
    out
}

fn invert(m: [[f64; 3]; 2]) -> Result<[[f64; 3]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > 1e-12) || !det.is_finite() {
        return Err(Error::param("affine", "matrix is singular"));
    }
    let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
    Ok([
        [a, b, -(a * m[0][2] + b * m[1][2])],
        [c, d, -(c * m[0][2] + d * m[1][2])],
    ])
}

fn apply_affine(m: &[[f64; 3]; 2], x: f64, y: f64) -> (f64, f64) {
    (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
}

fn mean_color(image: &RgbImage) -> [f64; 3] {
    let mut sum = [0.0; 3];
    for p in image.pixels() {
        for c in 0..3 {
            sum[c] += f64::from(p[c]);
        }
    }
    let n = (image.width() * image.height()).max(1) as f64;
    sum.map(|s| s / n)
}

fn warp(
    sample: &Sample,
    forward: [[f64; 3]; 2],
    out_dims: (usize, usize),
    report: &mut AugmentReport,
) -> Result<Sample> {
    let inverse = invert(forward)?;
    let (w, h) = sample.dims();
    let (wf, hf) = (w as f64, h as f64);
    let fill = mean_color(&sample.image);
    let inside = |sx: f64, sy: f64| sx >= -0.5 && sy >= -0.5 && sx <= wf - 0.5 && sy <= hf - 0.5;

    let image = RgbImage::from_fn(out_dims.0 as u32, out_dims.1 as u32, |x, y| {
        let (sx, sy) = apply_affine(&inverse, x as f64, y as f64);
        if !inside(sx, sy) {
            return Rgb(fill.map(|v| v.round() as u8));
        }
        let sx = sx.clamp(0.0, wf - 1.0);
        let sy = sy.clamp(0.0, hf - 1.0);
        let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(w as u32 - 1), (y0 + 1).min(h as u32 - 1));
        let (fx, fy) = (sx - f64::from(x0), sy - f64::from(y0));
        let px = |xx, yy| sample.image.get_pixel(xx, yy).0.map(f64::from);
        let (a, b, c, d) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
        let mut v = [0u8; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            v[k] = (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8;
        }
        Rgb(v)
    });

    let (ow, oh) = (out_dims.0 as f64, out_dims.1 as f64);
    let mut points = Vec::new();
    let mut kept = Vec::new();
    let mut taken = std::collections::HashSet::new();
    for (i, p) in sample.points.iter().enumerate() {
        let (x, y) = apply_affine(&forward, p.x, p.y);
        let lands = x >= -0.5 && y >= -0.5 && x < ow - 0.5 && y < oh - 0.5;
        let q = Point {
            x: x.max(0.0),
            y: y.max(0.0),
            class: p.class.clone(),
        };
        // downscaling can merge two points into one pixel; keep the first
        if lands && taken.insert(q.pixel(out_dims)) {
            points.push(q);
            kept.push(i as u32 + 1);
        } else {
            report.dropped_points += 1;
        }
    }

    let instances = sample.instances.as_ref().map(|mask| {
        let ids = Grid::from_fn(out_dims.0, out_dims.1, |x, y| {
            let (sx, sy) = apply_affine(&inverse, x as f64, y as f64);
            if inside(sx, sy) {
                let sx = (sx.round().max(0.0) as usize).min(w - 1);
                let sy = (sy.round().max(0.0) as usize).min(h - 1);
                mask.get(sx, sy)
            } else {
                0
            }
        });
        retain_instances(&ids, &kept)
    });

    let mut out = Sample {
        id: sample.id.clone(),
        image,
        points: PointSet::from_trusted(points),
        instances,
        provenance: sample.provenance.clone(),
    };
    snap_to_instances(&mut out);
    Ok(out)
}

/// Nearest-neighbor resampling can shave the pixel under a point off its instance; stamp it
/// back so that every point stays inside its own instance.
fn snap_to_instances(sample: &mut Sample) {
    let dims = sample.dims();
    let Some(mask) = sample.instances.as_ref() else {
        return;
    };
    let mut ids = mask.ids().clone();
    let count = mask.count() as u32;
    for (i, p) in sample.points.iter().enumerate() {
        let (px, py) = p.pixel(dims);
        ids.set(px, py, i as u32 + 1);
    }
    sample.instances = Some(crate::post::InstanceMask::from_ordered_ids(ids, count));
}
