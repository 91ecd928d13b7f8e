//! Per-channel standardization.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel statistics on the 0..255 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// A standardized RGB image stored as three planes (`[c][y][x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    planes: Vec<f32>,
}

impl NormalizedImage {
    pub fn from_planes(width: usize, height: usize, planes: Vec<f32>) -> Result<Self> {
        if planes.len() != 3 * width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} plane values for {width}x{height}, got {}",
                3 * width * height,
                planes.len()
            )));
        }
        Ok(Self { width, height, planes })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn planes(&self) -> &[f32] {
        &self.planes
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.planes[c * n..(c + 1) * n]
    }

    pub fn apply(image: &RgbImage, stats: &NormStats) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let n = w * h;
        let mut planes = vec![0f32; 3 * n];
        for (i, px) in image.pixels().enumerate() {
            for c in 0..3 {
                planes[c * n + i] = ((f64::from(px.0[c]) - stats.mean[c]) / stats.std[c]) as f32;
            }
        }
        Self {
            width: w,
            height: h,
            planes,
        }
    }
}

impl NormStats {
    /// Population mean and standard deviation of every channel over all pixels of all images.
    pub fn compute<'a>(images: impl IntoIterator<Item = &'a RgbImage>) -> Result<Self> {
        let mut count = 0u64;
        let mut sum = [0f64; 3];
        let mut sum_sq = [0f64; 3];
        for image in images {
            for px in image.pixels() {
                count += 1;
                for c in 0..3 {
                    let v = f64::from(px.0[c]);
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = count as f64;
        let mean = sum.map(|s| s / n);
        let mut std = [0f64; 3];
        for c in 0..3 {
            let var = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
            std[c] = var.sqrt();
            // 8-bit data: any real spread is far above rounding noise
            if std[c] < 1e-9 {
                return Err(Error::DegenerateChannel { channel: c });
            }
        }
        Ok(Self { mean, std })
    }
}

/// Standardizes every image. Without `stats`, statistics are computed from `images`
/// (the training split); with `stats`, they are applied unchanged.
pub fn normalize(images: &[&RgbImage], stats: Option<NormStats>) -> Result<(Vec<NormalizedImage>, NormStats)> {
    let stats = match stats {
        Some(s) => {
            if s.std.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                let channel = s.std.iter().position(|&v| !(v > 0.0 && v.is_finite())).unwrap_or(0);
                return Err(Error::DegenerateChannel { channel });
            }
            s
        }
        None => NormStats::compute(images.iter().copied())?,
    };
    let out = images.iter().map(|img| NormalizedImage::apply(img, &stats)).collect();
    Ok((out, stats))
}
