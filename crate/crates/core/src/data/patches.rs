//! Fixed-size tiling of samples.

use image::RgbImage;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::{Point, PointSet};
use crate::post::InstanceMask;

/// Keeps the instances listed in `kept` (old ids, in new point order) and renumbers them
/// `1..=kept.len()`. Every other instance becomes background.
pub(crate) fn retain_instances(ids: &Grid<u32>, kept: &[u32]) -> InstanceMask {
    let max = ids.iter().copied().max().unwrap_or(0) as usize;
    let mut remap = vec![0u32; max + 1];
    for (i, &old) in kept.iter().enumerate() {
        remap[old as usize] = i as u32 + 1;
    }
    InstanceMask::from_ordered_ids(ids.map(|&id| remap[id as usize]), kept.len() as u32)
}

/// Cuts `size x size` tiles every `stride` pixels, dropping partial tiles at the right and
/// bottom edges. A point goes to every tile containing its rounded pixel. Instance masks are
/// cropped alongside; an instance survives in a tile only if its point does.
pub fn extract_patches(sample: &Sample, size: usize, stride: usize) -> Result<Vec<Sample>> {
    let (w, h) = sample.dims();
    if size == 0 || stride == 0 {
        return Err(Error::param("size/stride", "must be >= 1"));
    }
    if size > w || size > h {
        return Err(Error::param("size", format!("{size} exceeds image {w}x{h}")));
    }
    let mut patches = Vec::new();
    for y0 in (0..=h - size).step_by(stride) {
        for x0 in (0..=w - size).step_by(stride) {
            patches.push(crop(sample, x0, y0, size, size, format!("{}_{}_{}", sample.id, x0, y0)));
        }
    }
    Ok(patches)
}

/// Crops a rectangle that lies inside the image.
pub(crate) fn crop(sample: &Sample, x0: usize, y0: usize, cw: usize, ch: usize, id: String) -> Sample {
    let dims = sample.dims();
    let image = RgbImage::from_fn(cw as u32, ch as u32, |x, y| {
        *sample.image.get_pixel(x0 as u32 + x, y0 as u32 + y)
    });
    let mut points = Vec::new();
    let mut kept = Vec::new();
    for (i, p) in sample.points.iter().enumerate() {
        let (px, py) = p.pixel(dims);
        if (x0..x0 + cw).contains(&px) && (y0..y0 + ch).contains(&py) {
            // a point just left of / above the cut rounds into this tile; pin it to the edge
            points.push(Point {
                x: (p.x - x0 as f64).max(0.0),
                y: (p.y - y0 as f64).max(0.0),
                class: p.class.clone(),
            });
            kept.push(i as u32 + 1);
        }
    }
    let instances = sample.instances.as_ref().map(|mask| {
        let ids = Grid::from_fn(cw, ch, |x, y| mask.get(x0 + x, y0 + y));
        retain_instances(&ids, &kept)
    });
    Sample {
        id,
        image,
        points: PointSet::from_trusted(points),
        instances,
        provenance: sample.provenance.clone(),
    }
}
