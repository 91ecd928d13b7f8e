use crate::encode::{check_points_in_bounds, SiteIndex, TriState, TriStateLabelMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::points::PointSet;

/// Nearest-annotation partition of the pixel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiPartition {
    /// Index of the nearest annotation for every pixel (ties go to the lower index).
    pub region_id: Grid<u32>,
    /// Pixels with at least one 4-neighbor in a different region.
    pub line_mask: Grid<bool>,
    /// Rounded pixel of each annotation, indexed like `region_id`.
    pub sites: Vec<(usize, usize)>,
}

impl VoronoiPartition {
    pub fn dims(&self) -> (usize, usize) {
        self.region_id.dims()
    }

    pub fn region_count(&self) -> usize {
        self.sites.len()
    }

    /// Raster-ordered pixel indices of each region.
    pub fn region_pixels(&self) -> Vec<Vec<usize>> {
        let mut regions = vec![Vec::new(); self.sites.len()];
        for (i, &id) in self.region_id.iter().enumerate() {
            regions[id as usize].push(i);
        }
        regions
    }
}

/// Partitions `dims` by nearest annotation and builds the tri-state Voronoi target:
/// partition lines are background, a disk of `dot_radius` around each point (clipped to
/// the point's own region, minus line pixels) is foreground, everything else is ignored.
pub fn voronoi_encode(
    points: &PointSet,
    dims: (usize, usize),
    dot_radius: f64,
) -> Result<(VoronoiPartition, TriStateLabelMap)> {
    if points.is_empty() {
        return Err(Error::NoAnnotations);
    }
    if !(dot_radius >= 0.0 && dot_radius.is_finite()) {
        return Err(Error::param("dot_radius", "must be finite and non-negative"));
    }
    check_points_in_bounds(points, dims)?;
    let (w, h) = dims;
    let sites = points.pixels(dims);
    let index = SiteIndex::new(&sites, dims);

    let region_id = Grid::from_fn(w, h, |x, y| index.query(x, y).first.0 as u32);
    let line_mask = Grid::from_fn(w, h, |x, y| {
        let id = *region_id.get(x, y);
        region_id.neighbors4(x, y).any(|(nx, ny)| *region_id.get(nx, ny) != id)
    });

    let mut labels = Grid::new(w, h, TriState::Ignored);
    for (x, y) in (0..h).flat_map(|y| (0..w).map(move |x| (x, y))) {
        if *line_mask.get(x, y) {
            labels.set(x, y, TriState::Background);
        }
    }
    for (k, &site) in sites.iter().enumerate() {
        for (x, y) in disk_pixels(site, dot_radius, dims) {
            if *region_id.get(x, y) as usize == k && !*line_mask.get(x, y) {
                labels.set(x, y, TriState::Foreground);
            }
        }
    }

    Ok((
        VoronoiPartition {
            region_id,
            line_mask,
            sites,
        },
        TriStateLabelMap::new(labels),
    ))
}

/// Pixels whose center lies within `radius` of `center`.
pub(crate) fn disk_pixels(
    center: (usize, usize),
    radius: f64,
    dims: (usize, usize),
) -> impl Iterator<Item = (usize, usize)> {
    let reach = radius.floor() as i64;
    let (cx, cy) = (center.0 as i64, center.1 as i64);
    let r2 = radius * radius;
    (-reach..=reach)
        .flat_map(move |dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(move |&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r2)
        .map(move |(dx, dy)| (cx + dx, cy + dy))
        .filter(move |&(x, y)| x >= 0 && y >= 0 && (x as usize) < dims.0 && (y as usize) < dims.1)
        .map(|(x, y)| (x as usize, y as usize))
}
