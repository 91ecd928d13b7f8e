//! Cell-center point annotations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single cell-center annotation in pixel coordinates (`x` = column, `y` = row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Optional class tag. Carried through every transform, never used for encoding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, class: None }
    }

    pub fn with_class(x: f64, y: f64, class: impl Into<String>) -> Self {
        Self {
            x,
            y,
            class: Some(class.into()),
        }
    }

    /// The pixel this point falls in, clamped to the raster.
    pub fn pixel(&self, dims: (usize, usize)) -> (usize, usize) {
        let px = (self.x.round().max(0.0) as usize).min(dims.0.saturating_sub(1));
        let py = (self.y.round().max(0.0) as usize).min(dims.1.saturating_sub(1));
        (px, py)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Point annotations for one image. Every point lies in `[0, W) x [0, H)` and no two
/// points share a rounded pixel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet {
    points: Vec<Point>,
}

impl PointSet {
    /// Validates bounds and rounded-pixel uniqueness against an image of size `dims`.
    ///
    /// Every violation is reported, identified by its 1-based row.
    pub fn new(points: Vec<Point>, dims: (usize, usize)) -> Result<Self> {
        let problems = validation_problems(&points, dims);
        if !problems.is_empty() {
            return Err(Error::InvalidInput(problems.join("; ")));
        }
        Ok(Self { points })
    }

    /// Builds a set without validation. Callers own the invariants.
    pub(crate) fn from_trusted(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn as_slice(&self) -> &[Point] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<Point> {
        self.points
    }

    /// Rounded pixel location of every point.
    pub fn pixels(&self, dims: (usize, usize)) -> Vec<(usize, usize)> {
        self.points.iter().map(|p| p.pixel(dims)).collect()
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

pub(crate) fn validation_problems(points: &[Point], dims: (usize, usize)) -> Vec<String> {
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    let mut problems = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let row = i + 1;
        if !(p.x.is_finite() && p.y.is_finite()) {
            problems.push(format!("row {row}: non-finite coordinate"));
            continue;
        }
        if p.x < 0.0 || p.x >= w || p.y < 0.0 || p.y >= h {
            problems.push(format!(
                "row {row}: point ({}, {}) outside [0, {}) x [0, {})",
                p.x, p.y, dims.0, dims.1
            ));
            continue;
        }
        let key = p.pixel(dims);
        if let Some(first) = seen.insert(key, row) {
            problems.push(format!(
                "rows {first} and {row}: duplicate point at pixel ({}, {})",
                key.0, key.1
            ));
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_point_on_right_edge() {
        let err = PointSet::new(vec![Point::new(64.0, 0.0)], (64, 64)).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn rejects_duplicates_naming_both_rows() {
        let pts = vec![Point::new(3.0, 3.0), Point::new(10.0, 10.0), Point::new(3.2, 2.9)];
        let err = PointSet::new(pts, (16, 16)).unwrap_err().to_string();
        assert!(err.contains("rows 1 and 3"), "{err}");
    }

    #[test]
    fn accepts_valid_points() {
        let set = PointSet::new(vec![Point::new(0.0, 0.0), Point::new(63.4, 63.4)], (64, 64)).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.as_slice()[1].pixel((64, 64)), (63, 63));
    }
}
