//! Bucketed nearest / second-nearest site lookup on the pixel lattice.

/// The closest site to a query pixel, and the runner-up when more than one site exists.
/// Distances are squared. Ties are broken by lower site index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub first: (usize, f64),
    pub second: Option<(usize, f64)>,
}

/// Uniform bucket grid over integer site locations.
#[derive(Debug, Clone)]
pub struct SiteIndex {
    sites: Vec<(i64, i64)>,
    cell: i64,
    cols: i64,
    rows: i64,
    buckets: Vec<Vec<usize>>,
}

impl SiteIndex {
    /// `sites` must be non-empty and inside `dims`.
    pub fn new(sites: &[(usize, usize)], dims: (usize, usize)) -> Self {
        assert!(!sites.is_empty(), "site index needs at least one site");
        let area = (dims.0 * dims.1).max(1) as f64;
        let cell = ((area / sites.len() as f64).sqrt().ceil() as i64).max(4);
        let cols = (dims.0 as i64 + cell - 1) / cell;
        let rows = (dims.1 as i64 + cell - 1) / cell;
        let mut buckets = vec![Vec::new(); (cols * rows) as usize];
        let sites: Vec<(i64, i64)> = sites.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
        for (i, &(x, y)) in sites.iter().enumerate() {
            buckets[((y / cell) * cols + x / cell) as usize].push(i);
        }
        Self {
            sites,
            cell,
            cols,
            rows,
            buckets,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn query(&self, x: usize, y: usize) -> Nearest {
        let (x, y) = (x as i64, y as i64);
        let (cx, cy) = (x / self.cell, y / self.cell);
        let mut first: Option<(usize, f64)> = None;
        let mut second: Option<(usize, f64)> = None;
        let want_two = self.sites.len() > 1;
        let max_ring = self.cols.max(self.rows);

        for ring in 0..=max_ring {
            for (bx, by) in ring_cells(cx, cy, ring) {
                if bx < 0 || by < 0 || bx >= self.cols || by >= self.rows {
                    continue;
                }
                for &i in &self.buckets[(by * self.cols + bx) as usize] {
                    let (sx, sy) = self.sites[i];
                    let d = ((sx - x).pow(2) + (sy - y).pow(2)) as f64;
                    let cand = (i, d);
                    if first.is_none_or(|f| before(cand, f)) {
                        second = first;
                        first = Some(cand);
                    } else if second.is_none_or(|s| before(cand, s)) {
                        second = Some(cand);
                    }
                }
            }
            // Every site in ring + 1 or beyond is strictly farther than ring * cell.
            let bound = ((ring * self.cell) as f64).powi(2);
            let done = if want_two {
                second.is_some_and(|(_, d)| d <= bound)
            } else {
                first.is_some_and(|(_, d)| d <= bound)
            };
            if done {
                break;
            }
        }

        Nearest {
            first: first.expect("non-empty site index"),
            second,
        }
    }
}

#[inline]
fn before(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn ring_cells(cx: i64, cy: i64, ring: i64) -> Vec<(i64, i64)> {
    if ring == 0 {
        return vec![(cx, cy)];
    }
    let mut cells = Vec::with_capacity((8 * ring) as usize);
    for dx in -ring..=ring {
        cells.push((cx + dx, cy - ring));
        cells.push((cx + dx, cy + ring));
    }
    for dy in (-ring + 1)..ring {
        cells.push((cx - ring, cy + dy));
        cells.push((cx + ring, cy + dy));
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(sites: &[(usize, usize)], x: usize, y: usize) -> Nearest {
        let mut order: Vec<(usize, f64)> = sites
            .iter()
            .enumerate()
            .map(|(i, &(sx, sy))| {
                let dx = sx as f64 - x as f64;
                let dy = sy as f64 - y as f64;
                (i, dx * dx + dy * dy)
            })
            .collect();
        order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        Nearest {
            first: order[0],
            second: order.get(1).copied(),
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let w = rng.random_range(1..50);
            let h = rng.random_range(1..50);
            let n = rng.random_range(1..30);
            let sites: Vec<(usize, usize)> = (0..n)
                .map(|_| (rng.random_range(0..w), rng.random_range(0..h)))
                .collect();
            let index = SiteIndex::new(&sites, (w, h));
            for y in 0..h {
                for x in 0..w {
                    assert_eq!(index.query(x, y), brute(&sites, x, y), "({x},{y}) in {sites:?}");
                }
            }
        }
    }
}
