//! Independent reference implementations used by the integration and acceptance tests.
#![allow(dead_code)]

use pointseg::encode::{TriState, TriStateLabelMap};
use pointseg::post::{Detection, InstanceMask};
use pointseg::{Grid, Point, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_points` distinct integer points in a `w x h` raster (at least one).
pub fn random_points(rng: &mut ChaCha8Rng, w: usize, h: usize, max_points: usize) -> PointSet {
    let n = rng.random_range(1..=max_points);
    let mut seen = std::collections::HashSet::new();
    let mut pts = Vec::new();
    while pts.len() < n {
        let p = (rng.random_range(0..w), rng.random_range(0..h));
        if seen.insert(p) {
            pts.push(Point::new(p.0 as f64, p.1 as f64));
        }
    }
    PointSet::new(pts, (w, h)).unwrap()
}

/// Indices of every site at minimal squared distance from `(x, y)`.
pub fn nearest_sites(sites: &[(usize, usize)], x: usize, y: usize) -> Vec<usize> {
    let d2 = |s: &(usize, usize)| {
        let dx = s.0 as i64 - x as i64;
        let dy = s.1 as i64 - y as i64;
        dx * dx + dy * dy
    };
    let best = sites.iter().map(d2).min().unwrap();
    (0..sites.len()).filter(|&i| d2(&sites[i]) == best).collect()
}

/// `-(t ln o + (1 - t) ln(1 - o))` summed over the pixels where `include` holds and divided
/// by `divisor`, with the nuclei probability `o` clamped to `[1e-7, 1 - 1e-7]`.
pub fn ce_oracle(target: &[u8], nuclei: &[f64], include: impl Fn(u8) -> bool, divisor: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..target.len() {
        if !include(target[i]) {
            continue;
        }
        let o = nuclei[i].clamp(1e-7, 1.0 - 1e-7);
        let t = if target[i] == 1 { 1.0 } else { 0.0 };
        total -= t * o.ln() + (1.0 - t) * (1.0 - o).ln();
    }
    total / divisor
}

pub fn mse_oracle(target: &[f64], nuclei: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..target.len() {
        total += (target[i] - nuclei[i]) * (target[i] - nuclei[i]);
    }
    total / target.len() as f64
}

pub fn tri_map(w: usize, h: usize, raw: &[u8]) -> TriStateLabelMap {
    TriStateLabelMap::new(Grid::from_vec(w, h, raw.iter().map(|&v| TriState::from_u8(v).unwrap()).collect()).unwrap())
}

fn ids_of(mask: &InstanceMask) -> Vec<u32> {
    mask.ids().iter().copied().collect()
}

fn pixel_set(ids: &[u32], id: u32) -> Vec<usize> {
    (0..ids.len()).filter(|&i| ids[i] == id).collect()
}

fn inter(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|i| b.contains(i)).count()
}

/// AJI by pixel-set enumeration, visiting truth ids in order and trying every unused
/// prediction for each.
pub fn aji_oracle(pred: &InstanceMask, truth: &InstanceMask) -> f64 {
    let (p_ids, t_ids) = (ids_of(pred), ids_of(truth));
    let preds: Vec<Vec<usize>> = (1..=pred.count() as u32).map(|id| pixel_set(&p_ids, id)).collect();
    let truths: Vec<Vec<usize>> = (1..=truth.count() as u32).map(|id| pixel_set(&t_ids, id)).collect();
    if truths.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut used = vec![false; preds.len()];
    let (mut num, mut den) = (0usize, 0usize);
    for g in &truths {
        let mut best: Option<(usize, usize, usize)> = None; // (pred, inter, union)
        for (j, s) in preds.iter().enumerate() {
            if used[j] {
                continue;
            }
            let i = inter(g, s);
            if i == 0 {
                continue;
            }
            let u = g.len() + s.len() - i;
            let better = match best {
                None => true,
                // i/u > bi/bu without division
                Some((_, bi, bu)) => i * bu > bi * u,
            };
            if better {
                best = Some((j, i, u));
            }
        }
        match best {
            Some((j, i, u)) => {
                used[j] = true;
                num += i;
                den += u;
            }
            None => den += g.len(),
        }
    }
    for (j, s) in preds.iter().enumerate() {
        if !used[j] {
            den += s.len();
        }
    }
    num as f64 / den as f64
}

/// Symmetric area-weighted object Dice by pixel-set enumeration.
pub fn dice_oracle(pred: &InstanceMask, truth: &InstanceMask) -> f64 {
    let (p_ids, t_ids) = (ids_of(pred), ids_of(truth));
    let preds: Vec<Vec<usize>> = (1..=pred.count() as u32).map(|id| pixel_set(&p_ids, id)).collect();
    let truths: Vec<Vec<usize>> = (1..=truth.count() as u32).map(|id| pixel_set(&t_ids, id)).collect();
    if preds.is_empty() && truths.is_empty() {
        return 1.0;
    }
    let side = |a: &[Vec<usize>], b: &[Vec<usize>]| -> f64 {
        let total: usize = a.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for g in a {
            let mut best_i = 0;
            let mut best_len = 0;
            for s in b {
                let i = inter(g, s);
                if i > best_i {
                    best_i = i;
                    best_len = s.len();
                }
            }
            let d = if best_i == 0 {
                0.0
            } else {
                2.0 * best_i as f64 / (g.len() + best_len) as f64
            };
            sum += g.len() as f64 / total as f64 * d;
        }
        sum
    };
    0.5 * (side(&truths, &preds) + side(&preds, &truths))
}

/// Best one-to-one matching by exhaustive search: most pairs within `radius`, then least
/// total distance. Returns the number of matches and the total distance.
pub fn matching_oracle(pred: &[Detection], truth: &[Point], radius: f64) -> (usize, f64) {
    fn go(p: usize, pred: &[Detection], truth: &[Point], radius: f64, used: &mut Vec<bool>) -> (usize, f64) {
        if p == pred.len() {
            return (0, 0.0);
        }
        // leave pred p unmatched
        let mut best = go(p + 1, pred, truth, radius, used);
        for t in 0..truth.len() {
            if used[t] {
                continue;
            }
            let d = (pred[p].x - truth[t].x).hypot(pred[p].y - truth[t].y);
            if d > radius {
                continue;
            }
            used[t] = true;
            let (n, cost) = go(p + 1, pred, truth, radius, used);
            used[t] = false;
            let cand = (n + 1, cost + d);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1 - 1e-12) {
                best = cand;
            }
        }
        best
    }
    go(0, pred, truth, radius, &mut vec![false; truth.len()])
}

/// Lin's CCC from textbook population moments, written out term by term.
pub fn ccc_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
    }
    let (mx, my) = (sx / n, sy / n);
    for i in 0..x.len() {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    2.0 * (sxy / n) / (sxx / n + syy / n + (mx - my) * (mx - my))
}

/// Random instance mask on a `w x h` grid with up to `max_objects` axis-aligned blobs.
pub fn random_instances(rng: &mut ChaCha8Rng, w: usize, h: usize, max_objects: usize) -> InstanceMask {
    let mut ids = Grid::new(w, h, 0u32);
    let n = rng.random_range(0..=max_objects);
    for k in 1..=n as u32 {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (bw, bh) = (rng.random_range(1..=w / 2), rng.random_range(1..=h / 2));
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                // later objects may overwrite earlier ones, creating partial overlaps
                if rng.random_bool(0.9) {
                    ids.set(x, y, k);
                }
            }
        }
    }
    InstanceMask::from_ids(ids)
}
