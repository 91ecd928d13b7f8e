mod common;

use image::{Rgb, RgbImage};
use pointseg::encode::{
    filtered_repel, local_cluster_encode, repel_encode, voronoi_encode, ClusterParams, RepelParams, TriState,
};
use pointseg::{Point, PointSet};
use proptest::prelude::*;
use rand::Rng;

use common::{nearest_sites, random_points, rng};

fn arb_layout() -> impl Strategy<Value = (usize, usize, PointSet)> {
    (4usize..=64, 4usize..=64, any::<u64>()).prop_map(|(w, h, seed)| {
        let points = random_points(&mut rng(seed), w, h, 20);
        (w, h, points)
    })
}

fn speckled(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    RgbImage::from_fn(w as u32, h as u32, |_, _| Rgb([r.random(), r.random(), r.random()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regions_are_nearest_sites((w, h, points) in arb_layout()) {
        let (partition, _) = voronoi_encode(&points, (w, h), 2.0).unwrap();
        let sites = points.pixels((w, h));
        for y in 0..h {
            for x in 0..w {
                let region = *partition.region_id.get(x, y) as usize;
                prop_assert!(nearest_sites(&sites, x, y).contains(&region), "({x}, {y})");
            }
        }
    }

    #[test]
    fn repel_in_unit_interval_and_zero_beyond_radius((w, h, points) in arb_layout(), radius in 2.0f64..40.0) {
        let params = RepelParams::new(0.05, radius).unwrap();
        let map = repel_encode(&points, (w, h), &params).unwrap();
        let sites = points.pixels((w, h));
        for y in 0..h {
            for x in 0..w {
                let v = map.get(x, y);
                prop_assert!((0.0..=1.0).contains(&v));
                let d1 = sites
                    .iter()
                    .map(|s| (s.0 as f64 - x as f64).hypot(s.1 as f64 - y as f64))
                    .fold(f64::INFINITY, f64::min);
                if d1 >= radius {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn repel_non_increasing_along_ray(px in 0usize..48, py in 0usize..48, dir in 0usize..8) {
        let points = PointSet::new(vec![Point::new(px as f64, py as f64)], (48, 48)).unwrap();
        let map = repel_encode(&points, (48, 48), &RepelParams::new(0.05, 20.0).unwrap()).unwrap();
        let (dx, dy) = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)][dir];
        let (mut x, mut y) = (px as isize, py as isize);
        let mut prev = map.get(px, py);
        prop_assert_eq!(prev, 1.0);
        while (0..48).contains(&(x + dx)) && (0..48).contains(&(y + dy)) {
            x += dx;
            y += dy;
            let v = map.get(x as usize, y as usize);
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn repel_non_decreasing_in_neighbor_distance(d1 in 0.0f64..70.0, d in 0.0f64..200.0, step in 0.0f64..50.0) {
        let params = RepelParams::default();
        let near = params.value(d1, Some(d.max(d1)));
        let far = params.value(d1, Some(d.max(d1) + step));
        prop_assert!(far >= near, "{near} > {far}");
    }

    #[test]
    fn filtered_below_repel_and_equal_on_foreground((w, h, points) in arb_layout(), seed in any::<u64>()) {
        let image = speckled(w, h, seed);
        let (partition, _) = voronoi_encode(&points, (w, h), 2.0).unwrap();
        let cluster = local_cluster_encode(&image, &partition, &ClusterParams::default()).unwrap().labels;
        let repel = repel_encode(&points, (w, h), &RepelParams::default()).unwrap();
        let filtered = filtered_repel(&repel, &cluster).unwrap();
        for y in 0..h {
            for x in 0..w {
                prop_assert!(filtered.get(x, y) <= repel.get(x, y));
                if cluster.get(x, y) == TriState::Foreground {
                    prop_assert_eq!(filtered.get(x, y), repel.get(x, y));
                } else {
                    prop_assert_eq!(filtered.get(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn point_pixels_are_cluster_foreground((w, h, points) in arb_layout(), seed in any::<u64>()) {
        let image = speckled(w, h, seed);
        let (partition, _) = voronoi_encode(&points, (w, h), 2.0).unwrap();
        let cluster = local_cluster_encode(&image, &partition, &ClusterParams::default()).unwrap().labels;
        for (x, y) in points.pixels((w, h)) {
            prop_assert_eq!(cluster.get(x, y), TriState::Foreground);
        }
    }
}

#[test]
fn encodings_are_deterministic() {
    let points = random_points(&mut rng(5), 40, 30, 12);
    let image = speckled(40, 30, 6);
    let run = || {
        let (partition, voronoi) = voronoi_encode(&points, (40, 30), 2.0).unwrap();
        let cluster = local_cluster_encode(&image, &partition, &ClusterParams::default()).unwrap();
        let repel = repel_encode(&points, (40, 30), &RepelParams::default()).unwrap();
        (partition, voronoi, cluster, repel)
    };
    assert_eq!(run(), run());
}

#[test]
fn low_contrast_disk_is_recovered() {
    // 10/255 darker disk on a flat background
    let (w, h) = (32u32, 32u32);
    let image = RgbImage::from_fn(w, h, |x, y| {
        let inside = (x as f64 - 16.0).hypot(y as f64 - 16.0) <= 5.0;
        let v = if inside { 190 } else { 200 };
        Rgb([v, v, v])
    });
    let points = PointSet::new(vec![Point::new(16.0, 16.0)], (32, 32)).unwrap();
    let (partition, _) = voronoi_encode(&points, (32, 32), 2.0).unwrap();
    let cluster = local_cluster_encode(&image, &partition, &ClusterParams::default()).unwrap();
    assert!(cluster.fallback_regions.is_empty());
    let mut missed = 0;
    for y in 0..h {
        for x in 0..w {
            let inside = (x as f64 - 16.0).hypot(y as f64 - 16.0) <= 5.0;
            missed += usize::from(inside && cluster.labels.get(x as usize, y as usize) != TriState::Foreground);
        }
    }
    assert_eq!(missed, 0);
}
