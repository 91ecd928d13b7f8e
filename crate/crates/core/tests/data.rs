use image::RgbImage;
use pointseg::data::{
    augment_sample, extract_patches, generate_one, generate_synthetic, load_dataset, normalize, AugmentOp, NormStats,
    SynthSpec,
};
use pointseg::encode::{local_cluster_encode, repel_encode, voronoi_encode, ClusterParams, RepelParams};
use proptest::prelude::*;

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        width: 64,
        height: 64,
        num_images: 6,
        cells: (3, 6),
        seed,
        ..SynthSpec::default()
    }
}

/// Smallest Euclidean distance between pixels of two different instances.
fn closest_pair_gap(sample: &pointseg::data::Sample) -> f64 {
    let ids = sample.instances.as_ref().unwrap();
    let (w, h) = ids.dims();
    let pixels: Vec<(f64, f64, u32)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter_map(|(x, y)| {
            let id = ids.get(x, y);
            (id > 0).then_some((x as f64, y as f64, id))
        })
        .collect();
    let mut best = f64::INFINITY;
    for a in &pixels {
        for b in &pixels {
            if a.2 < b.2 {
                best = best.min((a.0 - b.0).hypot(a.1 - b.1));
            }
        }
    }
    best
}

#[test]
fn generated_samples_encode_and_points_sit_in_their_instances() {
    for sample in generate_synthetic(&small_spec(11)).unwrap() {
        let dims = sample.dims();
        let (partition, _) = voronoi_encode(&sample.points, dims, 2.0).unwrap();
        local_cluster_encode(&sample.image, &partition, &ClusterParams::default()).unwrap();
        repel_encode(&sample.points, dims, &RepelParams::default()).unwrap();
        let ids = sample.instances.as_ref().unwrap();
        assert_eq!(ids.count(), sample.points.len());
        for (i, (x, y)) in sample.points.pixels(dims).into_iter().enumerate() {
            assert_eq!(ids.get(x, y), i as u32 + 1, "{} point {i}", sample.id);
        }
    }
}

#[test]
fn clustered_mode_places_touching_cells() {
    let spec = SynthSpec {
        cells: (20, 20),
        clustered_fraction: 1.0,
        num_images: 1,
        seed: 3,
        ..SynthSpec::default()
    };
    let sample = generate_one(&spec, 0).unwrap();
    assert_eq!(sample.points.len(), 20);
    assert!(closest_pair_gap(&sample) <= 2.0);
}

#[test]
fn sparse_mode_keeps_the_gap() {
    let spec = SynthSpec {
        clustered_fraction: 0.0,
        num_images: 4,
        ..small_spec(5)
    };
    for sample in generate_synthetic(&spec).unwrap() {
        assert!(closest_pair_gap(&sample) > spec.sparse_gap, "{}", sample.id);
    }
}

#[test]
fn patches_reassemble_bit_exactly() {
    let sample = generate_one(&small_spec(2), 0).unwrap();
    let patches = extract_patches(&sample, 16, 16).unwrap();
    assert_eq!(patches.len(), 16);
    let mut canvas = RgbImage::new(64, 64);
    for (k, patch) in patches.iter().enumerate() {
        let (x0, y0) = ((k % 4) as u32 * 16, (k / 4) as u32 * 16);
        for (x, y, px) in patch.image.enumerate_pixels() {
            canvas.put_pixel(x0 + x, y0 + y, *px);
        }
    }
    assert_eq!(canvas, sample.image);
    let points: usize = patches.iter().map(|p| p.points.len()).sum();
    assert_eq!(points, sample.points.len());
}

#[test]
fn training_stats_are_not_recomputed_for_test_images() {
    let train = generate_one(&small_spec(1), 0).unwrap().image;
    let shifted = RgbImage::from_fn(64, 64, |x, y| {
        let mut px = *train.get_pixel(x, y);
        for c in px.0.iter_mut() {
            *c = c.saturating_add(20);
        }
        px
    });
    let (_, stats) = normalize(&[&train], None).unwrap();
    let (out, kept) = normalize(&[&shifted], Some(stats)).unwrap();
    assert_eq!(kept, stats);
    let mean = out[0].channel(0).iter().map(|&v| f64::from(v)).sum::<f64>() / (64.0 * 64.0);
    assert!(mean > 0.1, "{mean}");
    assert_ne!(stats, NormStats::compute([&shifted]).unwrap());
}

fn write_case(dir: &std::path::Path, rows: &str) -> Vec<(std::path::PathBuf, std::path::PathBuf)> {
    let image = dir.join("a.png");
    RgbImage::from_pixel(20, 10, image::Rgb([200, 100, 50]))
        .save(&image)
        .unwrap();
    let points = dir.join("a.csv");
    std::fs::write(&points, rows).unwrap();
    vec![(image, points)]
}

#[test]
fn load_dataset_reads_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let samples = load_dataset(&write_case(dir.path(), "x,y\n1,1\n5.5,3\n19,9\n")).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].points.len(), 3);
    assert_eq!(samples[0].id, "a");
}

#[test]
fn load_dataset_rejects_point_on_right_edge() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(&write_case(dir.path(), "x,y\n20,0\n"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn load_dataset_names_both_duplicate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(&write_case(dir.path(), "x,y\n3,3\n7,7\n3.2,2.9\n"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("lines 2 and 4"), "{err}");
}

fn arb_ops() -> impl Strategy<Value = Vec<AugmentOp>> {
    let op = prop_oneof![
        Just(AugmentOp::Hflip),
        Just(AugmentOp::Vflip),
        (0u8..4).prop_map(|turns| AugmentOp::Rotate90 { turns }),
        (0.6f64..1.6).prop_map(|scale| AugmentOp::Resize { scale }),
        Just(AugmentOp::RandomFlip),
        Just(AugmentOp::RandomRotate90),
        Just(AugmentOp::RandomResize {
            min_scale: 0.8,
            max_scale: 1.2
        }),
        Just(AugmentOp::RandomAffine {
            max_rotation: 15.0,
            max_shear: 5.0
        }),
        Just(AugmentOp::RandomCrop { width: 40, height: 40 }),
    ];
    prop::collection::vec(op, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn augmentation_keeps_points_inside_their_instances(ops in arb_ops(), seed in any::<u64>(), index in 0usize..6) {
        let sample = generate_one(&small_spec(21), index).unwrap();
        let (out, report) = augment_sample(&sample, &ops, seed).unwrap();
        let ids = out.instances.as_ref().unwrap();
        prop_assert_eq!(ids.dims(), out.dims());
        prop_assert_eq!(ids.count(), out.points.len());
        prop_assert_eq!(out.points.len() + report.dropped_points, sample.points.len());
        for (i, (x, y)) in out.points.pixels(out.dims()).into_iter().enumerate() {
            prop_assert_eq!(ids.get(x, y), i as u32 + 1);
        }
        let again = augment_sample(&sample, &ops, seed).unwrap();
        prop_assert_eq!(&again.0, &out);
    }
}
