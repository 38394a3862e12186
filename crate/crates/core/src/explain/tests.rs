use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::Region;
use crate::models::{Architecture, ModelSpec};

fn map(values: Vec<f64>, t: usize, d: usize, normalized: bool) -> AttributionMap {
    AttributionMap {
        kind: MapKind::Variables,
        values: Tensor::new(vec![t, d], values).unwrap(),
        target_class: 0,
        normalized,
    }
}

fn time_mask(t: usize, range: std::ops::Range<usize>) -> ExplanationMask {
    let cells = (0..t).flat_map(|i| [range.contains(&i), false]).collect();
    ExplanationMask::new(t, 2, cells, DEFAULT_THRESHOLD).unwrap()
}

#[test]
fn single_map_with_unit_gradient_is_its_relu() {
    let a = Tensor::new(vec![1, 2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let g = Tensor::full(&[1, 2, 2], 1.0);
    assert_eq!(weighted_activation(&a, &g).unwrap().data(), &[1.0, 0.0, 0.5, 3.0]);
}

#[test]
fn weights_are_spatial_means_of_gradients() {
    // Two maps, gradient means 0.5 and -1.
    let a = Tensor::new(vec![2, 1, 2], vec![2.0, 4.0, 1.0, 1.0]).unwrap();
    let g = Tensor::new(vec![2, 1, 2], vec![0.0, 1.0, -1.0, -1.0]).unwrap();
    // 0.5*[2,4] - [1,1] = [0, 1]
    assert_eq!(weighted_activation(&a, &g).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn zero_gradients_give_a_zero_map() {
    let a = Tensor::from_fn(&[3, 4, 2], |i| i as f64);
    let raw = weighted_activation(&a, &Tensor::zeros(&[3, 4, 2])).unwrap();
    assert!(raw.data().iter().all(|&v| v == 0.0));
    let n = normalize(&map(raw.into_data(), 4, 2, false));
    assert!(n.values.data().iter().all(|&v| v == 0.0));
    assert_eq!(threshold_mask(&n, 0.6).unwrap().count(), 0);
}

#[test]
fn power_of_two_rescaling_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = Tensor::from_fn(&[4, 6, 3], |_| rng.gen_range(0.0..2.0));
    let g = Tensor::from_fn(&[4, 6, 3], |_| rng.gen_range(-1.0..1.0));
    let base = normalize(&map(weighted_activation(&a, &g).unwrap().into_data(), 6, 3, false));
    for alpha in [0.25, 2.0, 1024.0] {
        let scaled = g.map(|v| v * alpha);
        let n = normalize(&map(weighted_activation(&a, &scaled).unwrap().into_data(), 6, 3, false));
        assert_eq!(n, base);
    }
}

#[test]
fn normalization_is_idempotent_and_bounded() {
    let m = normalize(&map(vec![0.0, 3.0, 1.5, 0.75], 2, 2, false));
    assert_eq!(m.values.data(), &[0.0, 1.0, 0.5, 0.25]);
    assert_eq!(normalize(&m), m);
}

#[test]
fn threshold_is_strict() {
    let m = map(vec![0.59, 0.60, 0.61, 1.0], 4, 1, true);
    let mask = threshold_mask(&m, 0.6).unwrap();
    assert_eq!(
        (0..4).map(|t| mask.get(t, 0)).collect::<Vec<_>>(),
        [false, false, true, true]
    );
    let single = map(vec![0.0, 1.0, 0.0, 0.0], 2, 2, true);
    assert_eq!(threshold_mask(&single, 0.6).unwrap().count(), 1);
    assert!(threshold_mask(&map(vec![2.0], 1, 1, false), 0.6).is_err());
}

#[test]
fn interval_iou() {
    let truth = Region {
        dim: 0,
        t_start: 60,
        t_end: 80,
    };
    assert_eq!(
        iou(&time_mask(100, 63..77), &truth, IouScope::TimeOnly).unwrap(),
        14.0 / 20.0
    );
    // Inclusive counting of [63..76] against [60..80].
    let inclusive = Region {
        dim: 0,
        t_start: 60,
        t_end: 81,
    };
    assert_eq!(
        iou(&time_mask(100, 63..77), &inclusive, IouScope::TimeOnly).unwrap(),
        14.0 / 21.0
    );
    assert_eq!(iou(&time_mask(100, 60..80), &truth, IouScope::TimeOnly).unwrap(), 1.0);
    assert_eq!(iou(&time_mask(100, 0..10), &truth, IouScope::TimeOnly).unwrap(), 0.0);
}

#[test]
fn cell_iou_counts_the_variable() {
    let truth = Region {
        dim: 0,
        t_start: 2,
        t_end: 4,
    };
    // Both variables selected on [2, 4): 2 cells hit, 4 in the union.
    let cells = (0..6).flat_map(|t| [(2..4).contains(&t); 2]).collect();
    let mask = ExplanationMask::new(6, 2, cells, 0.6).unwrap();
    assert_eq!(iou(&mask, &truth, IouScope::Cells).unwrap(), 0.5);
    assert_eq!(iou(&mask, &truth, IouScope::TimeOnly).unwrap(), 1.0);
    let empty = ExplanationMask::new(6, 2, vec![false; 12], 0.6).unwrap();
    assert_eq!(iou(&empty, &truth, IouScope::Cells).unwrap(), 0.0);
    assert!(iou(
        &empty,
        &Region {
            dim: 2,
            t_start: 0,
            t_end: 1
        },
        IouScope::Cells
    )
    .is_err());
}

#[test]
fn bilinear_geometry() {
    let g = Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap();
    let up = bilinear_resize(&g, 4, 1).unwrap();
    assert_eq!(up.data(), &[0.0, 0.25, 0.75, 1.0]);

    let same = Tensor::from_fn(&[5, 3], |i| (i as f64).sin());
    assert_eq!(bilinear_resize(&same, 5, 3).unwrap(), same);

    // Each of 50 source rows reaches at least two of 100 target rows.
    for src in 0..50 {
        let mut impulse = Tensor::zeros(&[50, 1]);
        impulse.data_mut()[src] = 1.0;
        let up = bilinear_resize(&impulse, 100, 2).unwrap();
        let rows = up.data().chunks(2).filter(|r| r[0] > 0.0).count();
        assert!(rows >= 2, "source {src} reached {rows} rows");
        assert!(up.data().chunks(2).all(|r| r[0] == r[1]));
    }
}

fn small_model(arch: Architecture, seed: u64) -> Model {
    Model::new(ModelSpec::new(arch, 24, 3, 3).with_filters(8), seed).unwrap()
}

fn sample(seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[3, 24], |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn xcm_maps_have_input_shape() {
    for arch in [Architecture::Xcm, Architecture::XcmSeq] {
        let model = small_model(arch, 1);
        for c in 0..3 {
            let v = gradcam_variables(&model, &sample(2), c).unwrap();
            let t = gradcam_time(&model, &sample(2), c).unwrap();
            assert_eq!(v.values.shape(), &[24, 3]);
            assert_eq!(t.values.shape(), &[24, 3]);
            for row in t.values.data().chunks(3) {
                assert!(row.iter().all(|&x| x == row[0]));
            }
            for m in [&v, &t] {
                assert!(m.values.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }
}

#[test]
fn generic_path_matches_exact_path_at_full_resolution() {
    let model = small_model(Architecture::Xcm, 3);
    let exact = gradcam_variables(&model, &sample(4), 1).unwrap();
    let generic = gradcam_generic(&model, Tap::VarsBlock, &sample(4), 1, (24, 3)).unwrap();
    assert_eq!(exact, generic);
}

#[test]
fn mtex_needs_the_generic_path() {
    let model = small_model(Architecture::MtexCnn, 3);
    assert!(gradcam_variables(&model, &sample(4), 0).is_err());
    assert!(gradcam_time(&model, &sample(4), 0).is_err());
    let e = explain(&model, &sample(4), None).unwrap();
    assert_eq!(e.time.values.shape(), &[24, 3]);
    assert_eq!(e.target_class, e.predicted_class);
}

#[test]
fn out_of_range_class_is_an_error() {
    let model = small_model(Architecture::Xcm, 0);
    assert!(gradcam_variables(&model, &sample(0), 3).is_err());
    assert!(explain(&model, &sample(0), Some(7)).is_err());
    assert!(gradcam_time(&model, &Tensor::zeros(&[2, 24]), 0).is_err());
}

#[test]
fn ppm_bytes_are_exact() {
    let m = map(vec![0.0, 1.0, 0.5, 0.2], 2, 2, true);
    let mut expected = b"P6\n2 2\n255\n".to_vec();
    // Row d0: t0 = 0.0, t1 = 0.5; row d1: t0 = 1.0, t1 = 0.2.
    expected.extend([255, 255, 255, 255, 128, 128, 255, 0, 0, 255, 204, 204]);
    assert_eq!(map_to_ppm(&m), expected);
}

#[test]
fn csv_rows_are_timestamps() {
    let m = map(vec![0.0, 1.0, 0.5, 0.25], 2, 2, true);
    let text = String::from_utf8(map_to_csv(&m).unwrap()).unwrap();
    assert_eq!(text, "t,d0,d1\n0,0,1\n1,0.5,0.25\n");
}
