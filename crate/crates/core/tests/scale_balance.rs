use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scalegrasp_core::geom::{GraspPose, GripperModel, Point3, Vec3};
use scalegrasp_core::scale_balance::{
    best_scale_per_point, build_scale_histogram, sample_weight, weighted_loss, GraspLabelSet, ScaleHistogram,
};

fn grasp(width: f64, score: f64) -> GraspPose {
    GraspPose {
        translation: Point3::origin(),
        approach: -Vec3::z(),
        angle: 0.0,
        width,
        depth: 0.01,
        score,
    }
}

/// Histogram whose bins hold `C_max * ratio`, rounded, with a large C_max so
/// the realized ratio is within 1e-15 of the target.
fn ratio_histogram(ratios: &[f64]) -> ScaleHistogram {
    const C_MAX: f64 = 1e15;
    ScaleHistogram::from_counts(0.1, ratios.iter().map(|r| (r * C_MAX).round() as u64).collect()).unwrap()
}

#[test]
fn weights_at_e_powers() {
    let h = ratio_histogram(&[1.0, (-1.0f64).exp(), (-2.0f64).exp()]);
    let widths = [0.01, 0.05, 0.09];
    for (w, want) in widths.iter().zip([1.0, 2.0, 3.0]) {
        let got = sample_weight(&h, Some(*w)).unwrap();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
    assert_eq!(sample_weight(&h, None).unwrap(), 1.0);
}

#[test]
fn empty_bins_clamp_and_unpopulated_errors() {
    let h = ScaleHistogram::from_counts(0.1, vec![4, 0]).unwrap();
    assert_eq!(sample_weight(&h, Some(0.09)).unwrap(), 1.0 - (0.25f64).ln());
    let empty = ScaleHistogram::new(5, 0.1).unwrap();
    assert!(sample_weight(&empty, None).is_err());
}

#[test]
fn histogram_binning_examples() {
    let h = build_scale_histogram(&[0.005, 0.015, 0.015], 10, 0.1).unwrap();
    assert_eq!(h.counts(), &[1, 2, 0, 0, 0, 0, 0, 0, 0, 0]);
    assert_eq!(h.c_max(), 2);
    let top = build_scale_histogram(&[0.1], 10, 0.1).unwrap();
    assert_eq!(top.counts()[9], 1);
    assert!(build_scale_histogram(&[0.1000001], 10, 0.1).is_err());
    assert!(build_scale_histogram(&[-1e-12], 10, 0.1).is_err());
}

#[test]
fn bin_edges_are_half_open() {
    let h = ScaleHistogram::new(10, 0.1).unwrap();
    for i in 1..10 {
        let e = h.edge(i);
        assert_eq!(h.bin_of(e).unwrap(), i, "edge {i}");
        let below = f64::from_bits(e.to_bits() - 1);
        assert_eq!(h.bin_of(below).unwrap(), i - 1, "below edge {i}");
    }
}

#[test]
fn weighted_loss_direct_substitution() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE02);
    for _ in 0..1000 {
        let n = rng.random_range(1..16);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.0)).collect();
        let alpha = rng.random_range(0.0..3.0);
        let direct = (0..n).map(|i| w[i] * (a[i] + alpha * r[i])).sum::<f64>() / n as f64;
        assert!((weighted_loss(&a, &r, &w, alpha).unwrap() - direct).abs() <= 1e-12);
        let no_rot = (0..n).map(|i| w[i] * a[i]).sum::<f64>() / n as f64;
        assert!((weighted_loss(&a, &r, &w, 0.0).unwrap() - no_rot).abs() <= 1e-12);
        let ones = vec![1.0; n];
        let plain = (0..n).map(|i| a[i] + alpha * r[i]).sum::<f64>() / n as f64;
        assert!((weighted_loss(&a, &r, &ones, alpha).unwrap() - plain).abs() <= 1e-12);
    }
    assert_eq!(weighted_loss(&[0.5], &[0.25], &[2.0], 1.0).unwrap(), 1.5);
    assert!(weighted_loss(&[1.0], &[1.0, 2.0], &[1.0], 1.0).is_err());
}

#[test]
fn best_scale_matches_linear_scan() {
    let gm = GripperModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB5);
    let per_point: Vec<Vec<GraspPose>> = (0..100)
        .map(|_| {
            (0..rng.random_range(0..8))
                .map(|_| {
                    // coarse grids make score and width ties frequent
                    grasp(rng.random_range(0..=10) as f64 * 0.01, rng.random_range(0..=4) as f64 * 0.25)
                })
                .collect()
        })
        .collect();
    let labels = GraspLabelSet::new(per_point.clone(), &gm).unwrap();
    let got = best_scale_per_point(&labels);
    for (grasps, g) in per_point.iter().zip(&got) {
        let mut best: Option<&GraspPose> = None;
        for c in grasps.iter().filter(|c| c.score > 0.0) {
            best = match best {
                None => Some(c),
                Some(b) if c.score > b.score || (c.score == b.score && c.width < b.width) => Some(c),
                keep => keep,
            };
        }
        assert_eq!(*g, best.map(|b| b.width));
    }
    let example = GraspLabelSet::new(vec![vec![grasp(0.03, 0.9), grasp(0.08, 0.5)], vec![]], &gm).unwrap();
    assert_eq!(best_scale_per_point(&example), vec![Some(0.03), None]);
}

proptest! {
    #[test]
    fn weights_at_least_one_and_monotone(counts in prop::collection::vec(0u64..1000, 1..12), pick in 0usize..12) {
        prop_assume!(counts.iter().any(|c| *c > 0));
        let h = ScaleHistogram::from_counts(0.1, counts.clone()).unwrap();
        let i = pick % counts.len();
        let width = (h.edge(i) + h.edge(i + 1)) / 2.0;
        let w = sample_weight(&h, Some(width)).unwrap();
        prop_assert!(w >= 1.0);
        prop_assert_eq!(w == 1.0, counts[i] == h.c_max());
        let mut bigger = counts.clone();
        bigger[i] = (counts[i] + 1).min(h.c_max());
        let h2 = ScaleHistogram::from_counts(0.1, bigger).unwrap();
        prop_assert!(sample_weight(&h2, Some(width)).unwrap() <= w);
    }

    #[test]
    fn histogram_counts_partition(scales in prop::collection::vec(0.0f64..=0.1, 0..200), t in 1usize..20) {
        let h = build_scale_histogram(&scales, t, 0.1).unwrap();
        prop_assert_eq!(h.total(), scales.len() as u64);
        // Sharded construction merges to the same counts.
        let mid = scales.len() / 2;
        let mut a = build_scale_histogram(&scales[..mid], t, 0.1).unwrap();
        a.merge(&build_scale_histogram(&scales[mid..], t, 0.1).unwrap()).unwrap();
        prop_assert_eq!(a, h);
    }

    #[test]
    fn loss_is_linear_in_weights(k in 0.0f64..10.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let r: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(1.0..3.0)).collect();
        let kw: Vec<f64> = w.iter().map(|x| x * k).collect();
        let base = weighted_loss(&a, &r, &w, 0.7).unwrap();
        prop_assert!((weighted_loss(&a, &r, &kw, 0.7).unwrap() - k * base).abs() <= 1e-12 * (1.0 + k * base));
    }
}
