mod common;

use fallwatch::roi_depth::{
    estimate, estimate_double_threshold, estimate_histogram, estimate_kmeans, Estimator, EstimatorParams,
    RoiDepthSample,
};
use fallwatch::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALL: [Estimator; 3] = [Estimator::Histogram, Estimator::Kmeans, Estimator::DoubleThreshold];

/// Histogram mode computed by sorting values into bins one at a time.
fn histogram_oracle(values: &[f64], k: usize) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return lo;
    }
    let width = (hi - lo) / k as f64;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); k];
    for &v in values {
        let mut b = 0;
        while b + 1 < k && v >= lo + (b + 1) as f64 * width {
            b += 1;
        }
        bins[b].push(v);
    }
    let most = bins.iter().map(Vec::len).max().unwrap();
    let first = bins.iter().position(|b| b.len() == most).unwrap();
    bins[first].iter().sum::<f64>() / most as f64
}

/// Exhaustive 1-D 2-means: best split of the sorted values, then the mean
/// of the larger side.
fn two_means_oracle(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let sse = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let split = (1..s.len())
        .min_by(|&a, &b| (sse(&s[..a]) + sse(&s[a..])).total_cmp(&(sse(&s[..b]) + sse(&s[b..]))))
        .unwrap();
    let (near, far) = s.split_at(split);
    let side = if far.len() > near.len() { far } else { near };
    side.iter().sum::<f64>() / side.len() as f64
}

#[test]
fn hand_computed_double_threshold() {
    // mean 2.3 -> drop 5.0 (> 2.8); mean 1.625 -> drop 0.5 (< 1.125); mean 2.0
    let p = EstimatorParams {
        x_b: 0.5,
        x_f: 0.5,
        ..EstimatorParams::default()
    };
    let d = estimate_double_threshold(&RoiDepthSample::new([0.5, 1.9, 2.0, 2.1, 5.0]), &p).unwrap();
    assert!((d - 2.0).abs() < 1e-12);
}

#[test]
fn empty_and_invalid_samples_have_no_depth() {
    let p = EstimatorParams::default();
    for e in ALL {
        for s in [RoiDepthSample::new([]), RoiDepthSample::new([0.0, -1.0, f64::NAN])] {
            assert!(matches!(estimate(e, &s, &p), Err(Error::NoDepth)), "{e:?}");
        }
    }
}

#[test]
fn constant_sample_returns_the_constant() {
    let p = EstimatorParams::default();
    let s = RoiDepthSample::new(vec![1.75; 40]);
    for e in ALL {
        assert_eq!(estimate(e, &s, &p).unwrap(), 1.75, "{e:?}");
    }
}

#[test]
fn kmeans_with_fewer_values_than_clusters_is_the_mean() {
    let p = EstimatorParams::default();
    let d = estimate_kmeans(&RoiDepthSample::new([1.0, 2.0]), &p).unwrap();
    assert_eq!(d, 1.5);
}

proptest! {
    #[test]
    fn histogram_matches_binning_oracle(
        values in prop::collection::vec(0.3..8.0f64, 1..200),
        k in 2usize..20,
    ) {
        let p = EstimatorParams { k_bins: k, ..EstimatorParams::default() };
        let got = estimate_histogram(&RoiDepthSample::new(values.clone()), &p).unwrap();
        let want = histogram_oracle(&values, k);
        prop_assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn estimates_stay_within_sample_range(values in prop::collection::vec(0.3..8.0f64, 1..200)) {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = RoiDepthSample::new(values);
        for e in ALL {
            if let Ok(d) = estimate(e, &s, &EstimatorParams::default()) {
                prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn two_means_matches_exhaustive_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = EstimatorParams {
        k_clusters: 2,
        ..EstimatorParams::default()
    };
    for _ in 0..200 {
        let near = rng.random_range(0.5..3.0);
        let far = near + rng.random_range(0.5..3.0);
        let frac = rng.random_range(0.55..0.85);
        let values = common::mixture(&mut rng, 150, &[(near, frac), (far, 1.0 - frac)], 0.02);
        let got = estimate_kmeans(&RoiDepthSample::new(values.clone()), &p).unwrap();
        let want = two_means_oracle(&values);
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }
}

#[test]
fn seventy_thirty_mixtures_all_estimators() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = EstimatorParams::default();
    for _ in 0..200 {
        let (truth, values) = common::seventy_thirty(&mut rng);
        let s = RoiDepthSample::new(values);
        for e in ALL {
            let d = estimate(e, &s, &p).unwrap();
            assert!((d - truth).abs() <= 0.05, "{e:?}: {d} vs {truth}");
        }
    }
}

#[test]
fn occluder_example() {
    // Object at 1.5 m, occluder at 0.8 m, background at 3 m.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = EstimatorParams::default();
    for parts in [
        vec![(1.5, 0.6), (0.8, 0.4)],
        vec![(1.5, 0.54), (0.8, 0.36), (3.0, 0.1)],
    ] {
        let values = common::mixture(&mut rng, 500, &parts, 0.01);
        let d = estimate_double_threshold(&RoiDepthSample::new(values), &p).unwrap();
        assert!((d - 1.5).abs() <= 0.05, "{parts:?}: {d}");
    }
}

#[test]
fn double_threshold_rejects_foreground_occluder() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = EstimatorParams::default();
    for _ in 0..200 {
        let (object, values) = common::occluded(&mut rng);
        let d = estimate_double_threshold(&RoiDepthSample::new(values), &p).unwrap();
        assert!((d - object).abs() <= 0.05, "{d} vs {object}");
    }
}
