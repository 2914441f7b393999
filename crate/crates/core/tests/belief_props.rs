use cobol_core::belief::{beta1, maybe_double_norm_bound, BeliefDataset, BeliefModel, RadiusMode, RadiusRule};
use cobol_core::KernelConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn radius_examples() {
    assert!((beta1(0.01, 0.01, 0, 10, 1.0, 0.0).unwrap() - 0.2).abs() < 1e-12);
    // Proxy chosen so that ln(pi^2 t^2 / (6 delta)) + proxy = 1.
    let delta = 0.5;
    let proxy = 1.0 - (std::f64::consts::PI.powi(2) / (6.0 * delta)).ln();
    assert!((beta1(0.0, delta, 1, 1, 1.0, proxy).unwrap() - 32f64.sqrt()).abs() < 1e-12);
    let a = beta1(0.03, 0.1, 7, 5, 1.0, 0.0).unwrap() - 0.3;
    let b = beta1(0.03, 0.1, 7, 5, 2.0, 0.0).unwrap() - 0.3;
    assert!((b - 2.0 * a).abs() < 1e-12);
    assert!(beta1(0.0, 1.5, 1, 1, 1.0, 0.0).is_err());
}

#[test]
fn scaled_radius_follows_the_norm_bound() {
    let rule = RadiusRule {
        mode: RadiusMode::Scaled,
        alpha1: 0.01,
        base_norm_bound: 1.0,
        epsilon: 0.01,
        delta: 0.01,
        log_cover_proxy: 0.0,
    };
    assert_eq!(rule.radius(30, 10, 1.0).unwrap(), 0.01);
    assert_eq!(rule.radius(30, 10, 4.0).unwrap(), 0.04);
}

#[test]
fn repeated_labels_shrink_the_interval() {
    let k = KernelConfig::isotropic(1, 0.3).unwrap();
    let pts = vec![vec![0.4]; 30];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<u8> = (0..30).map(|_| (rng.random::<f64>() < 0.3) as u8).collect();
    let model = BeliefModel::fit(&k, &pts, &labels, 1.0).unwrap();
    let iv = model.interval(&[0.4], 0.5).unwrap();
    assert!(iv.width() < 2.0);
}

#[test]
fn doubling_detects_a_large_norm() {
    // g = sum_j c_j k(., a_j) with RKHS norm 4.
    let k = KernelConfig::isotropic(1, 0.15).unwrap();
    let anchors = [0.1, 0.35, 0.6, 0.85];
    let raw = [1.0, -1.0, 1.0, -1.0];
    let gram = |a: f64, b: f64| k.k(&[a], &[b]);
    let norm2: f64 = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| raw[i] * raw[j] * gram(anchors[i], anchors[j]))
        .sum();
    let c: Vec<f64> = raw.iter().map(|r| r * 4.0 / norm2.sqrt()).collect();
    let g = |x: f64| (0..4).map(|j| c[j] * gram(x, anchors[j])).sum::<f64>();

    let rule = RadiusRule {
        mode: RadiusMode::Scaled,
        alpha1: 0.01,
        base_norm_bound: 1.0,
        epsilon: 0.01,
        delta: 0.01,
        log_cover_proxy: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut ds = BeliefDataset::new(None);
    let mut b = 1.0;
    for t in 1..=40 {
        let x: f64 = rng.random();
        let p = 1.0 / (1.0 + (-g(x)).exp());
        ds.push(vec![x], (rng.random::<f64>() < p) as u8, t).unwrap();
        b = maybe_double_norm_bound(&ds, b, &rule, &k, t).unwrap();
    }
    assert!(b >= 2.0, "bound stayed at {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn interval_is_ordered(
        xs in prop::collection::vec(0.0f64..1.0, 1..6),
        seed in 0u64..1000,
        q in 0.0f64..1.0,
        beta in 0.01f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = KernelConfig::isotropic(1, 0.25).unwrap();
        let pts: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let labels: Vec<u8> = pts.iter().map(|_| rng.random_range(0..2)).collect();
        let model = BeliefModel::fit(&k, &pts, &labels, 1.0).unwrap();
        let iv = model.interval(&[q], beta).unwrap();
        prop_assert!(iv.lower <= iv.upper);
        prop_assert!(iv.prob_lower <= iv.prob_upper);
        prop_assert!(iv.lower >= -1.0 - 1e-6 && iv.upper <= 1.0 + 1e-6);
    }
}
