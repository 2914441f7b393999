use cobol_core::acquisition::{
    expert_augmented_candidate, expert_constrained_candidate, no_harm_check, no_harm_gate, vanilla_lcb_candidate,
    AcqOptions,
};
use cobol_core::belief::BeliefModel;
use cobol_core::{DomainBox, GpPosterior, KernelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn post_1d(xs: &[f64], ys: &[f64], ls: f64, beta: f64) -> GpPosterior {
    let pts: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    GpPosterior::fit(KernelConfig::isotropic(1, ls).unwrap(), &pts, ys, 1e-4)
        .unwrap()
        .with_beta(beta, 1.0)
}

fn argmin(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter()
        .copied()
        .map(|x| (x, f(x)))
        .fold((f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        .0
}

#[test]
fn vanilla_explores_with_large_beta() {
    let post = post_1d(&[0.1], &[-1.0], 0.1, 5.0);
    let dom = DomainBox::unit(1);
    let x = vanilla_lcb_candidate(&post, &dom, &AcqOptions::default());
    let oracle = argmin(&grid(1001), |x| post.lcb(&[x]));
    assert!((x[0] - oracle).abs() <= 1e-3 + 1e-9, "{} vs {oracle}", x[0]);
    assert!(x[0] > 0.25, "{x:?} {oracle}");
}

#[test]
fn zero_beta_minimises_the_mean() {
    let post = post_1d(&[0.1, 0.45, 0.8], &[0.3, -0.8, 0.5], 0.2, 0.0);
    let dom = DomainBox::unit(1);
    let x = vanilla_lcb_candidate(&post, &dom, &AcqOptions::default());
    let oracle = argmin(&grid(1001), |x| post.mean_std(&[x]).0);
    assert!((x[0] - oracle).abs() <= 1e-3 + 1e-9);
}

#[test]
fn no_labels_and_zero_lambda_reduce_to_vanilla() {
    let post = post_1d(&[0.2, 0.7], &[1.0, -1.0], 0.2, 1.0);
    let dom = DomainBox::unit(1);
    let opts = AcqOptions::default();
    let model = BeliefModel::fit(post.kernel(), &[], &[], 1.5).unwrap();
    let x_u = vanilla_lcb_candidate(&post, &dom, &opts);
    let c = expert_augmented_candidate(&post, &model, 0.01, 0.0, &dom, &x_u, &opts).unwrap();
    assert!((c.x[0] - x_u[0]).abs() < 1e-3);
    assert!((c.z_star + 1.5).abs() < 1e-6);
}

fn left_reject_model(ls: f64, b: f64) -> (BeliefModel, KernelConfig) {
    let k = KernelConfig::isotropic(1, ls).unwrap();
    let pts: Vec<Vec<f64>> = grid(20).into_iter().map(|x| vec![x]).collect();
    let labels: Vec<u8> = pts.iter().map(|p| (p[0] < 0.5) as u8).collect();
    (BeliefModel::fit(&k, &pts, &labels, b).unwrap(), k)
}

#[test]
fn informative_rejections_push_the_candidate_right() {
    let (model, k) = left_reject_model(0.15, 4.0);
    let pts: Vec<Vec<f64>> = [0.2, 0.6, 0.9].iter().map(|x| vec![*x]).collect();
    let post = GpPosterior::fit(k, &pts, &[-1.0, 0.5, 0.6], 1e-4).unwrap().with_beta(1.0, 1.0);
    let dom = DomainBox::unit(1);
    let opts = AcqOptions::default();
    let x_u = vanilla_lcb_candidate(&post, &dom, &opts);
    assert!(x_u[0] < 0.5);
    let c = expert_augmented_candidate(&post, &model, 0.01, 20.0, &dom, &x_u, &opts).unwrap();
    assert!(!c.fallback);
    assert!(c.x[0] > 0.5, "{:?}", c.x);
}

#[test]
fn constrained_candidate_stays_in_the_accepted_half() {
    let (model, k) = left_reject_model(0.15, 4.0);
    let pts: Vec<Vec<f64>> = [0.2, 0.6, 0.9].iter().map(|x| vec![*x]).collect();
    let post = GpPosterior::fit(k, &pts, &[-1.0, 0.5, 0.6], 1e-4).unwrap().with_beta(1.0, 1.0);
    let dom = DomainBox::unit(1);
    let opts = AcqOptions::default();
    let x_u = vanilla_lcb_candidate(&post, &dom, &opts);
    let c = expert_constrained_candidate(&post, &model, 0.01, &dom, &x_u, &opts).unwrap();
    assert!(!c.unconstrained && !c.fallback);
    assert!(c.x[0] > 0.5 && c.z_star <= 1e-3, "{c:?}");
}

#[test]
fn constraint_is_inactive_without_labels() {
    let post = post_1d(&[0.2, 0.7], &[1.0, -1.0], 0.2, 1.0);
    let dom = DomainBox::unit(1);
    let opts = AcqOptions::default();
    let model = BeliefModel::fit(post.kernel(), &[], &[], 1.0).unwrap();
    let x_u = vanilla_lcb_candidate(&post, &dom, &opts);
    let c = expert_constrained_candidate(&post, &model, 0.01, &dom, &x_u, &opts).unwrap();
    assert!(c.unconstrained);
    assert_eq!(c.x, x_u);
    assert!((c.z_star + 1.0).abs() < 1e-6, "{c:?}");
}

#[test]
fn no_harm_gate_examples() {
    let post = post_1d(&[0.1, 0.15, 0.2, 0.25], &[0.0, 0.1, -0.1, 0.05], 0.1, 2.0);
    let dom = DomainBox::unit(1);
    let opts = AcqOptions::default();
    let x_u = vanilla_lcb_candidate(&post, &dom, &opts);
    assert!(no_harm_gate(&x_u, &x_u, &post, 1.0, &dom, &opts));
    // A data-dense candidate has far smaller sigma than the exploring one.
    let x_c = [0.175];
    let (_, s_c) = post.mean_std(&x_c);
    let (_, s_u) = post.mean_std(&x_u);
    assert!(s_u > 3.0 * s_c);
    assert!(!no_harm_gate(&x_c, &x_u, &post, 3.0, &dom, &opts));

    let flat = post_1d(&[0.1, 0.5, 0.9], &[0.4, -0.6, 0.2], 0.2, 0.0);
    let mean_min = vanilla_lcb_candidate(&flat, &dom, &opts);
    assert!(no_harm_check(&mean_min, &mean_min, &flat, 1.0, flat.mean_std(&mean_min).0 + 1e-12));
    assert!(!no_harm_check(&[0.9], &mean_min, &flat, 1.0, flat.mean_std(&mean_min).0));
}

#[test]
fn joint_latent_matches_pointwise_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dom = DomainBox::unit(1);
    for i in 0..10 {
        let xs: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let post = post_1d(&xs, &ys, 0.2, 1.0);
        let lp: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random()]).collect();
        let labels: Vec<u8> = (0..5).map(|_| rng.random_range(0..2)).collect();
        let model = BeliefModel::fit(post.kernel(), &lp, &labels, 1.0).unwrap();
        let opts = AcqOptions {
            seed: i,
            ..AcqOptions::default()
        };
        let x_u = vanilla_lcb_candidate(&post, &dom, &opts);
        let c = expert_augmented_candidate(&post, &model, 0.5, 1.0, &dom, &x_u, &opts).unwrap();
        if let Some(zj) = c.z_joint {
            assert!((zj - c.z_star).abs() <= 1e-3, "instance {i}: joint {zj} vs pointwise {}", c.z_star);
        }
    }
}
