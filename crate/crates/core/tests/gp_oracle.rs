use cobol_core::{GpPosterior, KernelConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rbf(x: &[f64], y: &[f64], ls: &[f64], scale: f64) -> f64 {
    let r2: f64 = x.iter().zip(y).zip(ls).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
    scale * (-0.5 * r2).exp()
}

/// Mean and variance from an LU solve of the full system.
fn dense_oracle(pts: &[Vec<f64>], ys: &[f64], x: &[f64], ls: &[f64], scale: f64, r: f64) -> (f64, f64) {
    let n = pts.len();
    let k = DMatrix::from_fn(n, n, |i, j| rbf(&pts[i], &pts[j], ls, scale) + if i == j { r } else { 0.0 });
    let kx = DVector::from_fn(n, |i, _| rbf(&pts[i], x, ls, scale));
    let lu = k.lu();
    let alpha = lu.solve(&DVector::from_column_slice(ys)).unwrap();
    let v = lu.solve(&kx).unwrap();
    (kx.dot(&alpha), scale - kx.dot(&v))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn posterior_matches_dense_solve_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=50);
        let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
        let scale = rng.random_range(0.5..=1.0);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let post = GpPosterior::fit(KernelConfig::new(ls.clone(), scale).unwrap(), &pts, &ys, 1e-4).unwrap();
        assert_eq!(post.jitter(), 0.0);
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let (m, v) = post.predict(&x).unwrap();
            let (mo, vo) = dense_oracle(&pts, &ys, &x, &ls, scale, 1e-4);
            worst = worst.max(rel(m, mo)).max(rel(v, vo));
        }
    }
    assert!(worst < 1e-8, "worst relative error {worst:e}");
}

#[test]
fn eleven_point_dataset() {
    let pts: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
    let ys: Vec<f64> = pts.iter().map(|p| (6.0 * p[0]).sin()).collect();
    let post = GpPosterior::fit(KernelConfig::isotropic(1, 0.2).unwrap(), &pts, &ys, 1e-4).unwrap();
    for x in [0.05, 0.33, 0.5, 0.97] {
        let (m, v) = post.predict(&[x]).unwrap();
        let (mo, vo) = dense_oracle(&pts, &ys, &[x], &[0.2], 1.0, 1e-4);
        assert!(rel(m, mo) < 1e-8 && rel(v, vo) < 1e-8);
    }
}

#[test]
fn variance_never_grows_when_data_is_added() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = KernelConfig::new(vec![0.3, 0.5], 1.0).unwrap();
    let mut pts = Vec::new();
    let mut ys = Vec::new();
    let probes: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random(), rng.random()]).collect();
    let mut prev: Vec<f64> = vec![1.0; probes.len()];
    for _ in 0..25 {
        pts.push(vec![rng.random(), rng.random()]);
        ys.push(rng.random_range(-1.0..1.0));
        let post = GpPosterior::fit(cfg.clone(), &pts, &ys, 1e-4).unwrap();
        for (p, pv) in probes.iter().zip(prev.iter_mut()) {
            let v = post.predict(p).unwrap().1;
            assert!(v <= *pv + 1e-9);
            assert!((0.0..=1.0).contains(&v));
            *pv = v;
        }
    }
}
