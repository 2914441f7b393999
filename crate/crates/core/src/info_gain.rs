//! Greedy estimate of the maximum information gain
//! `max_{|X| = n} 0.5 * log det(I + K_X / r)`.
//!
//! The log-determinant is submodular in the chosen set, so picking the
//! candidate with the largest posterior variance at every step gives a
//! `(1 - 1/e)` approximation. By the chain rule the objective decomposes as
//! `sum_i 0.5 * ln(1 + sigma^2_{i-1}(x_i) / r)`, which a pivoted Cholesky
//! sweep evaluates in `O(|candidates| * n^2)`.

use crate::domain::sobol_unit;
use crate::error::{CobolError, Result};
use crate::kernel::KernelConfig;

/// Candidate grid size used by the optimisation loop.
pub const DEFAULT_CANDIDATES: usize = 256;

/// Greedy information gain after `n` picks from `candidates`.
pub fn info_gain_estimate(cfg: &KernelConfig, r: f64, candidates: &[Vec<f64>], n: usize) -> Result<f64> {
    Ok(greedy_gain_curve(cfg, r, candidates, n)?.last().copied().unwrap_or(0.0))
}

/// Greedy information gain after each of the first `n` picks; entry `i`
/// holds the value for `i + 1` picks.
pub fn greedy_gain_curve(cfg: &KernelConfig, r: f64, candidates: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if candidates.is_empty() {
        return Err(CobolError::EmptyCandidates);
    }
    if n > candidates.len() {
        return Err(CobolError::invalid(
            "n",
            format!("cannot pick {n} points from {} candidates", candidates.len()),
        ));
    }
    if !(r > 0.0) {
        return Err(CobolError::invalid("r", "must be positive"));
    }
    for c in candidates {
        cfg.check_dim(c)?;
    }
    let m = candidates.len();
    // Rows of the partial Cholesky factor of K + rI, one per candidate.
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(n); m];
    let mut resid: Vec<f64> = vec![cfg.diag(); m];
    let mut chosen = vec![false; m];
    let mut total = 0.0;
    let mut curve = Vec::with_capacity(n);
    for _ in 0..n {
        let (pivot, &var) = resid
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen[*i])
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("n <= candidates");
        chosen[pivot] = true;
        total += 0.5 * (1.0 + var.max(0.0) / r).ln();
        curve.push(total);
        let diag = (var.max(0.0) + r).sqrt();
        let prow = rows[pivot].clone();
        for i in 0..m {
            if chosen[i] && i != pivot {
                continue;
            }
            let mut v = cfg.k(&candidates[i], &candidates[pivot]);
            if i == pivot {
                v += r;
            }
            let s: f64 = rows[i].iter().zip(&prow).map(|(a, b)| a * b).sum();
            let l = (v - s) / diag;
            rows[i].push(l);
            if i != pivot {
                resid[i] -= l * l;
            }
        }
    }
    Ok(curve)
}

/// Information gain on the default Sobol candidate grid in `[0,1]^d`.
pub fn info_gain_on_grid(cfg: &KernelConfig, r: f64, n: usize, grid_size: usize, seed: u32) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let candidates = sobol_unit(grid_size.max(n), cfg.dim(), seed);
    info_gain_estimate(cfg, r, &candidates, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn logdet_gain(cfg: &KernelConfig, r: f64, pts: &[Vec<f64>]) -> f64 {
        let n = pts.len();
        let k = cfg.gram(pts);
        let m = DMatrix::identity(n, n) + k / r;
        0.5 * m.determinant().ln()
    }

    #[test]
    fn zero_picks_is_zero() {
        let cfg = KernelConfig::isotropic(1, 0.2).unwrap();
        assert_eq!(info_gain_estimate(&cfg, 1.0, &[], 0).unwrap(), 0.0);
    }

    #[test]
    fn single_pick_by_hand() {
        let cfg = KernelConfig::isotropic(1, 0.2).unwrap();
        let v = info_gain_estimate(&cfg, 1.0, &[vec![0.3]], 1).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((v - 0.34657).abs() < 1e-5);
    }

    #[test]
    fn empty_candidates_error() {
        let cfg = KernelConfig::isotropic(1, 0.2).unwrap();
        assert_eq!(info_gain_estimate(&cfg, 1.0, &[], 2), Err(CobolError::EmptyCandidates));
    }

    #[test]
    fn chain_rule_matches_direct_logdet_of_chosen_set() {
        // Recompute the greedy choice by brute force and compare with a
        // dense determinant of the same set.
        let cfg = KernelConfig::isotropic(2, 0.3).unwrap();
        let cands = sobol_unit(20, 2, 3);
        let r = 0.1;
        let mut chosen: Vec<Vec<f64>> = Vec::new();
        for n in 1..=6 {
            // Reversed so that ties resolve to the lowest index, as in the sweep.
            let best = cands
                .iter()
                .rev()
                .filter(|c| !chosen.contains(c))
                .map(|c| {
                    let mut s = chosen.clone();
                    s.push(c.clone());
                    (logdet_gain(&cfg, r, &s), c.clone())
                })
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            chosen.push(best.1);
            let greedy = info_gain_estimate(&cfg, r, &cands, n).unwrap();
            assert!((greedy - logdet_gain(&cfg, r, &chosen)).abs() < 1e-8);
        }
    }
}
