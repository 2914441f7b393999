use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{CobolError, Result};

const FIRST_ESCALATION: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-2;

/// Cholesky factor of `m + jitter * I`, escalating the jitter by x10 from
/// `base_jitter` (or 1e-8 when the base is zero) up to 1e-2.
///
/// Returns the factor and the jitter that was actually added.
pub fn jittered_cholesky(m: &DMatrix<f64>, base_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = base_jitter;
    loop {
        let mut a = m.clone();
        if jitter > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok((c, jitter));
        }
        jitter = if jitter <= 0.0 { FIRST_ESCALATION } else { jitter * 10.0 };
        if jitter > MAX_JITTER * (1.0 + 1e-9) {
            return Err(CobolError::Numerical(format!(
                "matrix of size {} is not positive definite even with jitter {MAX_JITTER:e}",
                m.nrows()
            )));
        }
    }
}

/// Solves `L y = b` for lower-triangular `L` in place.
pub fn forward_solve(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `L^T y = b` for lower-triangular `L` in place.
pub fn backward_solve_t(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= l[(j, i)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// `L v` for lower-triangular `L`.
pub fn lower_mul(l: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..=i {
            s += l[(i, j)] * v[j];
        }
        out[i] = s;
    }
}

/// `L^T v` for lower-triangular `L`.
pub fn lower_t_mul(l: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for j in 0..n {
        let mut s = 0.0;
        for i in j..n {
            s += l[(i, j)] * v[i];
        }
        out[j] = s;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_helpers_agree_with_dense() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let (c, j) = jittered_cholesky(&m, 0.0).unwrap();
        assert_eq!(j, 0.0);
        let l = c.l();
        let b = [1.0, -2.0, 0.5];
        let mut y = b;
        forward_solve(&l, &mut y);
        backward_solve_t(&l, &mut y);
        let dense = m.clone().try_inverse().unwrap() * to_dvector(&b);
        for i in 0..3 {
            assert!((y[i] - dense[i]).abs() < 1e-12);
        }
        let mut out = [0.0; 3];
        lower_mul(&l, &b, &mut out);
        let dl = &l * to_dvector(&b);
        for i in 0..3 {
            assert!((out[i] - dl[i]).abs() < 1e-12);
        }
        lower_t_mul(&l, &b, &mut out);
        let dlt = l.transpose() * to_dvector(&b);
        for i in 0..3 {
            assert!((out[i] - dlt[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn escalates_on_singular_matrix() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let (_, j) = jittered_cholesky(&m, 0.0).unwrap();
        assert!(j >= 1e-8 && j <= 1e-2);
    }

    #[test]
    fn gives_up_on_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(jittered_cholesky(&m, 0.0).is_err());
    }
}
