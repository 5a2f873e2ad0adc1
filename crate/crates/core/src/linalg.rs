//! Thin wrappers over nalgebra's dense LU and QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `a x = b` by LU with partial pivoting and checks the residual.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let rhs = DVector::from_column_slice(b);
    let x = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))?;
    let resid = (&m * &x - &rhs).amax();
    if !resid.is_finite() || resid > 1e-6 {
        return Err(Error::Numerical(format!("linear solve residual {resid:e}")));
    }
    Ok(x.iter().copied().collect())
}

/// Discounted occupation of states: solves `d = (1-λ) e + λ Pᵀ d` where `e`
/// is the initial distribution and `p` is row-stochastic.
pub fn discounted_visits(p: &[Vec<f64>], initial: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = initial.len();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j { 1.0 } else { 0.0 } - lambda * p[j][i];
        }
    }
    let b: Vec<f64> = initial.iter().map(|e| (1.0 - lambda) * e).collect();
    solve(&a, &b)
}

/// Discounted value of a Markov reward process: `v = (1-λ) r + λ P v`.
pub fn discounted_values(p: &[Vec<f64>], reward: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = reward.len();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j { 1.0 } else { 0.0 } - lambda * p[i][j];
        }
    }
    let b: Vec<f64> = reward.iter().map(|r| (1.0 - lambda) * r).collect();
    solve(&a, &b)
}

/// Ordinary least squares for `design · c ≈ y`; returns coefficients and
/// the max absolute residual.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let rows = y.len();
    let cols = design.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(rows, cols, |i, j| design[i][j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Numerical(format!("least squares: {e}")))?;
    let resid = (&a * &c - &b).amax();
    Ok((c.iter().copied().collect(), resid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_cycle_visits() {
        let p = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let d = discounted_visits(&p, &[1.0, 0.0], 0.5).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_has_zero_residual() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (c, r) = least_squares(&design, &y).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-12);
        assert!(r < 1e-12);
    }
}
