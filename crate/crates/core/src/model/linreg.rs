//! Linear regression: closed-form least squares and the single-layer net
//! the shared forward contract wraps around it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::layers::Dense;
use crate::nn::Param;
use crate::tensor::{Batch, Matrix};

use super::Prediction;

/// Result of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    /// Coefficient vector, intercept first when the design has a ones column.
    pub coefficients: Vec<f64>,
    /// Set when the normal equations were not positive definite and the
    /// ridge-limit fallback produced a (near) minimum-norm solution.
    pub rank_deficient: bool,
}

/// Minimize `||Xb - y||^2` via the normal equations with Cholesky. A
/// rank-deficient design falls back to a vanishing ridge, whose limit is the
/// minimum-norm pseudo-inverse solution; the fit is flagged when that happens.
pub fn fit_linear_regression_closed_form(x: &Matrix, y: &[f64]) -> Result<LsFit> {
    if x.rows != y.len() {
        return Err(Error::Contract(format!(
            "design has {} rows but {} targets",
            x.rows,
            y.len()
        )));
    }
    if x.rows == 0 || x.cols == 0 {
        return Err(Error::Domain("empty design matrix".into()));
    }
    let p = x.cols;
    // Gram matrix and moment vector.
    let mut a = vec![0.0f64; p * p];
    let mut b = vec![0.0f64; p];
    for r in 0..x.rows {
        let row = x.row(r);
        for i in 0..p {
            b[i] += row[i] * y[r];
            for j in i..p {
                a[i * p + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[i * p + j] = a[j * p + i];
        }
    }

    if let Some(coef) = cholesky_solve(&a, &b, p) {
        return Ok(LsFit { coefficients: coef, rank_deficient: false });
    }
    // Vanishing ridge: escalate lambda until the factorization succeeds.
    let trace: f64 = (0..p).map(|i| a[i * p + i]).sum();
    let mut lambda = (trace / p as f64).max(1.0) * 1e-12;
    for _ in 0..20 {
        let mut ar = a.clone();
        for i in 0..p {
            ar[i * p + i] += lambda;
        }
        if let Some(coef) = cholesky_solve(&ar, &b, p) {
            return Ok(LsFit { coefficients: coef, rank_deficient: true });
        }
        lambda *= 10.0;
    }
    Err(Error::Domain("normal equations are numerically singular".into()))
}

/// Solve `A x = b` for symmetric positive definite `A`; `None` if not PD.
fn cholesky_solve(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * p + i] = math::sqrt(sum);
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut z = vec![0.0f64; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * z[k];
        }
        z[i] = sum / l[i * p + i];
    }
    let mut xsol = vec![0.0f64; p];
    for i in (0..p).rev() {
        let mut sum = z[i];
        for k in i + 1..p {
            sum -= l[k * p + i] * xsol[k];
        }
        xsol[i] = sum / l[i * p + i];
    }
    Some(xsol)
}

#[cfg(test)]
fn predict(x: &Matrix, coefficients: &[f64]) -> Vec<f64> {
    (0..x.rows)
        .map(|r| x.row(r).iter().zip(coefficients).map(|(a, b)| a * b).sum())
        .collect()
}

// ── Net wrapper ──────────────────────────────────────────────────────────────

/// Linear regression as a model-zoo member: a bias plus one weight per
/// flattened window entry. Fitted closed-form; the dense layer also provides
/// exact gradients for the iterative cross-check.
pub struct LinRegNet {
    fc: Dense,
    in_dim: usize,
    pub rank_deficient: bool,
}

impl LinRegNet {
    pub fn new(n_channels: usize, window_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let in_dim = n_channels * window_len;
        Self { fc: Dense::new("linreg", in_dim, 1, rng), in_dim, rank_deficient: false }
    }

    pub fn forward(&mut self, x: &Batch) -> Prediction {
        let flat = x.flatten();
        debug_assert_eq!(flat.cols, self.in_dim);
        let y = self.fc.forward(&flat);
        Prediction { scalar: y.data, per_step: None }
    }

    pub fn backward(&mut self, d: &[f64]) {
        let dy = Matrix::from_vec(d.len(), 1, d.to_vec());
        let _ = self.fc.backward(&dy);
    }

    /// Install a closed-form fit whose design was `[1, features...]`.
    pub fn install_fit(&mut self, fit: &LsFit) -> Result<()> {
        if fit.coefficients.len() != self.in_dim + 1 {
            return Err(Error::Contract(format!(
                "fit has {} coefficients, expected {}",
                fit.coefficients.len(),
                self.in_dim + 1
            )));
        }
        self.fc.b.value[0] = fit.coefficients[0];
        self.fc.w.value.copy_from_slice(&fit.coefficients[1..]);
        self.rank_deficient = fit.rank_deficient;
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.fc.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_ones(rows: usize, feats: &[f64], width: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, width + 1);
        for r in 0..rows {
            *m.at_mut(r, 0) = 1.0;
            for j in 0..width {
                *m.at_mut(r, j + 1) = feats[r * width + j];
            }
        }
        m
    }

    #[test]
    fn exact_two_by_two_solve() {
        let x = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 1.0]);
        let fit = fit_linear_regression_closed_form(&x, &[1.0, 3.0]).unwrap();
        assert!(!fit.rank_deficient);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_is_intercept_only() {
        let x = with_ones(4, &[0.3, -1.0, 2.5, 0.7], 1);
        let fit = fit_linear_regression_closed_form(&x, &[5.0; 4]).unwrap();
        assert!((fit.coefficients[0] - 5.0).abs() < 1e-10);
        assert!(fit.coefficients[1].abs() < 1e-10);
    }

    #[test]
    fn identity_regression() {
        let feats = [0.5, -1.0, 2.0, 3.5];
        let x = with_ones(4, &feats, 1);
        let fit = fit_linear_regression_closed_form(&x, &feats).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn duplicate_column_hits_min_norm_fallback() {
        // Two identical feature columns: infinitely many solutions; the
        // minimum-norm one splits the weight evenly.
        let mut x = Matrix::zeros(4, 3);
        for (r, v) in [0.0f64, 1.0, 2.0, 3.0].iter().enumerate() {
            *x.at_mut(r, 0) = 1.0;
            *x.at_mut(r, 1) = *v;
            *x.at_mut(r, 2) = *v;
        }
        let y: Vec<f64> = (0..4).map(|r| 2.0 * r as f64).collect();
        let fit = fit_linear_regression_closed_form(&x, &y).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-3, "{:?}", fit.coefficients);
        assert!((fit.coefficients[2] - 1.0).abs() < 1e-3, "{:?}", fit.coefficients);
        let pred = predict(&x, &fit.coefficients);
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let x = Matrix::zeros(3, 2);
        assert!(fit_linear_regression_closed_form(&x, &[1.0, 2.0]).is_err());
    }
}
