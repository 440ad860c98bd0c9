use log::warn;
use nalgebra::{DMatrix, DVector};

use super::Dataset;
use crate::error::{Error, Result};

/// Ridge used when the unregularized normal equations are singular.
pub const SINGULAR_FALLBACK_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub ridge: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Least squares with an L2 penalty on the weights (not the intercept).
///
/// Columns are centered and scaled to unit norm before the Cholesky solve;
/// zero-variance columns get zero weight. At `ridge == 0` a singular or
/// badly conditioned system is retried with [`SINGULAR_FALLBACK_RIDGE`].
pub fn fit_ols(data: &Dataset, ridge: f64) -> Result<LinearModel> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewRows { rows: n, folds: 2 });
    }
    let d = data.n_features();
    let y_mean = data.y.iter().sum::<f64>() / n as f64;
    let x_mean: Vec<f64> = (0..d)
        .map(|j| data.x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            data.x
                .iter()
                .map(|r| (r[j] - x_mean[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let active: Vec<usize> = (0..d)
        .filter(|&j| scale[j] > 1e-12 * (1.0 + x_mean[j].abs()))
        .collect();

    let mut weights = vec![0.0; d];
    let mut used_ridge = ridge;
    if !active.is_empty() {
        let p = active.len();
        let xs = DMatrix::from_fn(n, p, |i, c| {
            let j = active[c];
            (data.x[i][j] - x_mean[j]) / scale[j]
        });
        let yc = DVector::from_fn(n, |i, _| data.y[i] - y_mean);
        let gram = xs.transpose() * &xs;
        let rhs = xs.transpose() * yc;
        let solve = |lambda: f64| -> Option<DVector<f64>> {
            let mut a = gram.clone();
            for (c, &j) in active.iter().enumerate() {
                a[(c, c)] += lambda / (scale[j] * scale[j]);
            }
            let chol = a.clone().cholesky()?;
            let l = chol.l();
            let min_pivot = (0..p)
                .map(|c| l[(c, c)] * l[(c, c)])
                .fold(f64::INFINITY, f64::min);
            let max_diag = (0..p).map(|c| a[(c, c)]).fold(0.0, f64::max);
            if min_pivot <= 1e-12 * max_diag {
                return None;
            }
            Some(chol.solve(&rhs))
        };
        let u = match solve(ridge) {
            Some(u) => u,
            None if ridge == 0.0 => {
                warn!("normal equations are singular; refitting with ridge {SINGULAR_FALLBACK_RIDGE}");
                used_ridge = SINGULAR_FALLBACK_RIDGE;
                solve(used_ridge).ok_or_else(|| {
                    Error::InvalidParameter("normal equations singular even with fallback ridge".into())
                })?
            }
            None => {
                return Err(Error::InvalidParameter(format!(
                    "normal equations singular at ridge {ridge}"
                )))
            }
        };
        for (c, &j) in active.iter().enumerate() {
            weights[j] = u[c] / scale[j];
        }
    }
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        weights,
        ridge: used_ridge,
    })
}
