use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Closed-form ridge regression with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Ridge {
    pub(crate) fn fit(l2: f64, x: &[Vec<f64>], y: &[f64]) -> Self {
        let n = x.len();
        let p = x[0].len();
        let x_mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - x_mean[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = xc.transpose() * &xc;
        for j in 0..p {
            gram[(j, j)] += l2;
        }
        let rhs = xc.transpose() * yc;
        // SVD gives the minimum-norm solution when the Gram matrix is singular
        // (e.g. one-hot blocks with l2 = 0).
        let svd = gram.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1e-300);
        let w = svd.solve(&rhs, eps).unwrap_or_else(|_| DVector::zeros(p));
        let coefficients: Vec<f64> = w.iter().copied().collect();
        let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
        Ridge { intercept, coefficients }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, v)| c * v).sum::<f64>()
    }
}
