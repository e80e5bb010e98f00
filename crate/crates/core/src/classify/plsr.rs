//! Single-response partial least squares by NIPALS.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size below which a deflated cross-covariance counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsrModel {
    pub n_components: usize,
    pub x_mean: Vec<f64>,
    /// p × k, unit-norm columns.
    pub weights: Array2<f64>,
    /// p × k.
    pub loadings: Array2<f64>,
    pub y_loadings: Vec<f64>,
    pub coefficients: Array1<f64>,
    pub intercept: f64,
}

/// Fits `n_components` latent vectors of `x` against `y`.
///
/// `y` carries class labels as ±1, so both signs must occur. Columns of `x`
/// are centred internally and the means stored for prediction.
pub fn plsr_fit(x: ArrayView2<'_, f64>, y: &[f64], n_components: usize) -> Result<PlsrModel> {
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(Error::structural(format!(
            "{n} rows but {} labels",
            y.len()
        )));
    }
    if n < 2 {
        return Err(Error::param("PLSR needs at least two samples"));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::param(
            "PLSR needs both classes in the training labels",
        ));
    }
    if n_components == 0 || n_components > p.min(n - 1) {
        return Err(Error::param(format!(
            "{n_components} components requested for a {n} × {p} training matrix"
        )));
    }

    let x_mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xr = &x - &x_mean;
    let mut yr: Array1<f64> = y.iter().map(|v| v - y_mean).collect();

    let mut weights = Array2::zeros((p, n_components));
    let mut loadings = Array2::zeros((p, n_components));
    let mut y_loadings = Vec::with_capacity(n_components);
    let mut first_norm = None;
    for a in 0..n_components {
        let w = xr.t().dot(&yr);
        let norm = w.dot(&w).sqrt();
        let reference = *first_norm.get_or_insert(norm);
        if !(norm > RANK_TOL * reference.max(f64::MIN_POSITIVE)) {
            return Err(Error::param(format!(
                "component {} of {n_components} has no remaining covariance: \
                 the requested count exceeds the achievable rank",
                a + 1
            )));
        }
        let w = w / norm;
        let t = xr.dot(&w);
        let tt = t.dot(&t);
        let p_a = xr.t().dot(&t) / tt;
        let q_a = yr.dot(&t) / tt;
        for i in 0..n {
            for j in 0..p {
                xr[[i, j]] -= t[i] * p_a[j];
            }
            yr[i] -= q_a * t[i];
        }
        weights.column_mut(a).assign(&w);
        loadings.column_mut(a).assign(&p_a);
        y_loadings.push(q_a);
    }

    // beta = W (P^T W)^-1 q
    let ptw = loadings.t().dot(&weights);
    let z = solve(ptw, &y_loadings)?;
    let coefficients = weights.dot(&Array1::from(z));
    Ok(PlsrModel {
        n_components,
        x_mean: x_mean.to_vec(),
        weights,
        loadings,
        y_loadings,
        coefficients,
        intercept: y_mean,
    })
}

impl PlsrModel {
    /// `(x - mean) · beta + intercept` for each row.
    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.x_mean.len() {
            return Err(Error::structural(format!(
                "model expects {} features, got {}",
                self.x_mean.len(),
                x.ncols()
            )));
        }
        Ok(x.rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .zip(&self.x_mean)
                    .zip(&self.coefficients)
                    .map(|((v, m), b)| (v - m) * b)
                    .sum::<f64>()
                    + self.intercept
            })
            .collect())
    }
}

/// Scores and ±1 labels; a zero score is assigned to the positive class.
pub fn plsr_predict(model: &PlsrModel, x: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let scores = model.scores(x)?;
    let labels = scores
        .iter()
        .map(|&s| if s >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    Ok((scores, labels))
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut b = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .expect("non-empty range");
        if a[[pivot, col]].abs() < 1e-300 {
            return Err(Error::Numerical("singular PLS loading system".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[[row, k]] * x[k]).sum();
        x[row] = (b[row] - s) / a[[row, row]];
    }
    Ok(x)
}
