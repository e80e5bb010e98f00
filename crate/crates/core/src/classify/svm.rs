//! Soft-margin RBF support vector machine solved by SMO.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmOptions {
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            tolerance: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// One row per support vector.
    pub support_vectors: Array2<f64>,
    /// `alpha_i y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub sigma: f64,
    pub c: f64,
    pub iterations: usize,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("RBF width must be > 0, got {sigma}")));
    }
    Ok(())
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if x.len() != y.len() {
        return Err(Error::structural(format!(
            "kernel inputs have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(rbf_from_sq(sq_dist(x, y), sigma))
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn rbf_from_sq(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Pairwise squared distances between the rows of `a` and `b`.
pub(crate) fn sq_dist_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        let ra = ra.to_vec();
        for (j, rb) in b.rows().into_iter().enumerate() {
            out[[i, j]] = ra
                .iter()
                .zip(rb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    out
}

/// Solution of the dual `min ½ aᵀQa − Σa` s.t. `yᵀa = 0`, `0 ≤ a ≤ C`.
#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `Σ a_i y_i K(x_i, x) − rho`.
    pub rho: f64,
    pub iterations: usize,
}

/// SMO with second-order working-set selection on a precomputed kernel.
pub(crate) fn solve_dual(
    kernel: &Array2<f64>,
    y: &[f64],
    c: f64,
    opts: &SvmOptions,
) -> Result<DualSolution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // gradient of the dual objective, Q a - 1
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[[i, j]];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v >= g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                g_min = g_min.min(v);
                let b = g_max - v;
                if b > 0.0 {
                    let a = kernel[[i, i]] + kernel[[t, t]] - 2.0 * kernel[[i, t]];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let gap = g_max - g_min;
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= opts.tolerance => (i, j),
            _ => break,
        };
        if iterations >= opts.max_iter {
            return Err(Error::Numerical(format!(
                "SMO did not converge in {} iterations (KKT residual {gap:.3e}, tolerance {:.1e})",
                opts.max_iter, opts.tolerance
            )));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let a = kernel[[i, i]] + kernel[[j, j]] - 2.0 * kernel[[i, j]];
            if a > 0.0 {
                a
            } else {
                TAU
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    Ok(DualSolution {
        rho: compute_rho(&alpha, &grad, y, c),
        alpha,
        iterations,
    })
}

/// Mean of `y_i G_i` over free vectors, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

fn check_training(n: usize, y: &[f64], c: f64) -> Result<()> {
    if n != y.len() {
        return Err(Error::structural(format!(
            "{n} rows but {} labels",
            y.len()
        )));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::param(
            "SVM needs both classes in the training labels",
        ));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!(
            "box constraint C must be > 0, got {c}"
        )));
    }
    Ok(())
}

/// Trains on rows of `x` with ±1 labels `y`.
pub fn svm_fit(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    sigma: f64,
    c: f64,
    opts: &SvmOptions,
) -> Result<SvmModel> {
    check_sigma(sigma)?;
    check_training(x.nrows(), y, c)?;
    let kernel = sq_dist_matrix(x, x).mapv(|d| rbf_from_sq(d, sigma));
    let sol = solve_dual(&kernel, y, c, opts)?;
    Ok(SvmModel::from_dual(x, y, &sol, sigma, c))
}

impl SvmModel {
    pub(crate) fn from_dual(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        sol: &DualSolution,
        sigma: f64,
        c: f64,
    ) -> Self {
        let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        let mut support_vectors = Array2::zeros((sv.len(), x.ncols()));
        for (k, &i) in sv.iter().enumerate() {
            support_vectors.row_mut(k).assign(&x.row(i));
        }
        SvmModel {
            support_vectors,
            dual_coef: sv.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
            bias: -sol.rho,
            sigma,
            c,
            iterations: sol.iterations,
        }
    }

    /// `alpha_i` per support vector.
    pub fn alphas(&self) -> Vec<f64> {
        self.dual_coef.iter().map(|v| v.abs()).collect()
    }

    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.support_vectors.ncols() {
            return Err(Error::structural(format!(
                "model expects {} features, got {}",
                self.support_vectors.ncols(),
                x.ncols()
            )));
        }
        let d2 = sq_dist_matrix(x, self.support_vectors.view());
        Ok(d2
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(&self.dual_coef)
                    .map(|(&d, &a)| a * rbf_from_sq(d, self.sigma))
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }
}

/// Decision values and ±1 labels (zero goes to the positive class).
pub fn svm_predict(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = model.decision_values(x)?;
    let labels = f
        .iter()
        .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    Ok((f, labels))
}
