//! Stratified K-fold grid search on the training split.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{self, SvmOptions};
use super::{encode_labels, feature_scale, plsr, ClassifierKind, Hyper, Standardizer};
use crate::error::{Error, Result};
use crate::model::Condition;

/// Scores closer than this count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// SVM widths as multiples of the feature scale (see [`feature_scale`]).
    pub sigma_multipliers: Vec<f64>,
    pub c_values: Vec<f64>,
    /// PLSR grid is `1..=min(max_components, p)`.
    pub max_components: usize,
    pub svm: SvmOptions,
    /// Keep every trial inside one fold. Overlapping epochs of one trial
    /// are near-duplicates; splitting them across folds scores memorisation
    /// of the trial rather than the class.
    pub group_by_trial: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            seed: 0,
            sigma_multipliers: vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            max_components: 10,
            svm: SvmOptions::default(),
            group_by_trial: true,
        }
    }
}

impl CvConfig {
    /// Default grid for `kind` on training features `x` (raw units; the
    /// scale is measured after standardisation).
    pub fn grid(&self, kind: ClassifierKind, x: ArrayView2<'_, f64>) -> Vec<Hyper> {
        match kind {
            ClassifierKind::Plsr => (1..=self.max_components.min(x.ncols()))
                .map(|components| Hyper::Plsr { components })
                .collect(),
            ClassifierKind::Svm => {
                let z = Standardizer::fit(x).transform(x).expect("same width");
                let base = feature_scale(z.view());
                self.sigma_multipliers
                    .iter()
                    .flat_map(|m| {
                        self.c_values
                            .iter()
                            .map(move |&c| Hyper::Svm { sigma: m * base, c })
                    })
                    .collect()
            }
        }
    }
}

/// Fold index per sample. Each class is shuffled with its own seeded stream
/// and dealt round-robin, the counter continuing across classes, so fold
/// sizes differ by at most one overall and within each class.
pub fn stratified_folds(labels: &[Condition], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::param(format!("need at least 2 folds, got {k}")));
    }
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for (s, class) in Condition::BOTH.into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::param(format!(
                "{}-fold CV needs at least {k} samples of class {class}, found {}",
                k,
                idx.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Fold index per sample with whole groups kept together. Per class, the
/// distinct groups are shuffled with the class's seeded stream and dealt
/// round-robin from fold 0. The fold count is capped at the smallest
/// per-class group count so every fold holds both classes; the count used
/// is returned alongside.
pub fn grouped_stratified_folds(
    labels: &[Condition],
    groups: &[usize],
    k: usize,
    seed: u64,
) -> Result<(Vec<usize>, usize)> {
    if k < 2 {
        return Err(Error::param(format!("need at least 2 folds, got {k}")));
    }
    if groups.len() != labels.len() {
        return Err(Error::structural(format!(
            "{} groups for {} labels",
            groups.len(),
            labels.len()
        )));
    }
    let per_class: Vec<Vec<usize>> = Condition::BOTH
        .into_iter()
        .map(|class| {
            let mut g: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == class)
                .map(|i| groups[i])
                .collect();
            g.sort_unstable();
            g.dedup();
            g
        })
        .collect();
    let k = per_class.iter().map(Vec::len).min().unwrap_or(0).min(k);
    if k < 2 {
        return Err(Error::param(
            "grouped CV needs at least 2 groups of each class",
        ));
    }
    let mut fold = vec![0; labels.len()];
    for (s, (class, mut g)) in Condition::BOTH.into_iter().zip(per_class).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        g.shuffle(&mut rng);
        for (n, group) in g.into_iter().enumerate() {
            for i in (0..labels.len()).filter(|&i| labels[i] == class && groups[i] == group) {
                fold[i] = n % k;
            }
        }
    }
    Ok((fold, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub hyper: Hyper,
    pub fold_accuracy: Vec<f64>,
    /// Absent when a fold failed to fit.
    pub mean_accuracy: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub kind: ClassifierKind,
    pub folds: usize,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    pub grid: Vec<GridScore>,
    pub best: Hyper,
    pub best_accuracy: f64,
}

struct Fold {
    train: Vec<usize>,
    held_out: Vec<usize>,
}

fn rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).assign(&x.row(i));
    }
    out
}

fn accuracy(scores: &[f64], y: &[f64]) -> f64 {
    let hits = scores
        .iter()
        .zip(y)
        .filter(|(s, t)| (if **s >= 0.0 { 1.0 } else { -1.0 }) == **t)
        .count();
    hits as f64 / y.len() as f64
}

/// Held-out accuracy of every grid point on one fold.
fn score_fold(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    fold: &Fold,
    grid: &[Hyper],
    opts: &SvmOptions,
) -> Vec<std::result::Result<f64, String>> {
    let xt = rows(x, &fold.train);
    let std = Standardizer::fit(xt.view());
    let xt = std.transform(xt.view()).expect("same width");
    let xv = std
        .transform(rows(x, &fold.held_out).view())
        .expect("same width");
    let yt: Vec<f64> = fold.train.iter().map(|&i| y[i]).collect();
    let yv: Vec<f64> = fold.held_out.iter().map(|&i| y[i]).collect();

    // kernels depend only on sigma, so distances are computed once per fold
    let mut distances = None;
    let mut kernel_cache: Option<(f64, Array2<f64>, Array2<f64>)> = None;
    grid.iter()
        .map(|h| match *h {
            Hyper::Plsr { components } => plsr::plsr_fit(xt.view(), &yt, components)
                .and_then(|m| m.scores(xv.view()))
                .map(|s| accuracy(&s, &yv))
                .map_err(|e| e.to_string()),
            Hyper::Svm { sigma, c } => {
                let (dt, dv) = distances.get_or_insert_with(|| {
                    (
                        svm::sq_dist_matrix(xt.view(), xt.view()),
                        svm::sq_dist_matrix(xv.view(), xt.view()),
                    )
                });
                if kernel_cache.as_ref().is_none_or(|(s, _, _)| *s != sigma) {
                    kernel_cache = Some((
                        sigma,
                        dt.mapv(|d| svm::rbf_from_sq(d, sigma)),
                        dv.mapv(|d| svm::rbf_from_sq(d, sigma)),
                    ));
                }
                let (_, kt, kv) = kernel_cache.as_ref().expect("just filled");
                svm::solve_dual(kt, &yt, c, opts)
                    .map(|sol| {
                        let coef: Array1<f64> =
                            sol.alpha.iter().zip(&yt).map(|(a, y)| a * y).collect();
                        let f: Vec<f64> = kv.dot(&coef).iter().map(|v| v - sol.rho).collect();
                        accuracy(&f, &yv)
                    })
                    .map_err(|e| e.to_string())
            }
        })
        .collect()
}

/// Mean held-out accuracy of each grid point; the best point is the highest
/// mean, ties resolved by [`Hyper::simpler_than`]. With `groups`, folds
/// follow [`grouped_stratified_folds`].
pub fn kfold_cv(
    x: ArrayView2<'_, f64>,
    labels: &[Condition],
    groups: Option<&[usize]>,
    kind: ClassifierKind,
    grid: &[Hyper],
    cfg: &CvConfig,
) -> Result<CvResult> {
    if x.nrows() != labels.len() {
        return Err(Error::structural(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::param("empty hyperparameter grid"));
    }
    if let Some(h) = grid.iter().find(|h| h.kind() != kind) {
        return Err(Error::param(format!(
            "grid point {h:?} does not belong to {kind}"
        )));
    }
    let (assignment, n_folds) = match groups {
        Some(g) => grouped_stratified_folds(labels, g, cfg.folds, cfg.seed)?,
        None => (stratified_folds(labels, cfg.folds, cfg.seed)?, cfg.folds),
    };
    let folds: Vec<Fold> = (0..n_folds)
        .map(|f| Fold {
            train: (0..labels.len()).filter(|&i| assignment[i] != f).collect(),
            held_out: (0..labels.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect();
    let y = encode_labels(labels);
    let per_fold: Vec<Vec<std::result::Result<f64, String>>> = folds
        .par_iter()
        .map(|fold| score_fold(x, &y, fold, grid, &cfg.svm))
        .collect();

    let scores: Vec<GridScore> = grid
        .iter()
        .enumerate()
        .map(|(g, &hyper)| {
            let mut fold_accuracy = Vec::with_capacity(folds.len());
            let mut failure = None;
            for r in &per_fold {
                match &r[g] {
                    Ok(a) => fold_accuracy.push(*a),
                    Err(e) => {
                        failure.get_or_insert_with(|| e.clone());
                    }
                }
            }
            let mean_accuracy = failure
                .is_none()
                .then(|| fold_accuracy.iter().sum::<f64>() / fold_accuracy.len() as f64);
            GridScore {
                hyper,
                fold_accuracy,
                mean_accuracy,
                failure,
            }
        })
        .collect();

    let mut best: Option<(Hyper, f64)> = None;
    for s in &scores {
        let Some(acc) = s.mean_accuracy else { continue };
        let better = match best {
            None => true,
            Some((h, b)) => {
                acc > b + TIE_TOL || ((acc - b).abs() <= TIE_TOL && s.hyper.simpler_than(&h))
            }
        };
        if better {
            best = Some((s.hyper, acc));
        }
    }
    let (best, best_accuracy) = best.ok_or_else(|| {
        Error::Numerical(format!(
            "every grid point failed; first failure: {}",
            scores[0].failure.as_deref().unwrap_or("unknown")
        ))
    })?;
    Ok(CvResult {
        kind,
        folds: n_folds,
        seed: cfg.seed,
        fold_sizes: folds.iter().map(|f| f.held_out.len()).collect(),
        grid: scores,
        best,
        best_accuracy,
    })
}
