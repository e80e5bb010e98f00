//! Binary PLSR / RBF-SVM classifiers, cross-validated model selection and
//! channel-combination search. Labels are encoded `TwoD = +1`, `ThreeD = -1`.

pub mod cv;
pub mod metrics;
pub mod plsr;
pub mod search;
pub mod svm;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Condition;

pub use cv::{grouped_stratified_folds, kfold_cv, stratified_folds, CvConfig, CvResult, GridScore};
pub use metrics::{confusion_metrics, EvalReport};
pub use plsr::{plsr_fit, plsr_predict, PlsrModel};
pub use search::{
    channel_combination_search, evaluate_channel_set, evaluate_prefixes, RankBy, SearchConfig,
    SearchResult, SearchStrategy, SetEvaluation,
};
pub use svm::{rbf_kernel, svm_fit, svm_predict, SvmModel, SvmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Plsr,
    Svm,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plsr" | "pls" => Ok(ClassifierKind::Plsr),
            "svm" => Ok(ClassifierKind::Svm),
            _ => Err(Error::param(format!(
                "unknown classifier {s:?} (plsr or svm)"
            ))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Plsr => "plsr",
            ClassifierKind::Svm => "svm",
        })
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "lowercase")]
pub enum Hyper {
    Plsr {
        components: usize,
    },
    /// `sigma` is in standardised feature units.
    Svm {
        sigma: f64,
        c: f64,
    },
}

impl Hyper {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyper::Plsr { .. } => ClassifierKind::Plsr,
            Hyper::Svm { .. } => ClassifierKind::Svm,
        }
    }

    /// Tie-break order: fewer components, then wider kernel, then softer margin.
    pub fn simpler_than(&self, other: &Hyper) -> bool {
        match (self, other) {
            (Hyper::Plsr { components: a }, Hyper::Plsr { components: b }) => a < b,
            (Hyper::Svm { sigma: s1, c: c1 }, Hyper::Svm { sigma: s2, c: c2 }) => {
                s1 > s2 || (s1 == s2 && c1 < c2)
            }
            _ => false,
        }
    }
}

/// Column-wise z-scoring fitted on training rows. Constant columns are only
/// centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x
            .mean_axis(Axis(0))
            .map_or_else(|| vec![0.0; x.ncols()], |m| m.to_vec());
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::structural(format!(
                "expected {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (mut col, (m, s)) in out
            .columns_mut()
            .into_iter()
            .zip(self.mean.iter().zip(&self.scale))
        {
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }
}

/// `sqrt(sum of column variances)`: the RMS distance scale that the SVM
/// sigma multipliers refer to.
pub fn feature_scale(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.nrows().max(1) as f64;
    let total: f64 = x
        .columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
        })
        .sum();
    if total > 0.0 {
        total.sqrt()
    } else {
        1.0
    }
}

pub fn encode_labels(labels: &[Condition]) -> Vec<f64> {
    labels.iter().map(|c| c.sign()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "classifier", rename_all = "lowercase")]
pub enum Fitted {
    Plsr(PlsrModel),
    Svm(SvmModel),
}

/// A classifier trained on standardised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hyper: Hyper,
    pub standardizer: Standardizer,
    pub model: Fitted,
}

impl TrainedModel {
    pub fn fit(
        x: ArrayView2<'_, f64>,
        labels: &[Condition],
        hyper: Hyper,
        svm: &SvmOptions,
    ) -> Result<Self> {
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.transform(x)?;
        let y = encode_labels(labels);
        let model = match hyper {
            Hyper::Plsr { components } => Fitted::Plsr(plsr_fit(xs.view(), &y, components)?),
            Hyper::Svm { sigma, c } => Fitted::Svm(svm_fit(xs.view(), &y, sigma, c, svm)?),
        };
        Ok(TrainedModel {
            hyper,
            standardizer,
            model,
        })
    }

    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let xs = self.standardizer.transform(x)?;
        match &self.model {
            Fitted::Plsr(m) => m.scores(xs.view()),
            Fitted::Svm(m) => m.decision_values(xs.view()),
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Condition>> {
        Ok(self
            .decision_values(x)?
            .into_iter()
            .map(Condition::from_score)
            .collect())
    }
}
