//! Confusion counts and derived rates with `TwoD` as the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Condition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Absent when the denominator is zero.
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        EvalReport {
            tp,
            fp,
            fn_,
            tn,
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Accuracy, or 0 for an empty evaluation.
    pub fn accuracy_or_zero(&self) -> f64 {
        self.accuracy.unwrap_or(0.0)
    }
}

pub fn confusion_metrics(predicted: &[Condition], truth: &[Condition]) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::structural(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Condition::TwoD, Condition::TwoD) => tp += 1,
            (Condition::TwoD, Condition::ThreeD) => fp += 1,
            (Condition::ThreeD, Condition::TwoD) => fn_ += 1,
            (Condition::ThreeD, Condition::ThreeD) => tn += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Condition::{ThreeD as N, TwoD as P};

    fn labels(bits: &[bool]) -> Vec<Condition> {
        bits.iter().map(|&b| if b { P } else { N }).collect()
    }

    #[test]
    fn worked_counts() {
        let m = EvalReport::from_counts(3, 1, 2, 4);
        assert_eq!(m.accuracy, Some(0.7));
        assert_eq!(m.sensitivity, Some(0.6));
        assert_eq!(m.specificity, Some(0.8));

        let truth: Vec<_> = (0..82).map(|i| if i < 41 { P } else { N }).collect();
        let all = confusion_metrics(&truth, &truth).unwrap();
        assert_eq!(
            (all.accuracy, all.sensitivity, all.specificity),
            (Some(1.0), Some(1.0), Some(1.0))
        );

        let m = confusion_metrics(&[P; 82], &truth).unwrap();
        assert_eq!(
            (m.accuracy, m.sensitivity, m.specificity),
            (Some(0.5), Some(1.0), Some(0.0))
        );
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let m = confusion_metrics(&[P, P], &[P, P]).unwrap();
        assert_eq!(m.specificity, None);
        let e = confusion_metrics(&[], &[]).unwrap();
        assert_eq!(e.accuracy, None);
        assert!(confusion_metrics(&[P], &[]).is_err());
    }

    #[test]
    fn matches_brute_force_counting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(0..60);
            let p: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let t: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let m = confusion_metrics(&labels(&p), &labels(&t)).unwrap();
            let count = |a: bool, b: bool| {
                p.iter()
                    .zip(&t)
                    .filter(|&(&x, &y)| x == a && y == b)
                    .count()
            };
            assert_eq!(m.tp, count(true, true));
            assert_eq!(m.fp, count(true, false));
            assert_eq!(m.fn_, count(false, true));
            assert_eq!(m.tn, count(false, false));
        }
    }

    proptest! {
        #[test]
        fn accuracy_is_class_weighted_rates(p in prop::collection::vec(any::<bool>(), 1..80),
                                            t in prop::collection::vec(any::<bool>(), 1..80)) {
            let n = p.len().min(t.len());
            let m = confusion_metrics(&labels(&p[..n]), &labels(&t[..n])).unwrap();
            let pos = (m.tp + m.fn_) as f64;
            let neg = (m.tn + m.fp) as f64;
            let weighted = m.sensitivity.unwrap_or(0.0) * pos + m.specificity.unwrap_or(0.0) * neg;
            prop_assert!((m.accuracy.unwrap() - weighted / (pos + neg)).abs() < 1e-12);
        }

        #[test]
        fn label_swap_swaps_rates(p in prop::collection::vec(any::<bool>(), 1..80),
                                  t in prop::collection::vec(any::<bool>(), 1..80)) {
            let n = p.len().min(t.len());
            let flip = |v: &[bool]| v.iter().map(|b| !b).collect::<Vec<_>>();
            let a = confusion_metrics(&labels(&p[..n]), &labels(&t[..n])).unwrap();
            let b = confusion_metrics(&labels(&flip(&p[..n])), &labels(&flip(&t[..n]))).unwrap();
            prop_assert_eq!(a.sensitivity, b.specificity);
            prop_assert_eq!(a.specificity, b.sensitivity);
            prop_assert_eq!(a.accuracy, b.accuracy);
        }
    }
}
