//! Per-channel evaluation, channel ranking and combination search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{kfold_cv, CvConfig, CvResult};
use super::metrics::{confusion_metrics, EvalReport};
use super::{ClassifierKind, Hyper, TrainedModel};
use crate::error::{Error, Result};
use crate::features::FeatureDataset;

/// Largest subset size accepted by the exhaustive strategy.
pub const MAX_EXHAUSTIVE_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum SearchStrategy {
    /// Rank single channels, then grow the combination along the ranking.
    RankedPrefix,
    /// Every subset of at most `k` channels.
    ExhaustiveK { k: usize },
}

impl std::str::FromStr for SearchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ranked-prefix" {
            return Ok(SearchStrategy::RankedPrefix);
        }
        s.strip_prefix("exhaustive-")
            .and_then(|k| k.parse().ok())
            .map(|k| SearchStrategy::ExhaustiveK { k })
            .ok_or_else(|| {
                Error::param(format!(
                    "unknown strategy {s:?} (ranked-prefix or exhaustive-<k>)"
                ))
            })
    }
}

impl std::fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchStrategy::RankedPrefix => f.write_str("ranked-prefix"),
            SearchStrategy::ExhaustiveK { k } => write!(f, "exhaustive-{k}"),
        }
    }
}

/// Score used to rank channels and to pick the best combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    /// Mean CV accuracy on the training split; the test split stays unseen
    /// until the final report.
    Cv,
    /// Accuracy on the test split.
    Test,
}

impl std::str::FromStr for RankBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" => Ok(RankBy::Cv),
            "test" => Ok(RankBy::Test),
            _ => Err(Error::param(format!(
                "unknown ranking criterion {s:?} (cv or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub cv: CvConfig,
    pub rank_by: RankBy,
    /// Longest prefix evaluated; `None` means all channels.
    pub max_prefix: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            cv: CvConfig::default(),
            rank_by: RankBy::Cv,
            max_prefix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEvaluation {
    pub channels: Vec<String>,
    pub hyper: Hyper,
    pub cv_accuracy: f64,
    pub test: EvalReport,
    pub cv: CvResult,
}

impl SetEvaluation {
    pub fn score(&self, by: RankBy) -> f64 {
        match by {
            RankBy::Cv => self.cv_accuracy,
            RankBy::Test => self.test.accuracy_or_zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub kind: ClassifierKind,
    pub strategy: SearchStrategy,
    pub rank_by: RankBy,
    pub per_channel: Vec<SetEvaluation>,
    /// Channel labels, best first.
    pub ranking: Vec<String>,
    pub combinations: Vec<SetEvaluation>,
    /// Index into `combinations`.
    pub best: usize,
}

impl SearchResult {
    pub fn best_combination(&self) -> &SetEvaluation {
        &self.combinations[self.best]
    }
}

/// Model selection by CV on the training split, one fit on the whole
/// training split, one evaluation on the test split.
pub fn evaluate_channel_set(
    ds: &FeatureDataset,
    channels: &[usize],
    kind: ClassifierKind,
    cfg: &CvConfig,
) -> Result<SetEvaluation> {
    if channels.is_empty() {
        return Err(Error::param("a channel set needs at least one channel"));
    }
    if let Some(&c) = channels.iter().find(|&&c| c >= ds.channels.len()) {
        return Err(Error::param(format!("channel index {c} out of range")));
    }
    let x_train = ds.combined(channels, &ds.train);
    let y_train = ds.labels_of(&ds.train);
    let grid = cfg.grid(kind, x_train.view());
    let trials: Vec<usize> = ds.train.iter().map(|&i| ds.epochs[i].trial).collect();
    let groups = cfg.group_by_trial.then_some(trials.as_slice());
    let cv = kfold_cv(x_train.view(), &y_train, groups, kind, &grid, cfg)?;
    let model = TrainedModel::fit(x_train.view(), &y_train, cv.best, &cfg.svm)?;
    let predicted = model.predict(ds.combined(channels, &ds.test).view())?;
    let test = confusion_metrics(&predicted, &ds.labels_of(&ds.test))?;
    Ok(SetEvaluation {
        channels: channels.iter().map(|&c| ds.channels[c].clone()).collect(),
        hyper: cv.best,
        cv_accuracy: cv.best_accuracy,
        test,
        cv,
    })
}

/// Evaluates the concatenations of the first 1, 2, …, `max_len` channels of
/// `ranking`.
pub fn evaluate_prefixes(
    ds: &FeatureDataset,
    ranking: &[usize],
    max_len: usize,
    kind: ClassifierKind,
    cfg: &CvConfig,
) -> Result<Vec<SetEvaluation>> {
    (1..=max_len.min(ranking.len()))
        .into_par_iter()
        .map(|m| evaluate_channel_set(ds, &ranking[..m], kind, cfg))
        .collect()
}

fn best_index(sets: &[SetEvaluation], by: RankBy) -> usize {
    let mut best = 0;
    for (i, s) in sets.iter().enumerate().skip(1) {
        let (a, b) = (s.score(by), sets[best].score(by));
        if a > b || (a == b && s.channels.len() < sets[best].channels.len()) {
            best = i;
        }
    }
    best
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn grow(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            grow(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=k {
        grow(0, n, size, &mut Vec::new(), &mut out);
    }
    out
}

pub fn channel_combination_search(
    ds: &FeatureDataset,
    kind: ClassifierKind,
    strategy: SearchStrategy,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    let n = ds.channels.len();
    if n == 0 {
        return Err(Error::param("channel search needs at least one channel"));
    }
    if let SearchStrategy::ExhaustiveK { k } = strategy {
        if k == 0 || k > MAX_EXHAUSTIVE_K {
            return Err(Error::param(format!(
                "exhaustive search size {k} outside 1..={MAX_EXHAUSTIVE_K}"
            )));
        }
    }
    let per_channel: Vec<SetEvaluation> = (0..n)
        .into_par_iter()
        .map(|c| evaluate_channel_set(ds, &[c], kind, &cfg.cv))
        .collect::<Result<_>>()?;

    // stable sort keeps montage order among equal scores
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        per_channel[b]
            .score(cfg.rank_by)
            .total_cmp(&per_channel[a].score(cfg.rank_by))
    });

    let combinations: Vec<SetEvaluation> = match strategy {
        SearchStrategy::RankedPrefix => {
            let max_len = cfg.max_prefix.unwrap_or(n).clamp(1, n);
            let longer: Vec<SetEvaluation> = (2..=max_len)
                .into_par_iter()
                .map(|m| evaluate_channel_set(ds, &order[..m], kind, &cfg.cv))
                .collect::<Result<_>>()?;
            std::iter::once(per_channel[order[0]].clone())
                .chain(longer)
                .collect()
        }
        SearchStrategy::ExhaustiveK { k } => subsets(n, k.min(n))
            .into_par_iter()
            .map(|set| {
                if set.len() == 1 {
                    Ok(per_channel[set[0]].clone())
                } else {
                    evaluate_channel_set(ds, &set, kind, &cfg.cv)
                }
            })
            .collect::<Result<_>>()?,
    };
    Ok(SearchResult {
        kind,
        strategy,
        rank_by: cfg.rank_by,
        best: best_index(&combinations, cfg.rank_by),
        ranking: order.iter().map(|&c| ds.channels[c].clone()).collect(),
        per_channel,
        combinations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{EpochInfo, FeatureKind};
    use crate::model::Condition;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `informative` channels carry a class-dependent mean shift.
    fn dataset(
        seed: u64,
        channels: usize,
        informative: &[usize],
        per_class: usize,
    ) -> FeatureDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * per_class;
        let labels: Vec<Condition> = (0..n)
            .map(|i| {
                if i < per_class {
                    Condition::TwoD
                } else {
                    Condition::ThreeD
                }
            })
            .collect();
        let features = Array3::from_shape_fn((channels, n, 2), |(c, e, _)| {
            let shift = if informative.contains(&c) {
                labels[e].sign() * 0.35
            } else {
                0.0
            };
            shift + rng.random_range(-1.0..1.0)
        });
        // every sample is its own trial
        let trials: Vec<usize> = (0..n).collect();
        let (train, test) = crate::features::split_indices(
            &labels,
            &trials,
            crate::features::SplitMode::Shuffled,
            seed,
        );
        FeatureDataset {
            kind: FeatureKind::Stft,
            channels: (0..channels).map(|c| format!("ch{c}")).collect(),
            feature_names: vec!["a".into(), "b".into()],
            features,
            labels,
            epochs: (0..n)
                .map(|i| EpochInfo {
                    trial: i,
                    offset_s: 0.0,
                })
                .collect(),
            train,
            test,
        }
    }

    fn quick() -> SearchConfig {
        SearchConfig {
            cv: CvConfig {
                folds: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn informative_channels_rank_first() {
        let ds = dataset(3, 6, &[2, 4], 100);
        let r = channel_combination_search(
            &ds,
            ClassifierKind::Plsr,
            SearchStrategy::RankedPrefix,
            &quick(),
        )
        .unwrap();
        let top: Vec<&str> = r.ranking[..2].iter().map(String::as_str).collect();
        assert!(
            top.contains(&"ch2") && top.contains(&"ch4"),
            "{:?}",
            r.ranking
        );
        assert_eq!(r.combinations.len(), 6);
        let best = r.best_combination();
        assert!(
            best.channels.contains(&"ch2".to_string())
                && best.channels.contains(&"ch4".to_string())
        );
        assert!(best.test.accuracy.unwrap() > 0.7, "{:?}", best.test);
    }

    #[test]
    fn single_channel_gives_one_combination() {
        let ds = dataset(1, 1, &[0], 20);
        let r = channel_combination_search(
            &ds,
            ClassifierKind::Svm,
            SearchStrategy::RankedPrefix,
            &quick(),
        )
        .unwrap();
        assert_eq!(r.combinations.len(), 1);
        assert_eq!(r.combinations[0].channels, vec!["ch0".to_string()]);
    }

    #[test]
    fn exhaustive_enumerates_subsets() {
        let ds = dataset(2, 4, &[1], 20);
        let r = channel_combination_search(
            &ds,
            ClassifierKind::Plsr,
            SearchStrategy::ExhaustiveK { k: 2 },
            &quick(),
        )
        .unwrap();
        assert_eq!(r.combinations.len(), 4 + 6);
        assert!(r.best_combination().channels.contains(&"ch1".to_string()));
        assert!(channel_combination_search(
            &ds,
            ClassifierKind::Plsr,
            SearchStrategy::ExhaustiveK { k: 5 },
            &quick()
        )
        .is_err());
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!(
            "ranked-prefix".parse::<SearchStrategy>().unwrap(),
            SearchStrategy::RankedPrefix
        );
        assert_eq!(
            "exhaustive-3".parse::<SearchStrategy>().unwrap(),
            SearchStrategy::ExhaustiveK { k: 3 }
        );
        assert!("greedy".parse::<SearchStrategy>().is_err());
    }
}
