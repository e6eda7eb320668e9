use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, ClassifierError, Dataset, Hyperparams};

/// Counts for the scam class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (truth, predicted) in pairs {
            match (truth, predicted) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn metrics(&self) -> Metrics {
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = div(self.tp, self.tp + self.fp);
        let recall = div(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub size: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub folds: Vec<FoldReport>,
    /// Summed over folds.
    pub confusion: Confusion,
    /// Computed from the summed confusion matrix.
    pub aggregate: Metrics,
    /// Unweighted mean of the per-fold values.
    pub mean_fold: Metrics,
}

/// Deals each class's shuffled indices round-robin into `k` folds, so every
/// fold holds both classes.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::InsufficientData("k must be at least 2".into()));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < k || neg.len() < k {
        return Err(ClassifierError::InsufficientData(format!(
            "each class needs at least {k} rows (scam {}, non-scam {})",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (j, i) in pos.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    for (j, i) in neg.into_iter().enumerate() {
        folds[(k - 1) - j % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Trains on `k - 1` folds and tests on the held-out one, for every fold.
pub fn cross_validate(data: &Dataset, hp: &Hyperparams, k: usize, seed: u64) -> Result<EvalReport, ClassifierError> {
    data.check()?;
    let folds = stratified_folds(&data.labels, k, seed)?;
    let mut reports = Vec::with_capacity(k);
    let mut confusion = Confusion::default();
    for (fold, test) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let model = train(&data.subset(&train_idx), hp, seed.wrapping_add(fold as u64))?;
        let c = Confusion::from_pairs(
            test.iter()
                .map(|&i| (data.labels[i], model.predict(&data.rows[i]).is_scam)),
        );
        confusion.add(&c);
        reports.push(FoldReport {
            fold,
            size: test.len(),
            confusion: c,
            metrics: c.metrics(),
        });
    }
    let mean = |f: fn(&Metrics) -> f64| reports.iter().map(|r| f(&r.metrics)).sum::<f64>() / k as f64;
    let mean_fold = Metrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    Ok(EvalReport {
        k,
        seed,
        hyperparams: hp.clone(),
        aggregate: confusion.metrics(),
        confusion,
        folds: reports,
        mean_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::tests::separable;

    #[test]
    fn test_metric_arithmetic() {
        let c = Confusion {
            tp: 2,
            fp: 1,
            tn: 0,
            fn_: 1,
        };
        let m = c.metrics();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(Confusion::default().metrics().f1, 0.0);
    }

    #[test]
    fn test_folds_stratified_and_partition() {
        let labels: Vec<bool> = (0..103).map(|i| i % 3 == 0).collect();
        let folds = stratified_folds(&labels, 10, 5).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.iter().any(|&i| labels[i]) && f.iter().any(|&i| !labels[i]));
        }
    }

    #[test]
    fn test_too_small_dataset() {
        let labels = vec![true, true, false, false, false];
        assert!(matches!(
            stratified_folds(&labels, 10, 1),
            Err(ClassifierError::InsufficientData(_))
        ));
        assert!(stratified_folds(&labels, 1, 1).is_err());
    }

    #[test]
    fn test_cross_validate_confusion_sums_to_size() {
        let d = separable(200, 9);
        let hp = Hyperparams {
            n_trees: 15,
            ..Hyperparams::default()
        };
        let r = cross_validate(&d, &hp, 10, 3).unwrap();
        assert_eq!(r.confusion.total(), d.len());
        assert_eq!(r.folds.len(), 10);
        let m = r.aggregate;
        assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
        assert!(m.f1 > 0.8, "{m:?}");
    }
}
