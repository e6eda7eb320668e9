//! Random-forest scam classifier, cross-validation and metrics.

mod eval;
pub mod logistic;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{cross_validate, stratified_folds, Confusion, EvalReport, FoldReport, Metrics};
pub use tree::{DecisionTree, Node};

use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use tree::TreeParams;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dataset has only one class")]
    DegenerateDataset,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model file: {0}")]
    Model(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: (FEATURE_COUNT as f64).sqrt() as usize,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(ClassifierError::InvalidInput("n_trees and min_leaf must be positive".into()));
        }
        if !(1..=FEATURE_COUNT).contains(&self.features_per_split) {
            return Err(ClassifierError::InvalidInput(format!(
                "features_per_split must lie in 1..={FEATURE_COUNT}"
            )));
        }
        Ok(())
    }
}

/// Labeled rows; `true` marks a scam token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<bool>,
}

impl Dataset {
    pub fn new(rows: Vec<FeatureVector>, labels: Vec<bool>) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        Self { rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn check(&self) -> Result<(), ClassifierError> {
        if self.len() < 2 {
            return Err(ClassifierError::InsufficientData(format!(
                "need at least 2 rows, got {}",
                self.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if let Some(k) = r.0.iter().position(|v| !v.is_finite()) {
                return Err(ClassifierError::InvalidInput(format!(
                    "row {i}: {} is not finite",
                    FEATURE_NAMES[k]
                )));
            }
        }
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(ClassifierError::DegenerateDataset);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub is_scam: bool,
    /// Fraction of trees voting scam.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub feature_order: Vec<String>,
    pub trees: Vec<DecisionTree>,
}

/// Trains one tree per bootstrap sample; tree `i` draws from its own stream,
/// so the model does not depend on thread scheduling.
pub fn train(data: &Dataset, hp: &Hyperparams, seed: u64) -> Result<ForestModel, ClassifierError> {
    hp.validate()?;
    data.check()?;
    let x: Vec<&[f64]> = data.rows.iter().map(|r| r.as_slice()).collect();
    let params = TreeParams {
        max_depth: hp.max_depth,
        min_leaf: hp.min_leaf,
        features_per_split: hp.features_per_split,
    };
    let n = data.len();
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            DecisionTree::grow(&x, &data.labels, sample, &params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        version: MODEL_FORMAT_VERSION,
        hyperparams: hp.clone(),
        seed,
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        trees,
    })
}

impl ForestModel {
    /// Majority vote; an exact tie is non-scam.
    pub fn predict(&self, v: &FeatureVector) -> Prediction {
        let votes = self.trees.iter().filter(|t| t.vote(v.as_slice())).count();
        Prediction {
            is_scam: 2 * votes > self.trees.len(),
            score: votes as f64 / self.trees.len() as f64,
        }
    }

    pub fn predict_all(&self, rows: &[FeatureVector]) -> Vec<Prediction> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let m: ForestModel =
            serde_json::from_str(text).map_err(|e| ClassifierError::Model(e.to_string()))?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Model(format!(
                "unsupported model version {} (expected {MODEL_FORMAT_VERSION})",
                m.version
            )));
        }
        if m.feature_order != FEATURE_NAMES {
            return Err(ClassifierError::Model("feature order does not match".into()));
        }
        if m.trees.is_empty() || !m.trees.iter().all(|t| t.is_well_formed(FEATURE_COUNT)) {
            return Err(ClassifierError::Model("malformed tree".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    const P_BURN: usize = 6;

    /// Label is exactly `P_burn > 0.9`; other columns are noise.
    pub(crate) fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let mut v = [0.0; FEATURE_COUNT];
            for x in v.iter_mut() {
                *x = rng.random_range(0.0..100.0);
            }
            v[P_BURN] = rng.random_range(0.0..1.0);
            labels.push(v[P_BURN] > 0.9);
            rows.push(FeatureVector(v));
        }
        // Make sure both classes are well represented.
        for i in 0..n / 5 {
            rows[i].0[P_BURN] = 0.91 + 0.08 * (i as f64 / n as f64);
            labels[i] = true;
        }
        Dataset::new(rows, labels)
    }

    #[test]
    fn test_separable_training_accuracy() {
        let d = separable(300, 1);
        let m = train(&d, &Hyperparams::default(), 7).unwrap();
        for (r, l) in d.rows.iter().zip(&d.labels) {
            assert_eq!(m.predict(r).is_scam, *l);
        }
        let mut v = d.rows[0];
        v.0[P_BURN] = 0.95;
        assert!(m.predict(&v).is_scam);
        v.0[P_BURN] = 0.2;
        assert!(!m.predict(&v).is_scam);
    }

    #[test]
    fn test_identical_rows_predict_majority() {
        let rows = vec![FeatureVector([1.0; FEATURE_COUNT]); 9];
        let labels = vec![true, true, true, true, true, false, false, false, false];
        let m = train(&Dataset::new(rows.clone(), labels), &Hyperparams::default(), 3).unwrap();
        let p = m.predict(&rows[0]);
        // Bootstrap samples vary, so only the majority direction is fixed.
        assert!(p.score > 0.5 && p.is_scam);
    }

    #[test]
    fn test_vote_arithmetic_and_tie() {
        let leaf = |scam: bool| DecisionTree {
            nodes: vec![Node::Leaf {
                counts: if scam { [0, 1] } else { [1, 0] },
            }],
        };
        let mut m = ForestModel {
            version: MODEL_FORMAT_VERSION,
            hyperparams: Hyperparams::default(),
            seed: 0,
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            trees: (0..100).map(|i| leaf(i < 73)).collect(),
        };
        let v = FeatureVector([0.0; FEATURE_COUNT]);
        assert_eq!(m.predict(&v), Prediction { is_scam: true, score: 0.73 });
        m.trees = (0..100).map(|i| leaf(i < 50)).collect();
        assert_eq!(m.predict(&v), Prediction { is_scam: false, score: 0.5 });
    }

    #[test]
    fn test_deterministic_model_bytes() {
        let d = separable(200, 2);
        let a = train(&d, &Hyperparams::default(), 11).unwrap().to_json();
        let b = train(&d, &Hyperparams::default(), 11).unwrap().to_json();
        assert_eq!(a, b);
        let back = ForestModel::from_json(&a).unwrap();
        assert_eq!(back.to_json(), a);
        let c = train(&d, &Hyperparams::default(), 12).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn test_single_class_rejected() {
        let rows = vec![FeatureVector([0.0; FEATURE_COUNT]); 4];
        let r = train(&Dataset::new(rows, vec![true; 4]), &Hyperparams::default(), 1);
        assert!(matches!(r, Err(ClassifierError::DegenerateDataset)));
    }

    #[test]
    fn test_nan_rejected() {
        let mut d = separable(20, 3);
        d.rows[3].0[0] = f64::NAN;
        assert!(matches!(
            train(&d, &Hyperparams::default(), 1),
            Err(ClassifierError::InvalidInput(_))
        ));
    }

    #[test]
    fn test_wrong_version_rejected() {
        let d = separable(50, 4);
        let mut m = train(&d, &Hyperparams { n_trees: 3, ..Hyperparams::default() }, 1).unwrap();
        m.version = 99;
        assert!(ForestModel::from_json(&m.to_json()).is_err());
    }
}
