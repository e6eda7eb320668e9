//! Logistic-regression baseline, for comparison with the forest only.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Confusion, Dataset, EvalReport, FoldReport, Hyperparams, Metrics};
use crate::features::{FeatureVector, FEATURE_COUNT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Heavy-tailed counts are compressed before standardizing.
fn squash(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Full-batch gradient descent on standardized, log-compressed features.
pub fn train_logistic(data: &Dataset, epochs: usize, rate: f64) -> Result<LogisticModel, ClassifierError> {
    data.check()?;
    let n = data.len() as f64;
    let xs: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| r.0.iter().map(|&v| squash(v)).collect())
        .collect();
    let mut mean = vec![0.0; FEATURE_COUNT];
    let mut scale = vec![0.0; FEATURE_COUNT];
    for x in &xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    for x in &xs {
        for k in 0..FEATURE_COUNT {
            scale[k] += (x[k] - mean[k]).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let zs: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..FEATURE_COUNT).map(|k| (x[k] - mean[k]) / scale[k]).collect())
        .collect();
    let mut w = vec![0.0; FEATURE_COUNT];
    let mut b = 0.0;
    for _ in 0..epochs {
        let mut gw = vec![0.0; FEATURE_COUNT];
        let mut gb = 0.0;
        for (z, &y) in zs.iter().zip(&data.labels) {
            let p = sigmoid(dot(&w, z) + b);
            let err = p - f64::from(u8::from(y));
            for k in 0..FEATURE_COUNT {
                gw[k] += err * z[k] / n;
            }
            gb += err / n;
        }
        for k in 0..FEATURE_COUNT {
            w[k] -= rate * gw[k];
        }
        b -= rate * gb;
    }
    Ok(LogisticModel {
        mean,
        scale,
        weights: w,
        bias: b,
    })
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LogisticModel {
    pub fn probability(&self, v: &FeatureVector) -> f64 {
        let z: Vec<f64> = (0..FEATURE_COUNT)
            .map(|k| (squash(v.0[k]) - self.mean[k]) / self.scale[k])
            .collect();
        sigmoid(dot(&self.weights, &z) + self.bias)
    }

    pub fn predict(&self, v: &FeatureVector) -> bool {
        self.probability(v) > 0.5
    }
}

/// Same folds and report shape as the forest's cross-validation.
pub fn cross_validate_logistic(data: &Dataset, k: usize, seed: u64) -> Result<EvalReport, ClassifierError> {
    data.check()?;
    let folds = super::stratified_folds(&data.labels, k, seed)?;
    let mut confusion = Confusion::default();
    let mut reports = Vec::new();
    for (fold, test) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let model = train_logistic(&data.subset(&train_idx), 300, 0.5)?;
        let c = Confusion::from_pairs(test.iter().map(|&i| (data.labels[i], model.predict(&data.rows[i]))));
        confusion.add(&c);
        reports.push(FoldReport {
            fold,
            size: test.len(),
            confusion: c,
            metrics: c.metrics(),
        });
    }
    let mean = |f: fn(&Metrics) -> f64| reports.iter().map(|r| f(&r.metrics)).sum::<f64>() / k as f64;
    Ok(EvalReport {
        k,
        seed,
        hyperparams: Hyperparams::default(),
        aggregate: confusion.metrics(),
        confusion,
        mean_fold: Metrics {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        folds: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::tests::separable;

    #[test]
    fn test_logistic_learns_threshold_direction() {
        let d = separable(300, 5);
        let m = train_logistic(&d, 400, 0.5).unwrap();
        let acc = d
            .rows
            .iter()
            .zip(&d.labels)
            .filter(|(r, l)| m.predict(r) == **l)
            .count() as f64
            / d.len() as f64;
        assert!(acc > 0.85, "accuracy {acc}");
    }
}
