//! End-to-end detection run and its report files.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{
    apply_verification, detect_all_collusion, expand_guilt, flag_suspects, seed_ground_truth, verify_flagged,
    LabelStore, Verification, DEFAULT_MIN_GROUP,
};
use crate::classifier::{self, ClassifierError, Dataset, ForestModel, Hyperparams};
use crate::features::{extract_all, write_features_csv, FeatureVector};
use crate::impact::{
    detect_advance_fee, impact_report, market_stats, write_histogram_csv, ImpactError, ImpactReport, MarketStats,
    DEFAULT_DRAIN_FRACTION, DEFAULT_MIN_OCCURRENCES,
};
use crate::ingest::{DataStore, OfficialToken, TruthLabel};
use crate::model::{AccountAddress, Evidence, Label, LabelKind, LabelRef, Provenance, ValuableTokens};

pub const LABELS_OUT_FILE: &str = "labels_out.csv";
pub const IMPACT_FILE: &str = "impact_report.json";
pub const HISTOGRAM_FILE: &str = "rug_histogram.csv";
pub const MARKET_STATS_FILE: &str = "market_stats.json";
pub const SUMMARY_FILE: &str = "detect_summary.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Impact(#[from] ImpactError),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub valuable: ValuableTokens,
    pub hyperparams: Hyperparams,
    pub drain_fraction: f64,
    pub min_group: usize,
    pub min_occurrences: usize,
    pub seed: u64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            valuable: ValuableTokens::default(),
            hyperparams: Hyperparams::default(),
            drain_fraction: DEFAULT_DRAIN_FRACTION,
            min_group: DEFAULT_MIN_GROUP,
            min_occurrences: DEFAULT_MIN_OCCURRENCES,
            seed: 0,
        }
    }
}

pub struct DetectInput<'a> {
    pub store: &'a DataStore,
    pub official: &'a [OfficialToken],
    pub user_labels: &'a [Label],
    pub keywords: &'a [String],
}

/// Counts after each stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub tokens: usize,
    pub seed_scam_tokens: usize,
    pub after_first_expansion: usize,
    pub training_rows: usize,
    pub training_positives: usize,
    /// False when one class was missing and the classifier was skipped.
    pub classifier_trained: bool,
    pub predicted_unlabeled: usize,
    pub flagged: usize,
    pub verified: usize,
    pub unverified: usize,
    pub after_second_expansion: usize,
    pub advance_fee_collectors: usize,
    pub collusion_addresses: usize,
    pub scam_pools: usize,
    pub labels: usize,
}

pub struct DetectOutput {
    pub labels: LabelStore,
    pub features: Vec<(AccountAddress, FeatureVector)>,
    pub model: Option<ForestModel>,
    pub verification: Verification,
    pub impact: ImpactReport,
    pub market: MarketStats,
    pub counts: StageCounts,
}

fn count_scam_tokens(labels: &LabelStore) -> usize {
    labels.with_kind(LabelKind::ScamToken).len()
}

/// Training rows: confirmed scam tokens against official tokens.
pub fn training_set(
    features: &[(AccountAddress, FeatureVector)],
    labels: &LabelStore,
) -> (Dataset, Vec<AccountAddress>) {
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut addrs = Vec::new();
    for (a, v) in features {
        let y = if labels.has(a, LabelKind::ScamToken) {
            true
        } else if labels.has(a, LabelKind::OfficialToken) {
            false
        } else {
            continue;
        };
        rows.push(*v);
        ys.push(y);
        addrs.push(*a);
    }
    (Dataset::new(rows, ys), addrs)
}

/// Labels the fee collector of every scam token found charging a fixed
/// advance fee. Returns the number of new collectors.
fn label_fee_collectors(store: &DataStore, labels: &mut LabelStore, min_occurrences: usize) -> usize {
    let mut n = 0;
    for token in labels.with_kind(LabelKind::ScamToken) {
        if let Some(fee) = detect_advance_fee(store, &token, min_occurrences) {
            if labels.has(&fee.fee_address, LabelKind::ContractDeployerExcluded) {
                continue;
            }
            n += usize::from(labels.insert(Label {
                subject: fee.fee_address,
                kind: LabelKind::CollusionAddress,
                provenance: Provenance::Expansion,
                evidence: Evidence::derived(
                    "advance-fee-collector",
                    LabelRef { subject: token, kind: LabelKind::ScamToken },
                    0,
                )
                .with_detail(format!("takes {:.6} in {} transactions", fee.fraction, fee.occurrences)),
            }));
        }
    }
    n
}

/// seed, expand, extract, classify, verify, expand again, collusion, impact.
pub fn run_detect(input: &DetectInput<'_>, cfg: &DetectConfig) -> Result<DetectOutput, PipelineError> {
    let store = input.store;
    let mut counts = StageCounts {
        tokens: store.tokens().len(),
        ..StageCounts::default()
    };
    let mut labels = seed_ground_truth(store, input.official, input.user_labels);
    counts.seed_scam_tokens = count_scam_tokens(&labels);
    expand_guilt(store, &mut labels);
    counts.after_first_expansion = count_scam_tokens(&labels);
    info!(
        "seeded {} scam tokens, {} after expansion",
        counts.seed_scam_tokens, counts.after_first_expansion
    );

    let features = extract_all(store);
    let (train, _) = training_set(&features, &labels);
    counts.training_rows = train.len();
    counts.training_positives = train.positives();
    let model = match classifier::train(&train, &cfg.hyperparams, cfg.seed) {
        Ok(m) => Some(m),
        Err(ClassifierError::DegenerateDataset | ClassifierError::InsufficientData(_)) => None,
        Err(e) => return Err(e.into()),
    };
    counts.classifier_trained = model.is_some();

    let mut verification = Verification::default();
    if let Some(model) = &model {
        let unlabeled: Vec<&(AccountAddress, FeatureVector)> = features
            .iter()
            .filter(|(a, _)| {
                !labels.has(a, LabelKind::ScamToken)
                    && !labels.has(a, LabelKind::OfficialToken)
                    && !cfg.valuable.contains_token(a)
            })
            .collect();
        counts.predicted_unlabeled = unlabeled.len();
        let rows: Vec<FeatureVector> = unlabeled.iter().map(|(_, v)| *v).collect();
        let flagged: Vec<(AccountAddress, f64)> = model
            .predict_all(&rows)
            .into_iter()
            .zip(&unlabeled)
            .filter(|(p, _)| p.is_scam)
            .map(|(p, (a, _))| (*a, p.score))
            .collect();
        flag_suspects(&mut labels, &flagged);
        let suspects: BTreeSet<AccountAddress> = flagged.iter().map(|(a, _)| *a).collect();
        counts.flagged = suspects.len();
        verification = verify_flagged(store, &suspects, input.keywords, cfg.min_group);
        apply_verification(&mut labels, &verification);
        counts.verified = verification.verified.len();
        counts.unverified = verification.unverified.len();
        info!(
            "classifier flagged {} tokens, {} verified",
            counts.flagged, counts.verified
        );
    }

    expand_guilt(store, &mut labels);
    counts.after_second_expansion = count_scam_tokens(&labels);
    counts.advance_fee_collectors = label_fee_collectors(store, &mut labels, cfg.min_occurrences);
    detect_all_collusion(store, &mut labels, &cfg.valuable);
    counts.collusion_addresses = labels.with_kind(LabelKind::CollusionAddress).len();
    counts.scam_pools = labels.with_kind(LabelKind::ScamPool).len();
    counts.labels = labels.len();

    let impact = impact_report(store, &labels, &cfg.valuable, cfg.drain_fraction)?;
    let market = market_stats(store);
    Ok(DetectOutput {
        labels,
        features,
        model,
        verification,
        impact,
        market,
        counts,
    })
}

fn write_err(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| write_err(path, e))
}

fn create(path: &Path) -> Result<fs::File, PipelineError> {
    fs::File::create(path).map_err(|e| write_err(path, e))
}

pub fn write_impact(dir: &Path, impact: &ImpactReport) -> Result<(), PipelineError> {
    write_json(&dir.join(IMPACT_FILE), impact)?;
    let path = dir.join(HISTOGRAM_FILE);
    write_histogram_csv(create(&path)?, &impact.rug_histogram).map_err(|e| write_err(&path, e))
}

pub fn write_market_stats(dir: &Path, stats: &MarketStats) -> Result<(), PipelineError> {
    write_json(&dir.join(MARKET_STATS_FILE), stats)
}

impl DetectOutput {
    /// Writes every report into `dir`, creating it if needed. Contents depend
    /// only on the inputs and configuration.
    pub fn write_dir(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
        let path = dir.join(LABELS_OUT_FILE);
        self.labels.write_csv(create(&path)?).map_err(|e| write_err(&path, e))?;
        let path = dir.join(FEATURES_FILE);
        write_features_csv(create(&path)?, &self.features).map_err(|e| write_err(&path, e))?;
        if let Some(m) = &self.model {
            let path = dir.join(MODEL_FILE);
            fs::write(&path, m.to_json() + "\n").map_err(|e| write_err(&path, e))?;
        }
        write_impact(dir, &self.impact)?;
        write_market_stats(dir, &self.market)?;
        write_json(&dir.join(SUMMARY_FILE), &self.counts)
    }
}

/// Detected labels scored against generator truth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub truth_scam_tokens: usize,
    pub detected_scam_tokens: usize,
    pub true_positives: usize,
    pub recall: f64,
    pub precision: f64,
    /// Flagged by the classifier but not confirmed; not counted above.
    pub suspected_only: usize,
    pub truth_collusion: usize,
    pub collusion_found: usize,
    pub collusion_false: usize,
}

pub fn compare_with_truth(labels: &LabelStore, truth: &[TruthLabel]) -> TruthComparison {
    let of = |k: LabelKind| -> BTreeSet<AccountAddress> {
        truth.iter().filter(|t| t.kind == k).map(|t| t.address).collect()
    };
    let scam = of(LabelKind::ScamToken);
    let found = labels.with_kind(LabelKind::ScamToken);
    let tp = scam.intersection(&found).count();
    let coll = of(LabelKind::CollusionAddress);
    let found_coll = labels.with_kind(LabelKind::CollusionAddress);
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    TruthComparison {
        truth_scam_tokens: scam.len(),
        detected_scam_tokens: found.len(),
        true_positives: tp,
        recall: ratio(tp, scam.len()),
        precision: ratio(tp, found.len()),
        suspected_only: labels.suspects().difference(&found).count(),
        truth_collusion: coll.len(),
        collusion_found: coll.intersection(&found_coll).count(),
        collusion_false: found_coll.difference(&coll).count(),
    }
}

/// Every token except the valuable ones, labeled scam or not from generator
/// truth.
pub fn truth_dataset(
    features: &[(AccountAddress, FeatureVector)],
    truth: &[TruthLabel],
    valuable: &ValuableTokens,
) -> (Dataset, Vec<AccountAddress>) {
    let scam: BTreeSet<AccountAddress> = truth
        .iter()
        .filter(|t| t.kind == LabelKind::ScamToken)
        .map(|t| t.address)
        .collect();
    let kept: Vec<&(AccountAddress, FeatureVector)> =
        features.iter().filter(|(a, _)| !valuable.contains_token(a)).collect();
    let data = Dataset::new(
        kept.iter().map(|(_, v)| *v).collect(),
        kept.iter().map(|(a, _)| scam.contains(a)).collect(),
    );
    (data, kept.iter().map(|(a, _)| *a).collect())
}
