use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use scam_radar::association::{expand_guilt, seed_ground_truth, LabelStore};
use scam_radar::classifier::{self, cross_validate, logistic::cross_validate_logistic, ClassifierError};
use scam_radar::features::{extract_all, write_features_csv};
use scam_radar::impact::{impact_report, market_stats, reference};
use scam_radar::ingest::{
    load_brand_keywords, load_official_tokens, load_truth_labels, load_user_labels, validate_replay, DataStore,
    OfficialToken, TruthLabel, KEYWORDS_FILE, LABELS_FILE, OFFICIAL_FILE, TRUTH_FILE,
};
use scam_radar::model::Label;
use scam_radar::pipeline::{
    compare_with_truth, run_detect, training_set, truth_dataset, write_impact, write_market_stats, DetectConfig,
    DetectInput, LABELS_OUT_FILE,
};
use scam_radar::scenario::{generate_market, CampaignCounts, GenError, MarketConfig};

use crate::config::config_err;

pub const TRUTH_COMPARISON_FILE: &str = "truth_comparison.json";

/// Everything the detector reads from a data directory.
pub struct Inputs {
    pub store: DataStore,
    pub official: Vec<OfficialToken>,
    pub user_labels: Vec<Label>,
    pub keywords: Vec<String>,
    pub truth: Option<Vec<TruthLabel>>,
}

fn optional<T>(path: PathBuf, load: impl FnOnce(&Path) -> Result<T, scam_radar::ingest::IngestError>) -> Result<Option<T>> {
    if path.exists() {
        Ok(Some(load(&path)?))
    } else {
        Ok(None)
    }
}

pub fn load_inputs(dir: &Path) -> Result<Inputs> {
    if !dir.is_dir() {
        bail!("data directory {} does not exist", dir.display());
    }
    let store = DataStore::load_dir(dir)?;
    let official = load_official_tokens(&dir.join(OFFICIAL_FILE))?.into_iter().collect();
    Ok(Inputs {
        store,
        official,
        user_labels: optional(dir.join(LABELS_FILE), load_user_labels)?.unwrap_or_default(),
        keywords: optional(dir.join(KEYWORDS_FILE), load_brand_keywords)?.unwrap_or_default(),
        truth: optional(dir.join(TRUTH_FILE), load_truth_labels)?,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub struct GenerateArgs {
    pub out: PathBuf,
    pub seed: u64,
    pub small: bool,
    pub campaigns: Option<String>,
    pub victims: Option<f64>,
    pub benign: Option<usize>,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = if a.small {
        MarketConfig::small()
    } else {
        MarketConfig::default()
    };
    if let Some(counts) = &a.campaigns {
        cfg.campaigns = counts
            .parse::<CampaignCounts>()
            .map_err(|e| config_err(format!("--campaigns: {e}")))?;
    }
    if let Some(v) = a.victims {
        cfg.victim_mean = v;
    }
    if let Some(b) = a.benign {
        cfg.benign_tokens = b;
    }
    let market = generate_market(&cfg, a.seed).map_err(|e| match e {
        GenError::Config(m) => config_err(m),
        other => other.into(),
    })?;
    ensure_dir(&a.out)?;
    market.write_dir(&a.out)?;
    println!(
        "wrote {} tokens, {} pools, {} events, {} transfers to {} (seed {})",
        market.store.tokens().len(),
        market.store.pools().len(),
        market.store.events().len(),
        market.store.transfers().len(),
        a.out.display(),
        a.seed
    );
    println!(
        "planted {} scam pools and {} collusion plants",
        market.ledger.pools.len(),
        market.ledger.collusion.len()
    );
    Ok(())
}

pub fn ingest_check(dir: &Path) -> Result<()> {
    let inputs = match load_inputs(dir) {
        Ok(i) => i,
        Err(e) => {
            if let Some(ie) = e.downcast_ref::<scam_radar::ingest::IngestError>() {
                for r in ie.rejects().iter().take(50) {
                    eprintln!("rejected: {r}");
                }
            }
            return Err(e);
        }
    };
    let s = &inputs.store;
    println!(
        "tokens {}  pools {}  events {}  transfers {}  prices {}  official {}  user labels {}",
        s.tokens().len(),
        s.pools().len(),
        s.events().len(),
        s.transfers().len(),
        s.prices().len(),
        inputs.official.len(),
        inputs.user_labels.len()
    );
    let found = validate_replay(s);
    for d in found.iter().take(50) {
        eprintln!("replay: pool {} at {}:{}: {}", d.pool, d.key.tx_hash, d.key.log_index, d.message);
    }
    if !found.is_empty() {
        bail!("{} event(s) cannot be replayed by the constant-product engine", found.len());
    }
    println!("replay ok");
    Ok(())
}

pub fn features(dir: &Path, out: &Path) -> Result<()> {
    let store = DataStore::load_dir(dir)?;
    let rows = extract_all(&store);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let f = fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
    write_features_csv(f, &rows)?;
    println!("wrote {} feature rows to {}", rows.len(), out.display());
    Ok(())
}

fn seeded_labels(inputs: &Inputs) -> LabelStore {
    let mut labels = seed_ground_truth(&inputs.store, &inputs.official, &inputs.user_labels);
    expand_guilt(&inputs.store, &mut labels);
    labels
}

fn classifier_data_error(e: ClassifierError) -> anyhow::Error {
    anyhow::Error::new(e).context("cannot build a classifier from this data")
}

pub fn train(dir: &Path, out: &Path, cfg: &DetectConfig) -> Result<()> {
    let inputs = load_inputs(dir)?;
    let labels = seeded_labels(&inputs);
    let features = extract_all(&inputs.store);
    let (data, _) = training_set(&features, &labels);
    info!("training on {} rows ({} scam)", data.len(), data.positives());
    let model = classifier::train(&data, &cfg.hyperparams, cfg.seed).map_err(classifier_data_error)?;
    fs::write(out, model.to_json() + "\n").with_context(|| format!("cannot write {}", out.display()))?;
    println!(
        "trained {} trees on {} rows ({} scam, {} official); model written to {}",
        model.trees.len(),
        data.len(),
        data.positives(),
        data.len() - data.positives(),
        out.display()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum LabelSource {
    /// Generator truth when present, otherwise seed labels.
    Auto,
    Truth,
    Seed,
}

#[derive(Serialize)]
struct EvalFile {
    label_source: &'static str,
    forest: classifier::EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    logistic_baseline: Option<classifier::EvalReport>,
}

pub fn eval(dir: &Path, out: &Path, folds: usize, source: LabelSource, baseline: bool, cfg: &DetectConfig) -> Result<()> {
    let inputs = load_inputs(dir)?;
    let features = extract_all(&inputs.store);
    let use_truth = match source {
        LabelSource::Truth if inputs.truth.is_none() => {
            bail!("{} not found in {}", TRUTH_FILE, dir.display())
        }
        LabelSource::Truth => true,
        LabelSource::Seed => false,
        LabelSource::Auto => inputs.truth.is_some(),
    };
    let data = if use_truth {
        truth_dataset(&features, inputs.truth.as_deref().unwrap_or_default(), &cfg.valuable).0
    } else {
        training_set(&features, &seeded_labels(&inputs)).0
    };
    let report = cross_validate(&data, &cfg.hyperparams, folds, cfg.seed).map_err(classifier_data_error)?;
    let logistic = if baseline {
        Some(cross_validate_logistic(&data, folds, cfg.seed).map_err(classifier_data_error)?)
    } else {
        None
    };
    let m = report.aggregate;
    println!(
        "{folds}-fold CV on {} rows ({} scam): precision {:.4} recall {:.4} F1 {:.4}",
        data.len(),
        data.positives(),
        m.precision,
        m.recall,
        m.f1
    );
    if let Some(l) = &logistic {
        println!("logistic baseline F1 {:.4}", l.aggregate.f1);
    }
    write_json(
        out,
        &EvalFile {
            label_source: if use_truth { "truth" } else { "seed" },
            forest: report,
            logistic_baseline: logistic,
        },
    )
}

pub fn detect(dir: &Path, out: &Path, cfg: &DetectConfig) -> Result<()> {
    let inputs = load_inputs(dir)?;
    let input = DetectInput {
        store: &inputs.store,
        official: &inputs.official,
        user_labels: &inputs.user_labels,
        keywords: &inputs.keywords,
    };
    let result = run_detect(&input, cfg)?;
    ensure_dir(out)?;
    result.write_dir(out)?;
    let c = &result.counts;
    let a = &result.impact.aggregates;
    println!(
        "scam tokens {} (seed {}, expanded {}, classifier verified {} of {} flagged)",
        c.after_second_expansion, c.seed_scam_tokens, c.after_first_expansion, c.verified, c.flagged
    );
    println!(
        "scam pools {}  collusion addresses {}  labels {}",
        c.scam_pools, c.collusion_addresses, c.labels
    );
    println!(
        "profit ${:.2} (gross ${:.2})  victims {}  rugs under 1h {:.1}%  under 1d {:.1}%",
        a.total_profit_usd,
        a.total_gross_profit_usd,
        a.total_victims,
        100.0 * a.rug_under_hour,
        100.0 * a.rug_under_day
    );
    if !c.classifier_trained {
        warn!("classifier skipped: the seed labels do not contain both classes");
    }
    println!("reports written to {}", out.display());
    Ok(())
}

pub fn report(dir: &Path, labels_path: &Path, out: &Path, cfg: &DetectConfig) -> Result<()> {
    let inputs = load_inputs(dir)?;
    let text = fs::read(labels_path).with_context(|| format!("cannot read {}", labels_path.display()))?;
    let labels = LabelStore::read_csv(text.as_slice())
        .map_err(|e| anyhow::anyhow!("{}: {e}", labels_path.display()))?;
    let impact = impact_report(&inputs.store, &labels, &cfg.valuable, cfg.drain_fraction)?;
    let stats = market_stats(&inputs.store);
    ensure_dir(out)?;
    write_impact(out, &impact)?;
    write_market_stats(out, &stats)?;
    let a = &impact.aggregates;
    println!(
        "{} scam pools: profit ${:.2} (mean ${:.2} per pool, gross ${:.2}), {} distinct victims",
        a.scam_pools, a.total_profit_usd, a.mean_profit_per_pool, a.total_gross_profit_usd, a.total_victims
    );
    println!(
        "rug intervals: {:.1}% under 1 hour, {:.1}% under 1 day; {} multi-round pools, {} with advance fees",
        100.0 * a.rug_under_hour,
        100.0 * a.rug_under_day,
        a.multi_round_pools,
        a.advance_fee_pools
    );
    println!(
        "market: {} pools, {} events, top 1% of pools hold {:.1}% of events, {:.1}% of addresses only swap",
        stats.pools,
        stats.events,
        100.0 * stats.top1pct_event_share,
        100.0 * stats.participation.swap_only_fraction
    );
    println!(
        "mainnet reference figures, not derived from this data: {} scam tokens, ${:.0} profit, {} victims",
        reference::SCAM_TOKENS,
        reference::PROFIT_USD,
        reference::VICTIMS
    );
    if let Some(truth) = &inputs.truth {
        let cmp = compare_with_truth(&labels, truth);
        println!(
            "against truth: scam-token recall {:.4} precision {:.4}; collusion {}/{} found, {} false",
            cmp.recall, cmp.precision, cmp.collusion_found, cmp.truth_collusion, cmp.collusion_false
        );
        write_json(&out.join(TRUTH_COMPARISON_FILE), &cmp)?;
    }
    Ok(())
}

pub fn default_labels_path(out: &Path) -> PathBuf {
    out.join(LABELS_OUT_FILE)
}
