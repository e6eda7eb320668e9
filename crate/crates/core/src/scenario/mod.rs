//! Seed-driven synthetic markets with planted scam campaigns.
//!
//! Every pool is driven through [`crate::amm::PoolState`], so the emitted logs
//! replay exactly. Alongside the market the generator returns the ground truth
//! and a ledger of what each campaign earned, which the detectors are tested
//! against.

mod audit;
mod benign;
mod campaign;
pub mod ids;
pub(crate) mod sim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{audit_market, AuditReport};
pub use campaign::{
    script_advance_fee, script_campaign, script_collusion, CampaignOutput, CampaignScript,
    CollusionPattern, CollusionPlant, SecondRound, Timing,
};

use crate::amm::AmmError;
use crate::ingest::{
    write_official_tokens, write_truth_labels, write_user_labels, DataStore, IngestError,
    OfficialToken, PriceTable, TruthLabel, KEYWORDS_FILE, LABELS_FILE, OFFICIAL_FILE, TRUTH_FILE,
};
use crate::model::{
    normalize_name, well_known, AccountAddress, Asset, Evidence, Label, LabelKind, Provenance,
    TokenInfo,
};
use ids::{derive_address, BRANDS, BRAND_SUFFIXES, HOT_NAMES};
use sim::Fragment;

/// 2020-05-05 00:00 UTC.
pub const DEFAULT_START: u64 = 1_588_636_800;
/// 2020-12-06 00:00 UTC, the valuation date of the price snapshot.
pub const DEFAULT_END: u64 = 1_607_212_800;
pub const VALUATION_DATE: &str = "2020-12-06";
pub const LEDGER_FILE: &str = "ledger.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CampaignKind {
    RugPull,
    PumpAndDumpRugPull,
    SecondRoundRugPull,
    CollusionRugPull,
    AdvanceFee,
    Benign,
}

impl CampaignKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CampaignKind::RugPull => "rugpull",
            CampaignKind::PumpAndDumpRugPull => "pump",
            CampaignKind::SecondRoundRugPull => "secondround",
            CampaignKind::CollusionRugPull => "collusion",
            CampaignKind::AdvanceFee => "advancefee",
            CampaignKind::Benign => "benign",
        }
    }
}

impl fmt::Display for CampaignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of scam campaigns of each kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignCounts {
    pub rugpull: usize,
    pub pump: usize,
    pub secondround: usize,
    pub collusion: usize,
    pub advancefee: usize,
}

impl Default for CampaignCounts {
    fn default() -> Self {
        Self {
            rugpull: 450,
            pump: 300,
            secondround: 100,
            collusion: 100,
            advancefee: 50,
        }
    }
}

impl CampaignCounts {
    pub fn none() -> Self {
        Self {
            rugpull: 0,
            pump: 0,
            secondround: 0,
            collusion: 0,
            advancefee: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.rugpull + self.pump + self.secondround + self.collusion + self.advancefee
    }

    fn kinds(&self) -> Vec<CampaignKind> {
        use CampaignKind::*;
        let mut out = Vec::with_capacity(self.total());
        for (kind, n) in [
            (RugPull, self.rugpull),
            (PumpAndDumpRugPull, self.pump),
            (SecondRoundRugPull, self.secondround),
            (CollusionRugPull, self.collusion),
            (AdvanceFee, self.advancefee),
        ] {
            out.extend(std::iter::repeat_n(kind, n));
        }
        out
    }
}

/// Parses `rugpull=5,collusion=3`; kinds not mentioned are zero.
impl FromStr for CampaignCounts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut c = CampaignCounts::none();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected kind=count, got `{part}`"))?;
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| format!("bad count in `{part}`"))?;
            match k.trim() {
                "rugpull" => c.rugpull = n,
                "pump" => c.pump = n,
                "secondround" => c.secondround = n,
                "collusion" => c.collusion = n,
                "advancefee" => c.advancefee = n,
                other => return Err(format!("unknown campaign kind `{other}`")),
            }
        }
        Ok(c)
    }
}

/// How a scam token is named.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamingMode {
    /// Copies an official token's name and symbol.
    Clone,
    /// Shares a trending name with other scams.
    HotName,
    /// Impersonates a famous entity that has no official token.
    Brand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    pub benign_tokens: usize,
    pub official_fraction: f64,
    pub abandoned_fraction: f64,
    /// Benign projects whose minter withdraws all liquidity when activity ends.
    pub wind_down_fraction: f64,
    pub campaigns: CampaignCounts,
    /// Mean victims per scam pool.
    pub victim_mean: f64,
    pub retail_population: usize,
    /// Events attempted on each WETH/stablecoin backbone pool.
    pub backbone_events: usize,
    pub campaigns_per_scammer: f64,
    pub clone_share: f64,
    pub hot_name_share: f64,
    pub excluded_deployers: usize,
    /// Benign tokens deployed through a shared deployer, per deployer.
    pub deployer_benign_tokens: usize,
    /// Fraction of scam campaigns whose token is deployed through a shared deployer.
    pub deployer_scam_fraction: f64,
    pub advance_fee_fraction: f64,
    /// Every n-th collusion campaign also plants a two-hop chain; 0 disables.
    pub two_hop_every: usize,
    pub lifetime_under_hour: f64,
    pub lifetime_under_day: f64,
    pub start_time: u64,
    pub end_time: u64,
    pub eth_usd: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            benign_tokens: 1000,
            official_fraction: 0.3,
            abandoned_fraction: 0.05,
            wind_down_fraction: 0.05,
            campaigns: CampaignCounts::default(),
            victim_mean: 3.5,
            retail_population: 4000,
            backbone_events: 400,
            campaigns_per_scammer: 2.0,
            clone_share: 0.5,
            hot_name_share: 0.3,
            excluded_deployers: 7,
            deployer_benign_tokens: 14,
            deployer_scam_fraction: 0.03,
            advance_fee_fraction: 0.05,
            two_hop_every: 5,
            lifetime_under_hour: 0.37,
            lifetime_under_day: 0.86,
            start_time: DEFAULT_START,
            end_time: DEFAULT_END,
            eth_usd: 600.0,
        }
    }
}

impl MarketConfig {
    /// A small market for tests: the same shape as the default at a fraction
    /// of the size.
    pub fn small() -> Self {
        Self {
            benign_tokens: 60,
            campaigns: CampaignCounts {
                rugpull: 12,
                pump: 8,
                secondround: 4,
                collusion: 6,
                advancefee: 3,
            },
            retail_population: 300,
            deployer_benign_tokens: 3,
            two_hop_every: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.official_fraction)
            || !unit(self.abandoned_fraction)
            || !unit(self.wind_down_fraction)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if !unit(self.clone_share)
            || !unit(self.hot_name_share)
            || self.clone_share + self.hot_name_share > 1.0
        {
            return bad("naming shares must lie in [0, 1] and sum to at most 1");
        }
        if !unit(self.deployer_scam_fraction) {
            return bad("deployer_scam_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.advance_fee_fraction) {
            return bad("advance_fee_fraction must lie in [0, 1)");
        }
        if !(self.victim_mean >= 0.0 && self.victim_mean.is_finite()) {
            return bad("victim_mean must be a finite non-negative number");
        }
        let c = &self.campaigns;
        if self.victim_mean == 0.0 && (c.pump + c.collusion + c.advancefee) > 0 {
            return bad("pump, collusion and advance-fee campaigns need victims (victim_mean > 0)");
        }
        if self.victim_mean > 0.0 && c.total() > 0 && self.retail_population < 20 {
            return bad("retail_population must be at least 20");
        }
        if self.campaigns_per_scammer < 1.0 {
            return bad("campaigns_per_scammer must be at least 1");
        }
        if !(unit(self.lifetime_under_hour)
            && unit(self.lifetime_under_day)
            && self.lifetime_under_hour <= self.lifetime_under_day)
        {
            return bad("lifetime quantiles must satisfy 0 <= hour <= day <= 1");
        }
        let span = self.end_time.saturating_sub(self.start_time);
        if span < 60 * 86_400 {
            return bad("time horizon must span at least 60 days");
        }
        if self.deployer_benign_tokens > 0 && self.excluded_deployers == 0 {
            return bad("deployer_benign_tokens needs excluded_deployers > 0");
        }
        if self.deployer_scam_fraction > 0.0 && c.total() > 0 && self.excluded_deployers == 0 {
            return bad("deployer_scam_fraction needs excluded_deployers > 0");
        }
        if !(self.eth_usd > 0.0 && self.eth_usd.is_finite()) {
            return bad("eth_usd must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("infeasible configuration: {0}")]
    Config(String),
    #[error("engine rejected a scripted action: {0}")]
    Engine(#[from] AmmError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What the generator knows about one scam pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub pool: AccountAddress,
    pub token: AccountAddress,
    pub kind: CampaignKind,
    pub valuable: AccountAddress,
    /// Net valuable-token flow from the pool to scam-controlled addresses, in
    /// base units (may be negative).
    pub net_valuable: String,
    pub profit_usd: f64,
    pub rug_interval: u64,
    pub rounds: u32,
    pub scam_addresses: Vec<AccountAddress>,
    pub victims: Vec<AccountAddress>,
    pub advance_fee: Option<(AccountAddress, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub pools: Vec<LedgerEntry>,
    pub collusion: Vec<CollusionPlant>,
    /// Every non-scam address with an event on a scam pool.
    pub victims: BTreeSet<AccountAddress>,
    pub excluded_deployers: Vec<AccountAddress>,
}

/// A complete generated dataset.
#[derive(Clone, Debug)]
pub struct GeneratedMarket {
    pub store: DataStore,
    pub truth: Vec<TruthLabel>,
    pub official: Vec<OfficialToken>,
    pub user_labels: Vec<Label>,
    pub brand_keywords: Vec<String>,
    pub ledger: Ledger,
    pub scripts: Vec<CampaignScript>,
}

impl GeneratedMarket {
    pub fn scam_tokens(&self) -> BTreeSet<AccountAddress> {
        self.truth
            .iter()
            .filter(|t| t.kind == LabelKind::ScamToken)
            .map(|t| t.address)
            .collect()
    }

    /// Writes the dataset in the ingest formats plus `truth_labels.csv`,
    /// `brand_keywords.txt` and the profit `ledger.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), GenError> {
        self.store.write_dir(dir)?;
        let io = |name: &str| {
            let path = dir.join(name);
            move |source| GenError::Io { path, source }
        };
        let create = |name: &str| fs::File::create(dir.join(name)).map_err(io(name));
        write_official_tokens(create(OFFICIAL_FILE)?, &self.official).map_err(io(OFFICIAL_FILE))?;
        write_user_labels(create(LABELS_FILE)?, &self.user_labels).map_err(io(LABELS_FILE))?;
        write_truth_labels(create(TRUTH_FILE)?, &self.truth).map_err(io(TRUTH_FILE))?;
        let mut kw = self.brand_keywords.join("\n");
        kw.push('\n');
        fs::write(dir.join(KEYWORDS_FILE), kw).map_err(io(KEYWORDS_FILE))?;
        let ledger = serde_json::to_string_pretty(&self.ledger).expect("ledger serializes");
        fs::write(dir.join(LEDGER_FILE), ledger + "\n").map_err(io(LEDGER_FILE))?;
        Ok(())
    }
}

/// Shared, read-only generation context.
#[derive(Clone, Debug)]
pub struct GenEnv {
    pub seed: u64,
    pub cex: AccountAddress,
    pub eth_usd: f64,
}

impl GenEnv {
    pub fn decimals(&self, valuable: &AccountAddress) -> u8 {
        if *valuable == well_known::usdt() || *valuable == well_known::usdc() {
            6
        } else {
            18
        }
    }

    /// USD price of one whole unit of a valuable token.
    pub fn usd(&self, valuable: &AccountAddress) -> f64 {
        if *valuable == well_known::weth() {
            self.eth_usd
        } else {
            1.0
        }
    }

    pub fn retail(&self, i: usize) -> AccountAddress {
        derive_address(&format!("{}/retail/{i}", self.seed))
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_PLAN: u64 = 0;
const STREAM_CAMPAIGN: u64 = 1 << 32;
const STREAM_BENIGN: u64 = 2 << 32;

fn well_known_tokens(start: u64) -> Vec<TokenInfo> {
    let mk = |address, name: &str, symbol: &str, decimals| TokenInfo {
        address,
        name: name.into(),
        symbol: symbol.into(),
        decimals,
        creator: derive_address(&format!("well-known/creator/{symbol}")),
        creation_time: start - 86_400,
    };
    vec![
        mk(well_known::weth(), "Wrapped Ether", "WETH", 18),
        mk(well_known::usdt(), "Tether USD", "USDT", 6),
        mk(well_known::usdc(), "USD Coin", "USDC", 6),
        mk(well_known::dai(), "Dai Stablecoin", "DAI", 18),
    ]
}

pub fn price_table(eth_usd: f64) -> PriceTable {
    let prices: BTreeMap<Asset, f64> = [
        (Asset::Eth, eth_usd),
        (Asset::Token(well_known::weth()), eth_usd),
        (Asset::Token(well_known::usdt()), 1.0),
        (Asset::Token(well_known::usdc()), 1.0),
        (Asset::Token(well_known::dai()), 1.0),
    ]
    .into_iter()
    .collect();
    PriceTable::new(prices, VALUATION_DATE).expect("ETH and WETH priced")
}

/// Builds a market. Identical `(config, seed)` always gives identical output.
pub fn generate_market(config: &MarketConfig, seed: u64) -> Result<GeneratedMarket, GenError> {
    config.validate()?;
    let env = GenEnv {
        seed,
        cex: derive_address(&format!("{seed}/cex")),
        eth_usd: config.eth_usd,
    };
    let mut plan_rng = rng_for(seed, STREAM_PLAN);

    let deployers: Vec<AccountAddress> = (0..config.excluded_deployers)
        .map(|k| derive_address(&format!("{seed}/deployer/{k}")))
        .collect();

    // Benign tokens and the official list.
    let n_benign = config.benign_tokens;
    let n_deployed = (config.deployer_benign_tokens * deployers.len()).min(n_benign);
    let benign_plans: Vec<benign::BenignPlan> = (0..n_benign)
        .map(|i| {
            let deployer = (i < n_deployed).then(|| deployers[i % deployers.len()]);
            benign::BenignPlan::new(i, deployer, config, &env)
        })
        .collect();
    let n_official = (config.official_fraction * n_benign as f64).round() as usize;
    let mut official_idx: Vec<usize> =
        rand::seq::index::sample(&mut plan_rng, n_benign, n_official.min(n_benign)).into_vec();
    official_idx.sort_unstable();
    let mut official: Vec<OfficialToken> = well_known_tokens(config.start_time)
        .iter()
        .map(|t| OfficialToken {
            address: t.address,
            name: normalize_name(&t.name),
            symbol: normalize_name(&t.symbol),
        })
        .collect();
    let mut clone_targets: Vec<(String, String)> = well_known_tokens(config.start_time)
        .iter()
        .map(|t| (t.name.clone(), t.symbol.clone()))
        .collect();
    for &i in &official_idx {
        let p = &benign_plans[i];
        official.push(OfficialToken {
            address: p.token,
            name: normalize_name(&p.name),
            symbol: normalize_name(&p.symbol),
        });
        clone_targets.push((p.name.clone(), p.symbol.clone()));
    }
    official.sort();

    // Scam campaigns.
    let scripts = plan_campaigns(config, &env, &deployers, &clone_targets, &mut plan_rng)?;

    let campaign_out: Vec<CampaignOutput> = scripts
        .par_iter()
        .map(|s| script_campaign(s, &env))
        .collect::<Result<_, _>>()?;
    let benign_out: Vec<Fragment> = benign_plans
        .par_iter()
        .map(|p| benign::run_benign(p, &env, config))
        .collect::<Result<_, _>>()?;
    let backbone = benign::run_backbone(&env, config)?;

    let mut all = Fragment {
        tokens: well_known_tokens(config.start_time),
        ..Fragment::default()
    };
    all.extend(backbone);
    for f in benign_out {
        all.extend(f);
    }
    let mut ledger = Ledger {
        excluded_deployers: deployers.clone(),
        ..Ledger::default()
    };
    for out in &campaign_out {
        all.extend(out.fragment.clone());
        ledger.victims.extend(out.ledger.victims.iter().copied());
        ledger.pools.push(out.ledger.clone());
        ledger.collusion.extend(out.plants.iter().cloned());
    }
    // Retail wallets are funded once from the exchange before the horizon.
    let mut funding = sim::Fragment::default();
    let mut txs = ids::TxSeq::new(format!("{seed}/funding"));
    for i in 0..config.retail_population {
        funding.transfer(
            &mut txs,
            config.start_time - 3_600,
            Asset::Eth,
            env.cex,
            env.retail(i),
            ids::units_of(50.0, 18),
        );
    }
    all.extend(funding);

    let store = DataStore::new(
        all.tokens,
        all.pools,
        all.events,
        all.transfers,
        price_table(config.eth_usd),
    )?
    .with_study_time(config.end_time)?;

    let truth = truth_labels(&scripts);
    let user_labels = deployers
        .iter()
        .map(|d| Label {
            subject: *d,
            kind: LabelKind::ContractDeployerExcluded,
            provenance: Provenance::UserSupplied,
            evidence: Evidence::root("user-supplied", LABELS_FILE),
        })
        .collect();

    let market = GeneratedMarket {
        store,
        truth,
        official,
        user_labels,
        brand_keywords: ids::brand_keywords(),
        ledger,
        scripts,
    };
    let report = audit_market(&market);
    if !report.problems.is_empty() {
        return Err(GenError::Audit(report.problems.join("; ")));
    }
    Ok(market)
}

/// Stratified lifetime draw: bucket 0 is under an hour, 1 under a day, 2 up
/// to twenty days.
fn lifetime_buckets(n: usize, cfg: &MarketConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n_hour = (cfg.lifetime_under_hour * n as f64).round() as usize;
    let n_day = ((cfg.lifetime_under_day * n as f64).round() as usize).max(n_hour);
    let mut b: Vec<u8> = (0..n)
        .map(|i| {
            if i < n_hour {
                0
            } else if i < n_day {
                1
            } else {
                2
            }
        })
        .collect();
    b.shuffle(rng);
    b
}

fn plan_campaigns(
    cfg: &MarketConfig,
    env: &GenEnv,
    deployers: &[AccountAddress],
    clone_targets: &[(String, String)],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CampaignScript>, GenError> {
    let mut kinds = cfg.campaigns.kinds();
    kinds.shuffle(rng);
    let n = kinds.len();
    let buckets = lifetime_buckets(n, cfg, rng);

    // Group campaigns under scammers: 1 + Poisson(mean - 1) each.
    let extra = cfg.campaigns_per_scammer - 1.0;
    let mut scammer_of = Vec::with_capacity(n);
    let mut g = 0usize;
    while scammer_of.len() < n {
        let size = 1 + if extra > 0.0 {
            Poisson::new(extra).expect("positive").sample(rng) as usize
        } else {
            0
        };
        for _ in 0..size.min(n - scammer_of.len()) {
            scammer_of.push(g);
        }
        g += 1;
    }

    let mut scripts = Vec::with_capacity(n);
    let mut two_hop_counter = 0usize;
    for (i, kind) in kinds.into_iter().enumerate() {
        let via_deployer = !deployers.is_empty() && rng.random::<f64>() < cfg.deployer_scam_fraction;
        let r: f64 = rng.random();
        let naming = if via_deployer || r < cfg.clone_share {
            NamingMode::Clone
        } else if r < cfg.clone_share + cfg.hot_name_share {
            NamingMode::HotName
        } else {
            NamingMode::Brand
        };
        let (name, symbol) = match naming {
            NamingMode::Clone => {
                let (n, s) = &clone_targets[rng.random_range(0..clone_targets.len())];
                // Some clones vary case and spacing; normalization still matches.
                if rng.random::<f64>() < 0.3 {
                    (format!(" {} ", n.to_uppercase()), s.to_lowercase())
                } else {
                    (n.clone(), s.clone())
                }
            }
            NamingMode::HotName => {
                let (n, s) = HOT_NAMES[rng.random_range(0..HOT_NAMES.len())];
                (n.to_string(), s.to_string())
            }
            NamingMode::Brand => {
                let (b, _) = BRANDS[rng.random_range(0..BRANDS.len())];
                let suffix = BRAND_SUFFIXES[rng.random_range(0..BRAND_SUFFIXES.len())];
                let sym: String = b
                    .chars()
                    .filter(|c| c.is_ascii_alphabetic())
                    .take(5)
                    .collect::<String>()
                    .to_uppercase();
                (format!("{b} {suffix}"), format!("{sym}{}", &suffix[..1]))
            }
        };
        let scammer = derive_address(&format!("{}/scammer/{}", env.seed, scammer_of[i]));
        let token_creator = if via_deployer {
            deployers[rng.random_range(0..deployers.len())]
        } else {
            scammer
        };
        let two_hop = kind == CampaignKind::CollusionRugPull && cfg.two_hop_every > 0 && {
            two_hop_counter += 1;
            two_hop_counter % cfg.two_hop_every == 1 || cfg.two_hop_every == 1
        };
        let mut crng = rng_for(env.seed, STREAM_CAMPAIGN + i as u64);
        scripts.push(CampaignScript::draw(
            i,
            kind,
            scammer,
            scammer_of[i],
            token_creator,
            naming,
            name,
            symbol,
            buckets[i],
            two_hop,
            cfg,
            env,
            &mut crng,
        ));
    }
    Ok(scripts)
}

/// Ground truth with the rule expected to discover each label.
fn truth_labels(scripts: &[CampaignScript]) -> Vec<TruthLabel> {
    let mut by_group: BTreeMap<usize, Vec<&CampaignScript>> = BTreeMap::new();
    for s in scripts {
        by_group.entry(s.scammer_group).or_default().push(s);
    }
    let mut out = BTreeSet::new();
    for group in by_group.values() {
        let seeded = group.iter().any(|s| s.naming == NamingMode::Clone);
        for (j, s) in group.iter().enumerate() {
            let rule = match (s.naming, seeded, j) {
                (NamingMode::Clone, _, _) => "name-match",
                (_, true, _) => "expansion",
                (_, false, 0) => "ml-verified",
                _ => "ml-expansion",
            };
            let mut add = |address, kind, rule: &str| {
                out.insert(TruthLabel {
                    address,
                    kind,
                    rule: rule.to_string(),
                });
            };
            add(s.token, LabelKind::ScamToken, rule);
            add(s.pool, LabelKind::ScamPool, rule);
            if s.token_creator == s.scammer {
                add(s.scammer, LabelKind::ScamTokenCreator, "expansion");
            }
            add(s.scammer, LabelKind::ScamPoolCreator, "expansion");
            for (addr, pattern) in s.collusion_roles() {
                add(addr, LabelKind::CollusionAddress, pattern.rule());
            }
            if let Some((fee, _)) = s.advance_fee {
                add(fee, LabelKind::CollusionAddress, "advance-fee");
            }
        }
    }
    // One row per (address, kind): the first rule in sort order wins.
    let mut seen = BTreeSet::new();
    out.into_iter()
        .filter(|t| seen.insert((t.address, t.kind)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_replay;

    #[test]
    fn test_counts_parse() {
        let c: CampaignCounts = "rugpull=5, collusion=3".parse().unwrap();
        assert_eq!((c.rugpull, c.collusion, c.total()), (5, 3, 8));
        assert!("rugpull".parse::<CampaignCounts>().is_err());
        assert!("nope=1".parse::<CampaignCounts>().is_err());
    }

    #[test]
    fn test_pump_without_victims_is_config_error() {
        let cfg = MarketConfig {
            campaigns: CampaignCounts {
                pump: 1,
                ..CampaignCounts::none()
            },
            victim_mean: 0.0,
            ..MarketConfig::small()
        };
        assert!(matches!(generate_market(&cfg, 1), Err(GenError::Config(_))));
    }

    #[test]
    fn test_small_market_replays_and_is_deterministic() {
        let cfg = MarketConfig::small();
        let a = generate_market(&cfg, 7).unwrap();
        let b = generate_market(&cfg, 7).unwrap();
        assert!(validate_replay(&a.store).is_empty());
        assert_eq!(a.store, b.store);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.ledger, b.ledger);
        let c = generate_market(&cfg, 8).unwrap();
        assert_ne!(a.store.events(), c.store.events());
    }

    #[test]
    fn test_truth_counts_match_config() {
        let cfg = MarketConfig {
            campaigns: "rugpull=5,collusion=3".parse().unwrap(),
            ..MarketConfig::small()
        };
        let m = generate_market(&cfg, 3).unwrap();
        let pools = m
            .truth
            .iter()
            .filter(|t| t.kind == LabelKind::ScamPool)
            .count();
        assert_eq!(pools, 8);
    }
}
