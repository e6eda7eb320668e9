//! Rug-pull profiling, advance-fee detection and financial impact of scam
//! pools.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{PoolState, SwapSide};
use crate::association::LabelStore;
use crate::ingest::DataStore;
use crate::model::{AccountAddress, Asset, EventKind, LabelKind, Units, ValuableTokens};

pub const DEFAULT_DRAIN_FRACTION: f64 = 0.9;
pub const DEFAULT_MIN_OCCURRENCES: usize = 5;
/// Relative spread allowed between advance-fee fractions.
pub const FEE_TOLERANCE: f64 = 1e-6;

/// Reference figures for the 2020 mainnet population. They are not
/// reproducible on synthetic data and are only reported alongside results.
pub mod reference {
    pub const SCAM_TOKENS: u64 = 10_920;
    pub const PROFIT_USD: f64 = 16_000_000.0;
    pub const VICTIMS: u64 = 39_762;
}

#[derive(Debug, Error, PartialEq)]
pub enum ImpactError {
    #[error("pool {0} is not in the registry")]
    UnknownPool(AccountAddress),
    #[error("pool {0} is not labeled as a scam pool")]
    NotScamPool(AccountAddress),
    #[error("no price for {0}")]
    MissingPrice(Asset),
    #[error("no scam-address mint on pool {0}")]
    IncompleteProfile(AccountAddress),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvanceFee {
    pub fee_address: AccountAddress,
    pub fraction: f64,
    pub occurrences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolScamProfile {
    pub pool: AccountAddress,
    pub first_mint_ts: u64,
    /// `None` while the scammers still hold their liquidity.
    pub first_major_burn_ts: Option<u64>,
    pub rug_interval_seconds: Option<u64>,
    pub rounds: u32,
    pub scammer_swap_involved: bool,
    pub advance_fee: Option<AdvanceFee>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolImpact {
    pub pool: AccountAddress,
    /// Net of every scam-address event, swaps included.
    pub profit_usd: f64,
    /// Liquidity withdrawn minus liquidity added, ignoring swaps.
    pub gross_profit_usd: f64,
    /// Valuable-side net in base units, as a decimal string.
    pub net_valuable: String,
    pub victim_count: usize,
    pub scam_addresses: usize,
}

/// Addresses whose pool activity counts as the scammers'.
pub fn scam_addresses(labels: &LabelStore) -> BTreeSet<AccountAddress> {
    let mut s = labels.with_kind(LabelKind::ScamTokenCreator);
    s.extend(labels.with_kind(LabelKind::ScamPoolCreator));
    s.extend(labels.with_kind(LabelKind::CollusionAddress));
    s
}

fn check_pool(store: &DataStore, labels: &LabelStore, pool: &AccountAddress) -> Result<(), ImpactError> {
    if store.pool(pool).is_none() {
        return Err(ImpactError::UnknownPool(*pool));
    }
    if !labels.has(pool, LabelKind::ScamPool) {
        return Err(ImpactError::NotScamPool(*pool));
    }
    Ok(())
}

/// Rug timing and round structure of one scam pool.
///
/// A drain is a scam-address burn removing at least `drain_fraction` of that
/// address's LP; the rug interval runs from the drainer's first mint to the
/// first drain. Each stretch from a scam mint to the next drain is one round.
pub fn profile_rug(
    store: &DataStore,
    labels: &LabelStore,
    pool: &AccountAddress,
    drain_fraction: f64,
) -> Result<PoolScamProfile, ImpactError> {
    check_pool(store, labels, pool)?;
    let scam = scam_addresses(labels);
    let mut lp: BTreeMap<AccountAddress, Units> = BTreeMap::new();
    let mut first_mint: BTreeMap<AccountAddress, u64> = BTreeMap::new();
    let mut first_drain = None;
    let mut open = false;
    let mut rounds = 0;
    let mut swapped = false;
    for e in store.events_of_pool(pool) {
        let is_scam = scam.contains(&e.initiator);
        let bal = lp.entry(e.initiator).or_default();
        match e.kind {
            EventKind::Mint => {
                *bal = bal.checked_add(&e.lp_delta).unwrap_or_else(|_| bal.clone());
                if is_scam {
                    first_mint.entry(e.initiator).or_insert(e.timestamp);
                    open = true;
                }
            }
            EventKind::Burn => {
                let held = bal.to_f64();
                *bal = bal.checked_sub(&e.lp_delta).unwrap_or_default();
                let drains = held > 0.0 && e.lp_delta.to_f64() >= drain_fraction * held;
                if is_scam && drains {
                    if first_drain.is_none() {
                        if let Some(m) = first_mint.get(&e.initiator) {
                            first_drain = Some((e.timestamp, e.timestamp.saturating_sub(*m)));
                        }
                    }
                    if open {
                        rounds += 1;
                        open = false;
                    }
                }
            }
            EventKind::Swap => swapped |= is_scam,
        }
    }
    let first_mint_ts = *first_mint.values().min().ok_or(ImpactError::IncompleteProfile(*pool))?;
    if open {
        rounds += 1;
    }
    let info = store.pool(pool).expect("checked");
    let token = [info.token0, info.token1]
        .into_iter()
        .find(|t| labels.has(t, LabelKind::ScamToken));
    Ok(PoolScamProfile {
        pool: *pool,
        first_mint_ts,
        first_major_burn_ts: first_drain.map(|d| d.0),
        rug_interval_seconds: first_drain.map(|d| d.1),
        rounds,
        scammer_swap_involved: swapped,
        advance_fee: token.and_then(|t| detect_advance_fee(store, &t, DEFAULT_MIN_OCCURRENCES)),
    })
}

/// Finds an address that, in at least `min_occurrences` transactions, takes
/// the same fraction of a multi-leg payout of `token` without being its
/// sender. Every such receipt must agree within [`FEE_TOLERANCE`].
pub fn detect_advance_fee(store: &DataStore, token: &AccountAddress, min_occurrences: usize) -> Option<AdvanceFee> {
    let asset = Asset::Token(*token);
    let mut by_tx: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for t in store.transfers_of_asset(&asset) {
        by_tx.entry(t.tx_hash).or_default().push(t);
    }
    let mut cuts: BTreeMap<AccountAddress, Vec<f64>> = BTreeMap::new();
    for legs in by_tx.values() {
        let mut by_sender: BTreeMap<AccountAddress, Vec<_>> = BTreeMap::new();
        for t in legs {
            by_sender.entry(t.from).or_default().push(*t);
        }
        for (sender, out) in by_sender {
            if out.len() < 2 {
                continue;
            }
            let total: f64 = out.iter().map(|t| t.amount.to_f64()).sum();
            let main = out
                .iter()
                .max_by(|a, b| a.amount.cmp(&b.amount).then(b.log_index.cmp(&a.log_index)))
                .expect("non-empty");
            for t in &out {
                if t.log_index == main.log_index || t.to == sender || store.pool(&t.to).is_some() || total == 0.0 {
                    continue;
                }
                cuts.entry(t.to).or_default().push(t.amount.to_f64() / total);
            }
        }
    }
    cuts.into_iter()
        .filter(|(_, f)| f.len() >= min_occurrences)
        .filter_map(|(addr, f)| {
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            let consistent = mean > 0.0 && f.iter().all(|x| ((x - mean) / mean).abs() <= FEE_TOLERANCE);
            consistent.then_some(AdvanceFee {
                fee_address: addr,
                fraction: mean,
                occurrences: f.len(),
            })
        })
        .max_by_key(|a| a.occurrences)
}

fn big(u: &Units) -> BigInt {
    BigInt::from(u.as_big().clone())
}

/// Scammer profit and victim count for one scam pool.
///
/// Profit is the valuable side of the pool's events: what scam addresses took
/// out minus what they put in, priced at the snapshot. The scam token's own
/// legs are worth nothing, so a pool pairing two non-valuable tokens earns 0.
pub fn compute_profit(
    store: &DataStore,
    labels: &LabelStore,
    valuable: &ValuableTokens,
    pool: &AccountAddress,
) -> Result<PoolImpact, ImpactError> {
    check_pool(store, labels, pool)?;
    let scam = scam_addresses(labels);
    let info = store.pool(pool).expect("checked");
    let vside = [info.token0, info.token1]
        .iter()
        .position(|t| valuable.contains_token(t) && !labels.has(t, LabelKind::ScamToken));
    let mut net = BigInt::from(0);
    let mut gross = BigInt::from(0);
    let mut victims = BTreeSet::new();
    let mut present = BTreeSet::new();
    for e in store.events_of_pool(pool) {
        if !scam.contains(&e.initiator) {
            victims.insert(e.initiator);
            continue;
        }
        present.insert(e.initiator);
        if let Some(v) = vside {
            let d = big(e.amount_out(v)) - big(e.amount_in(v));
            if e.kind != EventKind::Swap {
                gross += &d;
            }
            net += d;
        }
    }
    let usd = |x: &BigInt| -> Result<f64, ImpactError> {
        let Some(v) = vside else { return Ok(0.0) };
        let asset = Asset::Token([info.token0, info.token1][v]);
        let price = store.prices().usd(&asset).ok_or(ImpactError::MissingPrice(asset))?;
        let decimals = store.decimals(&asset).ok_or(ImpactError::MissingPrice(asset))?;
        Ok(x.to_f64().unwrap_or(f64::NAN) / 10f64.powi(i32::from(decimals)) * price)
    };
    Ok(PoolImpact {
        pool: *pool,
        profit_usd: usd(&net)?,
        gross_profit_usd: usd(&gross)?,
        net_valuable: net.to_string(),
        victim_count: victims.len(),
        scam_addresses: present.len(),
    })
}

/// Flow sums against engine replay for one pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conservation {
    pub pool: AccountAddress,
    /// Inflows minus outflows per side, over every participant.
    pub flows: [BigInt; 2],
    /// Reserves after replaying the log through the engine; `None` when the
    /// engine rejected an event.
    pub reserves: Option<[Units; 2]>,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.reserves
            .as_ref()
            .is_some_and(|r| (0..2).all(|s| big(&r[s]) == self.flows[s]))
    }
}

pub fn check_conservation(store: &DataStore, pool: &AccountAddress) -> Conservation {
    let mut flows = [BigInt::from(0), BigInt::from(0)];
    let mut state = PoolState::new();
    let mut ok = true;
    for e in store.events_of_pool(pool) {
        for (s, f) in flows.iter_mut().enumerate() {
            *f += big(e.amount_in(s)) - big(e.amount_out(s));
        }
        if !ok {
            continue;
        }
        ok = match e.kind {
            EventKind::Mint => state.apply_mint(e.initiator, &e.amount0_in, &e.amount1_in).is_ok(),
            EventKind::Burn => state.apply_burn(e.initiator, &e.lp_delta).is_ok(),
            EventKind::Swap => match e.swap_input_side() {
                Some(side) => state.apply_swap(SwapSide::from_input_side(side), e.amount_in(side)).is_ok(),
                None => false,
            },
        };
    }
    Conservation {
        pool: *pool,
        flows,
        reserves: ok.then(|| [state.reserve0().clone(), state.reserve1().clone()]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub label: String,
    /// Exclusive upper bound in seconds; `None` for the last bucket.
    pub upper_seconds: Option<u64>,
    pub count: usize,
    pub fraction: f64,
    pub cumulative_fraction: f64,
}

const BUCKETS: &[(&str, u64)] = &[
    ("<10m", 600),
    ("<1h", 3_600),
    ("<6h", 21_600),
    ("<1d", 86_400),
    ("<1w", 604_800),
    ("<30d", 2_592_000),
];

pub fn rug_histogram(intervals: &[u64]) -> Vec<HistogramBucket> {
    let n = intervals.len();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let mut out = Vec::new();
    let mut below = 0;
    for (label, upper) in BUCKETS {
        let under = intervals.iter().filter(|&&x| x < *upper).count();
        out.push(HistogramBucket {
            label: (*label).into(),
            upper_seconds: Some(*upper),
            count: under - below,
            fraction: frac(under - below),
            cumulative_fraction: frac(under),
        });
        below = under;
    }
    out.push(HistogramBucket {
        label: ">=30d".into(),
        upper_seconds: None,
        count: n - below,
        fraction: frac(n - below),
        cumulative_fraction: frac(n),
    });
    out
}

pub fn write_histogram_csv<W: io::Write>(w: W, buckets: &[HistogramBucket]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["bucket", "upper_seconds", "count", "fraction", "cumulative_fraction"])?;
    for b in buckets {
        w.write_record([
            b.label.clone(),
            b.upper_seconds.map(|u| u.to_string()).unwrap_or_default(),
            b.count.to_string(),
            format!("{:.6}", b.fraction),
            format!("{:.6}", b.cumulative_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    #[serde(flatten)]
    pub impact: PoolImpact,
    pub profile: Option<PoolScamProfile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub scam_pools: usize,
    pub total_profit_usd: f64,
    pub total_gross_profit_usd: f64,
    pub mean_profit_per_pool: f64,
    pub mean_gross_profit_per_pool: f64,
    /// Distinct victim addresses across all scam pools.
    pub total_victims: usize,
    pub rug_pools: usize,
    pub rug_under_hour: f64,
    pub rug_under_day: f64,
    pub multi_round_pools: usize,
    pub scammer_swap_pools: usize,
    pub advance_fee_pools: usize,
    pub incomplete_profiles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub pools: Vec<PoolReport>,
    pub aggregates: Aggregates,
    pub rug_histogram: Vec<HistogramBucket>,
}

/// Profiles and prices every scam pool, in parallel, then aggregates.
pub fn impact_report(
    store: &DataStore,
    labels: &LabelStore,
    valuable: &ValuableTokens,
    drain_fraction: f64,
) -> Result<ImpactReport, ImpactError> {
    let pools: Vec<AccountAddress> = labels
        .with_kind(LabelKind::ScamPool)
        .into_iter()
        .filter(|p| store.pool(p).is_some())
        .collect();
    let scam = scam_addresses(labels);
    let pools: Vec<PoolReport> = pools
        .par_iter()
        .map(|p| {
            Ok(PoolReport {
                impact: compute_profit(store, labels, valuable, p)?,
                profile: match profile_rug(store, labels, p, drain_fraction) {
                    Ok(prof) => Some(prof),
                    Err(ImpactError::IncompleteProfile(_)) => None,
                    Err(e) => return Err(e),
                },
            })
        })
        .collect::<Result<_, _>>()?;

    let mut victims = BTreeSet::new();
    for r in &pools {
        victims.extend(
            store
                .events_of_pool(&r.impact.pool)
                .map(|e| e.initiator)
                .filter(|a| !scam.contains(a)),
        );
    }
    let intervals: Vec<u64> = pools
        .iter()
        .filter_map(|r| r.profile.as_ref()?.rug_interval_seconds)
        .collect();
    let histogram = rug_histogram(&intervals);
    let n = pools.len();
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    let total: f64 = pools.iter().map(|r| r.impact.profit_usd).sum();
    let gross: f64 = pools.iter().map(|r| r.impact.gross_profit_usd).sum();
    let profiles = || pools.iter().filter_map(|r| r.profile.as_ref());
    let share = |limit: u64| {
        if intervals.is_empty() {
            0.0
        } else {
            intervals.iter().filter(|&&x| x < limit).count() as f64 / intervals.len() as f64
        }
    };
    let aggregates = Aggregates {
        scam_pools: n,
        total_profit_usd: total,
        total_gross_profit_usd: gross,
        mean_profit_per_pool: mean(total),
        mean_gross_profit_per_pool: mean(gross),
        total_victims: victims.len(),
        rug_pools: intervals.len(),
        rug_under_hour: share(3_600),
        rug_under_day: share(86_400),
        multi_round_pools: profiles().filter(|p| p.rounds > 1).count(),
        scammer_swap_pools: profiles().filter(|p| p.scammer_swap_involved).count(),
        advance_fee_pools: profiles().filter(|p| p.advance_fee.is_some()).count(),
        incomplete_profiles: pools.iter().filter(|r| r.profile.is_none()).count(),
    };
    Ok(ImpactReport {
        pools,
        aggregates,
        rug_histogram: histogram,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    pub addresses: usize,
    pub swap_only: usize,
    pub liquidity_only: usize,
    pub both: usize,
    pub swap_only_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    pub tokens: usize,
    pub pools: usize,
    pub events: usize,
    pub transfers: usize,
    pub mints: usize,
    pub burns: usize,
    pub swaps: usize,
    /// Pools with at least one event.
    pub active_pools: usize,
    /// Share of all events on the busiest 1% of pools (at least one pool).
    pub top1pct_event_share: f64,
    /// Share of priced swap volume on the busiest 1% of pools by volume.
    pub top1pct_volume_share: f64,
    pub swap_volume_usd: f64,
    pub participation: Participation,
    /// `(UTC day start, events)` for days with events.
    pub daily_events: Vec<(u64, usize)>,
}

fn top_share(mut xs: Vec<f64>) -> f64 {
    let total: f64 = xs.iter().sum();
    if xs.is_empty() || total <= 0.0 {
        return 0.0;
    }
    xs.sort_by(|a, b| b.total_cmp(a));
    let k = xs.len().div_ceil(100);
    xs[..k].iter().sum::<f64>() / total
}

/// Descriptive statistics of whatever is loaded.
pub fn market_stats(store: &DataStore) -> MarketStats {
    let mut kinds = [0usize; 3];
    let mut per_pool: BTreeMap<AccountAddress, (usize, f64)> = BTreeMap::new();
    let mut roles: BTreeMap<AccountAddress, (bool, bool)> = BTreeMap::new();
    let mut daily: BTreeMap<u64, usize> = BTreeMap::new();
    for e in store.events() {
        let entry = per_pool.entry(e.pool).or_default();
        entry.0 += 1;
        let role = roles.entry(e.initiator).or_default();
        match e.kind {
            EventKind::Mint => {
                kinds[0] += 1;
                role.1 = true;
            }
            EventKind::Burn => {
                kinds[1] += 1;
                role.1 = true;
            }
            EventKind::Swap => {
                kinds[2] += 1;
                role.0 = true;
                let info = &store.pools()[&e.pool];
                let tokens = [info.token0, info.token1];
                let input = e.swap_input_side().unwrap_or(0);
                let value = store
                    .value_usd(&Asset::Token(tokens[input]), e.amount_in(input))
                    .or_else(|| store.value_usd(&Asset::Token(tokens[1 - input]), e.amount_out(1 - input)))
                    .unwrap_or(0.0);
                entry.1 += value;
            }
        }
        *daily.entry(e.timestamp - e.timestamp % 86_400).or_default() += 1;
    }
    let (swap_only, liquidity_only, both) = roles.values().fold((0, 0, 0), |acc, r| match r {
        (true, false) => (acc.0 + 1, acc.1, acc.2),
        (false, true) => (acc.0, acc.1 + 1, acc.2),
        _ => (acc.0, acc.1, acc.2 + 1),
    });
    MarketStats {
        tokens: store.tokens().len(),
        pools: store.pools().len(),
        events: store.events().len(),
        transfers: store.transfers().len(),
        mints: kinds[0],
        burns: kinds[1],
        swaps: kinds[2],
        active_pools: per_pool.len(),
        top1pct_event_share: top_share(per_pool.values().map(|v| v.0 as f64).collect()),
        top1pct_volume_share: top_share(per_pool.values().map(|v| v.1).collect()),
        swap_volume_usd: per_pool.values().map(|v| v.1).sum(),
        participation: Participation {
            addresses: roles.len(),
            swap_only,
            liquidity_only,
            both,
            swap_only_fraction: if roles.is_empty() {
                0.0
            } else {
                swap_only as f64 / roles.len() as f64
            },
        },
        daily_events: daily.into_iter().collect(),
    }
}
