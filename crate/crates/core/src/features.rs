//! The 40-feature token profile used by the classifier.
//!
//! Every feature is derived from the pool events of all pools that contain the
//! token, plus the token's own transfer records. Missing values use `-1`.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::DataStore;
use crate::model::{AccountAddress, Asset, EventKind, PoolEvent, Units};

pub const FEATURE_COUNT: usize = 40;

/// Column order of [`FeatureVector`] and of `features.csv`.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "T_period",
    "T_interval",
    "P_mint",
    "P_swap",
    "P_swapfrom",
    "P_swapto",
    "P_burn",
    "N_TxU",
    "N_TxE",
    "N_mint",
    "N_swap",
    "N_swapto",
    "N_swapfrom",
    "RE_swapfrom_swapto",
    "N_burn",
    "A_mint",
    "A_swap",
    "A_swapto",
    "A_swapfrom",
    "A_burn",
    "A_all",
    "RE_mint_all",
    "RE_swap_all",
    "RE_swapto_all",
    "RE_swapfrom_all",
    "RE_burn_all",
    "RA_mint_all",
    "RA_swap_all",
    "RA_swapto_all",
    "RA_swapfrom_all",
    "RA_burn_all",
    "L_mintburn",
    "L_swap",
    "C_mintburn",
    "C_swap",
    "N_pool",
    "V_token",
    "V_tracked",
    "V_untracked",
    "N_liquidity",
];

/// Value used when a feature is undefined (empty class or zero denominator).
pub const MISSING: f64 = -1.0;

/// Pools below this final USD liquidity do not count towards `V_tracked`.
pub const TRACKING_THRESHOLD_USD: f64 = 1.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("token {0} is not in the registry")]
    NotFound(AccountAddress),
    #[error("features file: {0}")]
    Csv(#[from] csv::Error),
    #[error("features file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn index_of(name: &str) -> Option<usize> {
        FEATURE_NAMES.iter().position(|n| *n == name)
    }

    /// Panics on an unknown feature name.
    pub fn get(&self, name: &str) -> f64 {
        self.0[Self::index_of(name).unwrap_or_else(|| panic!("unknown feature {name}"))]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Mean relative position of `times` inside `[t_start, t_end]`.
pub fn time_position(times: &[u64], t_start: u64, t_end: u64) -> f64 {
    if times.is_empty() {
        return MISSING;
    }
    if t_end == t_start {
        return 0.0;
    }
    let span = (t_end - t_start) as f64;
    let sum: f64 = times.iter().map(|&t| (t - t_start) as f64 / span).sum();
    sum / times.len() as f64
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        MISSING
    } else {
        num / den
    }
}

fn mean_or_missing(values: &[f64]) -> f64 {
    if values.is_empty() {
        MISSING
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Default)]
struct Participation {
    mintburn_pools: BTreeSet<AccountAddress>,
    swap_pools: BTreeSet<AccountAddress>,
    mintburn: usize,
    swaps: usize,
}

fn participation(store: &DataStore, who: &AccountAddress) -> Participation {
    let mut p = Participation::default();
    for e in store.events_by(who) {
        if e.kind == EventKind::Swap {
            p.swaps += 1;
            p.swap_pools.insert(e.pool);
        } else {
            p.mintburn += 1;
            p.mintburn_pools.insert(e.pool);
        }
    }
    p
}

/// Reserves of a pool after all of its recorded events, summed from the log.
pub fn final_reserves(store: &DataStore, pool: &AccountAddress) -> [Units; 2] {
    let mut ins = [Units::zero(), Units::zero()];
    let mut outs = [Units::zero(), Units::zero()];
    for e in store.events_of_pool(pool) {
        for side in 0..2 {
            ins[side] = ins[side].checked_add(e.amount_in(side)).unwrap_or_else(|_| ins[side].clone());
            outs[side] = outs[side].checked_add(e.amount_out(side)).unwrap_or_else(|_| outs[side].clone());
        }
    }
    [0, 1].map(|s| ins[s].checked_sub(&outs[s]).unwrap_or_default())
}

/// USD value of a pool's final reserves. With one side unpriced the priced
/// side counts twice, as the pool holds equal value on both sides.
pub fn pool_liquidity_usd(store: &DataStore, pool: &AccountAddress) -> f64 {
    let Some(info) = store.pool(pool) else {
        return 0.0;
    };
    let r = final_reserves(store, pool);
    let v0 = store.value_usd(&Asset::Token(info.token0), &r[0]);
    let v1 = store.value_usd(&Asset::Token(info.token1), &r[1]);
    match (v0, v1) {
        (Some(a), Some(b)) => a + b,
        (Some(a), None) => 2.0 * a,
        (None, Some(b)) => 2.0 * b,
        (None, None) => 0.0,
    }
}

/// USD value of one swap: the token's own leg if priced, else the counterpart.
fn swap_usd(store: &DataStore, e: &PoolEvent, side: usize, token: &AccountAddress, other: &AccountAddress) -> f64 {
    let leg = |s: usize| {
        if e.amount_in(s).is_zero() {
            e.amount_out(s)
        } else {
            e.amount_in(s)
        }
    };
    store
        .value_usd(&Asset::Token(*token), leg(side))
        .or_else(|| store.value_usd(&Asset::Token(*other), leg(1 - side)))
        .unwrap_or(0.0)
}

pub fn extract_features(store: &DataStore, token: &AccountAddress) -> Result<FeatureVector, FeatureError> {
    let info = store.token(token).ok_or(FeatureError::NotFound(*token))?;
    let decimals = info.decimals;
    let pools = store.pools_of_token(token);

    let mut times: BTreeMap<&'static str, Vec<u64>> = BTreeMap::new();
    let mut addrs: BTreeMap<&'static str, BTreeSet<AccountAddress>> = BTreeMap::new();
    let mut all_times = Vec::new();
    let mut all_addrs = BTreeSet::new();
    let mut v_token = 0.0;
    let mut v_untracked = 0.0;
    let mut v_tracked = 0.0;
    let mut n_liquidity = 0.0;

    let tracked: BTreeSet<AccountAddress> = pools
        .iter()
        .filter(|p| pool_liquidity_usd(store, p) >= TRACKING_THRESHOLD_USD)
        .copied()
        .collect();
    for pool in pools {
        let pinfo = store.pool(pool).expect("indexed pool exists");
        let side = pinfo.side_of(token).expect("pool contains token");
        n_liquidity += final_reserves(store, pool)[side].to_whole_f64(decimals);
    }

    for e in store.events_of_token(token) {
        let pinfo = store.pool(&e.pool).expect("indexed pool exists");
        let side = pinfo.side_of(token).expect("pool contains token");
        let other = pinfo.other(token).expect("pool contains token");
        all_times.push(e.timestamp);
        all_addrs.insert(e.initiator);
        let mut note = |class: &'static str| {
            times.entry(class).or_default().push(e.timestamp);
            addrs.entry(class).or_default().insert(e.initiator);
        };
        match e.kind {
            EventKind::Mint => note("mint"),
            EventKind::Burn => note("burn"),
            EventKind::Swap => {
                note("swap");
                let amount = if e.amount_in(side).is_zero() {
                    e.amount_out(side)
                } else {
                    e.amount_in(side)
                };
                // Swap-to hands the token out of the pool; swap-from takes it in.
                if e.amount_in(side).is_zero() {
                    note("swapto");
                } else {
                    note("swapfrom");
                }
                v_token += amount.to_whole_f64(decimals);
                let usd = swap_usd(store, e, side, token, &other);
                v_untracked += usd;
                if tracked.contains(&e.pool) {
                    v_tracked += usd;
                }
            }
        }
    }

    let n = |c: &str| times.get(c).map_or(0, Vec::len) as f64;
    let a = |c: &str| addrs.get(c).map_or(0, BTreeSet::len) as f64;
    let empty = Vec::new();
    let t = |c: &str| times.get(c).unwrap_or(&empty);

    let (t_period, t_interval, t_start, t_end) = match (all_times.first(), all_times.last()) {
        (Some(&s), Some(&e)) => ((e - s) as f64, store.study_time().saturating_sub(e) as f64, s, e),
        _ => (MISSING, MISSING, 0, 0),
    };
    let n_txu = all_times.len() as f64;
    let n_txe = {
        let txs: BTreeSet<_> = store.transfers_of_asset(&Asset::Token(*token)).map(|t| t.tx_hash).collect();
        txs.len() as f64
    };
    let a_all = all_addrs.len() as f64;

    let mut mintburn_parts: BTreeSet<AccountAddress> = BTreeSet::new();
    mintburn_parts.extend(addrs.get("mint").into_iter().flatten());
    mintburn_parts.extend(addrs.get("burn").into_iter().flatten());
    let swap_parts = addrs.get("swap").cloned().unwrap_or_default();
    let (mut l_mb, mut c_mb, mut l_sw, mut c_sw) = (vec![], vec![], vec![], vec![]);
    for who in &mintburn_parts {
        let p = participation(store, who);
        l_mb.push(p.mintburn_pools.len() as f64);
        c_mb.push(p.mintburn as f64);
    }
    for who in &swap_parts {
        let p = participation(store, who);
        l_sw.push(p.swap_pools.len() as f64);
        c_sw.push(p.swaps as f64);
    }

    let v = [
        t_period,
        t_interval,
        time_position(t("mint"), t_start, t_end),
        time_position(t("swap"), t_start, t_end),
        time_position(t("swapfrom"), t_start, t_end),
        time_position(t("swapto"), t_start, t_end),
        time_position(t("burn"), t_start, t_end),
        n_txu,
        n_txe,
        n("mint"),
        n("swap"),
        n("swapto"),
        n("swapfrom"),
        ratio(n("swapfrom"), n("swapto")),
        n("burn"),
        a("mint"),
        a("swap"),
        a("swapto"),
        a("swapfrom"),
        a("burn"),
        a_all,
        ratio(n("mint"), n_txu),
        ratio(n("swap"), n_txu),
        ratio(n("swapto"), n_txu),
        ratio(n("swapfrom"), n_txu),
        ratio(n("burn"), n_txu),
        ratio(a("mint"), a_all),
        ratio(a("swap"), a_all),
        ratio(a("swapto"), a_all),
        ratio(a("swapfrom"), a_all),
        ratio(a("burn"), a_all),
        mean_or_missing(&l_mb),
        mean_or_missing(&l_sw),
        mean_or_missing(&c_mb),
        mean_or_missing(&c_sw),
        pools.len() as f64,
        v_token,
        v_tracked,
        v_untracked,
        n_liquidity,
    ];
    Ok(FeatureVector(v))
}

/// Features of every registered token, in address order.
pub fn extract_all(store: &DataStore) -> Vec<(AccountAddress, FeatureVector)> {
    let tokens: Vec<AccountAddress> = store.tokens().keys().copied().collect();
    tokens
        .par_iter()
        .map(|t| (*t, extract_features(store, t).expect("registered token")))
        .collect()
}

/// Writes `address` followed by the 40 feature columns.
pub fn write_features_csv<W: io::Write>(
    writer: W,
    rows: &[(AccountAddress, FeatureVector)],
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["address"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (addr, fv) in rows {
        let mut rec = vec![addr.to_string()];
        rec.extend(fv.0.iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_features_csv<R: io::Read>(reader: R) -> Result<Vec<(AccountAddress, FeatureVector)>, FeatureError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("address").chain(FEATURE_NAMES).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Format("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let addr: AccountAddress = rec[0]
            .parse()
            .map_err(|e| FeatureError::Format(format!("line {line}: address: {e}")))?;
        let mut v = [0.0; FEATURE_COUNT];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 1]
                .parse()
                .map_err(|_| FeatureError::Format(format!("line {line}: {}", FEATURE_NAMES[k])))?;
        }
        out.push((addr, FeatureVector(v)));
    }
    Ok(out)
}
