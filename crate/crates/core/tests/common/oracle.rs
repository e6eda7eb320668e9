//! Brute-force recomputation of every feature, one full log scan per feature.

use std::collections::BTreeSet;

use scam_radar::features::{extract_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use scam_radar::ingest::DataStore;
use scam_radar::model::{AccountAddress, Asset, EventKind, PoolEvent, Units};
use scam_radar::scenario::{generate_market, CampaignCounts, MarketConfig};

#[derive(Clone, Copy, PartialEq)]
enum Class {
    Any,
    Mint,
    Burn,
    Swap,
    SwapTo,
    SwapFrom,
}

struct Oracle<'a> {
    store: &'a DataStore,
    token: AccountAddress,
}

impl Oracle<'_> {
    fn side(&self, e: &PoolEvent) -> Option<usize> {
        let p = self.store.pools().get(&e.pool)?;
        if p.token0 == self.token {
            Some(0)
        } else if p.token1 == self.token {
            Some(1)
        } else {
            None
        }
    }

    fn matches(&self, e: &PoolEvent, class: Class) -> bool {
        let Some(side) = self.side(e) else {
            return false;
        };
        match class {
            Class::Any => true,
            Class::Mint => e.kind == EventKind::Mint,
            Class::Burn => e.kind == EventKind::Burn,
            Class::Swap => e.kind == EventKind::Swap,
            Class::SwapTo => e.kind == EventKind::Swap && !e.amount_out(side).is_zero(),
            Class::SwapFrom => e.kind == EventKind::Swap && !e.amount_in(side).is_zero(),
        }
    }

    fn scan(&self, class: Class) -> Vec<&PoolEvent> {
        self.store.events().iter().filter(|e| self.matches(e, class)).collect()
    }

    fn count(&self, class: Class) -> f64 {
        self.scan(class).len() as f64
    }

    fn addresses(&self, class: Class) -> BTreeSet<AccountAddress> {
        self.scan(class).iter().map(|e| e.initiator).collect()
    }

    fn window(&self) -> Option<(u64, u64)> {
        let all = self.scan(Class::Any);
        let start = all.iter().map(|e| e.timestamp).min()?;
        let end = all.iter().map(|e| e.timestamp).max()?;
        Some((start, end))
    }

    fn position(&self, class: Class) -> f64 {
        let evs = self.scan(class);
        if evs.is_empty() {
            return -1.0;
        }
        let (s, e) = self.window().unwrap();
        if s == e {
            return 0.0;
        }
        let mut sum = 0.0;
        for ev in &evs {
            sum += (ev.timestamp - s) as f64 / (e - s) as f64;
        }
        sum / evs.len() as f64
    }

    fn div(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            -1.0
        } else {
            a / b
        }
    }

    /// Average over participants of (distinct pools, event count) for the
    /// given kinds anywhere in the log.
    fn investor(&self, participants: &BTreeSet<AccountAddress>, swaps: bool) -> (f64, f64) {
        if participants.is_empty() {
            return (-1.0, -1.0);
        }
        let (mut pools_sum, mut count_sum) = (0.0, 0.0);
        for who in participants {
            let mine: Vec<&PoolEvent> = self
                .store
                .events()
                .iter()
                .filter(|e| e.initiator == *who && (e.kind == EventKind::Swap) == swaps)
                .collect();
            let pools: BTreeSet<_> = mine.iter().map(|e| e.pool).collect();
            pools_sum += pools.len() as f64;
            count_sum += mine.len() as f64;
        }
        let n = participants.len() as f64;
        (pools_sum / n, count_sum / n)
    }

    fn reserve(&self, pool: &AccountAddress, side: usize) -> Units {
        let mut total_in = Units::zero();
        let mut total_out = Units::zero();
        for e in self.store.events().iter().filter(|e| e.pool == *pool) {
            total_in = total_in.checked_add(e.amount_in(side)).unwrap();
            total_out = total_out.checked_add(e.amount_out(side)).unwrap();
        }
        total_in.checked_sub(&total_out).unwrap_or_default()
    }

    fn price_value(&self, token: &AccountAddress, amount: &Units) -> Option<f64> {
        let price = self.store.prices().usd(&Asset::Token(*token))?;
        let dec = self.store.tokens()[token].decimals;
        Some(amount.to_f64() / 10f64.powi(dec as i32) * price)
    }

    fn pool_usd(&self, pool: &AccountAddress) -> f64 {
        let p = &self.store.pools()[pool];
        let a = self.price_value(&p.token0, &self.reserve(pool, 0));
        let b = self.price_value(&p.token1, &self.reserve(pool, 1));
        match (a, b) {
            (Some(a), Some(b)) => a + b,
            (Some(a), None) | (None, Some(a)) => 2.0 * a,
            (None, None) => 0.0,
        }
    }

    fn volumes(&self) -> (f64, f64, f64) {
        let dec = self.store.tokens()[&self.token].decimals;
        let (mut vt, mut tracked, mut untracked) = (0.0, 0.0, 0.0);
        for e in self.scan(Class::Swap) {
            let side = self.side(e).unwrap();
            let p = &self.store.pools()[&e.pool];
            let other = if side == 0 { p.token1 } else { p.token0 };
            let mine = if e.amount_in(side).is_zero() { e.amount_out(side) } else { e.amount_in(side) };
            let theirs = if e.amount_in(1 - side).is_zero() {
                e.amount_out(1 - side)
            } else {
                e.amount_in(1 - side)
            };
            vt += mine.to_f64() / 10f64.powi(dec as i32);
            let usd = self
                .price_value(&self.token, mine)
                .or_else(|| self.price_value(&other, theirs))
                .unwrap_or(0.0);
            untracked += usd;
            if self.pool_usd(&e.pool) >= 1.0 {
                tracked += usd;
            }
        }
        (vt, tracked, untracked)
    }

    fn vector(&self) -> [f64; FEATURE_COUNT] {
        let study = self.store.study_time();
        let (t_period, t_interval) = match self.window() {
            Some((s, e)) => ((e - s) as f64, (study - e) as f64),
            None => (-1.0, -1.0),
        };
        let n_txu = self.count(Class::Any);
        let n_txe = self
            .store
            .transfers()
            .iter()
            .filter(|t| t.token == Asset::Token(self.token))
            .map(|t| t.tx_hash)
            .collect::<BTreeSet<_>>()
            .len() as f64;
        let a_all = self.addresses(Class::Any).len() as f64;
        let a = |c| self.addresses(c).len() as f64;
        let mut mb = self.addresses(Class::Mint);
        mb.extend(self.addresses(Class::Burn));
        let (l_mb, c_mb) = self.investor(&mb, false);
        let (l_sw, c_sw) = self.investor(&self.addresses(Class::Swap), true);
        let my_pools: Vec<AccountAddress> = self
            .store
            .pools()
            .values()
            .filter(|p| p.token0 == self.token || p.token1 == self.token)
            .map(|p| p.address)
            .collect();
        let dec = self.store.tokens()[&self.token].decimals;
        let mut n_liq = 0.0;
        for pool in &my_pools {
            let p = &self.store.pools()[pool];
            let side = if p.token0 == self.token { 0 } else { 1 };
            n_liq += self.reserve(pool, side).to_f64() / 10f64.powi(dec as i32);
        }
        let (v_token, v_tracked, v_untracked) = self.volumes();
        let n = |c| self.count(c);
        [
            t_period,
            t_interval,
            self.position(Class::Mint),
            self.position(Class::Swap),
            self.position(Class::SwapFrom),
            self.position(Class::SwapTo),
            self.position(Class::Burn),
            n_txu,
            n_txe,
            n(Class::Mint),
            n(Class::Swap),
            n(Class::SwapTo),
            n(Class::SwapFrom),
            Self::div(n(Class::SwapFrom), n(Class::SwapTo)),
            n(Class::Burn),
            a(Class::Mint),
            a(Class::Swap),
            a(Class::SwapTo),
            a(Class::SwapFrom),
            a(Class::Burn),
            a_all,
            Self::div(n(Class::Mint), n_txu),
            Self::div(n(Class::Swap), n_txu),
            Self::div(n(Class::SwapTo), n_txu),
            Self::div(n(Class::SwapFrom), n_txu),
            Self::div(n(Class::Burn), n_txu),
            Self::div(a(Class::Mint), a_all),
            Self::div(a(Class::Swap), a_all),
            Self::div(a(Class::SwapTo), a_all),
            Self::div(a(Class::SwapFrom), a_all),
            Self::div(a(Class::Burn), a_all),
            l_mb,
            l_sw,
            c_mb,
            c_sw,
            my_pools.len() as f64,
            v_token,
            v_tracked,
            v_untracked,
            n_liq,
        ]
    }
}

/// A market small enough to stay under 1,000 events for any seed.
pub fn small_store(seed: u64) -> DataStore {
    let cfg = MarketConfig {
        benign_tokens: 6,
        retail_population: 30,
        backbone_events: 60,
        deployer_benign_tokens: 1,
        campaigns: CampaignCounts {
            rugpull: 2,
            pump: 1,
            secondround: 1,
            collusion: 1,
            advancefee: 1,
        },
        ..MarketConfig::small()
    };
    generate_market(&cfg, seed).unwrap().store
}

pub fn assert_oracle(store: &DataStore) {
    for token in store.tokens().keys() {
        let got: FeatureVector = extract_features(store, token).unwrap();
        let want = Oracle { store, token: *token }.vector();
        for k in 0..FEATURE_COUNT {
            let (g, w) = (got.0[k], want[k]);
            assert!(g == w, "{token} {}: extractor {g} oracle {w}", FEATURE_NAMES[k]);
        }
    }
}
