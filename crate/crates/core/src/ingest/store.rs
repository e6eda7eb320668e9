use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use super::files::*;
use super::IngestError;
use crate::model::{
    well_known, AccountAddress, Asset, PoolEvent, PoolInfo, TokenInfo, TransferRecord, TxHash,
    Units,
};

/// Static USD price snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceTable {
    prices: BTreeMap<Asset, f64>,
    valuation_date: String,
}

impl PriceTable {
    /// Fails unless both ETH and WETH are priced; every price must be finite
    /// and non-negative.
    pub fn new(
        prices: BTreeMap<Asset, f64>,
        valuation_date: impl Into<String>,
    ) -> Result<Self, IngestError> {
        for required in [Asset::Eth, Asset::Token(well_known::weth())] {
            if !prices.contains_key(&required) {
                return Err(IngestError::RequiredPrice(required));
            }
        }
        if let Some((a, _)) = prices.iter().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(IngestError::RequiredPrice(*a));
        }
        Ok(Self {
            prices,
            valuation_date: valuation_date.into(),
        })
    }

    pub fn usd(&self, asset: &Asset) -> Option<f64> {
        self.prices.get(asset).copied()
    }

    /// USD value of `amount` base units of an asset with `decimals`.
    pub fn value_usd(&self, asset: &Asset, amount: &Units, decimals: u8) -> Option<f64> {
        self.usd(asset).map(|p| p * amount.to_whole_f64(decimals))
    }

    pub fn valuation_date(&self) -> &str {
        &self.valuation_date
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Asset, &f64)> {
        self.prices.iter()
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Indexed, immutable view of one market snapshot.
///
/// Events and transfers are kept in `EventKey` order; every index stores
/// positions into those lists in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct DataStore {
    tokens: BTreeMap<AccountAddress, TokenInfo>,
    pools: BTreeMap<AccountAddress, PoolInfo>,
    events: Vec<PoolEvent>,
    transfers: Vec<TransferRecord>,
    prices: PriceTable,
    study_time: u64,

    events_by_pool: BTreeMap<AccountAddress, Vec<usize>>,
    events_by_token: BTreeMap<AccountAddress, Vec<usize>>,
    events_by_initiator: BTreeMap<AccountAddress, Vec<usize>>,
    pools_by_token: BTreeMap<AccountAddress, Vec<AccountAddress>>,
    transfers_by_address: BTreeMap<AccountAddress, Vec<usize>>,
    transfers_by_asset: BTreeMap<Asset, Vec<usize>>,
    transfers_by_tx: BTreeMap<TxHash, Vec<usize>>,
}

const EMPTY: &[usize] = &[];

impl DataStore {
    pub fn new(
        tokens: Vec<TokenInfo>,
        pools: Vec<PoolInfo>,
        mut events: Vec<PoolEvent>,
        mut transfers: Vec<TransferRecord>,
        prices: PriceTable,
    ) -> Result<Self, IngestError> {
        let mut token_map = BTreeMap::new();
        for t in tokens {
            let addr = t.address;
            if token_map.insert(addr, t).is_some() {
                return Err(IngestError::DuplicateRecord(format!("token {addr}")));
            }
        }
        let mut pool_map = BTreeMap::new();
        for p in pools {
            for token in [p.token0, p.token1] {
                if !token_map.contains_key(&token) {
                    return Err(IngestError::UnknownToken {
                        pool: p.address,
                        token,
                    });
                }
            }
            let addr = p.address;
            if pool_map.insert(addr, p).is_some() {
                return Err(IngestError::DuplicateRecord(format!("pool {addr}")));
            }
        }
        events.sort();
        transfers.sort_by_key(|t| t.key());
        let mut seen = BTreeSet::new();
        for e in &events {
            if !seen.insert((e.tx_hash, e.log_index)) {
                return Err(IngestError::DuplicateRecord(format!(
                    "event {}:{}",
                    e.tx_hash, e.log_index
                )));
            }
            if !pool_map.contains_key(&e.pool) {
                return Err(IngestError::UnknownPool {
                    tx: e.tx_hash.to_string(),
                    log_index: e.log_index,
                    pool: e.pool,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for t in &transfers {
            if !seen.insert((t.tx_hash, t.log_index)) {
                return Err(IngestError::DuplicateRecord(format!(
                    "transfer {}:{}",
                    t.tx_hash, t.log_index
                )));
            }
        }

        let study_time = events
            .iter()
            .map(|e| e.timestamp)
            .chain(transfers.iter().map(|t| t.timestamp))
            .chain(token_map.values().map(|t| t.creation_time))
            .chain(pool_map.values().map(|p| p.creation_time))
            .max()
            .unwrap_or(0);

        let mut store = Self {
            tokens: token_map,
            pools: pool_map,
            events,
            transfers,
            prices,
            study_time,
            events_by_pool: BTreeMap::new(),
            events_by_token: BTreeMap::new(),
            events_by_initiator: BTreeMap::new(),
            pools_by_token: BTreeMap::new(),
            transfers_by_address: BTreeMap::new(),
            transfers_by_asset: BTreeMap::new(),
            transfers_by_tx: BTreeMap::new(),
        };
        store.build_indices();
        Ok(store)
    }

    fn build_indices(&mut self) {
        for p in self.pools.values() {
            for t in [p.token0, p.token1] {
                self.pools_by_token.entry(t).or_default().push(p.address);
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            self.events_by_pool.entry(e.pool).or_default().push(i);
            self.events_by_initiator
                .entry(e.initiator)
                .or_default()
                .push(i);
            let p = &self.pools[&e.pool];
            self.events_by_token.entry(p.token0).or_default().push(i);
            if p.token1 != p.token0 {
                self.events_by_token.entry(p.token1).or_default().push(i);
            }
        }
        for (i, t) in self.transfers.iter().enumerate() {
            self.transfers_by_address.entry(t.from).or_default().push(i);
            if t.to != t.from {
                self.transfers_by_address.entry(t.to).or_default().push(i);
            }
            self.transfers_by_asset.entry(t.token).or_default().push(i);
            self.transfers_by_tx.entry(t.tx_hash).or_default().push(i);
        }
    }

    /// Overrides the dataset cutoff. It may not precede any record.
    pub fn with_study_time(mut self, study_time: u64) -> Result<Self, IngestError> {
        if study_time < self.study_time {
            return Err(IngestError::StudyTime {
                study: study_time,
                last: self.study_time,
            });
        }
        self.study_time = study_time;
        Ok(self)
    }

    /// Reads `tokens.csv`, `pools.csv`, `events.jsonl`, `transfers.jsonl` and
    /// `prices.csv` from `dir`. The two logs are parsed in parallel.
    pub fn load_dir(dir: &Path) -> Result<Self, IngestError> {
        let ((events, transfers), (tokens, (pools, prices))) = rayon::join(
            || {
                rayon::join(
                    || load_events(&dir.join(EVENTS_FILE)),
                    || load_transfers(&dir.join(TRANSFERS_FILE)),
                )
            },
            || {
                rayon::join(
                    || load_tokens(&dir.join(TOKENS_FILE)),
                    || {
                        (
                            load_pools(&dir.join(POOLS_FILE)),
                            load_price_table(&dir.join(PRICES_FILE)),
                        )
                    },
                )
            },
        );
        Self::new(tokens?, pools?, events?, transfers?, prices?)
    }

    /// Writes the five files read by [`DataStore::load_dir`].
    pub fn write_dir(&self, dir: &Path) -> Result<(), IngestError> {
        fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let create = |name: &str| {
            let path = dir.join(name);
            fs::File::create(&path)
                .map(BufWriter::new)
                .map_err(|source| IngestError::Io { path, source })
        };
        let wrap = |name: &str| {
            let path = dir.join(name);
            move |source| IngestError::Io { path, source }
        };
        write_tokens(create(TOKENS_FILE)?, self.tokens.values()).map_err(wrap(TOKENS_FILE))?;
        write_pools(create(POOLS_FILE)?, self.pools.values()).map_err(wrap(POOLS_FILE))?;
        write_prices(create(PRICES_FILE)?, &self.prices).map_err(wrap(PRICES_FILE))?;
        let mut w = create(EVENTS_FILE)?;
        write_events(&mut w, &self.events).map_err(wrap(EVENTS_FILE))?;
        std::io::Write::flush(&mut w).map_err(wrap(EVENTS_FILE))?;
        let mut w = create(TRANSFERS_FILE)?;
        write_transfers(&mut w, &self.transfers).map_err(wrap(TRANSFERS_FILE))?;
        std::io::Write::flush(&mut w).map_err(wrap(TRANSFERS_FILE))?;
        Ok(())
    }

    pub fn tokens(&self) -> &BTreeMap<AccountAddress, TokenInfo> {
        &self.tokens
    }

    pub fn pools(&self) -> &BTreeMap<AccountAddress, PoolInfo> {
        &self.pools
    }

    pub fn events(&self) -> &[PoolEvent] {
        &self.events
    }

    pub fn transfers(&self) -> &[TransferRecord] {
        &self.transfers
    }

    pub fn prices(&self) -> &PriceTable {
        &self.prices
    }

    /// Dataset cutoff in unix seconds.
    pub fn study_time(&self) -> u64 {
        self.study_time
    }

    pub fn token(&self, addr: &AccountAddress) -> Option<&TokenInfo> {
        self.tokens.get(addr)
    }

    pub fn pool(&self, addr: &AccountAddress) -> Option<&PoolInfo> {
        self.pools.get(addr)
    }

    /// Decimals of an asset; ETH is 18.
    pub fn decimals(&self, asset: &Asset) -> Option<u8> {
        match asset {
            Asset::Eth => Some(18),
            Asset::Token(a) => self.tokens.get(a).map(|t| t.decimals),
        }
    }

    /// USD value of a raw amount of a registered token or ETH.
    pub fn value_usd(&self, asset: &Asset, amount: &Units) -> Option<f64> {
        self.prices
            .value_usd(asset, amount, self.decimals(asset)?)
    }

    pub fn pools_of_token(&self, token: &AccountAddress) -> &[AccountAddress] {
        self.pools_by_token
            .get(token)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn event_indices_of_pool(&self, pool: &AccountAddress) -> &[usize] {
        self.events_by_pool.get(pool).map(Vec::as_slice).unwrap_or(EMPTY)
    }

    pub fn event_indices_of_token(&self, token: &AccountAddress) -> &[usize] {
        self.events_by_token
            .get(token)
            .map(Vec::as_slice)
            .unwrap_or(EMPTY)
    }

    pub fn event_indices_of_initiator(&self, who: &AccountAddress) -> &[usize] {
        self.events_by_initiator
            .get(who)
            .map(Vec::as_slice)
            .unwrap_or(EMPTY)
    }

    pub fn events_of_pool<'a>(
        &'a self,
        pool: &AccountAddress,
    ) -> impl Iterator<Item = &'a PoolEvent> + 'a {
        self.event_indices_of_pool(pool)
            .iter()
            .map(|&i| &self.events[i])
    }

    pub fn events_of_token<'a>(
        &'a self,
        token: &AccountAddress,
    ) -> impl Iterator<Item = &'a PoolEvent> + 'a {
        self.event_indices_of_token(token)
            .iter()
            .map(|&i| &self.events[i])
    }

    pub fn events_by(&self, who: &AccountAddress) -> impl Iterator<Item = &PoolEvent> + '_ {
        self.event_indices_of_initiator(who)
            .iter()
            .map(|&i| &self.events[i])
    }

    /// Transfers where `addr` is sender or recipient.
    pub fn transfers_of_address<'a>(
        &'a self,
        addr: &AccountAddress,
    ) -> impl Iterator<Item = &'a TransferRecord> + 'a {
        self.transfers_by_address
            .get(addr)
            .map(Vec::as_slice)
            .unwrap_or(EMPTY)
            .iter()
            .map(|&i| &self.transfers[i])
    }

    pub fn transfers_of_asset<'a>(
        &'a self,
        asset: &Asset,
    ) -> impl Iterator<Item = &'a TransferRecord> + 'a {
        self.transfers_by_asset
            .get(asset)
            .map(Vec::as_slice)
            .unwrap_or(EMPTY)
            .iter()
            .map(|&i| &self.transfers[i])
    }

    pub fn transfers_in_tx<'a>(
        &'a self,
        tx: &TxHash,
    ) -> impl Iterator<Item = &'a TransferRecord> + 'a {
        self.transfers_by_tx
            .get(tx)
            .map(Vec::as_slice)
            .unwrap_or(EMPTY)
            .iter()
            .map(|&i| &self.transfers[i])
    }

    /// Rebuilds every index by full rescan and compares with the stored ones.
    pub fn indices_consistent(&self) -> bool {
        let mut fresh = Self {
            events_by_pool: BTreeMap::new(),
            events_by_token: BTreeMap::new(),
            events_by_initiator: BTreeMap::new(),
            pools_by_token: BTreeMap::new(),
            transfers_by_address: BTreeMap::new(),
            transfers_by_asset: BTreeMap::new(),
            transfers_by_tx: BTreeMap::new(),
            ..self.clone()
        };
        fresh.build_indices();
        let sorted = self.events.windows(2).all(|w| w[0] <= w[1])
            && self.transfers.windows(2).all(|w| w[0].key() <= w[1].key());
        sorted && fresh == *self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventKind, TxHash};

    fn addr(n: u8) -> AccountAddress {
        let mut b = [0u8; 20];
        b[19] = n;
        AccountAddress::from_bytes(b)
    }

    fn tx(n: u8) -> TxHash {
        TxHash::from_bytes([n; 32])
    }

    fn prices() -> PriceTable {
        PriceTable::new(
            [(Asset::Eth, 600.0), (Asset::Token(well_known::weth()), 600.0)]
                .into_iter()
                .collect(),
            "2020-12-06",
        )
        .unwrap()
    }

    fn token(a: AccountAddress, dec: u8) -> TokenInfo {
        TokenInfo {
            address: a,
            name: format!("T{a}"),
            symbol: "T".into(),
            decimals: dec,
            creator: addr(9),
            creation_time: 1,
        }
    }

    fn sample() -> DataStore {
        let weth = well_known::weth();
        let scam = addr(1);
        let pool = PoolInfo {
            address: addr(2),
            token0: scam,
            token1: weth,
            creator: addr(9),
            creation_time: 5,
        };
        let mint = PoolEvent {
            tx_hash: tx(1),
            log_index: 2,
            timestamp: 10,
            pool: pool.address,
            kind: EventKind::Mint,
            initiator: addr(9),
            amount0_in: Units::whole(500_000, 18),
            amount1_in: Units::whole(70, 18),
            amount0_out: Units::zero(),
            amount1_out: Units::zero(),
            lp_delta: Units::whole(5916, 18),
        };
        let transfer = TransferRecord {
            tx_hash: tx(1),
            log_index: 0,
            timestamp: 10,
            token: Asset::Token(weth),
            from: addr(9),
            to: pool.address,
            amount: Units::whole(70, 18),
        };
        DataStore::new(
            vec![token(scam, 18), token(weth, 18)],
            vec![pool],
            vec![mint],
            vec![transfer],
            prices(),
        )
        .unwrap()
    }

    #[test]
    fn test_indices() {
        let s = sample();
        assert!(s.indices_consistent());
        assert_eq!(s.events_of_token(&addr(1)).count(), 1);
        assert_eq!(s.events_of_token(&well_known::weth()).count(), 1);
        assert_eq!(s.pools_of_token(&addr(1)), &[addr(2)]);
        assert_eq!(s.transfers_of_address(&addr(2)).count(), 1);
        assert_eq!(s.transfers_in_tx(&tx(1)).count(), 1);
        assert_eq!(s.study_time(), 10);
        assert_eq!(
            s.value_usd(&Asset::Token(well_known::weth()), &Units::whole(2, 18)),
            Some(1200.0)
        );
    }

    #[test]
    fn test_round_trip_dir() {
        let s = sample();
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path()).unwrap();
        let back = DataStore::load_dir(dir.path()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn test_unknown_pool_rejected() {
        let s = sample();
        let mut ev = s.events()[0].clone();
        ev.pool = addr(77);
        let err = DataStore::new(
            s.tokens().values().cloned().collect(),
            s.pools().values().cloned().collect(),
            vec![ev],
            vec![],
            prices(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::UnknownPool { .. }));
    }

    #[test]
    fn test_unknown_token_rejected() {
        let s = sample();
        let err = DataStore::new(
            vec![],
            s.pools().values().cloned().collect(),
            vec![],
            vec![],
            prices(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::UnknownToken { .. }));
    }

    #[test]
    fn test_study_time_override() {
        assert!(sample().with_study_time(5).is_err());
        assert_eq!(sample().with_study_time(99).unwrap().study_time(), 99);
    }
}
