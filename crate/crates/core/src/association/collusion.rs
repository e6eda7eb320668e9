use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{AssociationError, LabelStore};
use crate::ingest::DataStore;
use crate::model::{
    AccountAddress, EventKey, EventKind, Evidence, Label, LabelKind, LabelRef, Provenance, TransferRecord,
    ValuableTokens,
};

/// What a candidate did on the pool under inspection.
#[derive(Default)]
struct Activity {
    first_mint: Option<EventKey>,
    last_burn: Option<EventKey>,
    last_buy: Option<EventKey>,
    first_sell: Option<EventKey>,
}

fn scam_side(store: &DataStore, labels: &LabelStore, pool: &AccountAddress) -> Result<(AccountAddress, usize), AssociationError> {
    let info = store.pool(pool).ok_or(AssociationError::UnknownPool(*pool))?;
    if !labels.has(pool, LabelKind::ScamPool) {
        return Err(AssociationError::NotScamPool(*pool));
    }
    [info.token0, info.token1]
        .into_iter()
        .enumerate()
        .find(|(_, t)| labels.has(t, LabelKind::ScamToken))
        .map(|(side, t)| (t, side))
        .ok_or(AssociationError::NotScamPool(*pool))
}

fn known_set(
    store: &DataStore,
    labels: &LabelStore,
    pool: &AccountAddress,
    token: &AccountAddress,
) -> BTreeMap<AccountAddress, LabelRef> {
    let mut known = BTreeMap::new();
    for a in labels.with_kind(LabelKind::CollusionAddress) {
        known.insert(a, LabelRef { subject: a, kind: LabelKind::CollusionAddress });
    }
    let fallback = |who: AccountAddress, kind: LabelKind, subject: AccountAddress, base: LabelKind| {
        if labels.has(&who, kind) {
            LabelRef { subject: who, kind }
        } else {
            LabelRef { subject, kind: base }
        }
    };
    if let Some(t) = store.token(token) {
        if !labels.is_excluded(&t.creator) {
            known
                .entry(t.creator)
                .or_insert_with(|| fallback(t.creator, LabelKind::ScamTokenCreator, *token, LabelKind::ScamToken));
        }
    }
    if let Some(p) = store.pool(pool) {
        if !labels.is_excluded(&p.creator) {
            known
                .entry(p.creator)
                .or_insert_with(|| fallback(p.creator, LabelKind::ScamPoolCreator, *pool, LabelKind::ScamPool));
        }
    }
    known
}

fn rule_provenance(rule: u8) -> Provenance {
    match rule {
        1 => Provenance::CollusionRule1,
        2 => Provenance::CollusionRule2,
        3 => Provenance::CollusionRule3,
        _ => Provenance::CollusionRule4,
    }
}

/// Applies the four collusion rules to one scam pool until no new address
/// qualifies. Each iteration tests every remaining candidate against the
/// known set as it stood when the iteration began. Returns the labels the
/// pool adds; `labels` is not modified.
///
/// Only transfers of valuable assets count, and "before"/"after" compare
/// event keys strictly.
pub fn detect_collusion(
    store: &DataStore,
    labels: &LabelStore,
    pool: &AccountAddress,
    valuable: &ValuableTokens,
) -> Result<Vec<Label>, AssociationError> {
    let (token, side) = scam_side(store, labels, pool)?;
    let mut known = known_set(store, labels, pool, &token);

    let mut activity: BTreeMap<AccountAddress, Activity> = BTreeMap::new();
    for e in store.events_of_pool(pool) {
        let a = activity.entry(e.initiator).or_default();
        let k = e.key();
        match e.kind {
            EventKind::Mint => {
                a.first_mint.get_or_insert(k);
            }
            EventKind::Burn => a.last_burn = Some(k),
            EventKind::Swap => {
                if e.swap_input_side() == Some(side) {
                    a.first_sell.get_or_insert(k);
                } else {
                    a.last_buy = Some(k);
                }
            }
        }
    }
    let mut candidates: BTreeSet<AccountAddress> = activity
        .keys()
        .filter(|a| !known.contains_key(a) && !labels.is_excluded(a))
        .copied()
        .collect();

    let mut out = Vec::new();
    let mut generation = 0;
    loop {
        generation += 1;
        let mut found: Vec<(AccountAddress, u8, &TransferRecord, LabelRef)> = Vec::new();
        for cand in &candidates {
            let act = &activity[cand];
            let moves: Vec<&TransferRecord> = store
                .transfers_of_address(cand)
                .filter(|t| valuable.contains(&t.token) && t.from != t.to)
                .collect();
            let funded_before = |limit: Option<EventKey>| {
                let limit = limit?;
                moves
                    .iter()
                    .find(|t| t.to == *cand && t.key() < limit && known.contains_key(&t.from))
                    .map(|t| (*t, known[&t.from]))
            };
            let remitted_after = |limit: Option<EventKey>| {
                let limit = limit?;
                moves
                    .iter()
                    .find(|t| t.from == *cand && t.key() > limit && known.contains_key(&t.to))
                    .map(|t| (*t, known[&t.to]))
            };
            let hit = funded_before(act.first_mint)
                .map(|h| (1, h))
                .or_else(|| remitted_after(act.last_burn).map(|h| (2, h)))
                .or_else(|| funded_before(act.last_buy).map(|h| (3, h)))
                .or_else(|| remitted_after(act.first_sell).map(|h| (4, h)));
            if let Some((rule, (t, src))) = hit {
                found.push((*cand, rule, t, src));
            }
        }
        if found.is_empty() {
            return Ok(out);
        }
        for (addr, rule, t, src) in found {
            candidates.remove(&addr);
            known.insert(addr, LabelRef { subject: addr, kind: LabelKind::CollusionAddress });
            out.push(Label {
                subject: addr,
                kind: LabelKind::CollusionAddress,
                provenance: rule_provenance(rule),
                evidence: Evidence::derived(format!("collusion-r{rule}"), src, generation)
                    .with_detail(format!("pool {pool} tx {} log {}", t.tx_hash, t.log_index)),
            });
        }
    }
}

/// Runs [`detect_collusion`] over every scam pool, in parallel, and repeats
/// the sweep until no pool adds a label. Returns the number added.
pub fn detect_all_collusion(store: &DataStore, labels: &mut LabelStore, valuable: &ValuableTokens) -> usize {
    let mut added = 0;
    loop {
        let pools: Vec<AccountAddress> = labels.with_kind(LabelKind::ScamPool).into_iter().collect();
        let snapshot = &*labels;
        let found: Vec<Vec<Label>> = pools
            .par_iter()
            .map(|p| detect_collusion(store, snapshot, p, valuable).unwrap_or_default())
            .collect();
        let mut changed = 0;
        for l in found.into_iter().flatten() {
            changed += usize::from(labels.insert(l));
        }
        added += changed;
        if changed == 0 {
            return added;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{addr, pool, store as bare_store, token};
    use super::*;
    use crate::ingest::DataStore;
    use crate::model::{well_known, Asset, PoolEvent, TransferRecord, TxHash, Units};

    const POOL: u16 = 300;
    const SCAM: u16 = 2;
    const SCAMMER: u16 = 50;

    struct World {
        events: Vec<PoolEvent>,
        transfers: Vec<TransferRecord>,
        n: u32,
    }

    fn tx(n: u32) -> TxHash {
        let mut b = [0u8; 32];
        b[28..].copy_from_slice(&n.to_be_bytes());
        TxHash::from_bytes(b)
    }

    fn weth_side() -> usize {
        usize::from(well_known::weth() > addr(SCAM))
    }

    impl World {
        fn new() -> Self {
            let mut w = World { events: vec![], transfers: vec![], n: 0 };
            w.event(SCAMMER, EventKind::Mint);
            w
        }

        fn next(&mut self) -> u32 {
            self.n += 1;
            self.n
        }

        fn event(&mut self, who: u16, kind: EventKind) {
            let n = self.next();
            let one = Units::whole(1, 0);
            let z = Units::zero;
            let mut e = PoolEvent {
                tx_hash: tx(n),
                log_index: 0,
                timestamp: 1000 + u64::from(n),
                pool: addr(POOL),
                kind,
                initiator: addr(who),
                amount0_in: z(),
                amount1_in: z(),
                amount0_out: z(),
                amount1_out: z(),
                lp_delta: z(),
            };
            match kind {
                EventKind::Mint => {
                    e.amount0_in = one.clone();
                    e.amount1_in = one.clone();
                    e.lp_delta = one;
                }
                EventKind::Burn => {
                    e.amount0_out = one.clone();
                    e.amount1_out = one.clone();
                    e.lp_delta = one;
                }
                EventKind::Swap => unreachable!(),
            }
            self.events.push(e);
        }

        /// `buy` pays WETH for the scam token.
        fn swap(&mut self, who: u16, buy: bool) {
            let n = self.next();
            let input = if buy { weth_side() } else { 1 - weth_side() };
            let one = Units::whole(1, 0);
            let mut e = PoolEvent {
                tx_hash: tx(n),
                log_index: 0,
                timestamp: 1000 + u64::from(n),
                pool: addr(POOL),
                kind: EventKind::Swap,
                initiator: addr(who),
                amount0_in: Units::zero(),
                amount1_in: Units::zero(),
                amount0_out: Units::zero(),
                amount1_out: Units::zero(),
                lp_delta: Units::zero(),
            };
            if input == 0 {
                e.amount0_in = one.clone();
                e.amount1_out = one;
            } else {
                e.amount1_in = one.clone();
                e.amount0_out = one;
            }
            self.events.push(e);
        }

        fn send(&mut self, asset: Asset, from: u16, to: u16) {
            let n = self.next();
            self.transfers.push(TransferRecord {
                tx_hash: tx(n),
                log_index: 1,
                timestamp: 1000 + u64::from(n),
                token: asset,
                from: addr(from),
                to: addr(to),
                amount: Units::whole(5, 0),
            });
        }

        fn eth(&mut self, from: u16, to: u16) {
            self.send(Asset::Eth, from, to);
        }

        fn build(self) -> (DataStore, LabelStore) {
            let base = bare_store(vec![token(SCAM, "Scam", "SCM", SCAMMER)], vec![pool(POOL, SCAM, SCAMMER)]);
            let tokens = base.tokens().values().cloned().collect();
            let pools = base.pools().values().cloned().collect();
            let store = DataStore::new(tokens, pools, self.events, self.transfers, base.prices().clone()).unwrap();
            let mut labels = LabelStore::new();
            labels.insert(Label {
                subject: addr(SCAM),
                kind: LabelKind::ScamToken,
                provenance: Provenance::UserSupplied,
                evidence: Evidence::root("user-supplied", ""),
            });
            super::super::expand_guilt(&store, &mut labels);
            (store, labels)
        }
    }

    fn run(w: World) -> (LabelStore, Vec<Label>) {
        let (store, labels) = w.build();
        let found = detect_collusion(&store, &labels, &addr(POOL), &ValuableTokens::default()).unwrap();
        (labels, found)
    }

    fn flagged(found: &[Label]) -> BTreeMap<u16, Provenance> {
        found
            .iter()
            .map(|l| {
                let b = l.subject.as_bytes();
                (u16::from_be_bytes([b[18], b[19]]), l.provenance)
            })
            .collect()
    }

    #[test]
    fn test_each_rule_fires() {
        let mut w = World::new();
        w.eth(SCAMMER, 61);
        w.event(61, EventKind::Mint);
        w.event(62, EventKind::Mint);
        w.event(62, EventKind::Burn);
        w.eth(62, SCAMMER);
        w.eth(SCAMMER, 63);
        w.swap(63, true);
        w.swap(64, false);
        w.eth(64, SCAMMER);
        let (_, found) = run(w);
        assert_eq!(
            flagged(&found),
            [
                (61, Provenance::CollusionRule1),
                (62, Provenance::CollusionRule2),
                (63, Provenance::CollusionRule3),
                (64, Provenance::CollusionRule4),
            ]
            .into()
        );
    }

    #[test]
    fn test_order_is_strict() {
        let mut w = World::new();
        w.event(61, EventKind::Mint);
        w.eth(SCAMMER, 61);
        w.eth(62, SCAMMER);
        w.event(62, EventKind::Burn);
        w.swap(63, true);
        w.eth(SCAMMER, 63);
        w.eth(64, SCAMMER);
        w.swap(64, false);
        let (_, found) = run(w);
        assert!(found.is_empty(), "{found:?}");
    }

    #[test]
    fn test_scam_token_transfers_do_not_count() {
        let mut w = World::new();
        w.send(Asset::Token(addr(SCAM)), SCAMMER, 61);
        w.event(61, EventKind::Mint);
        let (_, found) = run(w);
        assert!(found.is_empty());
    }

    #[test]
    fn test_two_hop_needs_second_iteration() {
        let mut w = World::new();
        w.eth(SCAMMER, 61);
        w.event(61, EventKind::Mint);
        w.eth(61, 65);
        w.event(65, EventKind::Mint);
        let (labels, found) = run(w);
        let c5 = found.iter().find(|l| l.subject == addr(65)).unwrap();
        assert_eq!(c5.evidence.generation, 2);
        assert_eq!(c5.evidence.source.unwrap().subject, addr(61));
        let mut all = labels.clone();
        for l in found {
            all.insert(l);
        }
        for l in all.iter() {
            assert!(all.chain_reaches_root(l), "{l:?}");
        }
    }

    #[test]
    fn test_victim_not_flagged() {
        let mut w = World::new();
        w.eth(900, 70);
        w.swap(70, true);
        w.swap(SCAMMER, false);
        let (_, found) = run(w);
        assert!(found.is_empty());
    }

    #[test]
    fn test_precondition() {
        let (store, mut labels) = World::new().build();
        let v = ValuableTokens::default();
        labels = LabelStore { generation: labels.generation, ..LabelStore::new() };
        assert!(matches!(
            detect_collusion(&store, &labels, &addr(POOL), &v),
            Err(AssociationError::NotScamPool(_))
        ));
        assert!(matches!(
            detect_collusion(&store, &labels, &addr(999), &v),
            Err(AssociationError::UnknownPool(_))
        ));
    }

    #[test]
    fn test_global_pass_adds_labels_once() {
        let mut w = World::new();
        w.eth(SCAMMER, 61);
        w.event(61, EventKind::Mint);
        let (store, mut labels) = w.build();
        let v = ValuableTokens::default();
        assert_eq!(detect_all_collusion(&store, &mut labels, &v), 1);
        assert_eq!(detect_all_collusion(&store, &mut labels, &v), 0);
    }
}
