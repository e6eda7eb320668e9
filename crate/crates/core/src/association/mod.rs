//! Label machinery: name-match seeding, guilt-by-association expansion,
//! verification of classifier output and collusion detection.

mod collusion;

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use thiserror::Error;

pub use collusion::{detect_all_collusion, detect_collusion};

use crate::ingest::{DataStore, OfficialToken};
use crate::model::{normalize_name, AccountAddress, Evidence, Label, LabelKind, LabelRef, Provenance};

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error("pool {0} is not labeled as a scam pool")]
    NotScamPool(AccountAddress),
    #[error("pool {0} is not in the registry")]
    UnknownPool(AccountAddress),
}

/// Append-only labels per address.
///
/// Classifier suspicions are kept as `ScamToken` labels with provenance
/// [`Provenance::MlFlagged`]; they are reported but never count as confirmed
/// and never propagate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelStore {
    labels: BTreeMap<AccountAddress, Vec<Label>>,
    generation: u32,
}

fn confirmed(l: &Label) -> bool {
    l.provenance != Provenance::MlFlagged
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `label` unless the subject already carries a confirmed label of
    /// the same kind (or, for a suspicion, any label of that kind). Returns
    /// whether it was added.
    pub fn insert(&mut self, label: Label) -> bool {
        let existing = self.labels.entry(label.subject).or_default();
        let blocked = existing
            .iter()
            .any(|l| l.kind == label.kind && (confirmed(l) || !confirmed(&label)));
        if blocked {
            return false;
        }
        existing.push(label);
        true
    }

    /// True for a confirmed label of `kind`.
    pub fn has(&self, addr: &AccountAddress, kind: LabelKind) -> bool {
        self.get(addr, kind).is_some()
    }

    /// The confirmed label of `kind` on `addr`.
    pub fn get(&self, addr: &AccountAddress, kind: LabelKind) -> Option<&Label> {
        self.labels
            .get(addr)?
            .iter()
            .find(|l| l.kind == kind && confirmed(l))
    }

    pub fn is_suspected(&self, addr: &AccountAddress) -> bool {
        self.labels
            .get(addr)
            .is_some_and(|v| v.iter().any(|l| !confirmed(l)))
    }

    pub fn labels_of(&self, addr: &AccountAddress) -> &[Label] {
        self.labels.get(addr).map_or(&[], Vec::as_slice)
    }

    /// Addresses with a confirmed label of `kind`.
    pub fn with_kind(&self, kind: LabelKind) -> BTreeSet<AccountAddress> {
        self.iter()
            .filter(|l| l.kind == kind && confirmed(l))
            .map(|l| l.subject)
            .collect()
    }

    pub fn suspects(&self) -> BTreeSet<AccountAddress> {
        self.iter().filter(|l| !confirmed(l)).map(|l| l.subject).collect()
    }

    /// All labels in address order, then insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.labels.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.labels.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Completed expansion passes.
    pub fn generation(&self) -> u32 {
        self.generation
    }

    fn is_excluded(&self, addr: &AccountAddress) -> bool {
        self.has(addr, LabelKind::ContractDeployerExcluded)
    }

    /// Follows evidence sources until a root provenance is reached.
    pub fn chain_reaches_root(&self, label: &Label) -> bool {
        let mut seen = BTreeSet::new();
        let mut cur = label;
        loop {
            if cur.provenance.is_root() {
                return true;
            }
            let Some(src) = cur.evidence.source else {
                return false;
            };
            if !seen.insert(src) {
                return false;
            }
            match self.get(&src.subject, src.kind) {
                Some(next) => cur = next,
                None => return false,
            }
        }
    }

    /// Reads the format written by [`LabelStore::write_csv`].
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, String> {
        let mut r = csv::Reader::from_reader(reader);
        let mut out = LabelStore::new();
        for (i, row) in r.records().enumerate() {
            let row = row.map_err(|e| e.to_string())?;
            let field = |k: usize| row.get(k).ok_or_else(|| format!("row {}: missing column {k}", i + 1));
            let at = |e: String| format!("row {}: {e}", i + 1);
            let label = Label {
                subject: field(0)?.parse().map_err(|e: crate::model::ParseError| at(e.to_string()))?,
                kind: field(1)?.parse().map_err(at)?,
                provenance: field(2)?.parse().map_err(at)?,
                evidence: Evidence::parse(field(3)?).map_err(at)?,
            };
            out.generation = out.generation.max(label.evidence.generation);
            out.labels.entry(label.subject).or_default().push(label);
        }
        Ok(out)
    }

    /// `address,kind,provenance,evidence`, one row per label.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["address", "kind", "provenance", "evidence"])?;
        for l in self.iter() {
            w.write_record([
                l.subject.to_string(),
                l.kind.to_string(),
                l.provenance.to_string(),
                l.evidence.render(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn official_ref(addr: AccountAddress) -> LabelRef {
    LabelRef {
        subject: addr,
        kind: LabelKind::OfficialToken,
    }
}

/// Labels official tokens, flags tokens that copy an official name or symbol,
/// and merges user labels.
pub fn seed_ground_truth(store: &DataStore, official: &[OfficialToken], user_labels: &[Label]) -> LabelStore {
    let mut labels = LabelStore::new();
    for o in official {
        labels.insert(Label {
            subject: o.address,
            kind: LabelKind::OfficialToken,
            provenance: Provenance::GroundTruth,
            evidence: Evidence::root("official-list", format!("{} ({})", o.name, o.symbol)),
        });
    }
    for l in user_labels {
        labels.insert(l.clone());
    }
    let official_addrs: BTreeSet<AccountAddress> = official.iter().map(|o| o.address).collect();
    let mut by_name: BTreeMap<&str, AccountAddress> = BTreeMap::new();
    let mut by_symbol: BTreeMap<&str, AccountAddress> = BTreeMap::new();
    for o in official {
        by_name.entry(o.name.as_str()).or_insert(o.address);
        by_symbol.entry(o.symbol.as_str()).or_insert(o.address);
    }
    for t in store.tokens().values() {
        if official_addrs.contains(&t.address) {
            continue;
        }
        let name = normalize_name(&t.name);
        let symbol = normalize_name(&t.symbol);
        let hit = by_name
            .get(name.as_str())
            .map(|a| (*a, "name"))
            .or_else(|| by_symbol.get(symbol.as_str()).map(|a| (*a, "symbol")));
        if let Some((off, field)) = hit {
            labels.insert(Label {
                subject: t.address,
                kind: LabelKind::ScamToken,
                provenance: Provenance::NameMatch,
                evidence: Evidence::derived("name-match", official_ref(off), 0)
                    .with_detail(format!("same {field} as an official token")),
            });
        }
    }
    labels
}

fn derive(
    labels: &mut LabelStore,
    subject: AccountAddress,
    kind: LabelKind,
    rule: &str,
    source: LabelRef,
    generation: u32,
) -> bool {
    if labels.has(&subject, kind) {
        return false;
    }
    labels.insert(Label {
        subject,
        kind,
        provenance: Provenance::Expansion,
        evidence: Evidence::derived(rule, source, generation),
    })
}

/// Guilt-by-association to a fixed point. Returns the number of labels added.
///
/// Each pass applies, in order: (a) creators of scam tokens, (b) scam pools
/// and their first minters, (c) tokens created by either kind of scam
/// creator. Excluded deployers neither receive nor pass on labels, and
/// official tokens are never flagged.
pub fn expand_guilt(store: &DataStore, labels: &mut LabelStore) -> usize {
    let mut tokens_by_creator: BTreeMap<AccountAddress, Vec<AccountAddress>> = BTreeMap::new();
    for t in store.tokens().values() {
        tokens_by_creator.entry(t.creator).or_default().push(t.address);
    }
    let mut added = 0;
    loop {
        let generation = labels.generation + 1;
        let mut changed = 0;
        // (a)
        for token in labels.with_kind(LabelKind::ScamToken) {
            let Some(info) = store.token(&token) else { continue };
            if labels.is_excluded(&info.creator) {
                continue;
            }
            let src = LabelRef { subject: token, kind: LabelKind::ScamToken };
            changed += usize::from(derive(labels, info.creator, LabelKind::ScamTokenCreator, "expand-token-creator", src, generation));
        }
        // (b)
        for token in labels.with_kind(LabelKind::ScamToken) {
            let src = LabelRef { subject: token, kind: LabelKind::ScamToken };
            for pool in store.pools_of_token(&token) {
                changed += usize::from(derive(labels, *pool, LabelKind::ScamPool, "expand-scam-pool", src, generation));
                let creator = store.pool(pool).expect("indexed pool").creator;
                if !labels.is_excluded(&creator) {
                    let psrc = LabelRef { subject: *pool, kind: LabelKind::ScamPool };
                    changed += usize::from(derive(labels, creator, LabelKind::ScamPoolCreator, "expand-pool-creator", psrc, generation));
                }
            }
        }
        // (c)
        let creators: Vec<(AccountAddress, LabelKind)> = labels
            .with_kind(LabelKind::ScamTokenCreator)
            .into_iter()
            .map(|a| (a, LabelKind::ScamTokenCreator))
            .chain(labels.with_kind(LabelKind::ScamPoolCreator).into_iter().map(|a| (a, LabelKind::ScamPoolCreator)))
            .collect();
        for (creator, kind) in creators {
            if labels.is_excluded(&creator) {
                continue;
            }
            let src = LabelRef { subject: creator, kind };
            for token in tokens_by_creator.get(&creator).into_iter().flatten() {
                if labels.has(token, LabelKind::OfficialToken) {
                    continue;
                }
                changed += usize::from(derive(labels, *token, LabelKind::ScamToken, "expand-created-token", src, generation));
            }
        }
        labels.generation = generation;
        added += changed;
        if changed == 0 {
            return added;
        }
    }
}

/// Records classifier suspicions for tokens not already labeled.
pub fn flag_suspects(labels: &mut LabelStore, flagged: &[(AccountAddress, f64)]) -> usize {
    let mut n = 0;
    for (token, score) in flagged {
        if labels.has(token, LabelKind::ScamToken) || labels.has(token, LabelKind::OfficialToken) {
            continue;
        }
        n += usize::from(labels.insert(Label {
            subject: *token,
            kind: LabelKind::ScamToken,
            provenance: Provenance::MlFlagged,
            evidence: Evidence::root("ml-flagged", format!("score {score:.3}")),
        }));
    }
    n
}

/// Which strict heuristic verified a flagged token.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum VerifyRule {
    SharedName(String),
    SharedSymbol(String),
    BrandKeyword(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Verification {
    pub verified: BTreeMap<AccountAddress, VerifyRule>,
    pub unverified: BTreeSet<AccountAddress>,
}

pub const DEFAULT_MIN_GROUP: usize = 2;

/// Flagged tokens sharing a normalized name or symbol with at least
/// `min_group - 1` other flagged tokens, or whose name contains a brand
/// keyword, are verified. Everything else stays unverified.
pub fn verify_flagged(
    store: &DataStore,
    flagged: &BTreeSet<AccountAddress>,
    keywords: &[String],
    min_group: usize,
) -> Verification {
    let mut names: BTreeMap<String, Vec<AccountAddress>> = BTreeMap::new();
    let mut symbols: BTreeMap<String, Vec<AccountAddress>> = BTreeMap::new();
    for t in flagged {
        if let Some(info) = store.token(t) {
            names.entry(normalize_name(&info.name)).or_default().push(*t);
            symbols.entry(normalize_name(&info.symbol)).or_default().push(*t);
        }
    }
    let keywords: Vec<String> = keywords.iter().map(|k| normalize_name(k)).filter(|k| !k.is_empty()).collect();
    let mut out = Verification::default();
    for t in flagged {
        let Some(info) = store.token(t) else {
            out.unverified.insert(*t);
            continue;
        };
        let name = normalize_name(&info.name);
        let symbol = normalize_name(&info.symbol);
        let rule = if names[&name].len() >= min_group {
            Some(VerifyRule::SharedName(name.clone()))
        } else if symbols[&symbol].len() >= min_group {
            Some(VerifyRule::SharedSymbol(symbol))
        } else {
            keywords
                .iter()
                .find(|k| name.contains(k.as_str()))
                .map(|k| VerifyRule::BrandKeyword(k.clone()))
        };
        match rule {
            Some(r) => {
                out.verified.insert(*t, r);
            }
            None => {
                out.unverified.insert(*t);
            }
        }
    }
    out
}

/// Confirms verified tokens as scam tokens. Returns the number added.
pub fn apply_verification(labels: &mut LabelStore, v: &Verification) -> usize {
    let mut n = 0;
    for (token, rule) in &v.verified {
        let detail = match rule {
            VerifyRule::SharedName(s) => format!("shares name {s:?} with other flagged tokens"),
            VerifyRule::SharedSymbol(s) => format!("shares symbol {s:?} with other flagged tokens"),
            VerifyRule::BrandKeyword(k) => format!("impersonates {k:?}"),
        };
        n += usize::from(labels.insert(Label {
            subject: *token,
            kind: LabelKind::ScamToken,
            provenance: Provenance::Verified,
            evidence: Evidence::root("verified", detail),
        }));
    }
    n
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ingest::PriceTable;
    use crate::model::{well_known, Asset, PoolInfo, TokenInfo};

    pub fn addr(n: u16) -> AccountAddress {
        let mut b = [0u8; 20];
        b[18..].copy_from_slice(&n.to_be_bytes());
        AccountAddress::from_bytes(b)
    }

    pub fn token(a: u16, name: &str, symbol: &str, creator: u16) -> TokenInfo {
        TokenInfo {
            address: addr(a),
            name: name.into(),
            symbol: symbol.into(),
            decimals: 18,
            creator: addr(creator),
            creation_time: 1,
        }
    }

    pub fn pool(a: u16, t: u16, creator: u16) -> PoolInfo {
        let (x, y) = (addr(t), well_known::weth());
        let (token0, token1) = if x < y { (x, y) } else { (y, x) };
        PoolInfo {
            address: addr(a),
            token0,
            token1,
            creator: addr(creator),
            creation_time: 2,
        }
    }

    pub fn prices() -> PriceTable {
        PriceTable::new(
            [(Asset::Eth, 600.0), (Asset::Token(well_known::weth()), 600.0)]
                .into_iter()
                .collect(),
            "",
        )
        .unwrap()
    }

    pub fn store(mut tokens: Vec<TokenInfo>, pools: Vec<PoolInfo>) -> DataStore {
        let mut weth = token(0, "Wrapped Ether", "WETH", 999);
        weth.address = well_known::weth();
        tokens.push(weth);
        DataStore::new(tokens, pools, vec![], vec![], prices()).unwrap()
    }

    fn official(a: u16, name: &str, symbol: &str) -> OfficialToken {
        OfficialToken {
            address: addr(a),
            name: normalize_name(name),
            symbol: normalize_name(symbol),
        }
    }

    #[test]
    fn test_name_match_seed() {
        let s = store(
            vec![
                token(1, "Tether USD", "USDT", 100),
                token(2, "Tether", "USDT", 101),
                token(3, " TETHER  usd ", "TUSD", 102),
                token(4, "Other", "OTH", 103),
            ],
            vec![],
        );
        let labels = seed_ground_truth(&s, &[official(1, "Tether USD", "USDT")], &[]);
        assert_eq!(labels.with_kind(LabelKind::ScamToken), [addr(2), addr(3)].into());
        assert!(!labels.has(&addr(1), LabelKind::ScamToken));
        assert!(labels.has(&addr(1), LabelKind::OfficialToken));
        let l = labels.get(&addr(2), LabelKind::ScamToken).unwrap();
        assert_eq!(l.provenance, Provenance::NameMatch);
        assert!(labels.chain_reaches_root(l));
    }

    #[test]
    fn test_expansion_one_step() {
        // Creator 50 made seed scam A(2) and B(3).
        let s = store(
            vec![token(1, "Tether", "USDT", 100), token(2, "Tether", "X", 50), token(3, "Bee", "B", 50)],
            vec![],
        );
        let mut labels = seed_ground_truth(&s, &[official(1, "Tether", "USDT")], &[]);
        expand_guilt(&s, &mut labels);
        let l = labels.get(&addr(3), LabelKind::ScamToken).unwrap();
        assert_eq!(l.provenance, Provenance::Expansion);
        assert!(labels.chain_reaches_root(l));
    }

    #[test]
    fn test_excluded_deployer_does_not_propagate() {
        let mut tokens = vec![token(1, "Tether", "USDT", 100), token(2, "Tether", "X", 77)];
        for i in 0..50 {
            tokens.push(token(10 + i, &format!("benign {i}"), &format!("B{i}"), 77));
        }
        let s = store(tokens, vec![]);
        let user = Label {
            subject: addr(77),
            kind: LabelKind::ContractDeployerExcluded,
            provenance: Provenance::UserSupplied,
            evidence: Evidence::root("user-supplied", ""),
        };
        let mut labels = seed_ground_truth(&s, &[official(1, "Tether", "USDT")], &[user]);
        expand_guilt(&s, &mut labels);
        assert_eq!(labels.with_kind(LabelKind::ScamToken), [addr(2)].into());
        assert!(!labels.has(&addr(77), LabelKind::ScamTokenCreator));
    }

    #[test]
    fn test_chain_converges_in_three_generations() {
        // Seed token 2; its pool 300 was first minted by 60, who made token 4;
        // token 4's pool 301 was first minted by 70, who made token 5.
        let s = store(
            vec![
                token(1, "Tether", "USDT", 100),
                token(2, "Tether", "X", 50),
                token(3, "three", "T3", 80),
                token(4, "four", "T4", 60),
                token(5, "five", "T5", 70),
            ],
            vec![pool(300, 2, 60), pool(301, 4, 70)],
        );
        let mut labels = seed_ground_truth(&s, &[official(1, "Tether", "USDT")], &[]);
        let added = expand_guilt(&s, &mut labels);
        assert!(added > 0);
        assert!(labels.has(&addr(5), LabelKind::ScamToken));
        assert_eq!(labels.get(&addr(5), LabelKind::ScamToken).unwrap().evidence.generation, 2);
        assert!(!labels.has(&addr(3), LabelKind::ScamToken));
        let before = labels.clone();
        assert_eq!(expand_guilt(&s, &mut labels), 0);
        assert_eq!(before.len(), labels.len());
        for l in labels.iter() {
            assert!(labels.chain_reaches_root(l), "{l:?}");
        }
    }

    #[test]
    fn test_verify_groups_and_keywords() {
        let mut tokens: Vec<TokenInfo> = (0..12).map(|i| token(10 + i, "bore.finance", &format!("B{i}"), 200 + i)).collect();
        tokens.push(token(40, "Unique Thing", "UQT", 300));
        tokens.push(token(41, "TikTok Coin", "TIKTOC", 301));
        let s = store(tokens, vec![]);
        let flagged: BTreeSet<_> = (10..12 + 10).chain([40, 41]).map(addr).collect();
        let v = verify_flagged(&s, &flagged, &["tiktok".to_string()], DEFAULT_MIN_GROUP);
        assert_eq!(v.verified.len(), 13);
        assert_eq!(v.unverified, [addr(40)].into());
        assert_eq!(v.verified[&addr(41)], VerifyRule::BrandKeyword("tiktok".into()));
    }

    #[test]
    fn test_csv_round_trip() {
        let s = store(
            vec![token(1, "Tether", "USDT", 100), token(2, "Tether", "X", 50), token(3, "Bee", "B", 50)],
            vec![pool(300, 2, 50)],
        );
        let mut labels = seed_ground_truth(&s, &[official(1, "Tether", "USDT")], &[]);
        expand_guilt(&s, &mut labels);
        flag_suspects(&mut labels, &[(addr(9), 0.75)]);
        let mut buf = Vec::new();
        labels.write_csv(&mut buf).unwrap();
        let back = LabelStore::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), labels.iter().collect::<Vec<_>>());
        assert!(LabelStore::read_csv("address,kind,provenance,evidence\n0x1,ScamToken,GroundTruth,x;gen=0\n".as_bytes()).is_err());
    }

    #[test]
    fn test_suspicion_does_not_propagate() {
        let s = store(vec![token(2, "Lonely", "LON", 50), token(3, "Sibling", "SIB", 50)], vec![]);
        let mut labels = LabelStore::new();
        flag_suspects(&mut labels, &[(addr(2), 0.9)]);
        expand_guilt(&s, &mut labels);
        assert!(labels.is_suspected(&addr(2)));
        assert!(!labels.has(&addr(2), LabelKind::ScamToken));
        assert!(!labels.has(&addr(3), LabelKind::ScamToken));
    }
}
