use std::collections::BTreeSet;

use super::{GeneratedMarket, NamingMode};
use crate::ingest::validate_replay;
use crate::model::{normalize_name, AccountAddress};

/// Problems found while re-checking a generated market against its scripts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub problems: Vec<String>,
}

/// Re-scans the market: exact replay, disjoint scammer and victim sets, no
/// money flow between victims and scam addresses, truth completeness and
/// benign naming hygiene.
pub fn audit_market(m: &GeneratedMarket) -> AuditReport {
    let mut problems = Vec::new();

    for d in validate_replay(&m.store).into_iter().take(5) {
        problems.push(format!("replay discrepancy in pool {} at {:?}: {}", d.pool, d.key, d.message));
    }

    let mut scam: BTreeSet<AccountAddress> = BTreeSet::new();
    for s in &m.scripts {
        if !s.is_consistent() {
            problems.push(format!("campaign {} has inconsistent timing or roles", s.index));
        }
        scam.extend(s.scam_addresses());
        if let Some((fee, _)) = s.advance_fee {
            scam.insert(fee);
        }
    }
    for v in &m.ledger.victims {
        if scam.contains(v) {
            problems.push(format!("victim {v} is also a scam address"));
        }
    }
    for v in &m.ledger.victims {
        for t in m.store.transfers_of_address(v) {
            let other = if t.from == *v { t.to } else { t.from };
            if scam.contains(&other) {
                problems.push(format!("victim {v} exchanged funds with scam address {other}"));
            }
        }
    }

    let truth: BTreeSet<AccountAddress> = m.truth.iter().map(|t| t.address).collect();
    for s in &m.scripts {
        let mut roles = vec![s.token, s.pool, s.scammer];
        roles.extend(s.collusion_roles().into_iter().map(|(a, _)| a));
        roles.extend(s.advance_fee.map(|(a, _)| a));
        for a in roles {
            if !truth.contains(&a) {
                problems.push(format!("scam role {a} of campaign {} missing from truth", s.index));
            }
        }
    }

    // Benign names must not collide with any official or scam name.
    let official: BTreeSet<AccountAddress> = m.official.iter().map(|o| o.address).collect();
    let scam_tokens = m.scam_tokens();
    let mut reserved: BTreeSet<String> = BTreeSet::new();
    for o in &m.official {
        reserved.insert(o.name.clone());
        reserved.insert(o.symbol.clone());
    }
    for s in m.scripts.iter().filter(|s| s.naming != NamingMode::Clone) {
        reserved.insert(normalize_name(&s.name));
        reserved.insert(normalize_name(&s.symbol));
    }
    for t in m.store.tokens().values() {
        if official.contains(&t.address) || scam_tokens.contains(&t.address) {
            continue;
        }
        let (name, symbol) = (normalize_name(&t.name), normalize_name(&t.symbol));
        if reserved.contains(&name) || reserved.contains(&symbol) {
            problems.push(format!("benign token {} reuses a reserved name", t.address));
        }
        if m.brand_keywords.iter().any(|k| name.contains(k.as_str())) {
            problems.push(format!("benign token {} contains a brand keyword", t.address));
        }
    }

    AuditReport { problems }
}
