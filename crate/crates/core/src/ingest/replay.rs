use rayon::prelude::*;

use super::DataStore;
use crate::amm::{PoolState, SwapSide};
use crate::model::{AccountAddress, EventKey, EventKind, PoolEvent, Units};

/// A recorded event that the constant-product engine cannot reproduce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Discrepancy {
    pub pool: AccountAddress,
    pub key: EventKey,
    pub kind: EventKind,
    pub message: String,
}

/// Outputs may differ from the engine by at most this many base units.
const FLOOR_TOLERANCE: u64 = 1;

fn close(a: &Units, b: &Units) -> bool {
    a.abs_diff(b) <= Units::from(FLOOR_TOLERANCE)
}

/// Replays every pool's log through a fresh [`PoolState`]. When an event
/// deviates, the engine's own result is kept and replay continues, so one bad
/// record yields one discrepancy rather than a cascade.
pub fn validate_replay(store: &DataStore) -> Vec<Discrepancy> {
    let pools: Vec<_> = store.pools().keys().copied().collect();
    let mut out: Vec<Discrepancy> = pools
        .par_iter()
        .flat_map_iter(|pool| replay_pool(*pool, store.events_of_pool(pool)))
        .collect();
    out.sort_by(|a, b| a.key.cmp(&b.key).then(a.pool.cmp(&b.pool)));
    out
}

fn replay_pool<'a>(
    pool: AccountAddress,
    events: impl Iterator<Item = &'a PoolEvent>,
) -> Vec<Discrepancy> {
    let mut state = PoolState::new();
    let mut found = Vec::new();
    for e in events {
        if let Err(message) = step(&mut state, e) {
            found.push(Discrepancy {
                pool,
                key: e.key(),
                kind: e.kind,
                message,
            });
        }
    }
    found
}

fn step(state: &mut PoolState, e: &PoolEvent) -> Result<(), String> {
    match e.kind {
        EventKind::Mint => {
            let minted = state
                .apply_mint(e.initiator, &e.amount0_in, &e.amount1_in)
                .map_err(|err| format!("mint rejected by engine: {err}"))?;
            if !close(&minted, &e.lp_delta) {
                return Err(format!("lp minted {} but engine gives {minted}", e.lp_delta));
            }
        }
        EventKind::Burn => {
            let (out0, out1) = state
                .apply_burn(e.initiator, &e.lp_delta)
                .map_err(|err| format!("burn rejected by engine: {err}"))?;
            if !close(&out0, &e.amount0_out) || !close(&out1, &e.amount1_out) {
                return Err(format!(
                    "burn returned ({}, {}) but engine gives ({out0}, {out1})",
                    e.amount0_out, e.amount1_out
                ));
            }
        }
        EventKind::Swap => {
            let side = e
                .swap_input_side()
                .ok_or_else(|| "swap has no input side".to_string())?;
            let recorded = e.amount_out(1 - side);
            let out = state
                .apply_swap(SwapSide::from_input_side(side), e.amount_in(side))
                .map_err(|err| format!("swap rejected by engine: {err}"))?;
            if !close(&out, recorded) {
                return Err(format!("swap output {recorded} but engine gives {out}"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PriceTable;
    use crate::model::{well_known, Asset, PoolInfo, TokenInfo, TxHash};

    fn addr(n: u8) -> AccountAddress {
        let mut b = [0u8; 20];
        b[19] = n;
        AccountAddress::from_bytes(b)
    }

    fn ev(n: u8, kind: EventKind, ins: [Units; 2], outs: [Units; 2], lp: Units) -> PoolEvent {
        let [a0in, a1in] = ins;
        let [a0out, a1out] = outs;
        PoolEvent {
            tx_hash: TxHash::from_bytes([n; 32]),
            log_index: 0,
            timestamp: n as u64,
            pool: addr(2),
            kind,
            initiator: addr(9),
            amount0_in: a0in,
            amount1_in: a1in,
            amount0_out: a0out,
            amount1_out: a1out,
            lp_delta: lp,
        }
    }

    fn store(events: Vec<PoolEvent>) -> DataStore {
        let weth = well_known::weth();
        let tok = |a| TokenInfo {
            address: a,
            name: "x".into(),
            symbol: "x".into(),
            decimals: 18,
            creator: addr(9),
            creation_time: 0,
        };
        DataStore::new(
            vec![tok(addr(1)), tok(weth)],
            vec![PoolInfo {
                address: addr(2),
                token0: addr(1),
                token1: weth,
                creator: addr(9),
                creation_time: 0,
            }],
            events,
            vec![],
            PriceTable::new(
                [(Asset::Eth, 600.0), (Asset::Token(weth), 600.0)]
                    .into_iter()
                    .collect(),
                "",
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn honest_log() -> Vec<PoolEvent> {
        let z = Units::zero;
        let mut s = PoolState::new();
        let (a, b) = (Units::whole(500_000, 18), Units::whole(70, 18));
        let lp = s.apply_mint(addr(9), &a, &b).unwrap();
        let mint = ev(1, EventKind::Mint, [a, b], [z(), z()], lp.clone());
        let x = Units::whole(1, 18);
        let got = s.apply_swap(SwapSide::OneForZero, &x).unwrap();
        let swap = ev(2, EventKind::Swap, [z(), x], [got, z()], z());
        let (o0, o1) = s.apply_burn(addr(9), &lp).unwrap();
        let burn = ev(3, EventKind::Burn, [z(), z()], [o0, o1], lp);
        vec![mint, swap, burn]
    }

    #[test]
    fn test_honest_log_has_no_discrepancy() {
        assert!(validate_replay(&store(honest_log())).is_empty());
    }

    #[test]
    fn test_doubled_swap_output_flagged_once() {
        let mut log = honest_log();
        let doubled = log[1].amount0_out.checked_add(&log[1].amount0_out).unwrap();
        log[1].amount0_out = doubled;
        let d = validate_replay(&store(log.clone()));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].key, log[1].key());
        assert_eq!(d[0].kind, EventKind::Swap);
    }

    #[test]
    fn test_empty_store() {
        assert!(validate_replay(&store(vec![])).is_empty());
    }
}
