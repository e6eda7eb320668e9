use crate::amm::{AmmError, PoolState, SwapSide};
use crate::model::{
    AccountAddress, Asset, EventKind, PoolEvent, PoolInfo, TokenInfo, TransferRecord, Units,
};

use super::ids::TxSeq;

/// Records produced by one generation stream, merged and sorted later.
#[derive(Debug, Default, Clone)]
pub struct Fragment {
    pub tokens: Vec<TokenInfo>,
    pub pools: Vec<PoolInfo>,
    pub events: Vec<PoolEvent>,
    pub transfers: Vec<TransferRecord>,
}

impl Fragment {
    pub fn extend(&mut self, other: Fragment) {
        self.tokens.extend(other.tokens);
        self.pools.extend(other.pools);
        self.events.extend(other.events);
        self.transfers.extend(other.transfers);
    }

    /// A single-transfer transaction.
    pub fn transfer(
        &mut self,
        txs: &mut TxSeq,
        ts: u64,
        asset: Asset,
        from: AccountAddress,
        to: AccountAddress,
        amount: Units,
    ) {
        self.transfers.push(TransferRecord {
            tx_hash: txs.next_tx(),
            log_index: 0,
            timestamp: ts,
            token: asset,
            from,
            to,
            amount,
        });
    }
}

/// A pool driven through the real engine, emitting the matching event and
/// ERC-20 transfer records for every action.
#[derive(Debug, Clone)]
pub struct PoolSim {
    pub address: AccountAddress,
    pub tokens: [AccountAddress; 2],
    pub state: PoolState,
    first_mint: Option<(AccountAddress, u64)>,
}

struct Leg {
    side: usize,
    from: AccountAddress,
    to: AccountAddress,
    amount: Units,
}

impl PoolSim {
    /// Tokens are ordered by address, as the pair factory does.
    pub fn new(address: AccountAddress, a: AccountAddress, b: AccountAddress) -> Self {
        let tokens = if a < b { [a, b] } else { [b, a] };
        Self {
            address,
            tokens,
            state: PoolState::new(),
            first_mint: None,
        }
    }

    pub fn side_of(&self, token: &AccountAddress) -> usize {
        if &self.tokens[0] == token {
            0
        } else {
            1
        }
    }

    /// Registry entry; `None` until the first mint has happened.
    pub fn info(&self) -> Option<PoolInfo> {
        self.first_mint.map(|(creator, ts)| PoolInfo {
            address: self.address,
            token0: self.tokens[0],
            token1: self.tokens[1],
            creator,
            creation_time: ts,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &self,
        frag: &mut Fragment,
        txs: &mut TxSeq,
        ts: u64,
        who: AccountAddress,
        kind: EventKind,
        legs: Vec<Leg>,
        amounts: [Units; 5],
    ) {
        let tx = txs.next_tx();
        let n = legs.len() as u32;
        for (i, leg) in legs.into_iter().enumerate() {
            frag.transfers.push(TransferRecord {
                tx_hash: tx,
                log_index: i as u32,
                timestamp: ts,
                token: Asset::Token(self.tokens[leg.side]),
                from: leg.from,
                to: leg.to,
                amount: leg.amount,
            });
        }
        let [a0in, a1in, a0out, a1out, lp] = amounts;
        frag.events.push(PoolEvent {
            tx_hash: tx,
            log_index: n,
            timestamp: ts,
            pool: self.address,
            kind,
            initiator: who,
            amount0_in: a0in,
            amount1_in: a1in,
            amount0_out: a0out,
            amount1_out: a1out,
            lp_delta: lp,
        });
    }

    pub fn mint(
        &mut self,
        frag: &mut Fragment,
        txs: &mut TxSeq,
        ts: u64,
        who: AccountAddress,
        amounts: [Units; 2],
    ) -> Result<Units, AmmError> {
        let lp = self.state.apply_mint(who, &amounts[0], &amounts[1])?;
        if self.first_mint.is_none() {
            self.first_mint = Some((who, ts));
        }
        let [a0, a1] = amounts;
        let legs = vec![
            Leg { side: 0, from: who, to: self.address, amount: a0.clone() },
            Leg { side: 1, from: who, to: self.address, amount: a1.clone() },
        ];
        self.emit(frag, txs, ts, who, EventKind::Mint, legs,
            [a0, a1, Units::zero(), Units::zero(), lp.clone()]);
        Ok(lp)
    }

    /// Mints `amount` of `token` plus the counterpart at the current ratio.
    pub fn mint_matching(
        &mut self,
        frag: &mut Fragment,
        txs: &mut TxSeq,
        ts: u64,
        who: AccountAddress,
        token: &AccountAddress,
        amount: Units,
    ) -> Result<Units, AmmError> {
        let side = self.side_of(token);
        let r_side = self.state.reserve(side).clone();
        let r_other = self.state.reserve(1 - side).clone();
        if r_side.is_zero() {
            return Err(AmmError::NoLiquidity);
        }
        let other = amount.mul_div_floor(&r_other, &r_side)?;
        let mut amounts = [Units::zero(), Units::zero()];
        amounts[side] = amount;
        amounts[1 - side] = other;
        self.mint(frag, txs, ts, who, amounts)
    }

    pub fn burn(
        &mut self,
        frag: &mut Fragment,
        txs: &mut TxSeq,
        ts: u64,
        who: AccountAddress,
        lp: Units,
    ) -> Result<[Units; 2], AmmError> {
        let (o0, o1) = self.state.apply_burn(who, &lp)?;
        let legs = vec![
            Leg { side: 0, from: self.address, to: who, amount: o0.clone() },
            Leg { side: 1, from: self.address, to: who, amount: o1.clone() },
        ];
        self.emit(frag, txs, ts, who, EventKind::Burn, legs,
            [Units::zero(), Units::zero(), o0.clone(), o1.clone(), lp]);
        Ok([o0, o1])
    }

    /// Burns the provider's whole LP balance.
    pub fn burn_all(
        &mut self,
        frag: &mut Fragment,
        txs: &mut TxSeq,
        ts: u64,
        who: AccountAddress,
    ) -> Result<[Units; 2], AmmError> {
        let lp = self.state.lp_balance(&who);
        self.burn(frag, txs, ts, who, lp)
    }

    /// Swaps `amount_in` of `token_in`. With `fee`, the output leg is split:
    /// the given fraction goes to the fee address in the same transaction.
    #[allow(clippy::too_many_arguments)]
    pub fn swap(
        &mut self,
        frag: &mut Fragment,
        txs: &mut TxSeq,
        ts: u64,
        who: AccountAddress,
        token_in: &AccountAddress,
        amount_in: Units,
        fee: Option<(AccountAddress, f64)>,
    ) -> Result<Units, AmmError> {
        let side = self.side_of(token_in);
        let out = self
            .state
            .apply_swap(SwapSide::from_input_side(side), &amount_in)?;
        let mut legs = vec![Leg { side, from: who, to: self.address, amount: amount_in.clone() }];
        match fee {
            Some((collector, fraction)) if fraction > 0.0 => {
                let ppm = (fraction * 1e6).round() as u64;
                let cut = out.mul_div_floor(&Units::from(ppm), &Units::from(1_000_000u64))?;
                let rest = out.checked_sub(&cut)?;
                legs.push(Leg { side: 1 - side, from: self.address, to: who, amount: rest });
                if !cut.is_zero() {
                    legs.push(Leg { side: 1 - side, from: self.address, to: collector, amount: cut });
                }
            }
            _ => legs.push(Leg { side: 1 - side, from: self.address, to: who, amount: out.clone() }),
        }
        let mut amounts = [Units::zero(), Units::zero(), Units::zero(), Units::zero(), Units::zero()];
        amounts[side] = amount_in;
        amounts[2 + (1 - side)] = out.clone();
        self.emit(frag, txs, ts, who, EventKind::Swap, legs, amounts);
        Ok(out)
    }
}
