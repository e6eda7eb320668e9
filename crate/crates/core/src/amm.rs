//! Exact constant-product pool state machine with Uniswap V2 semantics.
//!
//! All outputs are floored to whole base units, so results may sit up to one
//! unit below the real-valued formulas. The optional protocol fee and the
//! minimum-liquidity lock on the first mint are not modelled.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AccountAddress, AmountError, Units};

pub const FEE_NUMERATOR: u32 = 997;
pub const FEE_DENOMINATOR: u32 = 1000;

/// Relative tolerance on the deposit ratio of a non-initial mint.
pub const MINT_RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmmError {
    #[error("both deposit amounts must be positive")]
    InvalidLiquidity,
    #[error("deposit ratio deviates from the pool ratio by {relative_error}")]
    RatioMismatch { relative_error: String },
    #[error("provider holds {held} LP units, cannot burn {requested}")]
    InsufficientLp { held: Units, requested: Units },
    #[error("pool has no liquidity")]
    NoLiquidity,
    #[error("swap output floors to zero")]
    DustSwap,
    #[error("burn output floors to zero on at least one side")]
    DustBurn,
    #[error("input amount must be positive")]
    InvalidInput,
    #[error(transparent)]
    Amount(#[from] AmountError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwapSide {
    /// Pay token0, receive token1.
    ZeroForOne,
    /// Pay token1, receive token0.
    OneForZero,
}

impl SwapSide {
    pub fn from_input_side(side: usize) -> Self {
        if side == 0 {
            SwapSide::ZeroForOne
        } else {
            SwapSide::OneForZero
        }
    }

    pub fn input_side(&self) -> usize {
        match self {
            SwapSide::ZeroForOne => 0,
            SwapSide::OneForZero => 1,
        }
    }
}

/// Reserves, LP supply and per-provider LP balances of one pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolState {
    reserve0: Units,
    reserve1: Units,
    lp_total_supply: Units,
    fee_numerator: u32,
    fee_denominator: u32,
    lp_balances: BTreeMap<AccountAddress, Units>,
}

impl Default for PoolState {
    fn default() -> Self {
        Self::new()
    }
}

impl PoolState {
    pub fn new() -> Self {
        Self {
            reserve0: Units::zero(),
            reserve1: Units::zero(),
            lp_total_supply: Units::zero(),
            fee_numerator: FEE_NUMERATOR,
            fee_denominator: FEE_DENOMINATOR,
            lp_balances: BTreeMap::new(),
        }
    }

    pub fn reserve0(&self) -> &Units {
        &self.reserve0
    }

    pub fn reserve1(&self) -> &Units {
        &self.reserve1
    }

    pub fn reserve(&self, side: usize) -> &Units {
        if side == 0 {
            &self.reserve0
        } else {
            &self.reserve1
        }
    }

    pub fn lp_total_supply(&self) -> &Units {
        &self.lp_total_supply
    }

    pub fn lp_balance(&self, who: &AccountAddress) -> Units {
        self.lp_balances.get(who).cloned().unwrap_or_default()
    }

    pub fn lp_balances(&self) -> &BTreeMap<AccountAddress, Units> {
        &self.lp_balances
    }

    /// `reserve0 * reserve1`, unbounded.
    pub fn k(&self) -> BigUint {
        self.reserve0.as_big() * self.reserve1.as_big()
    }

    pub fn is_empty(&self) -> bool {
        self.lp_total_supply.is_zero()
    }

    /// LP units a deposit would mint, without touching state.
    pub fn quote_mint(&self, in0: &Units, in1: &Units) -> Result<Units, AmmError> {
        if in0.is_zero() || in1.is_zero() {
            return Err(AmmError::InvalidLiquidity);
        }
        if self.lp_total_supply.is_zero() {
            let minted = in0.checked_mul(in1)?.isqrt();
            if minted.is_zero() {
                return Err(AmmError::InvalidLiquidity);
            }
            return Ok(minted);
        }
        if self.reserve0.is_zero() || self.reserve1.is_zero() {
            return Err(AmmError::NoLiquidity);
        }
        // |in0/r0 - in1/r1| relative to the larger side, cross-multiplied.
        let lhs = in0.as_big() * self.reserve1.as_big();
        let rhs = in1.as_big() * self.reserve0.as_big();
        let (hi, lo) = if lhs >= rhs { (&lhs, &rhs) } else { (&rhs, &lhs) };
        let diff = hi - lo;
        if diff * BigUint::from(1_000_000_000u64) > *hi {
            let rel = (hi - lo).to_f64().unwrap_or(f64::INFINITY) / hi.to_f64().unwrap_or(1.0);
            return Err(AmmError::RatioMismatch {
                relative_error: format!("{rel:e}"),
            });
        }
        let minted = self.lp_total_supply.mul_div_floor(in0, &self.reserve0)?;
        if minted.is_zero() {
            return Err(AmmError::InvalidLiquidity);
        }
        Ok(minted)
    }

    /// Deposits both tokens and credits the provider with LP units. State is
    /// unchanged on error.
    pub fn apply_mint(
        &mut self,
        provider: AccountAddress,
        in0: &Units,
        in1: &Units,
    ) -> Result<Units, AmmError> {
        let minted = self.quote_mint(in0, in1)?;
        let r0 = self.reserve0.checked_add(in0)?;
        let r1 = self.reserve1.checked_add(in1)?;
        let supply = self.lp_total_supply.checked_add(&minted)?;
        let balance = self.lp_balance(&provider).checked_add(&minted)?;
        self.reserve0 = r0;
        self.reserve1 = r1;
        self.lp_total_supply = supply;
        self.lp_balances.insert(provider, balance);
        Ok(minted)
    }

    /// Token amounts returned for burning `lp` units, without touching state.
    pub fn quote_burn(&self, lp: &Units) -> Result<(Units, Units), AmmError> {
        if lp.is_zero() {
            return Err(AmmError::InvalidInput);
        }
        if self.lp_total_supply.is_zero() {
            return Err(AmmError::NoLiquidity);
        }
        if lp > &self.lp_total_supply {
            return Err(AmmError::InsufficientLp {
                held: self.lp_total_supply.clone(),
                requested: lp.clone(),
            });
        }
        let out0 = self.reserve0.mul_div_floor(lp, &self.lp_total_supply)?;
        let out1 = self.reserve1.mul_div_floor(lp, &self.lp_total_supply)?;
        if out0.is_zero() || out1.is_zero() {
            return Err(AmmError::DustBurn);
        }
        Ok((out0, out1))
    }

    pub fn apply_burn(
        &mut self,
        provider: AccountAddress,
        lp: &Units,
    ) -> Result<(Units, Units), AmmError> {
        let held = self.lp_balance(&provider);
        if lp > &held {
            return Err(AmmError::InsufficientLp {
                held,
                requested: lp.clone(),
            });
        }
        let (out0, out1) = self.quote_burn(lp)?;
        self.reserve0 = self.reserve0.checked_sub(&out0)?;
        self.reserve1 = self.reserve1.checked_sub(&out1)?;
        self.lp_total_supply = self.lp_total_supply.checked_sub(lp)?;
        let remaining = held.checked_sub(lp)?;
        if remaining.is_zero() {
            self.lp_balances.remove(&provider);
        } else {
            self.lp_balances.insert(provider, remaining);
        }
        Ok((out0, out1))
    }

    /// `floor(r_out * in * 997 / (r_in * 1000 + in * 997))`.
    pub fn quote_swap(&self, side: SwapSide, amount_in: &Units) -> Result<Units, AmmError> {
        if amount_in.is_zero() {
            return Err(AmmError::InvalidInput);
        }
        let (r_in, r_out) = match side {
            SwapSide::ZeroForOne => (&self.reserve0, &self.reserve1),
            SwapSide::OneForZero => (&self.reserve1, &self.reserve0),
        };
        if r_in.is_zero() || r_out.is_zero() {
            return Err(AmmError::NoLiquidity);
        }
        let in_with_fee = amount_in.as_big() * BigUint::from(self.fee_numerator);
        let numerator = r_out.as_big() * &in_with_fee;
        let denominator = r_in.as_big() * BigUint::from(self.fee_denominator) + in_with_fee;
        let out = Units::from_big(numerator / denominator)?;
        if out.is_zero() {
            return Err(AmmError::DustSwap);
        }
        Ok(out)
    }

    pub fn apply_swap(&mut self, side: SwapSide, amount_in: &Units) -> Result<Units, AmmError> {
        let out = self.quote_swap(side, amount_in)?;
        match side {
            SwapSide::ZeroForOne => {
                let r0 = self.reserve0.checked_add(amount_in)?;
                self.reserve1 = self.reserve1.checked_sub(&out)?;
                self.reserve0 = r0;
            }
            SwapSide::OneForZero => {
                let r1 = self.reserve1.checked_add(amount_in)?;
                self.reserve0 = self.reserve0.checked_sub(&out)?;
                self.reserve1 = r1;
            }
        }
        Ok(out)
    }

    /// Pure mint: returns the successor state and the LP units minted.
    pub fn mint(
        &self,
        provider: AccountAddress,
        in0: &Units,
        in1: &Units,
    ) -> Result<(PoolState, Units), AmmError> {
        let mut next = self.clone();
        let minted = next.apply_mint(provider, in0, in1)?;
        Ok((next, minted))
    }

    /// Pure burn: returns the successor state and both token outputs.
    pub fn burn(
        &self,
        provider: AccountAddress,
        lp: &Units,
    ) -> Result<(PoolState, Units, Units), AmmError> {
        let mut next = self.clone();
        let (out0, out1) = next.apply_burn(provider, lp)?;
        Ok((next, out0, out1))
    }

    /// Pure swap: returns the successor state and the output amount.
    pub fn swap(&self, side: SwapSide, amount_in: &Units) -> Result<(PoolState, Units), AmmError> {
        let mut next = self.clone();
        let out = next.apply_swap(side, amount_in)?;
        Ok((next, out))
    }

    /// Relative rise of the bought token's marginal price (measured in the
    /// sold token) caused by a hypothetical swap.
    pub fn price_impact(&self, side: SwapSide, amount_in: &Units) -> Result<f64, AmmError> {
        let out = self.quote_swap(side, amount_in)?;
        let (r_in, r_out) = match side {
            SwapSide::ZeroForOne => (&self.reserve0, &self.reserve1),
            SwapSide::OneForZero => (&self.reserve1, &self.reserve0),
        };
        let r_in_after = r_in.as_big() + amount_in.as_big();
        let r_out_after = r_out.as_big() - out.as_big();
        // (r_in'/r_out') / (r_in/r_out) - 1, with an exact numerator
        let after = &r_in_after * r_out.as_big();
        let before = r_in.as_big() * &r_out_after;
        if before.is_zero() {
            return Ok(f64::INFINITY);
        }
        let diff = after - &before;
        Ok(ratio_f64(&diff, &before))
    }
}

/// `a / b` as f64 without overflowing on huge operands.
fn ratio_f64(a: &BigUint, b: &BigUint) -> f64 {
    let shift = b.bits().saturating_sub(900);
    let a = (a >> shift).to_f64().unwrap_or(f64::INFINITY);
    let b = (b >> shift).to_f64().unwrap_or(f64::INFINITY);
    a / b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e18(v: u64) -> Units {
        Units::whole(v, 18)
    }

    fn addr(b: u8) -> AccountAddress {
        AccountAddress::from_bytes([b; 20])
    }

    fn pool_100_1000() -> PoolState {
        let (p, _) = PoolState::new().mint(addr(1), &e18(100), &e18(1000)).unwrap();
        p
    }

    #[test]
    fn first_mint_is_sqrt_of_product() {
        // 70 ETH + 500k tokens
        let (p, lp) = PoolState::new().mint(addr(1), &e18(70), &e18(500_000)).unwrap();
        assert!((lp.to_whole_f64(18) - 35_000_000f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.lp_balance(&addr(1)), lp);
        let (_, one) = PoolState::new()
            .mint(addr(1), &Units::from(1u64), &Units::from(1u64))
            .unwrap();
        assert_eq!(one, Units::from(1u64));
    }

    #[test]
    fn subsequent_mint_is_proportional() {
        let p = pool_100_1000();
        assert_eq!(p.lp_total_supply().to_string(), "316227766016837933199");
        let (_, lp) = p.mint(addr(2), &e18(10), &e18(100)).unwrap();
        assert_eq!(lp.to_string(), "31622776601683793319");
        assert!((lp.to_whole_f64(18) - 31.622776).abs() < 1e-6);
    }

    #[test]
    fn mint_rejects_bad_inputs() {
        let p = pool_100_1000();
        assert_eq!(p.mint(addr(2), &Units::zero(), &e18(1)).unwrap_err(), AmmError::InvalidLiquidity);
        assert!(matches!(
            p.mint(addr(2), &e18(10), &e18(101)).unwrap_err(),
            AmmError::RatioMismatch { .. }
        ));
    }

    #[test]
    fn burn_is_proportional() {
        let p = pool_100_1000();
        let tenth = p.lp_total_supply().mul_div_floor(&Units::from(1u64), &Units::from(10u64)).unwrap();
        let (_, out0, out1) = p.burn(addr(1), &tenth).unwrap();
        assert!(out0.abs_diff(&e18(10)) <= Units::from(10u64));
        assert!(out1.abs_diff(&e18(100)) <= Units::from(10u64));
        assert!((out0.to_whole_f64(18) - 10.0).abs() < 1e-12);

        let all = p.lp_total_supply().clone();
        let (drained, out0, out1) = p.burn(addr(1), &all).unwrap();
        assert_eq!((out0, out1), (e18(100), e18(1000)));
        assert!(drained.reserve0().is_zero() && drained.reserve1().is_zero());
        assert!(drained.lp_balances().is_empty());

        let too_much = all.checked_add(&Units::from(1u64)).unwrap();
        assert!(matches!(p.burn(addr(1), &too_much), Err(AmmError::InsufficientLp { .. })));
        assert!(matches!(p.burn(addr(9), &Units::from(1u64)), Err(AmmError::InsufficientLp { .. })));
    }

    #[test]
    fn swap_matches_closed_form() {
        let p = pool_100_1000();
        let (after, out) = p.swap(SwapSide::ZeroForOne, &e18(10)).unwrap();
        // 1000 * 9.97 / 109.97
        let expected = 1000.0 * 9.97 / 109.97;
        assert!((out.to_whole_f64(18) - expected).abs() < 1e-12);
        assert!((out.to_whole_f64(18) - 90.6611).abs() < 1e-4);
        assert_eq!(after.lp_total_supply(), p.lp_total_supply());
        assert!(after.k() > p.k());
        assert_eq!(p.swap(SwapSide::ZeroForOne, &Units::zero()).unwrap_err(), AmmError::InvalidInput);
        assert_eq!(
            PoolState::new().swap(SwapSide::OneForZero, &e18(1)).unwrap_err(),
            AmmError::NoLiquidity
        );
        assert_eq!(p.swap(SwapSide::OneForZero, &Units::from(1u64)).unwrap_err(), AmmError::DustSwap);
    }

    #[test]
    fn round_trip_swap_loses_to_fee() {
        let p = pool_100_1000();
        let (mid, out) = p.swap(SwapSide::ZeroForOne, &e18(10)).unwrap();
        let (_, back) = mid.swap(SwapSide::OneForZero, &out).unwrap();
        assert!(back < e18(10));
    }

    #[test]
    fn price_impact_examples() {
        let p = pool_100_1000();
        let impact = p.price_impact(SwapSide::ZeroForOne, &e18(10)).unwrap();
        assert!((impact - 0.2097).abs() < 1e-4, "{impact}");

        let tiny = p.price_impact(SwapSide::ZeroForOne, &Units::from(1_000_000u64)).unwrap();
        assert!((0.0..1e-12).contains(&tiny));

        let (doubled, _) = PoolState::new().mint(addr(1), &e18(200), &e18(2000)).unwrap();
        let d = doubled.price_impact(SwapSide::ZeroForOne, &e18(20)).unwrap();
        assert!((d - impact).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn k_never_decreases_and_lp_is_conserved(
            r0 in 1_000_000u64..1_000_000_000_000,
            r1 in 1_000_000u64..1_000_000_000_000,
            ops in proptest::collection::vec((0u8..4, 1u64..1_000_000_000, any::<bool>()), 1..40),
        ) {
            let mut p = PoolState::new();
            p.apply_mint(addr(1), &Units::from(r0), &Units::from(r1)).unwrap();
            for (op, amount, flag) in ops {
                let before = p.k();
                match op {
                    0 | 1 => {
                        let side = if flag { SwapSide::ZeroForOne } else { SwapSide::OneForZero };
                        if p.apply_swap(side, &Units::from(amount)).is_ok() {
                            prop_assert!(p.k() > before);
                        }
                    }
                    2 => {
                        let in0 = Units::from(amount);
                        let in1 = if p.is_empty() {
                            Units::from(amount)
                        } else {
                            in0.mul_div_floor(p.reserve1(), p.reserve0()).unwrap()
                        };
                        let who = addr(if flag { 2 } else { 3 });
                        let _ = p.apply_mint(who, &in0, &in1);
                    }
                    _ => {
                        let who = addr(if flag { 1 } else { 2 });
                        let held = p.lp_balance(&who);
                        let lp = held.mul_div_floor(&Units::from(amount % 100 + 1), &Units::from(100u64)).unwrap();
                        let _ = p.apply_burn(who, &lp);
                    }
                }
                let total = p.lp_balances().values().fold(Units::zero(), |acc, v| acc.checked_add(v).unwrap());
                prop_assert_eq!(&total, p.lp_total_supply());
            }
        }

        #[test]
        fn mint_then_burn_loses_at_most_one_unit(
            r0 in 1_000u64..1_000_000_000_000,
            r1 in 1_000u64..1_000_000_000_000,
            scale in 1u64..1000,
        ) {
            let mut p = PoolState::new();
            p.apply_mint(addr(1), &Units::from(r0), &Units::from(r1)).unwrap();
            let in0 = Units::from(r0).mul_div_floor(&Units::from(scale), &Units::from(100u64)).unwrap();
            let in1 = in0.mul_div_floor(p.reserve1(), p.reserve0()).unwrap();
            if let Ok(lp) = p.apply_mint(addr(2), &in0, &in1) {
                if let Ok((o0, o1)) = p.apply_burn(addr(2), &lp) {
                    prop_assert!(o0 <= in0 && o1 <= in1);
                    // flooring inside the mint quote can cost one LP unit,
                    // which is worth about r/l base units per side
                    let slack0 = Units::from(r0 / p.lp_total_supply().to_f64().max(1.0) as u64 + 2);
                    let slack1 = Units::from(r1 / p.lp_total_supply().to_f64().max(1.0) as u64 + 2);
                    prop_assert!(in0.abs_diff(&o0) <= slack0);
                    prop_assert!(in1.abs_diff(&o1) <= slack1);
                }
            }
        }
    }
}
