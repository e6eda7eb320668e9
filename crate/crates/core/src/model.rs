//! Shared domain types: addresses, hashes, exact token amounts, the two
//! ingested record kinds and scam labels with provenance.
//!
//! Every type here is an immutable value after construction and is
//! `Send + Sync`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors raised while parsing identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected {expected} characters, found {found}")]
    Length { expected: usize, found: usize },
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("invalid hex character {ch:?} at byte offset {offset}")]
    InvalidHex { offset: usize, ch: char },
    #[error("invalid decimal amount {0:?}")]
    InvalidAmount(String),
}

/// Errors raised by exact amount arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountError {
    #[error("amount exceeds the 256-bit range")]
    Overflow,
    #[error("subtraction underflow")]
    Underflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("decimals mismatch: {0} vs {1}")]
    DecimalsMismatch(u8, u8),
    #[error("decimals {0} outside [0, 36]")]
    DecimalsOutOfRange(u8),
}

fn parse_hex_fixed<const N: usize>(text: &str) -> Result<[u8; N], ParseError> {
    let expected = 2 + 2 * N;
    if text.len() != expected {
        return Err(ParseError::Length {
            expected,
            found: text.len(),
        });
    }
    let bytes = text.as_bytes();
    if bytes[0] != b'0' || (bytes[1] != b'x' && bytes[1] != b'X') {
        return Err(ParseError::MissingPrefix);
    }
    let mut out = [0u8; N];
    for (i, pair) in bytes[2..].chunks(2).enumerate() {
        let mut value = 0u8;
        for (j, &b) in pair.iter().enumerate() {
            let nibble = match b {
                b'0'..=b'9' => b - b'0',
                b'a'..=b'f' => b - b'a' + 10,
                b'A'..=b'F' => b - b'A' + 10,
                _ => {
                    let offset = 2 + 2 * i + j;
                    let ch = text[offset..].chars().next().unwrap_or('?');
                    return Err(ParseError::InvalidHex { offset, ch });
                }
            };
            value = (value << 4) | nibble;
        }
        out[i] = value;
    }
    Ok(out)
}

/// A 20-byte account identifier. Canonical text form is `0x` followed by 40
/// lowercase hex characters; parsing accepts any case.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AccountAddress([u8; 20]);

impl AccountAddress {
    pub const ZERO: AccountAddress = AccountAddress([0u8; 20]);

    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

/// Parses `0x`-prefixed hex of length 42 (any case) into the canonical form.
pub fn canonicalize_address(text: &str) -> Result<AccountAddress, ParseError> {
    parse_hex_fixed::<20>(text).map(AccountAddress)
}

impl FromStr for AccountAddress {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonicalize_address(s)
    }
}

impl fmt::Display for AccountAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for AccountAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for AccountAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccountAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A 32-byte transaction hash.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TxHash([u8; 32]);

impl TxHash {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }
}

impl FromStr for TxHash {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_fixed::<32>(s).map(TxHash)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for TxHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TxHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// An unsigned integer count of token base units, bounded to 256 bits.
///
/// Intermediate products inside [`Units::mul_div_floor`] are unbounded, so
/// only results have to fit the range.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Units(BigUint);

fn max_units() -> &'static BigUint {
    use std::sync::OnceLock;
    static MAX: OnceLock<BigUint> = OnceLock::new();
    MAX.get_or_init(|| (BigUint::one() << 256u32) - BigUint::one())
}

impl Units {
    pub fn zero() -> Self {
        Self(BigUint::zero())
    }

    pub fn from_big(value: BigUint) -> Result<Self, AmountError> {
        if &value > max_units() {
            Err(AmountError::Overflow)
        } else {
            Ok(Self(value))
        }
    }

    /// `whole * 10^decimals`, convenient for writing amounts in tests and
    /// generator scripts.
    pub fn whole(whole: u64, decimals: u8) -> Self {
        Self(BigUint::from(whole) * BigUint::from(10u8).pow(decimals as u32))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_big(&self) -> &BigUint {
        &self.0
    }

    pub fn checked_add(&self, other: &Units) -> Result<Units, AmountError> {
        Units::from_big(&self.0 + &other.0)
    }

    pub fn checked_sub(&self, other: &Units) -> Result<Units, AmountError> {
        if other.0 > self.0 {
            Err(AmountError::Underflow)
        } else {
            Ok(Units(&self.0 - &other.0))
        }
    }

    pub fn checked_mul(&self, other: &Units) -> Result<Units, AmountError> {
        Units::from_big(&self.0 * &other.0)
    }

    /// `floor(self * num / den)` with an exact intermediate.
    pub fn mul_div_floor(&self, num: &Units, den: &Units) -> Result<Units, AmountError> {
        if den.is_zero() {
            return Err(AmountError::DivisionByZero);
        }
        Units::from_big(&self.0 * &num.0 / &den.0)
    }

    /// Integer square root (floor).
    pub fn isqrt(&self) -> Units {
        Units(self.0.sqrt())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// Value in whole tokens.
    pub fn to_whole_f64(&self, decimals: u8) -> f64 {
        self.to_f64() / 10f64.powi(decimals as i32)
    }

    /// Absolute difference.
    pub fn abs_diff(&self, other: &Units) -> Units {
        if self.0 >= other.0 {
            Units(&self.0 - &other.0)
        } else {
            Units(&other.0 - &self.0)
        }
    }
}

impl From<u64> for Units {
    fn from(v: u64) -> Self {
        Units(BigUint::from(v))
    }
}

impl From<u128> for Units {
    fn from(v: u128) -> Self {
        Units(BigUint::from(v))
    }
}

impl FromStr for Units {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::InvalidAmount(s.to_string()));
        }
        let value = BigUint::parse_bytes(s.as_bytes(), 10)
            .ok_or_else(|| ParseError::InvalidAmount(s.to_string()))?;
        Units::from_big(value).map_err(|_| ParseError::InvalidAmount(s.to_string()))
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl Serialize for Units {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Units {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

pub const MAX_DECIMALS: u8 = 36;

/// Base units of one token together with its decimals exponent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTokenAmount")]
pub struct TokenAmount {
    base_units: Units,
    decimals: u8,
}

#[derive(Deserialize)]
struct RawTokenAmount {
    base_units: Units,
    decimals: u8,
}

impl TryFrom<RawTokenAmount> for TokenAmount {
    type Error = AmountError;

    fn try_from(raw: RawTokenAmount) -> Result<Self, AmountError> {
        TokenAmount::new(raw.base_units, raw.decimals)
    }
}

impl TokenAmount {
    pub fn new(base_units: Units, decimals: u8) -> Result<Self, AmountError> {
        if decimals > MAX_DECIMALS {
            return Err(AmountError::DecimalsOutOfRange(decimals));
        }
        Ok(Self {
            base_units,
            decimals,
        })
    }

    pub fn base_units(&self) -> &Units {
        &self.base_units
    }

    pub fn decimals(&self) -> u8 {
        self.decimals
    }

    fn same_decimals(&self, other: &TokenAmount) -> Result<(), AmountError> {
        if self.decimals != other.decimals {
            Err(AmountError::DecimalsMismatch(self.decimals, other.decimals))
        } else {
            Ok(())
        }
    }

    pub fn checked_add(&self, other: &TokenAmount) -> Result<TokenAmount, AmountError> {
        self.same_decimals(other)?;
        Ok(TokenAmount {
            base_units: self.base_units.checked_add(&other.base_units)?,
            decimals: self.decimals,
        })
    }

    pub fn checked_sub(&self, other: &TokenAmount) -> Result<TokenAmount, AmountError> {
        self.same_decimals(other)?;
        Ok(TokenAmount {
            base_units: self.base_units.checked_sub(&other.base_units)?,
            decimals: self.decimals,
        })
    }

    pub fn to_whole_f64(&self) -> f64 {
        self.base_units.to_whole_f64(self.decimals)
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.base_units.to_string();
        let d = self.decimals as usize;
        if d == 0 {
            return f.write_str(&digits);
        }
        let padded = format!("{digits:0>width$}", width = d + 1);
        let (int, frac) = padded.split_at(padded.len() - d);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            f.write_str(int)
        } else {
            write!(f, "{int}.{frac}")
        }
    }
}

/// Either native ether or an ERC-20 token contract.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Asset {
    Eth,
    Token(AccountAddress),
}

impl Asset {
    pub fn token(&self) -> Option<AccountAddress> {
        match self {
            Asset::Eth => None,
            Asset::Token(a) => Some(*a),
        }
    }
}

impl FromStr for Asset {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("eth") {
            Ok(Asset::Eth)
        } else {
            s.parse().map(Asset::Token)
        }
    }
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Asset::Eth => f.write_str("ETH"),
            Asset::Token(a) => fmt::Display::fmt(a, f),
        }
    }
}

impl Serialize for Asset {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Asset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Mainnet addresses of the tokens treated as "Ether or stable coins".
pub mod well_known {
    use super::AccountAddress;

    fn addr(text: &str) -> AccountAddress {
        text.parse().expect("well-known address literal")
    }

    pub fn weth() -> AccountAddress {
        addr("0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2")
    }

    pub fn usdt() -> AccountAddress {
        addr("0xdac17f958d2ee523a2206206994597c13d831ec7")
    }

    pub fn usdc() -> AccountAddress {
        addr("0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48")
    }

    pub fn dai() -> AccountAddress {
        addr("0x6b175474e89094c44da98b954eedeac495271d0f")
    }
}

/// The set of assets counted as valuable (ETH, WETH, USDT, USDC, DAI by
/// default).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuableTokens(BTreeSet<Asset>);

impl ValuableTokens {
    pub fn new(assets: impl IntoIterator<Item = Asset>) -> Self {
        Self(assets.into_iter().collect())
    }

    pub fn contains(&self, asset: &Asset) -> bool {
        self.0.contains(asset)
    }

    pub fn contains_token(&self, token: &AccountAddress) -> bool {
        self.0.contains(&Asset::Token(*token))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Asset> {
        self.0.iter()
    }
}

impl Default for ValuableTokens {
    fn default() -> Self {
        Self::new([
            Asset::Eth,
            Asset::Token(well_known::weth()),
            Asset::Token(well_known::usdt()),
            Asset::Token(well_known::usdc()),
            Asset::Token(well_known::dai()),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenInfo {
    pub address: AccountAddress,
    pub name: String,
    pub symbol: String,
    pub decimals: u8,
    pub creator: AccountAddress,
    pub creation_time: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolInfo {
    pub address: AccountAddress,
    pub token0: AccountAddress,
    pub token1: AccountAddress,
    /// Sender of the pool's first mint.
    pub creator: AccountAddress,
    pub creation_time: u64,
}

impl PoolInfo {
    pub fn contains(&self, token: &AccountAddress) -> bool {
        &self.token0 == token || &self.token1 == token
    }

    /// The counterpart of `token` in this pair.
    pub fn other(&self, token: &AccountAddress) -> Option<AccountAddress> {
        if &self.token0 == token {
            Some(self.token1)
        } else if &self.token1 == token {
            Some(self.token0)
        } else {
            None
        }
    }

    /// 0 or 1 for the side holding `token`.
    pub fn side_of(&self, token: &AccountAddress) -> Option<usize> {
        if &self.token0 == token {
            Some(0)
        } else if &self.token1 == token {
            Some(1)
        } else {
            None
        }
    }
}

/// Total order shared by pool events and transfers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey {
    pub timestamp: u64,
    pub tx_hash: TxHash,
    pub log_index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Mint,
    Burn,
    Swap,
}

/// Which invariant of a pool event's kind was broken.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} event violates: {reason}")]
pub struct KindViolation {
    pub kind: EventKind,
    pub reason: &'static str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolEvent {
    pub tx_hash: TxHash,
    pub log_index: u32,
    pub timestamp: u64,
    pub pool: AccountAddress,
    pub kind: EventKind,
    /// The resolved end user, never a router.
    pub initiator: AccountAddress,
    pub amount0_in: Units,
    pub amount1_in: Units,
    pub amount0_out: Units,
    pub amount1_out: Units,
    /// LP units minted or burned (magnitude); zero for swaps.
    pub lp_delta: Units,
}

impl PoolEvent {
    pub fn key(&self) -> EventKey {
        EventKey {
            timestamp: self.timestamp,
            tx_hash: self.tx_hash,
            log_index: self.log_index,
        }
    }

    pub fn amount_in(&self, side: usize) -> &Units {
        if side == 0 {
            &self.amount0_in
        } else {
            &self.amount1_in
        }
    }

    pub fn amount_out(&self, side: usize) -> &Units {
        if side == 0 {
            &self.amount0_out
        } else {
            &self.amount1_out
        }
    }

    /// For a swap, the side that was paid in.
    pub fn swap_input_side(&self) -> Option<usize> {
        if self.kind != EventKind::Swap {
            None
        } else if !self.amount0_in.is_zero() {
            Some(0)
        } else if !self.amount1_in.is_zero() {
            Some(1)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), KindViolation> {
        let v = |reason| {
            Err(KindViolation {
                kind: self.kind,
                reason,
            })
        };
        let zero_ins = self.amount0_in.is_zero() && self.amount1_in.is_zero();
        let zero_outs = self.amount0_out.is_zero() && self.amount1_out.is_zero();
        match self.kind {
            EventKind::Mint => {
                if self.amount0_in.is_zero() || self.amount1_in.is_zero() {
                    return v("mint requires both inputs > 0");
                }
                if !zero_outs {
                    return v("mint must have zero outputs");
                }
                if self.lp_delta.is_zero() {
                    return v("mint must mint LP units");
                }
            }
            EventKind::Burn => {
                if self.amount0_out.is_zero() || self.amount1_out.is_zero() {
                    return v("burn requires both outputs > 0");
                }
                if !zero_ins {
                    return v("burn must have zero inputs");
                }
                if self.lp_delta.is_zero() {
                    return v("burn must burn LP units");
                }
            }
            EventKind::Swap => {
                let in0 = !self.amount0_in.is_zero();
                let in1 = !self.amount1_in.is_zero();
                if in0 == in1 {
                    return v("swap requires exactly one input side");
                }
                let (same_out, opposite_out) = if in0 {
                    (&self.amount0_out, &self.amount1_out)
                } else {
                    (&self.amount1_out, &self.amount0_out)
                };
                if opposite_out.is_zero() || !same_out.is_zero() {
                    return v("swap output must be on the opposite side only");
                }
                if !self.lp_delta.is_zero() {
                    return v("swap must not change LP supply");
                }
            }
        }
        Ok(())
    }
}

impl PartialOrd for PoolEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PoolEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key()
            .cmp(&other.key())
            .then_with(|| self.pool.cmp(&other.pool))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferRecord {
    pub tx_hash: TxHash,
    pub log_index: u32,
    pub timestamp: u64,
    pub token: Asset,
    pub from: AccountAddress,
    pub to: AccountAddress,
    pub amount: Units,
}

impl TransferRecord {
    pub fn key(&self) -> EventKey {
        EventKey {
            timestamp: self.timestamp,
            tx_hash: self.tx_hash,
            log_index: self.log_index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    OfficialToken,
    ScamToken,
    ScamPool,
    ScamTokenCreator,
    ScamPoolCreator,
    CollusionAddress,
    ContractDeployerExcluded,
}

impl LabelKind {
    pub const ALL: [LabelKind; 7] = [
        LabelKind::OfficialToken,
        LabelKind::ScamToken,
        LabelKind::ScamPool,
        LabelKind::ScamTokenCreator,
        LabelKind::ScamPoolCreator,
        LabelKind::CollusionAddress,
        LabelKind::ContractDeployerExcluded,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::OfficialToken => "OfficialToken",
            LabelKind::ScamToken => "ScamToken",
            LabelKind::ScamPool => "ScamPool",
            LabelKind::ScamTokenCreator => "ScamTokenCreator",
            LabelKind::ScamPoolCreator => "ScamPoolCreator",
            LabelKind::CollusionAddress => "CollusionAddress",
            LabelKind::ContractDeployerExcluded => "ContractDeployerExcluded",
        }
    }
}

impl FromStr for LabelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown label kind {s:?}"))
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    GroundTruth,
    NameMatch,
    Expansion,
    MlFlagged,
    Verified,
    CollusionRule1,
    CollusionRule2,
    CollusionRule3,
    CollusionRule4,
    UserSupplied,
}

impl Provenance {
    pub const ALL: [Provenance; 10] = [
        Provenance::GroundTruth,
        Provenance::NameMatch,
        Provenance::Expansion,
        Provenance::MlFlagged,
        Provenance::Verified,
        Provenance::CollusionRule1,
        Provenance::CollusionRule2,
        Provenance::CollusionRule3,
        Provenance::CollusionRule4,
        Provenance::UserSupplied,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::GroundTruth => "GroundTruth",
            Provenance::NameMatch => "NameMatch",
            Provenance::Expansion => "Expansion",
            Provenance::MlFlagged => "MlFlagged",
            Provenance::Verified => "Verified",
            Provenance::CollusionRule1 => "CollusionRule1",
            Provenance::CollusionRule2 => "CollusionRule2",
            Provenance::CollusionRule3 => "CollusionRule3",
            Provenance::CollusionRule4 => "CollusionRule4",
            Provenance::UserSupplied => "UserSupplied",
        }
    }

    /// Labels that end an audit chain.
    pub fn is_root(&self) -> bool {
        matches!(
            self,
            Provenance::GroundTruth | Provenance::UserSupplied | Provenance::Verified
        )
    }
}

impl FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown provenance {s:?}"))
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Points at the label on another subject that triggered a derived label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelRef {
    pub subject: AccountAddress,
    pub kind: LabelKind,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Evidence {
    /// Short rule identifier, e.g. `expand-token-creator`.
    pub rule: String,
    pub source: Option<LabelRef>,
    /// Expansion pass or collusion iteration that produced the label; 0 for
    /// seeds.
    pub generation: u32,
    pub detail: String,
}

impl Evidence {
    pub fn root(rule: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            rule: rule.into(),
            source: None,
            generation: 0,
            detail: detail.into(),
        }
    }

    pub fn derived(rule: impl Into<String>, source: LabelRef, generation: u32) -> Self {
        Self {
            rule: rule.into(),
            source: Some(source),
            generation,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Compact single-field text form used in `labels_out.csv`.
    pub fn render(&self) -> String {
        let mut out = format!("{};gen={}", self.rule, self.generation);
        if let Some(src) = &self.source {
            out.push_str(&format!(";from={}:{}", src.kind, src.subject));
        }
        if !self.detail.is_empty() {
            out.push_str(";note=");
            out.push_str(&self.detail.replace([';', '\n'], " "));
        }
        out
    }

    /// Inverse of [`Evidence::render`] for details free of `;` and newlines.
    pub fn parse(text: &str) -> Result<Self, String> {
        let bad = || format!("malformed evidence {text:?}");
        let (head, detail) = match text.split_once(";note=") {
            Some((h, d)) => (h, d.to_string()),
            None => (text, String::new()),
        };
        let mut parts = head.split(';');
        let rule = parts.next().filter(|r| !r.is_empty()).ok_or_else(bad)?.to_string();
        let generation = parts
            .next()
            .and_then(|g| g.strip_prefix("gen="))
            .and_then(|g| g.parse().ok())
            .ok_or_else(bad)?;
        let source = match parts.next() {
            None => None,
            Some(f) => {
                let (kind, subject) = f.strip_prefix("from=").and_then(|f| f.split_once(':')).ok_or_else(bad)?;
                Some(LabelRef {
                    subject: subject.parse().map_err(|_| bad())?,
                    kind: kind.parse()?,
                })
            }
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self {
            rule,
            source,
            generation,
            detail,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub subject: AccountAddress,
    pub kind: LabelKind,
    pub provenance: Provenance,
    pub evidence: Evidence,
}

/// Trims, lowercases and collapses internal whitespace runs to one space.
pub fn normalize_name(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
