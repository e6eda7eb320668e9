use std::collections::BTreeSet;

use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::ids::{derive_address, units_of, TxSeq};
use super::sim::{Fragment, PoolSim};
use super::{CampaignKind, GenEnv, GenError, LedgerEntry, MarketConfig, NamingMode};
use crate::model::{well_known, AccountAddress, Asset, EventKind, TokenAmount, TokenInfo, Units};

/// The four money-flow shapes of collusion addresses.
/// A fee scheme has to recur to be recognisable, so these campaigns always
/// draw at least this many victims.
pub const ADVANCE_FEE_MIN_VICTIMS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CollusionPattern {
    /// Receives valuable tokens from a scammer, then mints.
    FundThenMint,
    /// Burns, then sends the proceeds to a scammer.
    BurnThenRemit,
    /// Receives valuable tokens from a scammer, then buys the scam token.
    FundThenPump,
    /// Sells scam tokens after the price rose, then remits to a scammer.
    DumpThenRemit,
}

impl CollusionPattern {
    pub fn rule(&self) -> &'static str {
        match self {
            CollusionPattern::FundThenMint => "collusion-r1",
            CollusionPattern::BurnThenRemit => "collusion-r2",
            CollusionPattern::FundThenPump => "collusion-r3",
            CollusionPattern::DumpThenRemit => "collusion-r4",
        }
    }
}

/// One planted collusion address.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CollusionPlant {
    pub pool: AccountAddress,
    pub address: AccountAddress,
    pub pattern: CollusionPattern,
    /// Funded by another collusion address rather than by the scammer, so it
    /// is only reachable on a second detection iteration.
    pub two_hop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondRound {
    /// Seconds between the first drain and the re-mint.
    pub gap: u64,
    pub lifetime: u64,
    pub liquidity: (Units, Units),
    pub offsets: Vec<u64>,
}

/// Absolute times are unix seconds; offsets are relative to the round's mint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub token_created: u64,
    pub first_mint: u64,
    /// First mint to drain.
    pub lifetime: u64,
    /// Sorted, distinct, all in `(0, lifetime)`.
    pub offsets: Vec<u64>,
    /// Gaps between successive post-drain actions.
    pub after_drain: Vec<u64>,
    pub second_round: Option<SecondRound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollusionCast {
    pub c1: AccountAddress,
    pub c2: AccountAddress,
    pub c3: AccountAddress,
    pub c4: AccountAddress,
    pub c5: Option<AccountAddress>,
    /// Valuable amounts (whole units) for C1 and C2 mints, C3's buy and C5's mint.
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v5: f64,
    /// Scam tokens handed to C4 (whole units).
    pub c4_tokens: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignScript {
    pub index: usize,
    pub kind: CampaignKind,
    pub scammer: AccountAddress,
    pub scammer_group: usize,
    pub token_creator: AccountAddress,
    pub token: AccountAddress,
    pub pool: AccountAddress,
    pub naming: NamingMode,
    pub name: String,
    pub symbol: String,
    pub decimals: u8,
    pub valuable: AccountAddress,
    /// (scam token, valuable token).
    pub initial_liquidity: (TokenAmount, TokenAmount),
    pub victims: Vec<AccountAddress>,
    /// Valuable amount each victim pays in, whole units.
    pub victim_buys: Vec<f64>,
    pub pump_buys: Vec<f64>,
    pub timing: Timing,
    pub advance_fee: Option<(AccountAddress, f64)>,
    pub collusion: Option<CollusionCast>,
    pub rng_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    PumpBuy(usize),
    Victim(usize),
    Dump,
    C4Receive,
    C1FundValuable,
    C1FundTokens,
    C1Mint,
    C2FundValuable,
    C2FundTokens,
    C2Mint,
    C3Fund,
    C3Buy,
    C3FundC5Valuable,
    C3FundC5Tokens,
    C5Mint,
    C4Sell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PostStep {
    C1Burn,
    C2Burn,
    C2Remit,
    C5Burn,
    C4Remit,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn lognormal(rng: &mut ChaCha8Rng, median: f64, sigma: f64) -> f64 {
    LogNormal::new(median.ln(), sigma)
        .expect("valid")
        .sample(rng)
}

/// `count` sorted distinct offsets in `[1, span - 1]`.
fn offsets(rng: &mut ChaCha8Rng, span: u64, count: usize) -> Vec<u64> {
    let room = span.saturating_sub(1) as usize;
    assert!(room >= count, "lifetime too short for scripted steps");
    let mut v: Vec<u64> = rand::seq::index::sample(rng, room, count)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect();
    v.sort_unstable();
    v
}

impl CampaignScript {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn draw(
        index: usize,
        kind: CampaignKind,
        scammer: AccountAddress,
        scammer_group: usize,
        token_creator: AccountAddress,
        naming: NamingMode,
        name: String,
        symbol: String,
        bucket: u8,
        two_hop: bool,
        cfg: &MarketConfig,
        env: &GenEnv,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let seed = env.seed;
        let token = derive_address(&format!("{seed}/scam-token/{index}"));
        let valuable = match rng.random::<f64>() {
            x if x < 0.80 => well_known::weth(),
            x if x < 0.87 => well_known::usdt(),
            x if x < 0.94 => well_known::usdc(),
            _ => well_known::dai(),
        };
        let pool = derive_address(&format!("{seed}/pool/{token}/{valuable}"));
        let decimals = if rng.random::<f64>() < 0.8 { 18 } else { 9 };
        let vdec = env.decimals(&valuable);
        // Valuable amounts are drawn in ETH and converted.
        let eth_to_v = env.eth_usd / env.usd(&valuable);
        let liquidity = |rng: &mut ChaCha8Rng| {
            let v = lognormal(rng, 15.0, 0.8).clamp(1.0, 150.0) * eth_to_v;
            let t = 10f64.powf(rng.random_range(4.0..9.0)).round();
            (units_of(t, decimals), units_of(v, vdec))
        };
        let (lt, lv) = liquidity(rng);

        let victim_count = if cfg.victim_mean <= 0.0 {
            0
        } else if cfg.victim_mean >= 1.0 {
            let extra = cfg.victim_mean - 1.0;
            1 + if extra > 0.0 {
                Poisson::new(extra).expect("positive").sample(rng) as usize
            } else {
                0
            }
        } else {
            (Poisson::new(cfg.victim_mean).expect("positive").sample(rng) as usize).max(1)
        }
        .max(if kind == CampaignKind::AdvanceFee { ADVANCE_FEE_MIN_VICTIMS } else { 0 })
        .min(40)
        .min(cfg.retail_population);
        let mut victims: Vec<AccountAddress> =
            rand::seq::index::sample(rng, cfg.retail_population.max(1), victim_count)
                .into_iter()
                .map(|i| env.retail(i))
                .collect();
        victims.sort();
        let victim_buys: Vec<f64> = (0..victim_count)
            .map(|_| lognormal(rng, 0.5, 0.9).clamp(0.01, 30.0) * eth_to_v)
            .collect();
        let pump_buys: Vec<f64> = if kind == CampaignKind::PumpAndDumpRugPull {
            (0..rng.random_range(2..=4))
                .map(|_| lognormal(rng, 2.0, 0.5) * eth_to_v)
                .collect()
        } else {
            Vec::new()
        };

        let lifetime = match bucket {
            0 => rng.random_range(600..3_600),
            1 => log_uniform(rng, 3_600.0, 86_399.0) as u64,
            _ => log_uniform(rng, 86_400.0, 20.0 * 86_400.0) as u64,
        };
        let first_mint =
            rng.random_range(cfg.start_time + 10 * 86_400..cfg.end_time - 25 * 86_400);
        let token_created = first_mint - rng.random_range(60..1_800);

        let collusion = (kind == CampaignKind::CollusionRugPull).then(|| {
            let role = |r: &str| derive_address(&format!("{seed}/campaign/{index}/{r}"));
            CollusionCast {
                c1: role("c1"),
                c2: role("c2"),
                c3: role("c3"),
                c4: role("c4"),
                c5: two_hop.then(|| role("c5")),
                v1: lognormal(rng, 3.0, 0.4) * eth_to_v,
                v2: lognormal(rng, 3.0, 0.4) * eth_to_v,
                v3: lognormal(rng, 2.0, 0.4) * eth_to_v,
                v5: lognormal(rng, 1.5, 0.4) * eth_to_v,
                c4_tokens: 750.0,
            }
        });
        let advance_fee = (kind == CampaignKind::AdvanceFee && cfg.advance_fee_fraction > 0.0)
            .then(|| {
                (
                    derive_address(&format!("{seed}/campaign/{index}/fee-collector")),
                    cfg.advance_fee_fraction,
                )
            });

        let mut script = CampaignScript {
            index,
            kind,
            scammer,
            scammer_group,
            token_creator,
            token,
            pool,
            naming,
            name,
            symbol,
            decimals,
            valuable,
            initial_liquidity: (
                TokenAmount::new(lt, decimals).expect("decimals in range"),
                TokenAmount::new(lv, vdec).expect("decimals in range"),
            ),
            victims,
            victim_buys,
            pump_buys,
            timing: Timing {
                token_created,
                first_mint,
                lifetime,
                offsets: Vec::new(),
                after_drain: Vec::new(),
                second_round: None,
            },
            advance_fee,
            collusion,
            rng_seed: seed,
        };
        let n1 = script.round1_steps().len();
        script.timing.offsets = offsets(rng, lifetime, n1);
        script.timing.after_drain = script
            .post_steps()
            .iter()
            .map(|_| rng.random_range(5..600))
            .collect();
        if kind == CampaignKind::SecondRoundRugPull {
            let life2 = rng.random_range(1_800..21_600);
            let n2 = script.round2_victims().len();
            script.timing.second_round = Some(SecondRound {
                gap: rng.random_range(240..900),
                lifetime: life2,
                liquidity: liquidity(rng),
                offsets: offsets(rng, life2, n2),
            });
        }
        script
    }

    fn round1_victims(&self) -> std::ops::Range<usize> {
        if self.kind == CampaignKind::SecondRoundRugPull {
            0..self.victims.len().div_ceil(2)
        } else {
            0..self.victims.len()
        }
    }

    fn round2_victims(&self) -> std::ops::Range<usize> {
        self.round1_victims().end..self.victims.len()
    }

    fn round1_steps(&self) -> Vec<Step> {
        let mut steps: Vec<Step> = (0..self.pump_buys.len()).map(Step::PumpBuy).collect();
        if let Some(c) = &self.collusion {
            steps.extend([
                Step::C4Receive,
                Step::C1FundValuable,
                Step::C1FundTokens,
                Step::C1Mint,
                Step::C2FundValuable,
                Step::C2FundTokens,
                Step::C2Mint,
                Step::C3Fund,
                Step::C3Buy,
            ]);
            if c.c5.is_some() {
                steps.extend([Step::C3FundC5Valuable, Step::C3FundC5Tokens, Step::C5Mint]);
            }
        }
        steps.extend(self.round1_victims().map(Step::Victim));
        if self.collusion.is_some() {
            steps.push(Step::C4Sell);
        }
        if !self.pump_buys.is_empty() {
            steps.push(Step::Dump);
        }
        steps
    }

    fn post_steps(&self) -> Vec<PostStep> {
        match &self.collusion {
            None => Vec::new(),
            Some(c) => {
                let mut v = vec![PostStep::C1Burn, PostStep::C2Burn, PostStep::C2Remit];
                if c.c5.is_some() {
                    v.push(PostStep::C5Burn);
                }
                v.push(PostStep::C4Remit);
                v
            }
        }
    }

    /// Collusion addresses with the pattern each one exhibits.
    pub fn collusion_roles(&self) -> Vec<(AccountAddress, CollusionPattern)> {
        match &self.collusion {
            None => Vec::new(),
            Some(c) => {
                let mut v = vec![
                    (c.c1, CollusionPattern::FundThenMint),
                    (c.c2, CollusionPattern::BurnThenRemit),
                    (c.c3, CollusionPattern::FundThenPump),
                    (c.c4, CollusionPattern::DumpThenRemit),
                ];
                if let Some(c5) = c.c5 {
                    v.push((c5, CollusionPattern::FundThenMint));
                }
                v
            }
        }
    }

    /// Addresses controlled by the scammer that act on the pool.
    pub fn scam_addresses(&self) -> BTreeSet<AccountAddress> {
        let mut s: BTreeSet<_> = self.collusion_roles().into_iter().map(|(a, _)| a).collect();
        s.insert(self.scammer);
        s
    }

    /// True when every scripted time is strictly increasing and scammer and
    /// victim sets are disjoint.
    pub fn is_consistent(&self) -> bool {
        let t = &self.timing;
        let inc = |v: &[u64], span: u64| {
            v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&o| o > 0 && o < span)
        };
        let scam = self.scam_addresses();
        t.token_created < t.first_mint
            && inc(&t.offsets, t.lifetime)
            && t.after_drain.iter().all(|&g| g > 0)
            && t.second_round.as_ref().is_none_or(|r| r.gap > 0 && inc(&r.offsets, r.lifetime))
            && self.victims.iter().all(|v| !scam.contains(v))
    }
}

/// Events, transfers and ledger entry for one campaign.
#[derive(Clone, Debug)]
pub struct CampaignOutput {
    pub fragment: Fragment,
    pub ledger: LedgerEntry,
    pub plants: Vec<CollusionPlant>,
}

/// Collusion campaigns only; every pattern is planted once, plus the two-hop
/// chain when the script asks for it.
pub fn script_collusion(script: &CampaignScript, env: &GenEnv) -> Result<CampaignOutput, GenError> {
    if script.kind != CampaignKind::CollusionRugPull || script.collusion.is_none() {
        return Err(GenError::Config("script_collusion needs a collusion campaign".into()));
    }
    script_campaign(script, env)
}

/// Advance-fee campaigns only. A fraction of zero yields no companion
/// transfers.
pub fn script_advance_fee(script: &CampaignScript, env: &GenEnv) -> Result<CampaignOutput, GenError> {
    if let Some((_, f)) = script.advance_fee {
        if !(0.0..1.0).contains(&f) {
            return Err(GenError::Config("advance fee fraction must lie in [0, 1)".into()));
        }
    }
    script_campaign(script, env)
}

/// Runs any campaign script through the engine.
pub fn script_campaign(s: &CampaignScript, env: &GenEnv) -> Result<CampaignOutput, GenError> {
    let seed = env.seed;
    let mut f = Fragment::default();
    let mut txs = TxSeq::new(format!("{seed}/campaign/{}", s.index));
    f.tokens.push(TokenInfo {
        address: s.token,
        name: s.name.clone(),
        symbol: s.symbol.clone(),
        decimals: s.decimals,
        creator: s.token_creator,
        creation_time: s.timing.token_created,
    });
    let vdec = env.decimals(&s.valuable);
    let valuable_asset = Asset::Token(s.valuable);
    let token_asset = Asset::Token(s.token);
    // Remittances in ETH when the pool pairs with WETH.
    let remit_asset = if s.valuable == well_known::weth() {
        Asset::Eth
    } else {
        valuable_asset
    };
    let mut sim = PoolSim::new(s.pool, s.token, s.valuable);
    let tside = sim.side_of(&s.token);
    let vside = 1 - tside;
    let by_side = |t: Units, v: Units| {
        let mut a = [Units::zero(), Units::zero()];
        a[tside] = t;
        a[vside] = v;
        a
    };
    let fee = s.advance_fee;
    let tok = |x: f64| units_of(x, s.decimals);
    let val = |x: f64| units_of(x, vdec);
    // Tokens to hand a collusion minter: comfortably above what its mint needs.
    let ratio = s.initial_liquidity.0.to_whole_f64() / s.initial_liquidity.1.to_whole_f64();

    let t0 = s.timing.first_mint;
    sim.mint(
        &mut f,
        &mut txs,
        t0,
        s.scammer,
        by_side(
            s.initial_liquidity.0.base_units().clone(),
            s.initial_liquidity.1.base_units().clone(),
        ),
    )?;

    let mut pumped = Units::zero();
    let mut c4_proceeds = Units::zero();
    let mut c2_out = Units::zero();
    for (step, off) in s.round1_steps().into_iter().zip(&s.timing.offsets) {
        let ts = t0 + off;
        let c = s.collusion.as_ref();
        match step {
            Step::PumpBuy(k) => {
                let out = sim.swap(&mut f, &mut txs, ts, s.scammer, &s.valuable, val(s.pump_buys[k]), None)?;
                pumped = pumped.checked_add(&out).map_err(crate::amm::AmmError::from)?;
            }
            Step::Victim(k) => {
                sim.swap(&mut f, &mut txs, ts, s.victims[k], &s.valuable, val(s.victim_buys[k]), fee)?;
            }
            Step::Dump => {
                sim.swap(&mut f, &mut txs, ts, s.scammer, &s.token, pumped.clone(), None)?;
            }
            Step::C4Receive => {
                let c = c.expect("collusion cast");
                f.transfer(&mut txs, ts, token_asset, s.scammer, c.c4, tok(c.c4_tokens));
            }
            Step::C1FundValuable => {
                let c = c.expect("collusion cast");
                f.transfer(&mut txs, ts, valuable_asset, s.scammer, c.c1, val(c.v1));
            }
            Step::C1FundTokens => {
                let c = c.expect("collusion cast");
                f.transfer(&mut txs, ts, token_asset, s.scammer, c.c1, tok(c.v1 * ratio * 2.0));
            }
            Step::C1Mint => {
                let c = c.expect("collusion cast");
                sim.mint_matching(&mut f, &mut txs, ts, c.c1, &s.valuable, val(c.v1))?;
            }
            Step::C2FundValuable => {
                let c = c.expect("collusion cast");
                f.transfer(&mut txs, ts, valuable_asset, env.cex, c.c2, val(c.v2));
            }
            Step::C2FundTokens => {
                let c = c.expect("collusion cast");
                f.transfer(&mut txs, ts, token_asset, s.scammer, c.c2, tok(c.v2 * ratio * 2.0));
            }
            Step::C2Mint => {
                let c = c.expect("collusion cast");
                sim.mint_matching(&mut f, &mut txs, ts, c.c2, &s.valuable, val(c.v2))?;
            }
            Step::C3Fund => {
                let c = c.expect("collusion cast");
                let total = c.v3 + if c.c5.is_some() { c.v5 } else { 0.0 };
                f.transfer(&mut txs, ts, valuable_asset, s.scammer, c.c3, val(total));
            }
            Step::C3Buy => {
                let c = c.expect("collusion cast");
                sim.swap(&mut f, &mut txs, ts, c.c3, &s.valuable, val(c.v3), None)?;
            }
            Step::C3FundC5Valuable => {
                let c = c.expect("collusion cast");
                let c5 = c.c5.expect("two-hop");
                f.transfer(&mut txs, ts, valuable_asset, c.c3, c5, val(c.v5));
            }
            Step::C3FundC5Tokens => {
                let c = c.expect("collusion cast");
                let c5 = c.c5.expect("two-hop");
                f.transfer(&mut txs, ts, token_asset, c.c3, c5, tok(c.v5 * ratio * 2.0));
            }
            Step::C5Mint => {
                let c = c.expect("collusion cast");
                let c5 = c.c5.expect("two-hop");
                sim.mint_matching(&mut f, &mut txs, ts, c5, &s.valuable, val(c.v5))?;
            }
            Step::C4Sell => {
                let c = c.expect("collusion cast");
                c4_proceeds = sim.swap(&mut f, &mut txs, ts, c.c4, &s.token, tok(c.c4_tokens), None)?;
            }
        }
    }

    let drain = t0 + s.timing.lifetime;
    sim.burn_all(&mut f, &mut txs, drain, s.scammer)?;

    let mut ts = drain;
    for (step, gap) in s.post_steps().into_iter().zip(&s.timing.after_drain) {
        ts += gap;
        let c = s.collusion.as_ref().expect("collusion cast");
        match step {
            PostStep::C1Burn => {
                sim.burn_all(&mut f, &mut txs, ts, c.c1)?;
            }
            PostStep::C2Burn => {
                c2_out = sim.burn_all(&mut f, &mut txs, ts, c.c2)?[vside].clone();
            }
            PostStep::C2Remit => {
                f.transfer(&mut txs, ts, remit_asset, c.c2, s.scammer, c2_out.clone());
            }
            PostStep::C5Burn => {
                sim.burn_all(&mut f, &mut txs, ts, c.c5.expect("two-hop"))?;
            }
            PostStep::C4Remit => {
                f.transfer(&mut txs, ts, remit_asset, c.c4, s.scammer, c4_proceeds.clone());
            }
        }
    }

    let mut rounds = 1;
    if let Some(r2) = &s.timing.second_round {
        let t1 = drain + r2.gap;
        sim.mint(&mut f, &mut txs, t1, s.scammer, by_side(r2.liquidity.0.clone(), r2.liquidity.1.clone()))?;
        for (k, off) in s.round2_victims().zip(&r2.offsets) {
            sim.swap(&mut f, &mut txs, t1 + off, s.victims[k], &s.valuable, val(s.victim_buys[k]), fee)?;
        }
        sim.burn_all(&mut f, &mut txs, t1 + r2.lifetime, s.scammer)?;
        rounds = 2;
    }

    f.pools.push(sim.info().expect("pool was minted"));

    // Ledger: net valuable flow between the pool and scam-controlled addresses.
    let scam = s.scam_addresses();
    let mut net = BigInt::from(0);
    let mut victims = BTreeSet::new();
    for e in f.events.iter().filter(|e| e.pool == s.pool) {
        if scam.contains(&e.initiator) {
            net += BigInt::from(e.amount_out(vside).as_big().clone());
            net -= BigInt::from(e.amount_in(vside).as_big().clone());
        } else {
            victims.insert(e.initiator);
        }
        debug_assert!(e.kind != EventKind::Mint || scam.contains(&e.initiator));
    }
    let profit_usd = big_to_f64(&net) / 10f64.powi(vdec as i32) * env.usd(&s.valuable);
    let mut scam_addresses: Vec<_> = scam.iter().copied().collect();
    if let Some((fee_addr, _)) = s.advance_fee {
        scam_addresses.push(fee_addr);
    }
    let plants = s
        .collusion_roles()
        .into_iter()
        .map(|(address, pattern)| CollusionPlant {
            pool: s.pool,
            address,
            pattern,
            two_hop: s.collusion.as_ref().and_then(|c| c.c5) == Some(address),
        })
        .collect();
    Ok(CampaignOutput {
        ledger: LedgerEntry {
            pool: s.pool,
            token: s.token,
            kind: s.kind,
            valuable: s.valuable,
            net_valuable: net.to_string(),
            profit_usd,
            rug_interval: s.timing.lifetime,
            rounds,
            scam_addresses,
            victims: victims.into_iter().collect(),
            advance_fee: s.advance_fee,
        },
        fragment: f,
        plants,
    })
}

pub(crate) fn big_to_f64(x: &BigInt) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}
