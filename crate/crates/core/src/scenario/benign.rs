use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};

use super::ids::{benign_name, derive_address, units_of, TxSeq};
use super::sim::{Fragment, PoolSim};
use super::{rng_for, GenEnv, GenError, MarketConfig, STREAM_BENIGN};
use crate::model::{well_known, AccountAddress, TokenInfo, Units};

/// Cap on events per benign pool.
const MAX_EVENTS: usize = 1_500;

/// A benign token and the pools it trades in.
#[derive(Clone, Debug)]
pub struct BenignPlan {
    pub index: usize,
    pub token: AccountAddress,
    pub name: String,
    pub symbol: String,
    pub decimals: u8,
    pub creator: AccountAddress,
    /// Supplies the first liquidity; differs from `creator` for deployer-made tokens.
    pub minter: AccountAddress,
    pub created: u64,
    pub active_until: u64,
    pub pairs: Vec<AccountAddress>,
    pub abandoned: bool,
    /// The project shuts down: its minter withdraws everything at the end.
    pub wind_down: bool,
}

impl BenignPlan {
    pub fn new(
        index: usize,
        deployer: Option<AccountAddress>,
        cfg: &MarketConfig,
        env: &GenEnv,
    ) -> Self {
        let seed = env.seed;
        let mut rng = rng_for(seed, STREAM_BENIGN + 2 * index as u64);
        let (name, symbol) = benign_name(index);
        // Some creators launch more than one token.
        let own = derive_address(&format!("{seed}/benign-creator/{}", index * 3 / 4));
        let (creator, minter) = match deployer {
            Some(d) => (d, derive_address(&format!("{seed}/benign-project/{index}"))),
            None => (own, own),
        };
        let created = rng.random_range(cfg.start_time..cfg.end_time - 20 * 86_400);
        let active_until = if rng.random::<f64>() < 0.7 {
            cfg.end_time - rng.random_range(0..86_400)
        } else {
            rng.random_range(created + 20 * 86_400..cfg.end_time)
        };
        let pick = |rng: &mut ChaCha8Rng| match rng.random::<f64>() {
            x if x < 0.75 => well_known::weth(),
            x if x < 0.85 => well_known::usdt(),
            x if x < 0.95 => well_known::usdc(),
            _ => well_known::dai(),
        };
        let mut pairs = vec![pick(&mut rng)];
        if rng.random::<f64>() < 0.1 {
            let second = pick(&mut rng);
            if second != pairs[0] {
                pairs.push(second);
            }
        }
        BenignPlan {
            index,
            token: derive_address(&format!("{seed}/benign-token/{index}")),
            name,
            symbol,
            decimals: if rng.random::<f64>() < 0.85 { 18 } else { 9 },
            creator,
            minter,
            created,
            active_until,
            pairs,
            abandoned: rng.random::<f64>() < cfg.abandoned_fraction,
            wind_down: rng.random::<f64>() < cfg.wind_down_fraction,
        }
    }
}

/// Runs organic activity for every pool of one benign token.
pub fn run_benign(p: &BenignPlan, env: &GenEnv, cfg: &MarketConfig) -> Result<Fragment, GenError> {
    let seed = env.seed;
    let mut rng = rng_for(seed, STREAM_BENIGN + 2 * p.index as u64 + 1);
    let mut f = Fragment::default();
    f.tokens.push(TokenInfo {
        address: p.token,
        name: p.name.clone(),
        symbol: p.symbol.clone(),
        decimals: p.decimals,
        creator: p.creator,
        creation_time: p.created,
    });
    for (k, valuable) in p.pairs.iter().enumerate() {
        let pool = derive_address(&format!("{seed}/pool/{}/{valuable}", p.token));
        let mut txs = TxSeq::new(format!("{seed}/benign/{}/{k}", p.index));
        let first = p.created + rng.random_range(60..3_600) + k as u64 * 86_400;
        let eth_to_v = env.eth_usd / env.usd(valuable);
        let v = LogNormal::new(20f64.ln(), 1.0).expect("valid").sample(&mut rng) * eth_to_v;
        let t = 10f64.powf(rng.random_range(4.0..9.0)).round();
        let events = if p.abandoned {
            0
        } else {
            let z: f64 = Normal::new(2.6, 1.1).expect("valid").sample(&mut rng);
            (z.exp().ceil() as usize).clamp(1, MAX_EVENTS)
        };
        let end = p.active_until.max(first + 3_600);
        let activity = Activity {
            pool,
            token: p.token,
            valuable: *valuable,
            minter: p.minter,
            first,
            end,
            initial: (units_of(t, p.decimals), units_of(v, env.decimals(valuable))),
            events,
            wind_down: p.wind_down,
        };
        activity.run(&mut f, &mut txs, &mut rng, env, cfg)?;
    }
    Ok(f)
}

/// Deep WETH/stablecoin pools that keep trading all through the horizon.
pub fn run_backbone(env: &GenEnv, cfg: &MarketConfig) -> Result<Fragment, GenError> {
    let seed = env.seed;
    let mut rng = rng_for(seed, STREAM_BENIGN - 1);
    let mut f = Fragment::default();
    for stable in [well_known::usdt(), well_known::usdc(), well_known::dai()] {
        let pool = derive_address(&format!("{seed}/pool/{}/{stable}", well_known::weth()));
        let mut txs = TxSeq::new(format!("{seed}/backbone/{stable}"));
        let eth = 20_000.0;
        let activity = Activity {
            pool,
            token: well_known::weth(),
            valuable: stable,
            minter: derive_address(&format!("{seed}/backbone-lp/{stable}")),
            first: cfg.start_time - 3_000,
            end: cfg.end_time - 60,
            initial: (
                units_of(eth, 18),
                units_of(eth * env.eth_usd, env.decimals(&stable)),
            ),
            events: cfg.backbone_events,
            wind_down: false,
        };
        activity.run(&mut f, &mut txs, &mut rng, env, cfg)?;
    }
    Ok(f)
}

struct Activity {
    pool: AccountAddress,
    token: AccountAddress,
    valuable: AccountAddress,
    minter: AccountAddress,
    first: u64,
    end: u64,
    initial: (Units, Units),
    events: usize,
    wind_down: bool,
}

impl Activity {
    fn run(
        &self,
        f: &mut Fragment,
        txs: &mut TxSeq,
        rng: &mut ChaCha8Rng,
        env: &GenEnv,
        cfg: &MarketConfig,
    ) -> Result<(), GenError> {
        let mut sim = PoolSim::new(self.pool, self.token, self.valuable);
        let tside = sim.side_of(&self.token);
        let mut amounts = [Units::zero(), Units::zero()];
        amounts[tside] = self.initial.0.clone();
        amounts[1 - tside] = self.initial.1.clone();
        sim.mint(f, txs, self.first, self.minter, amounts)?;

        let span = (self.end - self.first) as f64;
        let gap = Exp::new(self.events.max(1) as f64 / span).expect("positive rate");
        let mut ts = self.first;
        let mut minter_burns = 0;
        for _ in 0..self.events {
            ts += (gap.sample(rng).ceil() as u64).max(1);
            if ts >= self.end {
                break;
            }
            let r: f64 = rng.random();
            let who = env.retail(rng.random_range(0..cfg.retail_population.max(1)));
            // Engine rejections (dust, drained side) just skip the action.
            let _ = if r < 0.82 {
                let side = if rng.random::<bool>() { tside } else { 1 - tside };
                let frac = rng.random_range(0.0005..0.03);
                let amount = scale(sim.state.reserve(side), frac);
                let token_in = sim.tokens[side];
                sim.swap(f, txs, ts, who, &token_in, amount, None).map(|_| ())
            } else if r < 0.93 {
                let frac = rng.random_range(0.005..0.1);
                let amount = scale(sim.state.reserve(1 - tside), frac);
                sim.mint_matching(f, txs, ts, who, &self.valuable, amount).map(|_| ())
            } else {
                let holders: Vec<(AccountAddress, Units)> = sim
                    .state
                    .lp_balances()
                    .iter()
                    .map(|(a, b)| (*a, b.clone()))
                    .collect();
                let (holder, bal) = holders[rng.random_range(0..holders.len())].clone();
                if holder == self.minter {
                    // The project never pulls most of its own liquidity.
                    if minter_burns >= 3 {
                        continue;
                    }
                    minter_burns += 1;
                    let lp = scale(&bal, rng.random_range(0.02..0.2));
                    sim.burn(f, txs, ts, holder, lp).map(|_| ())
                } else {
                    let lp = scale(&bal, rng.random_range(0.3..1.0));
                    sim.burn(f, txs, ts, holder, lp).map(|_| ())
                }
            };
        }
        if self.wind_down {
            sim.burn_all(f, txs, self.end, self.minter)?;
        }
        f.pools.push(sim.info().expect("pool was minted"));
        Ok(())
    }
}

fn scale(x: &Units, frac: f64) -> Units {
    let ppm = (frac * 1e6).round() as u64;
    x.mul_div_floor(&Units::from(ppm), &Units::from(1_000_000u64))
        .expect("bounded")
}
