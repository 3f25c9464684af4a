//! Liquidity provider / liquidity taker market model driving an [`OrderBook`].
//!
//! Each step, every provider places a unit limit order with probability
//! `alpha` at an exponentially distributed depth behind the opposite best
//! quote. Every taker sends a unit market order with probability `mu`, buying
//! with probability `q`, and cancels a random resting order with probability
//! `delta`. `q` follows a mean-reverting walk around 0.5 and widens the
//! placement depth when it strays.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::{LimitOrder, MidPrice, OrderBook, OrderId, Price, Side};
use crate::bounds::Bounds;
use crate::seed::{derive_seed, rng_from};
use crate::series::MidPriceSeries;

pub const PARAM_COUNT: usize = 6;
pub const PARAM_NAMES: [&str; PARAM_COUNT] = ["alpha", "mu", "delta", "delta_s", "lambda0", "c_lambda"];

/// Synthetic-data ranges for `[alpha, mu, delta, delta_s, lambda0, c_lambda]`.
pub const SYNTHETIC_RANGES: [(f64, f64); PARAM_COUNT] =
    [(0.05, 0.20), (0.0, 0.05), (0.0, 0.05), (0.0, 0.005), (50.0, 300.0), (1.0, 50.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgpsParams {
    /// Limit order submission probability per provider per step.
    pub alpha: f64,
    /// Market order submission probability per taker per step.
    pub mu: f64,
    /// Cancellation probability per taker per step.
    pub delta: f64,
    /// Step of the taker buy-probability walk.
    pub delta_s: f64,
    /// Base order placement depth.
    pub lambda0: f64,
    /// Depth sensitivity to taker imbalance.
    pub c_lambda: f64,
}

impl PgpsParams {
    pub fn from_slice(w: &[f64]) -> Result<Self> {
        if w.len() != PARAM_COUNT {
            return Err(Error::InvalidParameter(format!("expected {PARAM_COUNT} values, got {}", w.len())));
        }
        Ok(PgpsParams { alpha: w[0], mu: w[1], delta: w[2], delta_s: w[3], lambda0: w[4], c_lambda: w[5] })
    }

    pub fn to_array(self) -> [f64; PARAM_COUNT] {
        [self.alpha, self.mu, self.delta, self.delta_s, self.lambda0, self.c_lambda]
    }

    pub fn synthetic_bounds() -> Bounds {
        Bounds::new(SYNTHETIC_RANGES.to_vec()).expect("static ranges are valid")
    }

    pub fn dim_index(name: &str) -> Option<usize> {
        PARAM_NAMES.iter().position(|n| *n == name)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be a probability, got {v}")))
            }
        };
        prob("alpha", self.alpha)?;
        prob("mu", self.mu)?;
        prob("delta", self.delta)?;
        if !(0.0..=0.5).contains(&self.delta_s) {
            return Err(Error::InvalidParameter(format!("delta_s must lie in [0, 0.5], got {}", self.delta_s)));
        }
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if !(self.c_lambda >= 0.0 && self.c_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("c_lambda must be non-negative, got {}", self.c_lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Agents per type.
    pub n_agents: usize,
    pub horizon: usize,
    /// Initial mid in ticks; the book opens with a bid one tick below and an ask one tick above.
    pub initial_price: Price,
    /// Walk length used to estimate the depth normalizer.
    pub msd_samples: usize,
    pub msd_floor: f64,
    /// Place asks at `p_b + 1 - offset` rather than the symmetric `p_b + 1 + offset`.
    pub ask_minus_offset: bool,
    /// Shuffle agent order each step instead of fixed index order.
    pub shuffle_agents: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 125,
            horizon: 3600,
            initial_price: 7500,
            msd_samples: 100_000,
            msd_floor: 1e-12,
            ask_minus_offset: false,
            shuffle_agents: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 1 {
            return Err(Error::InvalidConfig("n_agents must be >= 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidConfig("horizon must be >= 2".into()));
        }
        if self.msd_samples < 1 {
            return Err(Error::InvalidConfig("msd_samples must be >= 1".into()));
        }
        if self.initial_price < 2 {
            return Err(Error::InvalidConfig("initial_price must be >= 2 ticks".into()));
        }
        if !(self.msd_floor > 0.0) {
            return Err(Error::InvalidConfig("msd_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Takers' buy probability and the depth normalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TakerState {
    pub q: f64,
    pub msd: f64,
}

/// One walk step given a uniform draw `u`: approaches 0.5 when
/// `u < 0.5 + |q - 0.5|`, otherwise moves away. At exactly 0.5 "approach"
/// steps down and "away" steps up.
pub fn q_walk_step(q: f64, delta_s: f64, u: f64) -> f64 {
    let gap = q - 0.5;
    let approach = u < 0.5 + gap.abs();
    let toward = if gap > 0.0 { -1.0 } else if gap < 0.0 { 1.0 } else { -1.0 };
    let dir = if approach { toward } else { -toward };
    (q + dir * delta_s).clamp(0.0, 1.0)
}

pub fn step_q_taker<R: Rng + ?Sized>(q: f64, delta_s: f64, rng: &mut R) -> f64 {
    q_walk_step(q, delta_s, rng.gen::<f64>())
}

/// Monte-Carlo mean of `(q - 0.5)^2` along a walk of `samples` steps from 0.5,
/// floored at `floor`.
pub fn estimate_msd<R: Rng + ?Sized>(delta_s: f64, samples: usize, floor: f64, rng: &mut R) -> Result<f64> {
    if samples < 1 {
        return Err(Error::InvalidConfig("msd samples must be >= 1".into()));
    }
    if delta_s == 0.0 {
        return Ok(floor);
    }
    let mut q = 0.5;
    let mut acc = 0.0;
    for _ in 0..samples {
        q = step_q_taker(q, delta_s, rng);
        acc += (q - 0.5) * (q - 0.5);
    }
    Ok((acc / samples as f64).max(floor))
}

pub fn lambda_depth(lambda0: f64, c_lambda: f64, q: f64, msd: f64) -> Result<f64> {
    if !(msd > 0.0) {
        return Err(Error::InvalidNormalizer(msd));
    }
    Ok(lambda0 * (1.0 + (q - 0.5).abs() / msd.sqrt() * c_lambda))
}

/// Limit price from the opposite best quote and an exponential depth offset.
pub fn limit_order_price(side: Side, best_ask: Price, best_bid: Price, lambda: f64, u: f64, ask_minus_offset: bool) -> Result<Price> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidUniform(u));
    }
    let offset = (-lambda * u.ln()).floor() as Price;
    let price = match side {
        Side::Bid => best_ask.saturating_sub(1).saturating_sub(offset),
        Side::Ask if ask_minus_offset => best_bid.saturating_add(1).saturating_sub(offset),
        Side::Ask => best_bid.saturating_add(1).saturating_add(offset),
    };
    Ok(price.max(1))
}

const SENTINEL_BID: OrderId = 0;
const SENTINEL_ASK: OrderId = 1;

enum Stream {
    Providers = 1,
    Takers = 2,
    Walk = 3,
    Msd = 4,
}

struct Market {
    book: OrderBook,
    next_id: OrderId,
    last_ask: Price,
    last_bid: Price,
}

impl Market {
    fn open(initial_price: Price) -> Result<Self> {
        let mut book = OrderBook::new();
        book.submit_limit(LimitOrder::new(SENTINEL_BID, Side::Bid, initial_price - 1, 1))?;
        book.submit_limit(LimitOrder::new(SENTINEL_ASK, Side::Ask, initial_price + 1, 1))?;
        book.mid_price()?;
        Ok(Market { book, next_id: 2, last_ask: initial_price + 1, last_bid: initial_price - 1 })
    }

    /// Best quotes, falling back to the last seen level for an empty side.
    fn quotes(&mut self) -> (Price, Price) {
        if let Some(a) = self.book.best_ask() {
            self.last_ask = a;
        }
        if let Some(b) = self.book.best_bid() {
            self.last_bid = b;
        }
        (self.last_ask, self.last_bid)
    }

    fn cancellable(&self) -> usize {
        let sentinels = self.book.contains(SENTINEL_BID) as usize + self.book.contains(SENTINEL_ASK) as usize;
        self.book.len() - sentinels
    }

    fn cancel_random<R: Rng>(&mut self, rng: &mut R) {
        if self.cancellable() == 0 {
            return;
        }
        loop {
            let k = rng.gen_range(0..self.book.len());
            let id = self.book.resting_id_at(k).expect("index in range");
            if id != SENTINEL_BID && id != SENTINEL_ASK {
                self.book.cancel(id);
                return;
            }
        }
    }
}

/// Runs the model for `config.horizon` steps and records the mid-price after
/// each step. Deterministic in `(params, config, seed)`.
pub fn simulate(params: &PgpsParams, config: &SimConfig, seed: u64) -> Result<MidPriceSeries> {
    params.validate()?;
    config.validate()?;

    let mut provider_rng = rng_from(derive_seed(seed, &[Stream::Providers as u64]));
    let mut taker_rng = rng_from(derive_seed(seed, &[Stream::Takers as u64]));
    let mut walk_rng = rng_from(derive_seed(seed, &[Stream::Walk as u64]));
    let mut msd_rng = rng_from(derive_seed(seed, &[Stream::Msd as u64]));

    let msd = estimate_msd(params.delta_s, config.msd_samples, config.msd_floor, &mut msd_rng)?;
    let mut taker = TakerState { q: 0.5, msd };
    let mut market = Market::open(config.initial_price)?;

    let mut providers: Vec<usize> = (0..config.n_agents).collect();
    let mut takers = providers.clone();
    let mut values = Vec::with_capacity(config.horizon);

    for _ in 0..config.horizon {
        let lambda = lambda_depth(params.lambda0, params.c_lambda, taker.q, taker.msd)?;

        if config.shuffle_agents {
            providers.shuffle(&mut provider_rng);
        }
        for _ in &providers {
            if provider_rng.gen::<f64>() >= params.alpha {
                continue;
            }
            let side = if provider_rng.gen_bool(0.5) { Side::Bid } else { Side::Ask };
            let u: f64 = provider_rng.sample(Open01);
            let (ask, bid) = market.quotes();
            let price = limit_order_price(side, ask, bid, lambda, u, config.ask_minus_offset)?;
            let id = market.next_id;
            market.next_id += 1;
            market.book.submit_limit(LimitOrder::new(id, side, price, 1))?;
        }

        if config.shuffle_agents {
            takers.shuffle(&mut taker_rng);
        }
        for _ in &takers {
            if taker_rng.gen::<f64>() < params.mu {
                let side = if taker_rng.gen::<f64>() < taker.q { Side::Bid } else { Side::Ask };
                // an empty opposite side rejects the order; nothing to do
                market.book.submit_market(side, 1)?;
            }
        }
        for _ in &takers {
            if taker_rng.gen::<f64>() < params.delta {
                market.cancel_random(&mut taker_rng);
            }
        }

        taker.q = step_q_taker(taker.q, params.delta_s, &mut walk_rng);
        let mid: MidPrice = market.book.mid_price()?;
        values.push(mid.as_f64());
    }

    Ok(MidPriceSeries { values, seed: Some(seed), params: Some(*params) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn params() -> PgpsParams {
        PgpsParams { alpha: 0.15, mu: 0.025, delta: 0.025, delta_s: 0.0025, lambda0: 100.0, c_lambda: 10.0 }
    }

    fn short() -> SimConfig {
        SimConfig { horizon: 300, msd_samples: 10_000, ..SimConfig::default() }
    }

    #[test]
    fn walk_steps() {
        assert_relative_eq!(q_walk_step(0.5, 0.01, 0.2), 0.49);
        assert_relative_eq!(q_walk_step(0.5, 0.01, 0.7), 0.51);
        // approach probability at 0.9 is 0.9
        assert_relative_eq!(q_walk_step(0.9, 0.01, 0.85), 0.89);
        assert_relative_eq!(q_walk_step(0.9, 0.01, 0.95), 0.91);
        assert_relative_eq!(q_walk_step(0.1, 0.01, 0.5), 0.11);
        // at the edges the walk always turns back
        assert_relative_eq!(q_walk_step(1.0, 0.01, 0.9999999), 0.99);
        assert_relative_eq!(q_walk_step(0.0, 0.01, 0.9999999), 0.01);
    }

    #[test]
    fn walk_from_half_is_fair() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ups = (0..20_000).filter(|_| step_q_taker(0.5, 0.005, &mut rng) > 0.5).count();
        assert!((ups as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn msd_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(estimate_msd(0.0, 100, 1e-12, &mut rng).unwrap(), 1e-12);
        assert_relative_eq!(estimate_msd(0.005, 1, 1e-12, &mut rng).unwrap(), 0.005 * 0.005, max_relative = 1e-9);
        let a = estimate_msd(0.005, 100_000, 1e-12, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = estimate_msd(0.005, 100_000, 1e-12, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(a > 0.0);
        assert_eq!(a, b);
        assert!(estimate_msd(0.005, 0, 1e-12, &mut rng).is_err());
    }

    #[test]
    fn msd_estimates_agree() {
        let a = estimate_msd(0.005, 100_000, 1e-12, &mut rand_chacha::ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = estimate_msd(0.005, 100_000, 1e-12, &mut rand_chacha::ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert!((a - b).abs() / a.max(b) < 0.10, "{a} vs {b}");
    }

    #[test]
    fn depth_cases() {
        assert_eq!(lambda_depth(120.0, 5.0, 0.5, 0.01).unwrap(), 120.0);
        let msd: f64 = 0.0004;
        assert_relative_eq!(lambda_depth(80.0, 3.0, 0.5 + msd.sqrt(), msd).unwrap(), 80.0 * 4.0, max_relative = 1e-12);
        assert_relative_eq!(lambda_depth(100.0, 2.0, 0.6, 0.01).unwrap(), 300.0, max_relative = 1e-12);
        assert!(matches!(lambda_depth(1.0, 1.0, 0.5, 0.0), Err(Error::InvalidNormalizer(_))));
    }

    #[test]
    fn price_cases() {
        let e_inv = (-1.0f64).exp();
        assert_eq!(limit_order_price(Side::Bid, 1000, 990, 10.0, 0.99, false).unwrap(), 999);
        assert_eq!(limit_order_price(Side::Bid, 1000, 990, 10.0, e_inv, false).unwrap(), 989);
        assert_eq!(limit_order_price(Side::Ask, 1000, 990, 10.0, e_inv, false).unwrap(), 1001);
        assert_eq!(limit_order_price(Side::Ask, 1000, 990, 10.0, e_inv, true).unwrap(), 981);
        assert_eq!(limit_order_price(Side::Bid, 5, 3, 1000.0, 1e-9, false).unwrap(), 1);
        assert!(limit_order_price(Side::Bid, 5, 3, 1.0, 0.0, false).is_err());
        assert!(limit_order_price(Side::Bid, 5, 3, 1.0, 1.0, false).is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let a = simulate(&params(), &short(), 42).unwrap();
        let b = simulate(&params(), &short(), 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&params(), &short(), 43).unwrap();
        assert_ne!(a.values, c.values);
        assert_eq!(a.len(), 300);
        assert!(a.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn simulate_shuffled_is_deterministic() {
        let cfg = SimConfig { shuffle_agents: true, ..short() };
        assert_eq!(simulate(&params(), &cfg, 5).unwrap(), simulate(&params(), &cfg, 5).unwrap());
    }

    #[test]
    fn idle_market_is_flat() {
        let p = PgpsParams { alpha: 0.0, mu: 0.0, delta: 0.0, ..params() };
        let s = simulate(&p, &short(), 1).unwrap();
        assert!(s.values.iter().all(|v| *v == 7500.0));
    }

    #[test]
    fn default_horizon() {
        let s = simulate(&params(), &SimConfig { msd_samples: 1000, ..SimConfig::default() }, 0).unwrap();
        assert_eq!(s.len(), 3600);
    }

    #[test]
    fn literal_ask_formula_runs() {
        let cfg = SimConfig { ask_minus_offset: true, ..short() };
        let s = simulate(&params(), &cfg, 2).unwrap();
        assert_eq!(s.len(), 300);
        assert!(s.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn providers_only_accumulate() {
        let p = PgpsParams { mu: 0.0, delta: 0.0, ..params() };
        let cfg = SimConfig { horizon: 50, ..short() };
        let mut market = Market::open(cfg.initial_price).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut prev = market.book.len();
        for _ in 0..cfg.horizon * cfg.n_agents {
            if rng.gen::<f64>() < p.alpha {
                let side = if rng.gen_bool(0.5) { Side::Bid } else { Side::Ask };
                let (a, b) = market.quotes();
                let price = limit_order_price(side, a, b, 50.0, rng.sample(Open01), false).unwrap();
                let id = market.next_id;
                market.next_id += 1;
                let r = market.book.submit_limit(LimitOrder::new(id, side, price, 1)).unwrap();
                assert!(r.trades.is_empty());
            }
            assert!(market.book.len() >= prev);
            prev = market.book.len();
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad = PgpsParams { alpha: 1.5, ..params() };
        assert!(simulate(&bad, &short(), 0).is_err());
        assert!(simulate(&params(), &SimConfig { horizon: 1, ..short() }, 0).is_err());
        assert!(PgpsParams::from_slice(&[0.1; 5]).is_err());
    }

    proptest! {
        #[test]
        fn q_stays_in_unit_interval(seed in any::<u64>(), delta_s in 0.0f64..0.5) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut q = 0.5;
            for _ in 0..2000 {
                q = step_q_taker(q, delta_s, &mut rng);
                prop_assert!((0.0..=1.0).contains(&q));
            }
        }

        #[test]
        fn depth_never_below_base(l0 in 1.0f64..300.0, c in 0.0f64..50.0, q in 0.0f64..=1.0, msd in 1e-9f64..1.0) {
            prop_assert!(lambda_depth(l0, c, q, msd).unwrap() >= l0);
        }
    }
}
