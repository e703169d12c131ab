//! Exogenous market path: mid-price, order arrivals and the fill draws that
//! decide which arrivals reach the agent's quotes.
//!
//! Order flow is independent of the agent, so a whole path can be drawn up front
//! from the market stream. Methods evaluated on the same seed then face the same
//! prices, arrivals and per-arrival uniforms (common random numbers).

use rand::Rng;
use rand_distr::StandardNormal;

use super::fbm::FgnSampler;
use super::hawkes::{simulate_hawkes_step, HawkesState};
use super::MarketParams;
use crate::{rng, Result};

/// One Euler step of the jump-diffusion mid-price:
/// `s·(1 + μ dt + σ dB_H)`, then `·e^J` if a jump fired, floored at `1e-6·s0`.
pub fn step_price(s_prev: f64, params: &MarketParams, db: f64, jump: Option<f64>) -> f64 {
    let mut s = s_prev * (1.0 + params.mu * params.dt + params.sigma * db);
    if let Some(j) = jump {
        s *= j.exp();
    }
    s.max(params.price_floor())
}

/// Per-arrival fill probability `exp(-κ δ)` for a quote `δ ≥ 0` away from mid.
pub fn fill_probability(spread: f64, fill_decay: f64) -> f64 {
    (-fill_decay * spread.max(0.0)).exp()
}

/// Counts arrivals whose uniform draw falls below the fill probability.
/// Wider quotes can only lose fills for the same draws.
pub fn count_fills(uniforms: &[f64], spread: f64, fill_decay: f64) -> u32 {
    let p = fill_probability(spread, fill_decay);
    uniforms.iter().filter(|&&u| u < p).count() as u32
}

/// Fills against quotes `(δ^b, δ^a)`: market buys lift the ask, market sells hit
/// the bid. Returns `(bid_fills, ask_fills)`.
pub fn apply_fills<R: Rng + ?Sized>(
    quotes: (f64, f64),
    n_buy: u32,
    n_sell: u32,
    params: &MarketParams,
    rng: &mut R,
) -> (u32, u32) {
    let buys: Vec<f64> = (0..n_buy).map(|_| rng.random()).collect();
    let sells: Vec<f64> = (0..n_sell).map(|_| rng.random()).collect();
    (
        count_fills(&sells, quotes.0, params.fill_decay),
        count_fills(&buys, quotes.1, params.fill_decay),
    )
}

/// Everything exogenous about one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketPath {
    /// `S_0..S_T`
    pub mids: Vec<f64>,
    /// Market-buy arrivals during step `t`.
    pub buys: Vec<u32>,
    /// Market-sell arrivals during step `t`.
    pub sells: Vec<u32>,
    /// `(λ_a, λ_b)` at the start of each step, `T + 1` entries.
    pub intensities: Vec<(f64, f64)>,
    /// Whether a price jump fired during step `t`.
    pub jumps: Vec<bool>,
    /// Uniform fill draws for market buys, concatenated over steps.
    pub buy_draws: Vec<f64>,
    /// Uniform fill draws for market sells, concatenated over steps.
    pub sell_draws: Vec<f64>,
    buy_offsets: Vec<usize>,
    sell_offsets: Vec<usize>,
}

impl MarketPath {
    /// Draws a path from the market stream of `seed`.
    pub fn generate(params: &MarketParams, sampler: &FgnSampler, seed: u64) -> Self {
        let mut rng = rng::market(seed);
        let t_steps = params.horizon_steps;
        let db = sampler.increments(&mut rng, params.dt);

        let mut mids = Vec::with_capacity(t_steps + 1);
        let mut buys = Vec::with_capacity(t_steps);
        let mut sells = Vec::with_capacity(t_steps);
        let mut intensities = Vec::with_capacity(t_steps + 1);
        let mut jumps = Vec::with_capacity(t_steps);
        let mut buy_draws = Vec::new();
        let mut sell_draws = Vec::new();
        let mut buy_offsets = vec![0];
        let mut sell_offsets = vec![0];

        let jump_prob = params.jump_intensity * params.dt;
        let mut hawkes = HawkesState::stationary(&params.hawkes, 0.0);
        let mut s = params.s0;
        mids.push(s);
        intensities.push(hawkes.intensities(&params.hawkes, 0.0));
        for &d in db.iter().take(t_steps) {
            let (nb, ns, next) = simulate_hawkes_step(&hawkes, &params.hawkes, params.dt, &mut rng);
            hawkes = next;
            for _ in 0..nb {
                buy_draws.push(rng.random::<f64>());
            }
            for _ in 0..ns {
                sell_draws.push(rng.random::<f64>());
            }
            buy_offsets.push(buy_draws.len());
            sell_offsets.push(sell_draws.len());

            let fired = rng.random::<f64>() < jump_prob;
            let jump = fired.then(|| {
                params.jump_mean + params.jump_std * rng.sample::<f64, _>(StandardNormal)
            });
            s = step_price(s, params, d, jump);

            buys.push(nb);
            sells.push(ns);
            jumps.push(fired);
            mids.push(s);
            intensities.push(hawkes.intensities(&params.hawkes, hawkes.last_update));
        }
        Self {
            mids,
            buys,
            sells,
            intensities,
            jumps,
            buy_draws,
            sell_draws,
            buy_offsets,
            sell_offsets,
        }
    }

    /// Builds a path from explicit values. Each inner vector of `buy_draws` /
    /// `sell_draws` holds the fill uniforms of one step (its length is the
    /// arrival count).
    pub fn scripted(
        mids: Vec<f64>,
        buy_draws: Vec<Vec<f64>>,
        sell_draws: Vec<Vec<f64>>,
        intensities: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let t = buy_draws.len();
        if mids.len() != t + 1 || sell_draws.len() != t || intensities.len() != t + 1 {
            return Err(crate::error::invalid(
                "scripted path needs T+1 mids/intensities and T arrival vectors",
            ));
        }
        let mut path = Self {
            buys: buy_draws.iter().map(|v| v.len() as u32).collect(),
            sells: sell_draws.iter().map(|v| v.len() as u32).collect(),
            jumps: vec![false; t],
            mids,
            intensities,
            buy_draws: Vec::new(),
            sell_draws: Vec::new(),
            buy_offsets: vec![0],
            sell_offsets: vec![0],
        };
        for (b, s) in buy_draws.into_iter().zip(sell_draws) {
            path.buy_draws.extend(b);
            path.sell_draws.extend(s);
            path.buy_offsets.push(path.buy_draws.len());
            path.sell_offsets.push(path.sell_draws.len());
        }
        Ok(path)
    }

    pub fn steps(&self) -> usize {
        self.buys.len()
    }

    pub fn buy_draws_at(&self, t: usize) -> &[f64] {
        &self.buy_draws[self.buy_offsets[t]..self.buy_offsets[t + 1]]
    }

    pub fn sell_draws_at(&self, t: usize) -> &[f64] {
        &self.sell_draws[self.sell_offsets[t]..self.sell_offsets[t + 1]]
    }

    /// `(bid_fills, ask_fills)` in step `t` for quotes `(δ^b, δ^a)`.
    pub fn fills_at(&self, t: usize, quotes: (f64, f64), fill_decay: f64) -> (u32, u32) {
        (
            count_fills(self.sell_draws_at(t), quotes.0, fill_decay),
            count_fills(self.buy_draws_at(t), quotes.1, fill_decay),
        )
    }
}
