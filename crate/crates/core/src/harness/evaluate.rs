//! Seeded evaluation of one policy on one market.

use super::metrics::{max_drawdown, mean, sharpe_ratio, sharpe_standard_error, standard_error};
use super::report::MetricsRow;
use crate::error::invalid;
use crate::rng;
use crate::simulator::{run_episodes_blocked, ChunkConfig, ChunkPolicy, EpisodeResult, MarketParams};
use crate::Result;

/// Lockstep block size for evaluation batches.
pub const EVAL_BLOCK: usize = 512;

/// Per-episode outcomes kept alongside a metrics row for paired tests.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub row: MetricsRow,
    pub objectives: Vec<f64>,
}

/// Seeds `base_seed..base_seed + n`.
pub fn trial_seeds(base_seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| base_seed + k).collect()
}

/// Summarizes finished episodes into a metrics row.
pub fn summarize(method: &str, regime: &str, base_seed: u64, episodes: &[EpisodeResult]) -> Result<Evaluation> {
    let n = episodes.len();
    if n < 2 {
        return Err(invalid("evaluation needs at least two trials"));
    }
    let objectives: Vec<f64> = episodes.iter().map(|e| e.objective).collect();
    let drawdowns = episodes
        .iter()
        .map(|e| max_drawdown(&e.pnl_series))
        .collect::<Result<Vec<f64>>>()?;
    let sr = sharpe_ratio(&objectives)?;
    let inv: Vec<f64> = episodes.iter().map(|e| e.terminal_inventory.unsigned_abs() as f64).collect();
    let fills: Vec<f64> = episodes.iter().map(|e| f64::from(e.bid_fills + e.ask_fills)).collect();
    let row = MetricsRow {
        method: method.to_string(),
        regime: regime.to_string(),
        trials: n,
        seed_start: base_seed,
        seed_end: base_seed + n as u64 - 1,
        pnl: mean(&objectives),
        pnl_se: standard_error(&objectives),
        sharpe: sr.value,
        sharpe_se: sharpe_standard_error(sr.value, n),
        mdd: mean(&drawdowns),
        mdd_se: standard_error(&drawdowns),
        abs_inventory: mean(&inv),
        fills: mean(&fills),
        degenerate: sr.degenerate,
    };
    row.validate()?;
    Ok(Evaluation { row, objectives })
}

/// Runs `n_trials` episodes on seeds `base_seed..` with the policy stream keyed by `method`.
pub fn evaluate_policy<P: ChunkPolicy + ?Sized>(
    policy: &P,
    method: &str,
    regime: &str,
    market: &MarketParams,
    chunk: ChunkConfig,
    n_trials: usize,
    base_seed: u64,
) -> Result<Evaluation> {
    if n_trials < 2 {
        return Err(invalid("evaluation needs at least two trials"));
    }
    let seeds = trial_seeds(base_seed, n_trials);
    let episodes = run_episodes_blocked(policy, market, chunk, &seeds, rng::key_of(method), EVAL_BLOCK)?;
    summarize(method, regime, base_seed, &episodes)
}
