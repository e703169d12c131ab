//! Episode loop with action chunking.
//!
//! Every `t_exec` steps the policy receives an [`Observation`] and returns an
//! [`ActionChunk`]; the first `t_exec` rows are executed before replanning.
//! Episodes sharing a [`MarketParams`] run in lockstep so policies backed by
//! networks can evaluate a whole batch of observations at once.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fbm::FgnSampler;
use super::market::MarketPath;
use super::observation::{build_observation, StepFeatures};
use super::{ActionChunk, ChunkConfig, MarketParams, Observation};
use crate::{rng, Error, Result};

/// Anything that maps observations to action chunks.
///
/// `act` receives a batch of observations and one policy RNG per observation;
/// implementations must consume each RNG only for its own observation so
/// results do not depend on batch composition.
pub trait ChunkPolicy: Send + Sync {
    fn act(&self, obs: &[Observation], rngs: &mut [rng::Rng]) -> Result<Vec<ActionChunk>>;
}

impl<P: ChunkPolicy + ?Sized> ChunkPolicy for &P {
    fn act(&self, obs: &[Observation], rngs: &mut [rng::Rng]) -> Result<Vec<ActionChunk>> {
        (**self).act(obs, rngs)
    }
}

impl<P: ChunkPolicy + ?Sized> ChunkPolicy for Box<P> {
    fn act(&self, obs: &[Observation], rngs: &mut [rng::Rng]) -> Result<Vec<ActionChunk>> {
        (**self).act(obs, rngs)
    }
}

/// One executed step, kept when tracing is enabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub mid: f64,
    pub inventory: i64,
    pub wealth: f64,
    pub bid_spread: f64,
    pub ask_spread: f64,
    pub bid_fills: u32,
    pub ask_fills: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Mark-to-market wealth `W_0..W_T`.
    pub pnl_series: Vec<f64>,
    pub terminal_wealth: f64,
    pub terminal_inventory: i64,
    /// `W_T − φ(I_T)`.
    pub objective: f64,
    pub bid_fills: u32,
    pub ask_fills: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<StepRecord>>,
}

#[derive(Clone, Debug)]
struct EpisodeState {
    seed: u64,
    path: MarketPath,
    cash: f64,
    inventory: i64,
    wealth: Vec<f64>,
    history: Vec<StepFeatures>,
    bid_fills: u32,
    ask_fills: u32,
    trace: Option<Vec<StepRecord>>,
}

/// A batch of episodes on one market, advanced chunk by chunk.
#[derive(Debug)]
pub struct EpisodeBatch {
    params: MarketParams,
    cfg: ChunkConfig,
    episodes: Vec<EpisodeState>,
    step: usize,
}

impl EpisodeBatch {
    pub fn new(params: &MarketParams, cfg: ChunkConfig, seeds: &[u64]) -> Result<Self> {
        params.validate()?;
        let sampler = FgnSampler::new(params.hurst, params.horizon_steps)?;
        let paths = seeds
            .iter()
            .map(|&s| MarketPath::generate(params, &sampler, s))
            .collect();
        Self::from_paths(params, cfg, seeds, paths)
    }

    /// Episodes over pre-built paths (for scripted scenarios).
    pub fn from_paths(
        params: &MarketParams,
        cfg: ChunkConfig,
        seeds: &[u64],
        paths: Vec<MarketPath>,
    ) -> Result<Self> {
        cfg.validate()?;
        if seeds.len() != paths.len() {
            return Err(crate::error::invalid("one seed per path required"));
        }
        let episodes = seeds
            .iter()
            .zip(paths)
            .map(|(&seed, path)| {
                if path.steps() != params.horizon_steps {
                    return Err(Error::Dimension {
                        context: "market path length",
                        expected: params.horizon_steps,
                        got: path.steps(),
                    });
                }
                let mut history = Vec::with_capacity(params.horizon_steps + 1);
                history.push(StepFeatures {
                    log_return: 0.0,
                    inventory: 0,
                    intensity: path.intensities[0],
                    fills: (0, 0),
                });
                let mut wealth = Vec::with_capacity(params.horizon_steps + 1);
                wealth.push(0.0);
                Ok(EpisodeState {
                    seed,
                    path,
                    cash: 0.0,
                    inventory: 0,
                    wealth,
                    history,
                    bid_fills: 0,
                    ask_fills: 0,
                    trace: None,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            params: params.clone(),
            cfg,
            episodes,
            step: 0,
        })
    }

    pub fn with_trace(mut self) -> Self {
        for e in &mut self.episodes {
            e.trace = Some(Vec::with_capacity(self.params.horizon_steps));
        }
        self
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.params.horizon_steps
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.episodes.iter().map(|e| e.seed).collect()
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.episodes
            .iter()
            .map(|e| {
                build_observation(
                    &e.history,
                    self.step,
                    self.params.horizon_steps,
                    self.params.dt,
                    e.path.mids[self.step],
                    self.cfg.t_obs,
                )
            })
            .collect()
    }

    /// Executes the first `t_exec` rows of each chunk (fewer at the horizon) and
    /// returns each episode's summed shaped reward
    /// `Σ (ΔW_t − c_inv·dt·I_{t+1}²)`, minus `φ(I_T)` when the horizon is reached.
    pub fn execute(&mut self, chunks: &[ActionChunk]) -> Result<Vec<f64>> {
        if chunks.len() != self.episodes.len() {
            return Err(Error::Dimension {
                context: "chunks per batch",
                expected: self.episodes.len(),
                got: chunks.len(),
            });
        }
        for c in chunks {
            c.check_shape(self.cfg.t_pred)?;
        }
        let horizon = self.params.horizon_steps;
        let n_exec = self.cfg.t_exec.min(horizon - self.step);
        let c_inv = self.params.inventory_penalty();
        let dt = self.params.dt;
        let kappa = self.params.fill_decay;
        let mut rewards = vec![0.0; self.episodes.len()];
        for (e, (chunk, reward)) in self.episodes.iter_mut().zip(chunks.iter().zip(&mut rewards)) {
            for row in 0..n_exec {
                let t = self.step + row;
                let [db, da] = chunk.rows()[row];
                let (db, da) = (db.max(0.0), da.max(0.0));
                let mid = e.path.mids[t];
                let (bid, ask) = e.path.fills_at(t, (db, da), kappa);
                e.inventory += i64::from(bid) - i64::from(ask);
                e.cash += f64::from(ask) * (mid + da) - f64::from(bid) * (mid - db);
                e.bid_fills += bid;
                e.ask_fills += ask;
                let next_mid = e.path.mids[t + 1];
                let w = e.cash + e.inventory as f64 * next_mid;
                let inv = e.inventory as f64;
                *reward += w - e.wealth[t] - c_inv * dt * inv * inv;
                e.wealth.push(w);
                e.history.push(StepFeatures {
                    log_return: (next_mid / mid).ln(),
                    inventory: e.inventory,
                    intensity: e.path.intensities[t + 1],
                    fills: (bid, ask),
                });
                if let Some(trace) = e.trace.as_mut() {
                    trace.push(StepRecord {
                        t,
                        mid,
                        inventory: e.inventory,
                        wealth: w,
                        bid_spread: db,
                        ask_spread: da,
                        bid_fills: bid,
                        ask_fills: ask,
                    });
                }
            }
            if self.step + n_exec == horizon {
                *reward -= self.params.terminal_penalty(e.inventory);
            }
        }
        self.step += n_exec;
        Ok(rewards)
    }

    pub fn results(self) -> Vec<EpisodeResult> {
        assert!(self.is_done(), "episode batch not finished");
        let params = self.params;
        self.episodes
            .into_iter()
            .map(|e| {
                let terminal_wealth = *e.wealth.last().unwrap();
                EpisodeResult {
                    objective: terminal_wealth - params.terminal_penalty(e.inventory),
                    terminal_wealth,
                    terminal_inventory: e.inventory,
                    pnl_series: e.wealth,
                    bid_fills: e.bid_fills,
                    ask_fills: e.ask_fills,
                    seed: e.seed,
                    trace: e.trace,
                }
            })
            .collect()
    }
}

/// Drives a batch to the horizon with `policy`.
pub fn run_batch<P: ChunkPolicy + ?Sized>(
    policy: &P,
    mut batch: EpisodeBatch,
    policy_key: u64,
) -> Result<Vec<EpisodeResult>> {
    let mut rngs: Vec<rng::Rng> = batch
        .seeds()
        .into_iter()
        .map(|s| rng::policy(s, policy_key))
        .collect();
    while !batch.is_done() {
        let obs = batch.observations();
        let chunks = policy.act(&obs, &mut rngs)?;
        batch.execute(&chunks)?;
    }
    Ok(batch.results())
}

/// Runs one episode per seed, in lockstep.
pub fn run_episodes<P: ChunkPolicy + ?Sized>(
    policy: &P,
    params: &MarketParams,
    cfg: ChunkConfig,
    seeds: &[u64],
    policy_key: u64,
) -> Result<Vec<EpisodeResult>> {
    run_batch(policy, EpisodeBatch::new(params, cfg, seeds)?, policy_key)
}

/// Lockstep runs over `seeds`, split into blocks of at most `block` episodes.
pub fn run_episodes_blocked<P: ChunkPolicy + ?Sized>(
    policy: &P,
    params: &MarketParams,
    cfg: ChunkConfig,
    seeds: &[u64],
    policy_key: u64,
    block: usize,
) -> Result<Vec<EpisodeResult>> {
    let mut out = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(block.max(1)) {
        out.extend(run_episodes(policy, params, cfg, chunk, policy_key)?);
    }
    Ok(out)
}

pub fn run_episode<P: ChunkPolicy + ?Sized>(
    policy: &P,
    params: &MarketParams,
    cfg: ChunkConfig,
    seed: u64,
    policy_key: u64,
) -> Result<EpisodeResult> {
    Ok(run_episodes(policy, params, cfg, &[seed], policy_key)?.remove(0))
}

/// Writes a traced episode as CSV: `t,mid,inventory,wealth,bid_spread,ask_spread,bid_fills,ask_fills`.
pub fn write_episode_dump(result: &EpisodeResult, path: &Path) -> Result<()> {
    let trace = result
        .trace
        .as_ref()
        .ok_or_else(|| crate::error::invalid("episode was run without tracing"))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,mid,inventory,wealth,bid_spread,ask_spread,bid_fills,ask_fills")?;
    for r in trace {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.t, r.mid, r.inventory, r.wealth, r.bid_spread, r.ask_spread, r.bid_fills, r.ask_fills
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::HawkesParams;

    /// Quotes fixed spreads.
    struct Fixed(f64, f64, usize);

    impl ChunkPolicy for Fixed {
        fn act(&self, obs: &[Observation], _: &mut [rng::Rng]) -> Result<Vec<ActionChunk>> {
            Ok(obs.iter().map(|_| ActionChunk::repeat(self.0, self.1, self.2)).collect())
        }
    }

    struct WrongShape;

    impl ChunkPolicy for WrongShape {
        fn act(&self, obs: &[Observation], _: &mut [rng::Rng]) -> Result<Vec<ActionChunk>> {
            Ok(obs.iter().map(|_| ActionChunk::repeat(1.0, 1.0, 3)).collect())
        }
    }

    fn quiet_market() -> MarketParams {
        MarketParams {
            sigma: 0.0,
            jump_intensity: 0.0,
            hawkes: HawkesParams::poisson(0.0, 0.0),
            horizon_steps: 10,
            ..MarketParams::default()
        }
    }

    #[test]
    fn nothing_happens_in_a_dead_market() {
        let r = run_episode(&Fixed(0.5, 0.5, 8), &quiet_market(), ChunkConfig::default(), 1, 0).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.pnl_series.iter().all(|&w| w == 0.0));
        assert_eq!(r.pnl_series.len(), 11);
    }

    #[test]
    fn round_trip_earns_the_full_spread() {
        let p = MarketParams {
            horizon_steps: 2,
            ..quiet_market()
        };
        // step 0: one market sell hits the bid; step 1: one market buy lifts the ask
        let path = MarketPath::scripted(
            vec![100.0; 3],
            vec![vec![], vec![0.0]],
            vec![vec![0.0], vec![]],
            vec![(0.0, 0.0); 3],
        )
        .unwrap();
        let batch = EpisodeBatch::from_paths(&p, ChunkConfig::default(), &[0], vec![path]).unwrap();
        let r = run_batch(&Fixed(0.5, 0.5, 8), batch, 0).unwrap().remove(0);
        assert_eq!(r.terminal_inventory, 0);
        assert!((r.terminal_wealth - 1.0).abs() < 1e-12);
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert_eq!((r.bid_fills, r.ask_fills), (1, 1));
    }

    #[test]
    fn wrong_chunk_shape_is_rejected() {
        let err = run_episode(&WrongShape, &quiet_market(), ChunkConfig::default(), 1, 0);
        assert!(matches!(err, Err(Error::ChunkShape { .. })));
    }

    #[test]
    fn accounting_identity_and_reward_sum() {
        let p = MarketParams {
            hawkes: HawkesParams::symmetric(40.0, 0.3, 0.1, 10.0).unwrap(),
            sigma: 0.2,
            ..MarketParams::default()
        };
        let cfg = ChunkConfig::default();
        let mut batch = EpisodeBatch::new(&p, cfg, &[11, 12]).unwrap().with_trace();
        let mut total = [0.0; 2];
        while !batch.is_done() {
            let obs = batch.observations();
            let chunks = Fixed(0.4, 0.7, 8).act(&obs, &mut []).unwrap();
            let r = batch.execute(&chunks).unwrap();
            total[0] += r[0];
            total[1] += r[1];
        }
        let c = p.inventory_penalty();
        for (res, tot) in batch.results().iter().zip(total) {
            let trace = res.trace.as_ref().unwrap();
            let running: f64 = trace.iter().map(|s| c * p.dt * (s.inventory as f64).powi(2)).sum();
            assert!((tot - (res.objective - running)).abs() < 1e-8);
            let mut cash = 0.0;
            let mut inv = 0i64;
            for (k, s) in trace.iter().enumerate() {
                inv += i64::from(s.bid_fills) - i64::from(s.ask_fills);
                cash += f64::from(s.ask_fills) * (s.mid + s.ask_spread)
                    - f64::from(s.bid_fills) * (s.mid - s.bid_spread);
                let next_mid = trace.get(k + 1).map_or(f64::NAN, |n| n.mid);
                if next_mid.is_finite() {
                    assert!((res.pnl_series[k + 1] - (cash + inv as f64 * next_mid)).abs() < 1e-8);
                }
                assert_eq!(inv, s.inventory);
            }
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let p = MarketParams::default();
        let a = run_episode(&Fixed(0.6, 0.6, 8), &p, ChunkConfig::default(), 99, 5).unwrap();
        let b = run_episode(&Fixed(0.6, 0.6, 8), &p, ChunkConfig::default(), 99, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pnl_series.len(), p.horizon_steps + 1);
        assert_eq!(*a.pnl_series.last().unwrap(), a.terminal_wealth);
    }

    #[test]
    fn dump_writes_one_line_per_step() {
        let p = quiet_market();
        let batch = EpisodeBatch::new(&p, ChunkConfig::default(), &[1]).unwrap().with_trace();
        let r = run_batch(&Fixed(0.5, 0.5, 8), batch, 0).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("ep.csv");
        write_episode_dump(&r, &f).unwrap();
        let text = std::fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().count(), 11);
    }
}
