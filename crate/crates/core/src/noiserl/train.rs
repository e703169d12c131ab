use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    ppo_update, FrozenMeanFlow, IdentityDecoder, NoiseDecoder, NoisePolicy,
    NoisePolicyConfig, PpoConfig, PpoStats, RolloutBuffer,
};
use crate::curve::LearningCurve;
use crate::experts::RandomExpert;
use crate::meanflow::{MeanFlowNet, Normalizer};
use crate::net::{Adam, Parameters};
use crate::simulator::{run_episodes, ChunkConfig, EpisodeBatch, Scenario};
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    /// Rollout/update rounds.
    pub iterations: usize,
    /// Episodes per round, assigned to scenarios round-robin.
    pub episodes_per_iteration: usize,
    pub ppo: PpoConfig,
    pub policy: NoisePolicyConfig,
    /// Halt after this many consecutive rounds below the divergence threshold.
    pub divergence_patience: usize,
    /// Threshold is `b − divergence_fraction·|b|` for the first round's mean objective `b`.
    pub divergence_fraction: f64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_iteration: 64,
            ppo: PpoConfig::default(),
            policy: NoisePolicyConfig::default(),
            divergence_patience: 5,
            divergence_fraction: 0.5,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub policy: NoisePolicy<f64>,
    /// Columns: `iteration, mean_objective, policy_loss, value_loss, entropy, approx_kl, clip_fraction, mean_log_std`.
    pub curve: LearningCurve,
    /// Mean episode objective of the initial policy (first round).
    pub baseline_objective: f64,
}

const TRAIN_SALT: u64 = 0x5452_4149_4e;

/// Runs `policy` (sampling noise) through `decoder` on `seeds` and returns
/// the per-decision buffer and each episode's objective.
pub fn collect_rollouts(
    policy: &NoisePolicy<f64>,
    decoder: &dyn NoiseDecoder,
    scenario: &Scenario,
    chunk: ChunkConfig,
    seeds: &[u64],
    reward_scale: f64,
) -> Result<(RolloutBuffer, Vec<f64>)> {
    let nd = policy.noise_dim();
    let od = policy.config().obs_dim;
    let key = rng::key_of("noise-policy-rollout");
    let mut rngs: Vec<rng::Rng> = seeds.iter().map(|&s| rng::policy(s, key)).collect();
    let mut batch = EpisodeBatch::new(&scenario.market, chunk, seeds)?;
    let mut per_episode: Vec<RolloutBuffer> = seeds.iter().map(|_| RolloutBuffer::new(od, nd)).collect();
    while !batch.is_done() {
        let obs = batch.observations();
        let s = policy.normalize_states(&obs)?;
        let mean = policy.mean(s.view())?;
        let values = policy.value(s.view())?;
        let mut w = Array2::zeros((obs.len(), nd));
        let mut lps = Vec::with_capacity(obs.len());
        for (i, r) in rngs.iter_mut().enumerate() {
            let (wi, lp) = policy.sample_noise(&mean.row(i).to_vec(), r);
            w.row_mut(i).assign(&ndarray::Array1::from(wi));
            lps.push(lp);
        }
        let chunks = decoder.decode(&obs, w.view())?;
        let rewards = batch.execute(&chunks)?;
        let done = batch.is_done();
        for (i, buf) in per_episode.iter_mut().enumerate() {
            buf.push(
                &s.row(i).to_vec(),
                &w.row(i).to_vec(),
                lps[i],
                values[i],
                rewards[i] * reward_scale,
                done,
            );
        }
    }
    let objectives = batch.results().iter().map(|r| r.objective).collect();
    let mut out = RolloutBuffer::new(od, nd);
    for b in per_episode {
        out.extend(b);
    }
    Ok((out, objectives))
}

/// Alternates rollouts and PPO updates for `policy` against a fixed decoder.
pub fn train_noise_policy(
    mut policy: NoisePolicy<f64>,
    decoder: &dyn NoiseDecoder,
    scenarios: &[Scenario],
    chunk: ChunkConfig,
    cfg: &FineTuneConfig,
    seed: u64,
) -> Result<TrainOutput> {
    if scenarios.is_empty() {
        return Err(crate::error::invalid("training needs at least one scenario"));
    }
    cfg.ppo.validate()?;
    if policy.spec().decoder != decoder.info() {
        return Err(Error::Checkpoint("policy was built for a different decoder".into()));
    }
    let mut opt = Adam::new(cfg.ppo.adam.clone(), policy.num_params());
    let mut shuffle = rng::stream(seed, 0x5050_4f);
    let mut curve = LearningCurve::new(&[
        "iteration",
        "mean_objective",
        "policy_loss",
        "value_loss",
        "entropy",
        "approx_kl",
        "clip_fraction",
        "mean_log_std",
    ]);
    let mut baseline = None;
    let mut below = 0usize;
    let n_scen = scenarios.len();
    for it in 0..cfg.iterations {
        let round = rng::derive(seed ^ TRAIN_SALT, it as u64);
        let mut buffer = RolloutBuffer::new(policy.config().obs_dim, policy.noise_dim());
        let mut objectives = Vec::new();
        for (j, scenario) in scenarios.iter().enumerate() {
            let seeds: Vec<u64> = (0..cfg.episodes_per_iteration)
                .filter(|k| k % n_scen == j)
                .map(|k| rng::derive(round, k as u64))
                .collect();
            if seeds.is_empty() {
                continue;
            }
            let (b, obj) = collect_rollouts(&policy, decoder, scenario, chunk, &seeds, cfg.ppo.reward_scale)?;
            buffer.extend(b);
            objectives.extend(obj);
        }
        let mean_obj = objectives.iter().sum::<f64>() / objectives.len() as f64;
        let base = *baseline.get_or_insert(mean_obj);
        if mean_obj < base - cfg.divergence_fraction * base.abs() {
            below += 1;
            if below >= cfg.divergence_patience {
                return Err(Error::Diverged(format!(
                    "mean objective {mean_obj:.4} stayed below {:.0}% of the initial {base:.4} for {below} rounds (iteration {it})",
                    100.0 * (1.0 - cfg.divergence_fraction)
                )));
            }
        } else {
            below = 0;
        }
        buffer.compute_advantages(cfg.ppo.gamma, cfg.ppo.gae_lambda)?;
        let stats: PpoStats = ppo_update(&mut policy, &mut opt, &buffer, &cfg.ppo, &mut shuffle)?;
        let mean_log_std = policy.log_std().mean().unwrap_or(0.0);
        curve.push(vec![
            it as f64,
            mean_obj,
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.approx_kl,
            stats.clip_fraction,
            mean_log_std,
        ]);
    }
    Ok(TrainOutput {
        policy,
        curve,
        baseline_objective: baseline.unwrap_or(f64::NAN),
    })
}

/// Result of fine-tuning a frozen generator.
#[derive(Debug)]
pub struct FineTuneOutput {
    pub policy: NoisePolicy<f64>,
    pub decoder: FrozenMeanFlow,
    pub curve: LearningCurve,
    pub baseline_objective: f64,
    pub frozen_hash_before: String,
    pub frozen_hash_after: String,
}

/// Learns a noise policy for the frozen generator. The policy starts at
/// `μ ≡ 0`, `log σ = 0`, i.e. exactly the pretrained sampler.
pub fn fine_tune(frozen: MeanFlowNet<f64>, scenarios: &[Scenario], cfg: &FineTuneConfig, seed: u64) -> Result<FineTuneOutput> {
    let chunk = frozen.chunk();
    let decoder = FrozenMeanFlow::new(frozen)?;
    let before = decoder.net().param_hash();
    let pcfg = NoisePolicyConfig {
        obs_dim: chunk.obs_dim(),
        noise_dim: chunk.action_dim(),
        ..cfg.policy.clone()
    };
    let policy = NoisePolicy::new(
        pcfg,
        decoder.net().spec().state_norm.clone(),
        decoder.info(),
        &mut rng::stream(seed, 0x4e50),
    )?;
    let out = train_noise_policy(policy, &decoder, scenarios, chunk, cfg, seed)?;
    decoder.verify_unchanged()?;
    let after = decoder.net().param_hash();
    Ok(FineTuneOutput {
        policy: out.policy,
        decoder,
        curve: out.curve,
        baseline_objective: out.baseline_objective,
        frozen_hash_before: before,
        frozen_hash_after: after,
    })
}

/// Observation statistics from random-quote rollouts, used to normalize the
/// inputs of policies that have no pretrained generator.
pub fn fit_state_normalizer(scenarios: &[Scenario], chunk: ChunkConfig, episodes: usize, seed: u64) -> Result<Normalizer> {
    let random = RandomExpert::new(crate::experts::DEFAULT_MAX_SPREAD, chunk.t_pred)?;
    let mut rows = Vec::new();
    for (j, scenario) in scenarios.iter().enumerate() {
        let seeds: Vec<u64> = (0..episodes as u64).map(|k| rng::derive(seed ^ j as u64, k)).collect();
        let mut batch = EpisodeBatch::new(&scenario.market, chunk, &seeds)?;
        let mut rngs: Vec<rng::Rng> = seeds.iter().map(|&s| rng::policy(s, 1)).collect();
        while !batch.is_done() {
            let obs = batch.observations();
            let chunks = crate::simulator::ChunkPolicy::act(&random, &obs, &mut rngs)?;
            batch.execute(&chunks)?;
            rows.extend(obs.into_iter().map(|o| o.features));
        }
    }
    Normalizer::fit(rows.iter().map(Vec::as_slice), chunk.obs_dim())
}

/// Settings for the action-space PPO expert.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoExpertConfig {
    pub train: FineTuneConfig,
    pub max_spread: f64,
    /// Initial mean spread of every quote.
    pub initial_spread: f64,
    pub normalizer_episodes: usize,
}

impl Default for PpoExpertConfig {
    fn default() -> Self {
        Self {
            train: FineTuneConfig {
                policy: NoisePolicyConfig {
                    log_std_init: 0.2f64.ln(),
                    ..NoisePolicyConfig::default()
                },
                ..FineTuneConfig::default()
            },
            max_spread: 5.0,
            initial_spread: 0.7,
            normalizer_episodes: 32,
        }
    }
}

/// Trains a PPO agent directly in spread space (identity decoder).
pub fn train_ppo_expert(
    scenarios: &[Scenario],
    chunk: ChunkConfig,
    cfg: &PpoExpertConfig,
    seed: u64,
) -> Result<(NoisePolicy<f64>, IdentityDecoder, LearningCurve)> {
    let decoder = IdentityDecoder {
        t_pred: chunk.t_pred,
        max_spread: cfg.max_spread,
    };
    let norm = fit_state_normalizer(scenarios, chunk, cfg.normalizer_episodes, seed)?;
    let pcfg = NoisePolicyConfig {
        obs_dim: chunk.obs_dim(),
        noise_dim: chunk.action_dim(),
        mean_bias_init: cfg.initial_spread,
        ..cfg.train.policy.clone()
    };
    let policy = NoisePolicy::new(pcfg, norm, decoder.info(), &mut rng::stream(seed, 0x5050))?;
    let out = train_noise_policy(policy, &decoder, scenarios, chunk, &cfg.train, seed)?;
    Ok((out.policy, decoder, out.curve))
}

/// Mean objective of an agent over seeded episodes (convenience for checks).
pub fn mean_objective<P: crate::simulator::ChunkPolicy + ?Sized>(
    agent: &P,
    scenario: &Scenario,
    chunk: ChunkConfig,
    seeds: &[u64],
    key: u64,
) -> Result<f64> {
    let res = run_episodes(agent, &scenario.market, chunk, seeds, key)?;
    Ok(res.iter().map(|r| r.objective).sum::<f64>() / res.len().max(1) as f64)
}

