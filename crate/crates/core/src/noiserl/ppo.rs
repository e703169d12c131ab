use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NoisePolicy;
use crate::net::{Adam, AdamConfig, Parameters};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Rewards are multiplied by this before advantage estimation.
    pub reward_scale: f64,
    pub adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 1.0,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 1e-3,
            value_coef: 0.5,
            reward_scale: 0.1,
            adam: AdamConfig {
                clip_norm: Some(0.5),
                ..AdamConfig::default()
            },
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(crate::error::invalid("PPO clip must lie in (0,1)"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(crate::error::invalid("gamma and gae_lambda must lie in [0,1]"));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(crate::error::invalid("PPO needs at least one epoch and a nonempty minibatch"));
        }
        Ok(())
    }
}

/// Generalized advantage estimates for one trajectory. `values` holds one
/// more entry than `rewards`: the bootstrap value after the last step.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae_advantages(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(values.len(), rewards.len() + 1, "values need a bootstrap entry");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to mean 0, standard deviation 1 (population).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)A)` and its derivative in `ρ`.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// Decision-point samples of one or more complete episodes, stored episode by
/// episode.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub noise_dim: usize,
    pub states: Vec<f64>,
    pub noise: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, noise_dim: usize) -> Self {
        Self {
            obs_dim,
            noise_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, state: &[f64], noise: &[f64], log_prob: f64, value: f64, reward: f64, done: bool) {
        debug_assert_eq!(state.len(), self.obs_dim);
        debug_assert_eq!(noise.len(), self.noise_dim);
        self.states.extend_from_slice(state);
        self.noise.extend_from_slice(noise);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    /// Appends another buffer's samples.
    pub fn extend(&mut self, other: RolloutBuffer) {
        self.states.extend(other.states);
        self.noise.extend(other.noise);
        self.log_probs.extend(other.log_probs);
        self.values.extend(other.values);
        self.rewards.extend(other.rewards);
        self.dones.extend(other.dones);
    }

    /// GAE per episode (terminal value 0), then advantage normalization.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        if self.dones.last() == Some(&false) {
            return Err(crate::error::invalid("rollout buffer ends mid-episode"));
        }
        self.advantages.clear();
        self.returns.clear();
        let mut start = 0;
        for end in 0..self.len() {
            if self.dones[end] {
                let mut v = self.values[start..=end].to_vec();
                v.push(0.0);
                let (a, r) = gae_advantages(&self.rewards[start..=end], &v, gamma, lambda);
                self.advantages.extend(a);
                self.returns.extend(r);
                start = end + 1;
            }
        }
        if let Some(i) = self.advantages.iter().position(|a| !a.is_finite()) {
            return Err(Error::Diverged(format!("non-finite advantage at buffer index {i}")));
        }
        normalize_advantages(&mut self.advantages);
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate PPO epochs over a complete buffer. The loss per minibatch
/// is `−mean(surrogate) + c_v·mean((V − R)²) − c_e·H`.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut NoisePolicy<f64>,
    opt: &mut Adam<f64>,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    cfg.validate()?;
    let n = buffer.len();
    if n == 0 || buffer.advantages.len() != n {
        return Err(crate::error::invalid("PPO update needs a buffer with computed advantages"));
    }
    let (od, nd) = (buffer.obs_dim, buffer.noise_dim);
    let states = Array2::from_shape_vec((n, od), buffer.states.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Array2::from_shape_vec((n, nd), buffer.noise.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let mut params = policy.params();
    let p_mean = policy.mean_net_params();
    let mut stats = PpoStats::default();
    let mut batches = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch) {
            let m = idx.len() as f64;
            let s = states.select(Axis(0), idx);
            let w = noise.select(Axis(0), idx);
            let (mu, mcache) = policy.mean_net().forward_cached(s.view())?;
            let (v, vcache) = policy.value_net().forward_cached(s.view())?;
            let log_std = policy.log_std().to_vec();
            let sigma: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();

            let mut g_mu = Array2::zeros(mu.dim());
            let mut g_ls = vec![-cfg.entropy_coef; nd];
            let mut g_v = Array2::zeros(v.dim());
            let (mut pl, mut vl, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);
            for (row, &i) in idx.iter().enumerate() {
                let z: Vec<f64> = (0..nd).map(|j| (w[[row, j]] - mu[[row, j]]) / sigma[j]).collect();
                let lp = policy.log_prob(&mu.row(row).to_vec(), &w.row(row).to_vec());
                let log_ratio = lp - buffer.log_probs[i];
                let ratio = log_ratio.exp();
                let adv = buffer.advantages[i];
                let (surr, d_ratio) = clipped_surrogate(ratio, adv, cfg.clip);
                if !(surr.is_finite() && v[[row, 0]].is_finite()) {
                    return Err(Error::Diverged(format!(
                        "non-finite PPO loss at buffer index {i} (log-ratio {log_ratio}, value {})",
                        v[[row, 0]]
                    )));
                }
                pl -= surr / m;
                kl += (ratio - 1.0 - log_ratio) / m;
                clipped += usize::from((ratio - 1.0).abs() > cfg.clip);
                // d(−surr/m)/d logp
                let g_lp = -d_ratio * ratio / m;
                for j in 0..nd {
                    g_mu[[row, j]] = g_lp * z[j] / sigma[j];
                    g_ls[j] += g_lp * (z[j] * z[j] - 1.0);
                }
                let err = v[[row, 0]] - buffer.returns[i];
                vl += err * err / m;
                g_v[[row, 0]] = cfg.value_coef * 2.0 * err / m;
            }
            let gm = policy.mean_net().backward(&mcache, g_mu.view()).params;
            let gv = policy.value_net().backward(&vcache, g_v.view()).params;
            let mut grads = gm;
            grads.extend(g_ls);
            grads.extend(gv);
            debug_assert_eq!(grads.len(), params.len());
            debug_assert_eq!(params.len() - p_mean - nd, policy.value_net().num_params());
            opt.step(&mut params, &grads);
            policy.set_params(&params)?;
            // keep the optimizer's copy inside the clamp range
            params = policy.params();

            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.approx_kl += kl;
            stats.clip_fraction += clipped as f64 / m;
            batches += 1;
        }
    }
    let b = batches as f64;
    stats.policy_loss /= b;
    stats.value_loss /= b;
    stats.approx_kl /= b;
    stats.clip_fraction /= b;
    stats.entropy = policy.entropy();
    Ok(stats)
}
