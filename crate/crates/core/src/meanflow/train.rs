use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{meanflow_loss, Dataset, MeanFlowConfig, MeanFlowNet, P_EQUAL_TIMES};
use crate::curve::LearningCurve;
use crate::net::{Adam, AdamConfig, Parameters};
use crate::scalar::Scalar;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Probability of `r = t` in the time sampler.
    pub p_equal_times: f64,
    /// Loss is averaged and logged every `log_every` steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 256,
            adam: AdamConfig::default(),
            p_equal_times: P_EQUAL_TIMES,
            log_every: 50,
        }
    }
}

/// Trains `net` in place on normalized `(states, actions)`; returns the curve
/// with columns `step, loss, grad_norm`.
pub fn train_meanflow<F: Scalar>(
    net: &mut MeanFlowNet<F>,
    states: ArrayView2<F>,
    actions: ArrayView2<F>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LearningCurve> {
    let n = states.nrows();
    if n == 0 || actions.nrows() != n {
        return Err(crate::error::invalid("training needs matching, nonempty states and actions"));
    }
    let b = cfg.batch_size.max(1);
    let mut g = rng::stream(seed, 0x4d46);
    let mut opt = Adam::new(cfg.adam.clone(), net.num_params());
    let mut params = net.params();
    let mut curve = LearningCurve::new(&["step", "loss", "grad_norm"]);
    let (mut loss_acc, mut norm_acc, mut count) = (0.0, 0.0, 0usize);
    let log_every = cfg.log_every.max(1);
    for step in 1..=cfg.steps {
        let idx: Vec<usize> = (0..b).map(|_| g.random_range(0..n)).collect();
        let s = states.select(Axis(0), &idx);
        let a = actions.select(Axis(0), &idx);
        let (loss, grads) = meanflow_loss(net, s.view(), a.view(), &mut g, cfg.p_equal_times)
            .map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!("step {step}: {msg}")),
                other => other,
            })?;
        let norm = opt.step(&mut params, &grads);
        net.set_params(&params)?;
        loss_acc += loss.as_f64();
        norm_acc += norm.as_f64();
        count += 1;
        if step % log_every == 0 || step == cfg.steps {
            curve.push(vec![step as f64, loss_acc / count as f64, norm_acc / count as f64]);
            loss_acc = 0.0;
            norm_acc = 0.0;
            count = 0;
        }
    }
    Ok(curve)
}

/// Builds a network with the dataset's normalization and trains it.
pub fn pretrain(
    data: &Dataset,
    net_cfg: MeanFlowConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MeanFlowNet<f64>, LearningCurve)> {
    if data.t_pred != net_cfg.chunk.t_pred || data.state_dim != net_cfg.state_dim() {
        return Err(Error::Dataset(format!(
            "dataset shape (state {}, t_pred {}) does not match the network (state {}, t_pred {})",
            data.state_dim,
            data.t_pred,
            net_cfg.state_dim(),
            net_cfg.chunk.t_pred
        )));
    }
    let mut net = MeanFlowNet::new(
        net_cfg,
        data.state_norm.clone(),
        data.action_norm.clone(),
        &mut rng::stream(seed, 0x494e4954),
    )?;
    let (s, a) = data.normalized::<f64>();
    let curve = train_meanflow(&mut net, s.view(), a.view(), cfg, seed)?;
    Ok((net, curve))
}

/// Mean over `draws` noise samples of the per-element squared error between
/// one-step generations and the target actions, in normalized units.
pub fn generation_mse<F: Scalar>(
    net: &MeanFlowNet<F>,
    states: ArrayView2<F>,
    actions: ArrayView2<F>,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let mut g = rng::stream(seed, 0x47454e);
    let mut total = 0.0;
    for _ in 0..draws {
        let z1 = Array2::from_shape_fn(actions.dim(), |_| F::of(g.sample(StandardNormal)));
        let gen = net.generate_normalized(states, z1.view())?;
        total += (&gen - &actions).iter().map(|e| e.as_f64().powi(2)).sum::<f64>();
    }
    Ok(total / (draws * actions.len()) as f64)
}
