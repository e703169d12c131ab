use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::NoisePolicy;
use crate::meanflow::MeanFlowNet;
use crate::net::Parameters;
use crate::rng::Rng;
use crate::simulator::{ActionChunk, ChunkPolicy, Observation};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Meanflow,
    Identity,
}

/// Identity of a decoder, stored with every policy trained against it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderInfo {
    pub kind: DecoderKind,
    pub t_pred: usize,
    pub max_spread: f64,
    pub param_hash: Option<String>,
    pub config_hash: Option<String>,
}

impl DecoderInfo {
    pub fn identity(t_pred: usize, max_spread: f64) -> Self {
        Self {
            kind: DecoderKind::Identity,
            t_pred,
            max_spread,
            param_hash: None,
            config_hash: None,
        }
    }

    pub fn noise_dim(&self) -> usize {
        2 * self.t_pred
    }
}

/// Maps a noise row `w` (and the observation) to an action chunk.
pub trait NoiseDecoder: Send + Sync {
    fn info(&self) -> DecoderInfo;

    fn noise_dim(&self) -> usize {
        self.info().noise_dim()
    }

    fn decode(&self, obs: &[Observation], w: ArrayView2<f64>) -> Result<Vec<ActionChunk>>;
}

/// Pretrained generator with read-only parameters: `g(s, w) = generate(s, z1 = w)`.
#[derive(Debug)]
pub struct FrozenMeanFlow {
    net: MeanFlowNet<f64>,
    info: DecoderInfo,
}

impl FrozenMeanFlow {
    pub fn new(net: MeanFlowNet<f64>) -> Result<Self> {
        let info = DecoderInfo {
            kind: DecoderKind::Meanflow,
            t_pred: net.chunk().t_pred,
            max_spread: net.config().max_spread,
            param_hash: Some(net.param_hash()),
            config_hash: Some(net.config_hash()?),
        };
        Ok(Self { net, info })
    }

    pub fn net(&self) -> &MeanFlowNet<f64> {
        &self.net
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    /// Recomputes the parameter hash and compares it with the one taken at freeze time.
    pub fn verify_unchanged(&self) -> Result<()> {
        if Some(self.net.param_hash()) != self.info.param_hash {
            return Err(Error::Checkpoint("frozen decoder parameters changed".into()));
        }
        Ok(())
    }

    pub fn into_inner(self) -> MeanFlowNet<f64> {
        self.net
    }
}

impl NoiseDecoder for FrozenMeanFlow {
    fn info(&self) -> DecoderInfo {
        self.info.clone()
    }

    fn decode(&self, obs: &[Observation], w: ArrayView2<f64>) -> Result<Vec<ActionChunk>> {
        self.net.generate_batch(obs, w)
    }
}

/// `w` read directly as spreads, clamped to `[0, max_spread]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityDecoder {
    pub t_pred: usize,
    pub max_spread: f64,
}

impl NoiseDecoder for IdentityDecoder {
    fn info(&self) -> DecoderInfo {
        DecoderInfo::identity(self.t_pred, self.max_spread)
    }

    fn decode(&self, obs: &[Observation], w: ArrayView2<f64>) -> Result<Vec<ActionChunk>> {
        if w.dim() != (obs.len(), 2 * self.t_pred) {
            return Err(Error::Dimension {
                context: "identity decoder noise",
                expected: obs.len() * 2 * self.t_pred,
                got: w.len(),
            });
        }
        w.rows()
            .into_iter()
            .map(|r| Ok(ActionChunk::from_flat(&r.to_vec())?.clamped(self.max_spread)))
            .collect()
    }
}

/// How an agent turns its Gaussian into noise at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Draw `w ~ N(μ(s), Σ)` from the episode's policy stream.
    Sample,
    /// Use `w = μ(s)`.
    Mean,
}

/// A noise policy composed with its decoder.
#[derive(Debug)]
pub struct NoiseAgent<D> {
    pub policy: NoisePolicy<f64>,
    pub decoder: D,
    pub mode: EvalMode,
}

impl<D: NoiseDecoder> NoiseAgent<D> {
    pub fn new(policy: NoisePolicy<f64>, decoder: D, mode: EvalMode) -> Result<Self> {
        if policy.spec().decoder != decoder.info() {
            return Err(Error::Checkpoint("policy was trained against a different decoder".into()));
        }
        Ok(Self { policy, decoder, mode })
    }

    /// Noise rows for a batch, using one RNG per observation in sample mode.
    pub fn noise(&self, obs: &[Observation], rngs: &mut [Rng]) -> Result<Array2<f64>> {
        let s = self.policy.normalize_states(obs)?;
        let mut mean = self.policy.mean(s.view())?;
        if self.mode == EvalMode::Sample {
            for (mut row, r) in mean.rows_mut().into_iter().zip(rngs.iter_mut()) {
                let (w, _) = self.policy.sample_noise(&row.to_vec(), r);
                row.assign(&ndarray::Array1::from(w));
            }
        }
        Ok(mean)
    }
}

impl<D: NoiseDecoder> ChunkPolicy for NoiseAgent<D> {
    fn act(&self, obs: &[Observation], rngs: &mut [Rng]) -> Result<Vec<ActionChunk>> {
        let w = self.noise(obs, rngs)?;
        self.decoder.decode(obs, w.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanflow::{MeanFlowConfig, Normalizer};
    use crate::noiserl::NoisePolicyConfig;
    use crate::rng;
    use crate::simulator::{run_episodes, ChunkConfig, MarketParams};

    fn frozen() -> FrozenMeanFlow {
        let cfg = MeanFlowConfig {
            hidden: vec![32, 32],
            cond_hidden: 16,
            ..MeanFlowConfig::default()
        };
        let mut state_norm = Normalizer::identity(16);
        state_norm.std[14] = 5.0;
        let mut action_norm = Normalizer::identity(16);
        action_norm.mean.iter_mut().for_each(|m| *m = 0.7);
        action_norm.std.iter_mut().for_each(|s| *s = 0.2);
        FrozenMeanFlow::new(MeanFlowNet::new(cfg, state_norm, action_norm, &mut rng::stream(8, 0)).unwrap()).unwrap()
    }

    #[test]
    fn decode_matches_generate_bit_for_bit() {
        let f = frozen();
        let obs = Observation {
            features: (0..16).map(|i| (i as f64).sin()).collect(),
            inventory: 2,
            step: 10,
            horizon_steps: 100,
            dt: 0.01,
            mid: 100.0,
        };
        let w: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).cos()).collect();
        let a = f.decode(std::slice::from_ref(&obs), ArrayView2::from_shape((1, 16), &w).unwrap()).unwrap();
        assert_eq!(a[0], f.net().generate(&obs, &w).unwrap());
        let b = f.decode(std::slice::from_ref(&obs), ArrayView2::from_shape((1, 16), &w).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_agent_replays_the_pretrained_sampler() {
        let f = frozen();
        let policy = NoisePolicy::new(
            NoisePolicyConfig::default(),
            f.net().spec().state_norm.clone(),
            f.info(),
            &mut rng::stream(2, 0),
        )
        .unwrap();
        let m = MarketParams { sigma: 0.05, ..MarketParams::default() };
        let cfg = ChunkConfig::default();
        let seeds: Vec<u64> = (0..6).collect();
        let key = rng::key_of("meanflow");
        let base = run_episodes(f.net(), &m, cfg, &seeds, key).unwrap();
        let agent = NoiseAgent::new(policy, f, EvalMode::Sample).unwrap();
        let tuned = run_episodes(&agent, &m, cfg, &seeds, key).unwrap();
        for (a, b) in base.iter().zip(&tuned) {
            assert_eq!(a.pnl_series, b.pnl_series);
        }
        agent.decoder.verify_unchanged().unwrap();
    }

    #[test]
    fn identity_decoder_clamps() {
        let d = IdentityDecoder { t_pred: 1, max_spread: 1.0 };
        let obs = vec![Observation {
            features: vec![0.0; 16],
            inventory: 0,
            step: 0,
            horizon_steps: 1,
            dt: 1.0,
            mid: 1.0,
        }];
        let a = d.decode(&obs, ndarray::array![[-0.5, 3.0]].view()).unwrap();
        assert_eq!(a[0].rows(), &[[0.0, 1.0]]);
    }

    #[test]
    fn agent_rejects_foreign_decoder() {
        let policy = NoisePolicy::new(
            NoisePolicyConfig::default(),
            Normalizer::identity(16),
            DecoderInfo::identity(8, 5.0),
            &mut rng::stream(2, 0),
        )
        .unwrap();
        assert!(NoiseAgent::new(policy, frozen(), EvalMode::Mean).is_err());
    }
}
