use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DecoderInfo;
use crate::meanflow::Normalizer;
use crate::net::{Activation, Checkpoint, LayerTag, Mlp, Parameters};
use crate::scalar::Scalar;
use crate::simulator::Observation;
use crate::{rng, Error, Result};

pub const NOISE_POLICY_CHECKPOINT_KIND: &str = "noise_policy";
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisePolicyConfig {
    pub obs_dim: usize,
    pub noise_dim: usize,
    pub hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub activation: Activation,
    /// Initial output of the mean network (its last layer starts with zero weights).
    pub mean_bias_init: f64,
    pub log_std_init: f64,
}

impl Default for NoisePolicyConfig {
    fn default() -> Self {
        Self {
            obs_dim: 16,
            noise_dim: 16,
            hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            activation: Activation::Tanh,
            mean_bias_init: 0.0,
            log_std_init: 0.0,
        }
    }
}

/// Checkpointed identity of a policy: architecture, input normalization and
/// the decoder it was trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicySpec {
    pub config: NoisePolicyConfig,
    pub state_norm: Normalizer,
    pub decoder: DecoderInfo,
}

/// Diagonal Gaussian `N(μ_φ(s), diag(exp(log_std))²)` over decoder noise,
/// with a separate value head.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePolicy<F> {
    spec: NoisePolicySpec,
    mean_net: Mlp<F>,
    log_std: Array1<F>,
    value_net: Mlp<F>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

impl<F: Scalar> NoisePolicy<F> {
    pub fn new<R: Rng + ?Sized>(
        config: NoisePolicyConfig,
        state_norm: Normalizer,
        decoder: DecoderInfo,
        rng: &mut R,
    ) -> Result<Self> {
        if state_norm.dim() != config.obs_dim {
            return Err(Error::Dimension {
                context: "policy state normalizer",
                expected: config.obs_dim,
                got: state_norm.dim(),
            });
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&config.log_std_init) {
            return Err(crate::error::invalid("log_std_init outside the allowed range"));
        }
        let mut dims = vec![config.obs_dim];
        dims.extend_from_slice(&config.hidden);
        dims.push(config.noise_dim);
        let mut mean_net = Mlp::new(&dims, config.activation, Activation::Identity, rng)?;
        let head = mean_net.layers_mut().last_mut().unwrap();
        head.weight.fill(F::zero());
        head.bias.fill(F::of(config.mean_bias_init));

        let mut vdims = vec![config.obs_dim];
        vdims.extend_from_slice(&config.value_hidden);
        vdims.push(1);
        let value_net = Mlp::new(&vdims, config.activation, Activation::Identity, rng)?;
        let log_std = Array1::from_elem(config.noise_dim, F::of(config.log_std_init));
        Ok(Self {
            spec: NoisePolicySpec {
                config,
                state_norm,
                decoder,
            },
            mean_net,
            log_std,
            value_net,
        })
    }

    pub fn spec(&self) -> &NoisePolicySpec {
        &self.spec
    }

    pub fn config(&self) -> &NoisePolicyConfig {
        &self.spec.config
    }

    pub fn noise_dim(&self) -> usize {
        self.spec.config.noise_dim
    }

    pub fn mean_net(&self) -> &Mlp<F> {
        &self.mean_net
    }

    pub fn value_net(&self) -> &Mlp<F> {
        &self.value_net
    }

    pub fn log_std(&self) -> &Array1<F> {
        &self.log_std
    }

    /// Sets `log_std`, clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn set_log_std(&mut self, values: &[F]) {
        for (d, &v) in self.log_std.iter_mut().zip(values) {
            *d = v.max(F::of(LOG_STD_MIN)).min(F::of(LOG_STD_MAX));
        }
    }

    pub fn mean_net_params(&self) -> usize {
        self.mean_net.num_params()
    }

    /// Normalized, clipped states for a batch of observations.
    pub fn normalize_states(&self, obs: &[Observation]) -> Result<Array2<F>> {
        let d = self.spec.config.obs_dim;
        let mut out = Array2::zeros((obs.len(), d));
        for (i, o) in obs.iter().enumerate() {
            if o.features.len() != d {
                return Err(Error::Dimension {
                    context: "observation features",
                    expected: d,
                    got: o.features.len(),
                });
            }
            for (j, v) in self.spec.state_norm.normalize_clipped(&o.features).into_iter().enumerate() {
                out[[i, j]] = F::of(v);
            }
        }
        Ok(out)
    }

    pub fn mean(&self, states: ArrayView2<F>) -> Result<Array2<F>> {
        self.mean_net.forward(states)
    }

    pub fn value(&self, states: ArrayView2<F>) -> Result<Vec<F>> {
        Ok(self.value_net.forward(states)?.column(0).to_vec())
    }

    /// Exact diagonal-Gaussian log-density of `w` given the mean row.
    pub fn log_prob(&self, mean: &[F], w: &[F]) -> F {
        let mut lp = F::of(-0.5 * LN_2PI * self.noise_dim() as f64);
        for ((&m, &x), &ls) in mean.iter().zip(w).zip(&self.log_std) {
            let z = (x - m) / ls.exp();
            lp -= F::of(0.5) * z * z + ls;
        }
        lp
    }

    /// Draws `w = μ + σ ⊙ ε` and returns it with its log-density.
    pub fn sample_noise<R: Rng + ?Sized>(&self, mean: &[F], rng: &mut R) -> (Vec<F>, F) {
        let w: Vec<F> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &ls)| m + ls.exp() * F::of(rng.sample(StandardNormal)))
            .collect();
        let lp = self.log_prob(mean, &w);
        (w, lp)
    }

    /// Entropy of the Gaussian, independent of the state.
    pub fn entropy(&self) -> F {
        let c = F::of(0.5 * (LN_2PI + 1.0));
        self.log_std.iter().fold(F::zero(), |acc, &l| acc + l + c)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(NOISE_POLICY_CHECKPOINT_KIND, &self.spec, self.layout(), &self.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.verify(NOISE_POLICY_CHECKPOINT_KIND)?;
        let spec: NoisePolicySpec = ckpt.config_as()?;
        let mut policy = Self::new(
            spec.config.clone(),
            spec.state_norm.clone(),
            spec.decoder.clone(),
            &mut rng::stream(0, 0),
        )?;
        let params = ckpt.params_as::<F>(&policy.layout())?;
        policy.set_params(&params)?;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    /// Loads a policy and checks it was trained against `decoder`.
    pub fn load(path: &Path, decoder: &DecoderInfo) -> Result<Self> {
        let p = Self::from_checkpoint(&Checkpoint::load(path)?)?;
        if &p.spec.decoder != decoder {
            return Err(Error::Checkpoint(
                "policy was trained against a different decoder".into(),
            ));
        }
        Ok(p)
    }

    fn layout(&self) -> Vec<LayerTag> {
        let mut out = self.mean_net.layout();
        out.push(LayerTag {
            shape: [self.noise_dim(), 1],
            activation: Activation::Identity,
        });
        out.extend(self.value_net.layout());
        out
    }
}

/// Parameter order: mean network, `log_std`, value network.
impl<F: Scalar> Parameters<F> for NoisePolicy<F> {
    fn num_params(&self) -> usize {
        self.mean_net.num_params() + self.log_std.len() + self.value_net.num_params()
    }

    fn write_params(&self, out: &mut Vec<F>) {
        self.mean_net.write_params(out);
        out.extend(self.log_std.iter().copied());
        self.value_net.write_params(out);
    }

    fn read_params(&mut self, src: &[F]) -> usize {
        let mut used = self.mean_net.read_params(src);
        let d = self.log_std.len();
        let ls = src[used..used + d].to_vec();
        self.set_log_std(&ls);
        used += d;
        used + self.value_net.read_params(&src[used..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noiserl::DecoderKind;

    pub(crate) fn policy(log_std: f64) -> NoisePolicy<f64> {
        let cfg = NoisePolicyConfig {
            log_std_init: log_std,
            ..NoisePolicyConfig::default()
        };
        NoisePolicy::new(cfg, Normalizer::identity(16), DecoderInfo::identity(8, 5.0), &mut rng::stream(1, 0)).unwrap()
    }

    #[test]
    fn initial_mean_is_constant_zero() {
        let p = policy(0.0);
        let s = Array2::from_shape_fn((3, 16), |(i, j)| (i * j) as f64 * 0.1);
        assert!(p.mean(s.view()).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(p.spec().decoder.kind, DecoderKind::Identity);
    }

    #[test]
    fn mode_density() {
        let p = policy(-0.3);
        let mean = vec![0.2; 16];
        let sigma2 = (-0.6f64).exp();
        let expect = -0.5 * 16.0 * (2.0 * std::f64::consts::PI * sigma2).ln();
        assert!((p.log_prob(&mean, &mean) - expect).abs() < 1e-12);
    }

    #[test]
    fn narrow_policy_samples_its_mean() {
        let p = policy(LOG_STD_MIN);
        let mean = vec![0.5; 16];
        let (w, lp) = p.sample_noise(&mean, &mut rng::stream(3, 0));
        assert!(w.iter().all(|x| (x - 0.5).abs() < 0.05));
        assert!(lp > 50.0);
    }

    #[test]
    fn sampler_moments() {
        let p = policy(0.4);
        let mean: Vec<f64> = (0..16).map(|j| j as f64 * 0.1 - 0.8).collect();
        let mut g = rng::stream(5, 0);
        let n = 100_000;
        let mut s1 = vec![0.0; 16];
        let mut s2 = vec![0.0; 16];
        for _ in 0..n {
            let (w, _) = p.sample_noise(&mean, &mut g);
            for j in 0..16 {
                s1[j] += w[j];
                s2[j] += w[j] * w[j];
            }
        }
        let sigma = 0.4f64.exp();
        for j in 0..16 {
            let m = s1[j] / n as f64;
            let sd = (s2[j] / n as f64 - m * m).sqrt();
            assert!((m - mean[j]).abs() < 0.01 * sigma, "mean {j}");
            assert!((sd / sigma - 1.0).abs() < 0.01, "std {j}");
        }
    }

    #[test]
    fn log_std_is_clamped_on_write() {
        let mut p = policy(0.0);
        let mut params = p.params();
        let start = p.mean_net_params();
        params[start] = 10.0;
        params[start + 1] = -10.0;
        p.set_params(&params).unwrap();
        assert_eq!(p.log_std()[0], LOG_STD_MAX);
        assert_eq!(p.log_std()[1], LOG_STD_MIN);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = policy(0.1);
        let back = NoisePolicy::<f64>::from_checkpoint(&p.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back, p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        p.save(&path).unwrap();
        assert!(NoisePolicy::<f64>::load(&path, &DecoderInfo::identity(8, 4.0)).is_err());
        assert_eq!(NoisePolicy::<f64>::load(&path, &DecoderInfo::identity(8, 5.0)).unwrap(), p);
    }
}
