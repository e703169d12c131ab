use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Normalizer;
use crate::net::{config_hash, param_hash, Activation, Checkpoint, DualTensor, FilmMlp, LayerTag, Parameters};
use crate::scalar::Scalar;
use crate::simulator::{ActionChunk, ChunkConfig, ChunkPolicy, Observation};
use crate::{rng, Error, Result};

pub const MEANFLOW_CHECKPOINT_KIND: &str = "meanflow";

/// Architecture of the average-velocity network `u(z, r, t | s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanFlowConfig {
    pub chunk: ChunkConfig,
    pub hidden: Vec<usize>,
    pub cond_hidden: usize,
    pub activation: Activation,
    /// Generated spreads are clamped to `[0, max_spread]`.
    pub max_spread: f64,
}

impl Default for MeanFlowConfig {
    fn default() -> Self {
        Self {
            chunk: ChunkConfig::default(),
            hidden: vec![128, 128, 128],
            cond_hidden: 64,
            activation: Activation::Silu,
            max_spread: 10.0,
        }
    }
}

impl MeanFlowConfig {
    pub fn action_dim(&self) -> usize {
        self.chunk.action_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.chunk.obs_dim()
    }
}

/// Everything that fixes a network's function apart from its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFlowSpec {
    pub net: MeanFlowConfig,
    pub state_norm: Normalizer,
    pub action_norm: Normalizer,
}

/// `u_θ(z, r, t | s)` together with the state/action normalization it was
/// trained under. Inputs to the body are `[z, r, t]`; the normalized
/// observation conditions every hidden layer through FiLM.
#[derive(Debug)]
pub struct MeanFlowNet<F> {
    spec: MeanFlowSpec,
    body: FilmMlp<F>,
    evals: AtomicU64,
}

impl<F: Scalar> Clone for MeanFlowNet<F> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            body: self.body.clone(),
            evals: AtomicU64::new(0),
        }
    }
}

impl<F: Scalar> MeanFlowNet<F> {
    pub fn new<R: Rng + ?Sized>(
        config: MeanFlowConfig,
        state_norm: Normalizer,
        action_norm: Normalizer,
        rng: &mut R,
    ) -> Result<Self> {
        config.chunk.validate()?;
        let body = FilmMlp::new(
            config.action_dim() + 2,
            &config.hidden,
            config.action_dim(),
            config.state_dim(),
            config.cond_hidden,
            config.activation,
            rng,
        )?;
        Self::from_body(
            MeanFlowSpec {
                net: config,
                state_norm,
                action_norm,
            },
            body,
        )
    }

    pub fn from_body(spec: MeanFlowSpec, body: FilmMlp<F>) -> Result<Self> {
        let (a, s) = (spec.net.action_dim(), spec.net.state_dim());
        let check = |context, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { context, expected, got })
            }
        };
        check("meanflow body input", a + 2, body.input_dim())?;
        check("meanflow body output", a, body.output_dim())?;
        check("meanflow condition", s, body.cond_dim())?;
        check("action normalizer", a, spec.action_norm.dim())?;
        check("state normalizer", s, spec.state_norm.dim())?;
        Ok(Self {
            spec,
            body,
            evals: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &MeanFlowSpec {
        &self.spec
    }

    pub fn config(&self) -> &MeanFlowConfig {
        &self.spec.net
    }

    pub fn chunk(&self) -> ChunkConfig {
        self.spec.net.chunk
    }

    pub fn action_dim(&self) -> usize {
        self.spec.net.action_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.spec.net.state_dim()
    }

    pub fn body(&self) -> &FilmMlp<F> {
        &self.body
    }

    pub fn body_mut(&mut self) -> &mut FilmMlp<F> {
        &mut self.body
    }

    /// Number of network passes (forward or forward-mode) run so far.
    pub fn forward_evals(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn param_hash(&self) -> String {
        param_hash(&self.body.params())
    }

    pub fn config_hash(&self) -> Result<String> {
        config_hash(&self.spec)
    }

    /// Body input `[z, r, t]`.
    pub fn input(&self, z: ArrayView2<F>, r: &[F], t: &[F]) -> Array2<F> {
        let (b, d) = z.dim();
        let mut x = Array2::zeros((b, d + 2));
        x.slice_mut(s![.., ..d]).assign(&z);
        for i in 0..b {
            x[[i, d]] = r[i];
            x[[i, d + 1]] = t[i];
        }
        x
    }

    /// `u_θ(z, r, t | s)` for a batch; `s` is already normalized.
    pub fn u(&self, z: ArrayView2<F>, r: &[F], t: &[F], s: ArrayView2<F>) -> Result<Array2<F>> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.body.forward(self.input(z, r, t).view(), s)
    }

    /// Forward-mode pass along `(dz, dr, dt)` with a constant condition.
    pub fn jvp(
        &self,
        z: ArrayView2<F>,
        r: &[F],
        t: &[F],
        s: ArrayView2<F>,
        dz: ArrayView2<F>,
        dr: F,
        dt: F,
    ) -> Result<DualTensor<F>> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        let x = self.input(z, r, t);
        let d = z.ncols();
        let mut tangent = Array2::zeros(x.dim());
        tangent.slice_mut(s![.., ..d]).assign(&dz);
        tangent.column_mut(d).fill(dr);
        tangent.column_mut(d + 1).fill(dt);
        self.body.jvp(&DualTensor::new(x, tangent)?, &DualTensor::constant(s.to_owned()))
    }

    /// Normalized, clipped condition rows for a batch of observations.
    pub fn normalize_states(&self, obs: &[Observation]) -> Result<Array2<F>> {
        let d = self.state_dim();
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

    /// One-step generation in normalized action space: `z1 − u(z1, 0, 1 | s)`.
    pub fn generate_normalized(&self, s: ArrayView2<F>, z1: ArrayView2<F>) -> Result<Array2<F>> {
        let b = z1.nrows();
        let u = self.u(z1, &vec![F::zero(); b], &vec![F::one(); b], s)?;
        Ok(&z1 - &u)
    }

    /// Maps a normalized action row to a clamped chunk.
    pub fn decode_action(&self, a_norm: &[F]) -> Result<ActionChunk> {
        let a: Vec<f64> = a_norm.iter().map(|v| v.as_f64()).collect();
        let flat = self.spec.action_norm.denormalize(&a);
        Ok(ActionChunk::from_flat(&flat)?.clamped(self.spec.net.max_spread))
    }

    /// Chunks for a batch of observations and noise rows, in one network pass.
    pub fn generate_batch(&self, obs: &[Observation], z1: ArrayView2<F>) -> Result<Vec<ActionChunk>> {
        if z1.dim() != (obs.len(), self.action_dim()) {
            return Err(Error::Dimension {
                context: "generation noise",
                expected: obs.len() * self.action_dim(),
                got: z1.len(),
            });
        }
        let s = self.normalize_states(obs)?;
        let a = self.generate_normalized(s.view(), z1)?;
        a.rows()
            .into_iter()
            .map(|row| self.decode_action(&row.to_vec()))
            .collect()
    }

    pub fn generate(&self, obs: &Observation, z1: &[F]) -> Result<ActionChunk> {
        let z = ArrayView2::from_shape((1, z1.len()), z1).map_err(|_| Error::Dimension {
            context: "generation noise",
            expected: self.action_dim(),
            got: z1.len(),
        })?;
        Ok(self.generate_batch(std::slice::from_ref(obs), z)?.remove(0))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(MEANFLOW_CHECKPOINT_KIND, &self.spec, self.layout(), &self.body.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.verify(MEANFLOW_CHECKPOINT_KIND)?;
        let spec: MeanFlowSpec = ckpt.config_as()?;
        let mut net = Self::new(
            spec.net.clone(),
            spec.state_norm.clone(),
            spec.action_norm.clone(),
            &mut rng::stream(0, 0),
        )?;
        let params = ckpt.params_as::<F>(&net.layout())?;
        net.body.set_params(&params)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn layout(&self) -> Vec<LayerTag> {
        self.body.layout()
    }
}

/// The pretrained sampler: `z1 ~ N(0, I)` drawn from each episode's policy stream.
impl ChunkPolicy for MeanFlowNet<f64> {
    fn act(&self, obs: &[Observation], rngs: &mut [rng::Rng]) -> Result<Vec<ActionChunk>> {
        let d = self.action_dim();
        let mut z1 = Array2::zeros((obs.len(), d));
        for (mut row, r) in z1.rows_mut().into_iter().zip(rngs.iter_mut()) {
            row.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
        }
        self.generate_batch(obs, z1.view())
    }
}

impl<F: Scalar> Parameters<F> for MeanFlowNet<F> {
    fn num_params(&self) -> usize {
        self.body.num_params()
    }

    fn write_params(&self, out: &mut Vec<F>) {
        self.body.write_params(out)
    }

    fn read_params(&mut self, src: &[F]) -> usize {
        self.body.read_params(src)
    }
}
