use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result};

/// Observation window, prediction horizon and executed prefix of a chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub t_exec: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            t_obs: 2,
            t_pred: 8,
            t_exec: 4,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_obs < 1 {
            return Err(invalid("t_obs must be >= 1"));
        }
        if self.t_exec < 1 || self.t_exec > self.t_pred {
            return Err(invalid(format!(
                "need 1 <= t_exec <= t_pred, got t_exec={} t_pred={}",
                self.t_exec, self.t_pred
            )));
        }
        Ok(())
    }

    /// Flattened action dimension `t_pred × 2`.
    pub fn action_dim(&self) -> usize {
        2 * self.t_pred
    }

    pub fn obs_dim(&self) -> usize {
        Observation::dim(self.t_obs)
    }
}

/// Sequence of `(δ^b, δ^a)` quotes, one row per future step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    rows: Vec<[f64; 2]>,
}

impl ActionChunk {
    pub fn new(rows: Vec<[f64; 2]>) -> Self {
        Self { rows }
    }

    pub fn repeat(bid: f64, ask: f64, t_pred: usize) -> Self {
        Self {
            rows: vec![[bid, ask]; t_pred],
        }
    }

    /// Row-major `[δ^b_0, δ^a_0, δ^b_1, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::ChunkShape {
                rows: flat.len() / 2,
                cols: 1,
                expected_rows: flat.len() / 2,
            });
        }
        Ok(Self {
            rows: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.iter().copied()).collect()
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    /// Clamps every spread into `[0, max]`; NaN entries become `max`.
    pub fn clamped(mut self, max: f64) -> Self {
        for v in self.rows.iter_mut().flatten() {
            *v = if v.is_nan() { max } else { v.clamp(0.0, max) };
        }
        self
    }

    pub fn check_shape(&self, t_pred: usize) -> Result<()> {
        if self.rows.len() != t_pred {
            return Err(Error::ChunkShape {
                rows: self.rows.len(),
                cols: 2,
                expected_rows: t_pred,
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("action chunk".into()));
        }
        Ok(())
    }
}

/// Features recorded per observed step.
pub const STEP_FEATURES: usize = 7;
/// Scale dividing inventory in the normalized-inventory feature.
pub const INVENTORY_SCALE: f64 = 10.0;
const FEATURE_CLIP: f64 = 10.0;

/// Agent-visible state at a decision time.
///
/// `features` holds, for each of the last `t_obs` steps (oldest first): log
/// mid return in percent, inventory / 10, remaining-time fraction, expected
/// buys per step `λ_a·dt`, expected sells per step `λ_b·dt`, and the bid/ask
/// fill indicators of the preceding step. Two scalars follow: the current
/// inventory and the elapsed-time fraction. The remaining fields are
/// bookkeeping for closed-form rules and are not part of the feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub inventory: i64,
    pub step: usize,
    pub horizon_steps: usize,
    pub dt: f64,
    pub mid: f64,
}

impl Observation {
    pub fn dim(t_obs: usize) -> usize {
        STEP_FEATURES * t_obs + 2
    }

    /// Remaining time `(T − t)·dt`.
    pub fn remaining_time(&self) -> f64 {
        (self.horizon_steps.saturating_sub(self.step)) as f64 * self.dt
    }

    pub fn elapsed_fraction(&self) -> f64 {
        self.step as f64 / self.horizon_steps as f64
    }
}

/// Per-step record from which observation windows are assembled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct StepFeatures {
    pub log_return: f64,
    pub inventory: i64,
    pub intensity: (f64, f64),
    pub fills: (u32, u32),
}

pub(crate) fn build_observation(
    history: &[StepFeatures],
    step: usize,
    horizon_steps: usize,
    dt: f64,
    mid: f64,
    t_obs: usize,
) -> Observation {
    let mut features = Vec::with_capacity(Observation::dim(t_obs));
    let t_total = horizon_steps as f64;
    for back in (0..t_obs).rev() {
        // steps before the episode start repeat step 0
        let k = step.saturating_sub(back);
        let f = &history[k];
        let clip = |x: f64| x.clamp(-FEATURE_CLIP, FEATURE_CLIP);
        features.push(clip(100.0 * f.log_return));
        features.push(clip(f.inventory as f64 / INVENTORY_SCALE));
        features.push((t_total - k as f64) / t_total);
        features.push(clip(f.intensity.0 * dt));
        features.push(clip(f.intensity.1 * dt));
        features.push(f64::from(u8::from(f.fills.0 > 0)));
        features.push(f64::from(u8::from(f.fills.1 > 0)));
    }
    let inventory = history[step].inventory;
    features.push(inventory as f64);
    features.push(step as f64 / t_total);
    Observation {
        features,
        inventory,
        step,
        horizon_steps,
        dt,
        mid,
    }
}
