use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::Result;

/// Standard deviations below this are treated as constant columns (scale 1).
const STD_FLOOR: f64 = 1e-6;
/// Normalized states are clipped to this magnitude.
pub const STATE_CLIP: f64 = 10.0;

/// Per-dimension z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and population standard deviation over `rows`.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(invalid(format!("normalizer row has {} values, expected {dim}", row.len())));
            }
            n += 1;
            for (j, &x) in row.iter().enumerate() {
                let d = x - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (x - mean[j]);
            }
        }
        if n == 0 {
            return Err(invalid("cannot fit a normalizer on zero rows"));
        }
        let std = m2
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Normalizes and clips to `±STATE_CLIP`.
    pub fn normalize_clipped(&self, x: &[f64]) -> Vec<f64> {
        self.normalize(x)
            .into_iter()
            .map(|v| v.clamp(-STATE_CLIP, STATE_CLIP))
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}
