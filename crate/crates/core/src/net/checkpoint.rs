//! Versioned JSON checkpoints.
//!
//! A checkpoint stores the model configuration, the hash of that configuration,
//! the shape and activation of every dense layer, and the flat parameter
//! vector with its hash. Loading re-checks both hashes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{param_hash, Activation};
use crate::scalar::Scalar;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// One dense layer: `[out, in]` weight shape and the activation applied after it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTag {
    pub shape: [usize; 2],
    pub activation: Activation,
}

/// SHA-256 of the canonical JSON form of a configuration.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let value = serde_json::to_value(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let bytes = serde_json::to_vec(&value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub layers: Vec<LayerTag>,
    pub params: Vec<f64>,
    pub param_hash: String,
}

impl Checkpoint {
    pub fn new<C: Serialize, F: Scalar>(
        kind: &str,
        config: &C,
        layers: Vec<LayerTag>,
        params: &[F],
    ) -> Result<Self> {
        let params: Vec<f64> = params.iter().map(|p| p.as_f64()).collect();
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: kind.to_string(),
            config: serde_json::to_value(config).map_err(|e| Error::Checkpoint(e.to_string()))?,
            config_hash: config_hash(config)?,
            param_hash: param_hash(&params),
            layers,
            params,
        })
    }

    /// Checks version, kind and both hashes.
    pub fn verify(&self, kind: &str) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        if config_hash(&self.config)? != self.config_hash {
            return Err(Error::Checkpoint("config hash mismatch".into()));
        }
        if param_hash(&self.params) != self.param_hash {
            return Err(Error::Checkpoint("parameter hash mismatch".into()));
        }
        Ok(())
    }

    /// Rejects a checkpoint built from a different configuration.
    pub fn expect_config_hash(&self, expected: &str) -> Result<()> {
        if self.config_hash != expected {
            return Err(Error::Checkpoint(format!(
                "config hash {} does not match expected {expected}",
                self.config_hash
            )));
        }
        Ok(())
    }

    pub fn config_as<C: DeserializeOwned>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Parameters converted to `F`, after checking the layer layout.
    pub fn params_as<F: Scalar>(&self, layers: &[LayerTag]) -> Result<Vec<F>> {
        if layers != self.layers.as_slice() {
            return Err(Error::Checkpoint("layer shapes or activations differ from the configuration".into()));
        }
        Ok(self.params.iter().map(|&p| F::of(p)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
