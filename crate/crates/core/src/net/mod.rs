//! Small dense-network substrate: MLPs, FiLM conditioning, reverse-mode gradients
//! and forward-mode Jacobian-vector products.
//!
//! All tensors are batch-major `Array2` (rows are samples). Parameters flatten
//! into a single vector in a fixed order so optimizers, checkpoints and hashes
//! can treat every model uniformly.

mod activation;
mod adam;
mod checkpoint;
mod dual;
mod film;
mod film_mlp;
mod mlp;

pub use activation::Activation;
pub use adam::{Adam, AdamConfig};
pub use checkpoint::{config_hash, Checkpoint, LayerTag, CHECKPOINT_FORMAT_VERSION};
pub use dual::DualTensor;
pub use film::{FilmCache, FilmLayer};
pub use film_mlp::{FilmMlp, FilmMlpCache, FilmMlpGrads};
pub use mlp::{Linear, Mlp, MlpCache};

use crate::scalar::Scalar;

/// Models whose parameters can be flattened into one vector.
pub trait Parameters<F: Scalar> {
    fn num_params(&self) -> usize;

    /// Appends all parameters to `out` in canonical order.
    fn write_params(&self, out: &mut Vec<F>);

    /// Reads parameters from the front of `src`, returning how many were consumed.
    fn read_params(&mut self, src: &[F]) -> usize;

    fn params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        self.write_params(&mut out);
        out
    }

    fn set_params(&mut self, src: &[F]) -> crate::Result<()> {
        if src.len() != self.num_params() {
            return Err(crate::Error::Dimension {
                context: "parameter vector",
                expected: self.num_params(),
                got: src.len(),
            });
        }
        self.read_params(src);
        Ok(())
    }
}

/// Gradient of a batch-major computation: flat parameter gradient plus the
/// gradient with respect to the network input.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    pub params: Vec<F>,
    pub input: ndarray::Array2<F>,
}

/// SHA-256 of the little-endian `f64` encoding of a parameter vector.
pub fn param_hash<F: Scalar>(params: &[F]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in params {
        h.update(p.as_f64().to_le_bytes());
    }
    hex::encode(h.finalize())
}
