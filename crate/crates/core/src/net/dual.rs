use ndarray::Array2;

use super::{Activation, Linear};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Batch of dual numbers: a primal value and a directional-derivative carrier
/// of identical shape. Pushing it through a smooth graph yields `f(x)` and the
/// Jacobian-vector product `J_f(x)·dx` in one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTensor<F> {
    pub primal: Array2<F>,
    pub tangent: Array2<F>,
}

impl<F: Scalar> DualTensor<F> {
    pub fn new(primal: Array2<F>, tangent: Array2<F>) -> Result<Self> {
        if primal.dim() != tangent.dim() {
            return Err(Error::Dimension {
                context: "dual tangent",
                expected: primal.len(),
                got: tangent.len(),
            });
        }
        Ok(Self { primal, tangent })
    }

    /// Dual with zero tangent.
    pub fn constant(primal: Array2<F>) -> Self {
        let tangent = Array2::zeros(primal.dim());
        Self { primal, tangent }
    }

    pub fn linear(&self, layer: &Linear<F>) -> Self {
        Self {
            primal: layer.forward(self.primal.view()),
            tangent: layer.tangent(self.tangent.view()),
        }
    }

    pub fn activate(self, act: Activation) -> Self {
        if act == Activation::Identity {
            return self;
        }
        let d = act.derivative_map(&self.primal);
        Self {
            primal: act.forward(&self.primal),
            tangent: self.tangent * d,
        }
    }

    /// `γ ⊙ h + β` with all three operands dual.
    pub fn modulate(&self, gamma: &Self, beta: &Self) -> Self {
        let primal = &gamma.primal * &self.primal + &beta.primal;
        let tangent =
            &gamma.tangent * &self.primal + &gamma.primal * &self.tangent + &beta.tangent;
        Self { primal, tangent }
    }

    pub fn is_finite(&self) -> bool {
        self.primal.iter().chain(self.tangent.iter()).all(|v| v.is_finite())
    }
}
