use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    /// x · sigmoid(x)
    Silu,
    Tanh,
    /// Piecewise linear; accepted for plain forward/backward use only.
    Relu,
}

impl Activation {
    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Identity => x,
            Activation::Silu => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(F::zero()),
        }
    }

    /// Derivative with respect to the pre-activation value.
    pub fn derivative<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Identity => F::one(),
            Activation::Silu => {
                let s = sigmoid(x);
                s + x * s * (F::one() - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                F::one() - t * t
            }
            Activation::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }

    pub fn forward<F: Scalar>(self, pre: &Array2<F>) -> Array2<F> {
        match self {
            Activation::Identity => pre.clone(),
            _ => pre.mapv(|x| self.apply(x)),
        }
    }

    pub fn derivative_map<F: Scalar>(self, pre: &Array2<F>) -> Array2<F> {
        pre.mapv(|x| self.derivative(x))
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        for act in [Activation::Silu, Activation::Tanh, Activation::Identity] {
            for &x in &[-3.0_f64, -0.4, 0.0, 0.7, 5.0] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn silu_is_stable_for_large_inputs() {
        assert_eq!(Activation::Silu.apply(-1000.0_f64), -0.0);
        assert_eq!(Activation::Silu.apply(1000.0_f64), 1000.0);
        assert!(Activation::Silu.derivative(-800.0_f64).is_finite());
    }
}
