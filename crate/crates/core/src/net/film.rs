use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{Activation, DualTensor, Mlp, MlpCache, Parameters};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Feature-wise linear modulation `h' = γ(s) ⊙ h + β(s)`.
///
/// The conditioner maps the condition `s` to the concatenation `[γ | β]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilmLayer<F> {
    conditioner: Mlp<F>,
    width: usize,
}

#[derive(Clone, Debug)]
pub struct FilmCache<F> {
    cond: MlpCache<F>,
    gamma: Array2<F>,
    h: Array2<F>,
}

impl<F: Scalar> FilmLayer<F> {
    /// Conditioner `cond_dim → cond_hidden → 2·width`. Its output layer starts at
    /// zero weights with γ-bias 1 and β-bias 0, so modulation begins as identity.
    pub fn new<R: Rng + ?Sized>(
        cond_dim: usize,
        cond_hidden: usize,
        width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let dims: Vec<usize> = if cond_hidden == 0 {
            vec![cond_dim, 2 * width]
        } else {
            vec![cond_dim, cond_hidden, 2 * width]
        };
        let mut conditioner = Mlp::new(&dims, activation, Activation::Identity, rng)?;
        let head = conditioner.layers_mut().last_mut().unwrap();
        head.weight.fill(F::zero());
        head.bias.slice_mut(s![..width]).fill(F::one());
        head.bias.slice_mut(s![width..]).fill(F::zero());
        Ok(Self { conditioner, width })
    }

    pub fn from_conditioner(conditioner: Mlp<F>) -> Result<Self> {
        let out = conditioner.output_dim();
        if out % 2 != 0 {
            return Err(crate::error::invalid(
                "FiLM conditioner output must hold γ and β of equal width",
            ));
        }
        Ok(Self {
            conditioner,
            width: out / 2,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cond_dim(&self) -> usize {
        self.conditioner.input_dim()
    }

    pub fn conditioner(&self) -> &Mlp<F> {
        &self.conditioner
    }

    pub fn conditioner_mut(&mut self) -> &mut Mlp<F> {
        &mut self.conditioner
    }

    fn check(&self, h: ArrayView2<F>, s: ArrayView2<F>) -> Result<()> {
        if h.ncols() != self.width {
            return Err(Error::Dimension {
                context: "FiLM features",
                expected: self.width,
                got: h.ncols(),
            });
        }
        if h.nrows() != s.nrows() {
            return Err(Error::Dimension {
                context: "FiLM batch",
                expected: h.nrows(),
                got: s.nrows(),
            });
        }
        Ok(())
    }

    /// `(γ(s), β(s))` for a batch of conditions.
    pub fn modulation(&self, s: ArrayView2<F>) -> Result<(Array2<F>, Array2<F>)> {
        let out = self.conditioner.forward(s)?;
        let gamma = out.slice(s![.., ..self.width]).to_owned();
        let beta = out.slice(s![.., self.width..]).to_owned();
        Ok((gamma, beta))
    }

    pub fn forward(&self, h: ArrayView2<F>, s: ArrayView2<F>) -> Result<Array2<F>> {
        self.check(h, s)?;
        let (gamma, beta) = self.modulation(s)?;
        Ok(gamma * &h + beta)
    }

    pub fn forward_cached(
        &self,
        h: ArrayView2<F>,
        s: ArrayView2<F>,
    ) -> Result<(Array2<F>, FilmCache<F>)> {
        self.check(h, s)?;
        let (out, cond) = self.conditioner.forward_cached(s)?;
        let gamma = out.slice(s![.., ..self.width]).to_owned();
        let beta = out.slice(s![.., self.width..]);
        let y = &gamma * &h + &beta;
        Ok((
            y,
            FilmCache {
                cond,
                gamma,
                h: h.to_owned(),
            },
        ))
    }

    /// Returns `(∂h, conditioner parameter gradients, ∂s)`.
    pub fn backward(
        &self,
        cache: &FilmCache<F>,
        upstream: ArrayView2<F>,
    ) -> (Array2<F>, Vec<F>, Array2<F>) {
        let grad_h = &upstream * &cache.gamma;
        let grad_gamma = &upstream * &cache.h;
        let grad_out = concatenate![Axis(1), grad_gamma, upstream];
        let g = self.conditioner.backward(&cache.cond, grad_out.view());
        (grad_h, g.params, g.input)
    }

    /// Forward-mode modulation; a zero condition tangent skips the conditioner's
    /// tangent pass.
    pub fn jvp(&self, h: &DualTensor<F>, s: &DualTensor<F>) -> Result<DualTensor<F>> {
        self.check(h.primal.view(), s.primal.view())?;
        let cond = if s.tangent.iter().all(|v| v.is_zero()) {
            if !self.conditioner.is_smooth() {
                let bad = *self
                    .conditioner
                    .activations()
                    .iter()
                    .find(|a| !a.is_smooth())
                    .unwrap();
                return Err(Error::NonSmoothActivation(bad));
            }
            DualTensor::constant(self.conditioner.forward(s.primal.view())?)
        } else {
            self.conditioner.jvp(s)?
        };
        let split = |a: &Array2<F>, lo: bool| {
            if lo {
                a.slice(s![.., ..self.width]).to_owned()
            } else {
                a.slice(s![.., self.width..]).to_owned()
            }
        };
        let gamma = DualTensor {
            primal: split(&cond.primal, true),
            tangent: split(&cond.tangent, true),
        };
        let beta = DualTensor {
            primal: split(&cond.primal, false),
            tangent: split(&cond.tangent, false),
        };
        Ok(h.modulate(&gamma, &beta))
    }
}

impl<F: Scalar> Parameters<F> for FilmLayer<F> {
    fn num_params(&self) -> usize {
        self.conditioner.num_params()
    }

    fn write_params(&self, out: &mut Vec<F>) {
        self.conditioner.write_params(out)
    }

    fn read_params(&mut self, src: &[F]) -> usize {
        self.conditioner.read_params(src)
    }
}
