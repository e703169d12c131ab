use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{Activation, DualTensor, Gradients, Parameters};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Affine map `y = x Wᵀ + b` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform fan-in initialization, `U(-1/√in, 1/√in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut draw = || F::of(rng.random_range(-bound..bound));
        let weight = Array2::from_shape_simple_fn((output, input), &mut draw);
        let bias = Array1::from_shape_simple_fn(output, &mut draw);
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Tangent part only: the bias does not depend on the input.
    pub fn tangent(&self, dx: ArrayView2<F>) -> Array2<F> {
        dx.dot(&self.weight.t())
    }

    /// Accumulates `(∂W, ∂b)` into `out` (canonical order) and returns `∂x`.
    pub(crate) fn backward(
        &self,
        input: ArrayView2<F>,
        grad_out: ArrayView2<F>,
        out: &mut Vec<F>,
    ) -> Array2<F> {
        let grad_w = grad_out.t().dot(&input);
        out.extend(grad_w.iter().copied());
        out.extend(grad_out.sum_axis(Axis(0)).iter().copied());
        grad_out.dot(&self.weight)
    }
}

impl<F: Scalar> Parameters<F> for Linear<F> {
    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn write_params(&self, out: &mut Vec<F>) {
        out.extend(self.weight.iter().copied());
        out.extend(self.bias.iter().copied());
    }

    fn read_params(&mut self, src: &[F]) -> usize {
        let nw = self.weight.len();
        let nb = self.bias.len();
        for (dst, &v) in self.weight.iter_mut().zip(&src[..nw]) {
            *dst = v;
        }
        for (dst, &v) in self.bias.iter_mut().zip(&src[nw..nw + nb]) {
            *dst = v;
        }
        nw + nb
    }
}

/// Multilayer perceptron: affine-then-activation per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Linear<F>>,
    activations: Vec<Activation>,
}

/// Values recorded by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache<F> {
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
}

impl<F: Scalar> Mlp<F> {
    /// Builds an MLP over `dims = [in, h1, .., out]`; hidden layers use `hidden`,
    /// the last layer uses `output`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(crate::error::invalid(format!(
                "MLP needs at least two positive dimensions, got {dims:?}"
            )));
        }
        let layers: Vec<_> = dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        let mut activations = vec![hidden; layers.len()];
        *activations.last_mut().unwrap() = output;
        Ok(Self {
            layers,
            activations,
        })
    }

    pub fn from_layers(layers: Vec<Linear<F>>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(crate::error::invalid(
                "MLP needs one activation per layer and at least one layer",
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension {
                    context: "adjacent MLP layers",
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Dimension {
                    context: "MLP bias",
                    expected: l.output_dim(),
                    got: l.bias.len(),
                });
            }
        }
        Ok(Self {
            layers,
            activations,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Linear::output_dim)
            .collect()
    }

    pub fn layers(&self) -> &[Linear<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<F>] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layout(&self) -> Vec<super::LayerTag> {
        self.layers
            .iter()
            .zip(&self.activations)
            .map(|(l, &activation)| super::LayerTag {
                shape: [l.output_dim(), l.input_dim()],
                activation,
            })
            .collect()
    }

    pub fn is_smooth(&self) -> bool {
        self.activations.iter().all(|a| a.is_smooth())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                context: "MLP input",
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let pre = layer.forward(h.view());
            h = act.forward(&pre);
        }
        Ok(h)
    }

    /// Single-sample convenience wrapper around [`Mlp::forward`].
    pub fn forward_one(&self, x: &[F]) -> Result<Vec<F>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> Result<(Array2<F>, MlpCache<F>)> {
        self.check_input(x.ncols())?;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let pre = layer.forward(h.view());
            let next = act.forward(&pre);
            cache.inputs.push(h);
            cache.pre.push(pre);
            h = next;
        }
        Ok((h, cache))
    }

    /// Reverse-mode pass: gradients of `Σ upstream ⊙ output` with respect to
    /// every parameter (canonical order) and the input.
    pub fn backward(&self, cache: &MlpCache<F>, upstream: ArrayView2<F>) -> Gradients<F> {
        let mut per_layer: Vec<Vec<F>> = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            let act = self.activations[i];
            if act != Activation::Identity {
                g = g * act.derivative_map(&cache.pre[i]);
            }
            let mut buf = Vec::with_capacity(self.layers[i].num_params());
            g = self.layers[i].backward(cache.inputs[i].view(), g.view(), &mut buf);
            per_layer.push(buf);
        }
        let mut params = Vec::with_capacity(self.num_params());
        for buf in per_layer.into_iter().rev() {
            params.extend(buf);
        }
        Gradients { params, input: g }
    }

    /// Forward-mode pass propagating the tangent alongside the primal.
    pub fn jvp(&self, x: &DualTensor<F>) -> Result<DualTensor<F>> {
        if let Some(&bad) = self.activations.iter().find(|a| !a.is_smooth()) {
            return Err(Error::NonSmoothActivation(bad));
        }
        self.check_input(x.primal.ncols())?;
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            h = h.linear(layer).activate(*act);
        }
        Ok(h)
    }
}

impl<F: Scalar> Parameters<F> for Mlp<F> {
    fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }

    fn write_params(&self, out: &mut Vec<F>) {
        for l in &self.layers {
            l.write_params(out);
        }
    }

    fn read_params(&mut self, src: &[F]) -> usize {
        let mut used = 0;
        for l in &mut self.layers {
            used += l.read_params(&src[used..]);
        }
        used
    }
}
