use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{Activation, DualTensor, FilmCache, FilmLayer, Gradients, Linear, Parameters};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// MLP whose hidden pre-activations are FiLM-modulated by a condition vector:
///
/// `h ← act(γᵢ(s) ⊙ (Wᵢ h + bᵢ) + βᵢ(s))` for each hidden layer, then a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct FilmMlp<F> {
    layers: Vec<Linear<F>>,
    films: Vec<FilmLayer<F>>,
    activation: Activation,
}

#[derive(Clone, Debug)]
pub struct FilmMlpCache<F> {
    inputs: Vec<Array2<F>>,
    modulated: Vec<Array2<F>>,
    films: Vec<FilmCache<F>>,
}

/// Gradients of a [`FilmMlp`]: parameters, main input and condition input.
#[derive(Clone, Debug)]
pub struct FilmMlpGrads<F> {
    pub params: Vec<F>,
    pub input: Array2<F>,
    pub condition: Array2<F>,
}

impl<F: Scalar> FilmMlp<F> {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        cond_dim: usize,
        cond_hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if !activation.is_smooth() {
            return Err(Error::NonSmoothActivation(activation));
        }
        if hidden.is_empty() || hidden.contains(&0) || input_dim == 0 || output_dim == 0 {
            return Err(crate::error::invalid(
                "FiLM MLP needs positive input/output widths and at least one hidden layer",
            ));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        let films = hidden
            .iter()
            .map(|&w| FilmLayer::new(cond_dim, cond_hidden, w, activation, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            films,
            activation,
        })
    }

    pub fn from_parts(
        layers: Vec<Linear<F>>,
        films: Vec<FilmLayer<F>>,
        activation: Activation,
    ) -> Result<Self> {
        if !activation.is_smooth() {
            return Err(Error::NonSmoothActivation(activation));
        }
        if films.is_empty() || layers.len() != films.len() + 1 {
            return Err(crate::error::invalid(
                "FiLM MLP needs one FiLM layer per hidden layer",
            ));
        }
        for (i, film) in films.iter().enumerate() {
            if film.width() != layers[i].output_dim() {
                return Err(Error::Dimension {
                    context: "FiLM width",
                    expected: layers[i].output_dim(),
                    got: film.width(),
                });
            }
            if layers[i].output_dim() != layers[i + 1].input_dim() {
                return Err(Error::Dimension {
                    context: "adjacent FiLM MLP layers",
                    expected: layers[i].output_dim(),
                    got: layers[i + 1].input_dim(),
                });
            }
            if film.cond_dim() != films[0].cond_dim() {
                return Err(Error::Dimension {
                    context: "FiLM condition",
                    expected: films[0].cond_dim(),
                    got: film.cond_dim(),
                });
            }
        }
        Ok(Self {
            layers,
            films,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.films[0].cond_dim()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Linear<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<F>] {
        &mut self.layers
    }

    pub fn films(&self) -> &[FilmLayer<F>] {
        &self.films
    }

    /// Main layers, then each conditioner, in parameter order.
    pub fn layout(&self) -> Vec<super::LayerTag> {
        let n = self.films.len();
        let mut out: Vec<_> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| super::LayerTag {
                shape: [l.output_dim(), l.input_dim()],
                activation: if i < n { self.activation } else { Activation::Identity },
            })
            .collect();
        for f in &self.films {
            out.extend(f.conditioner().layout());
        }
        out
    }

    fn check(&self, x: ArrayView2<F>, s: ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "FiLM MLP input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if s.ncols() != self.cond_dim() {
            return Err(Error::Dimension {
                context: "FiLM MLP condition",
                expected: self.cond_dim(),
                got: s.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<F>, s: ArrayView2<F>) -> Result<Array2<F>> {
        self.check(x, s)?;
        let mut h = x.to_owned();
        for (layer, film) in self.layers.iter().zip(&self.films) {
            let pre = layer.forward(h.view());
            h = self.activation.forward(&film.forward(pre.view(), s)?);
        }
        Ok(self.layers.last().unwrap().forward(h.view()))
    }

    pub fn forward_cached(
        &self,
        x: ArrayView2<F>,
        s: ArrayView2<F>,
    ) -> Result<(Array2<F>, FilmMlpCache<F>)> {
        self.check(x, s)?;
        let n = self.films.len();
        let mut cache = FilmMlpCache {
            inputs: Vec::with_capacity(n + 1),
            modulated: Vec::with_capacity(n),
            films: Vec::with_capacity(n),
        };
        let mut h = x.to_owned();
        for (layer, film) in self.layers.iter().zip(&self.films) {
            let pre = layer.forward(h.view());
            let (m, fc) = film.forward_cached(pre.view(), s)?;
            let next = self.activation.forward(&m);
            cache.inputs.push(h);
            cache.modulated.push(m);
            cache.films.push(fc);
            h = next;
        }
        let out = self.layers.last().unwrap().forward(h.view());
        cache.inputs.push(h);
        Ok((out, cache))
    }

    /// Reverse-mode gradients of `Σ upstream ⊙ output`.
    pub fn backward(&self, cache: &FilmMlpCache<F>, upstream: ArrayView2<F>) -> FilmMlpGrads<F> {
        let n = self.films.len();
        let mut layer_grads: Vec<Vec<F>> = vec![Vec::new(); n + 1];
        let mut film_grads: Vec<Vec<F>> = vec![Vec::new(); n];
        let mut grad_s: Option<Array2<F>> = None;

        let mut g = self.layers[n].backward(cache.inputs[n].view(), upstream, &mut layer_grads[n]);
        for i in (0..n).rev() {
            g = g * self.activation.derivative_map(&cache.modulated[i]);
            let (gh, gp, gs) = self.films[i].backward(&cache.films[i], g.view());
            film_grads[i] = gp;
            grad_s = Some(match grad_s {
                Some(acc) => acc + gs,
                None => gs,
            });
            g = self.layers[i].backward(cache.inputs[i].view(), gh.view(), &mut layer_grads[i]);
        }
        let mut params = Vec::with_capacity(self.num_params());
        for lg in layer_grads.into_iter().chain(film_grads) {
            params.extend(lg);
        }
        FilmMlpGrads {
            params,
            input: g,
            condition: grad_s.expect("at least one FiLM layer"),
        }
    }

    /// Directional derivative of the output along `(dx, ds)`, together with the output.
    pub fn jvp(&self, x: &DualTensor<F>, s: &DualTensor<F>) -> Result<DualTensor<F>> {
        self.check(x.primal.view(), s.primal.view())?;
        let mut h = x.clone();
        for (layer, film) in self.layers.iter().zip(&self.films) {
            h = film.jvp(&h.linear(layer), s)?.activate(self.activation);
        }
        Ok(h.linear(self.layers.last().unwrap()))
    }

    /// Parameter gradients only, wrapped in the generic [`Gradients`] shape.
    pub fn gradients(&self, cache: &FilmMlpCache<F>, upstream: ArrayView2<F>) -> Gradients<F> {
        let g = self.backward(cache, upstream);
        Gradients {
            params: g.params,
            input: g.input,
        }
    }
}

impl<F: Scalar> Parameters<F> for FilmMlp<F> {
    fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum::<usize>()
            + self.films.iter().map(FilmLayer::num_params).sum::<usize>()
    }

    fn write_params(&self, out: &mut Vec<F>) {
        for l in &self.layers {
            l.write_params(out);
        }
        for f in &self.films {
            f.write_params(out);
        }
    }

    fn read_params(&mut self, src: &[F]) -> usize {
        let mut used = 0;
        for l in &mut self.layers {
            used += l.read_params(&src[used..]);
        }
        for f in &mut self.films {
            used += f.read_params(&src[used..]);
        }
        used
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn randomized(seed: u64) -> FilmMlp<f64> {
        let mut r = rng::stream(seed, 0);
        let mut net = FilmMlp::new(5, &[12, 12], 3, 4, 6, Activation::Silu, &mut r).unwrap();
        let p: Vec<f64> = (0..net.num_params())
            .map(|_| r.random_range(-0.6..0.6))
            .collect();
        net.set_params(&p).unwrap();
        net
    }

    fn batch(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
        let mut r = rng::stream(seed, 1);
        Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
    }

    #[test]
    fn rejects_relu_at_construction() {
        let r = FilmMlp::<f64>::new(2, &[4], 1, 2, 0, Activation::Relu, &mut rng::stream(0, 0));
        assert!(matches!(r, Err(Error::NonSmoothActivation(Activation::Relu))));
    }

    #[test]
    fn cached_forward_matches_plain_and_jvp_primal() {
        let net = randomized(1);
        let x = batch(2, 4, 5);
        let s = batch(3, 4, 4);
        let plain = net.forward(x.view(), s.view()).unwrap();
        let (cached, _) = net.forward_cached(x.view(), s.view()).unwrap();
        assert_eq!(plain, cached);
        let d = net
            .jvp(&DualTensor::constant(x), &DualTensor::constant(s))
            .unwrap();
        assert_eq!(d.primal, plain);
        assert!(d.tangent.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn condition_gradient_matches_finite_differences() {
        let net = randomized(4);
        let x = batch(5, 2, 5);
        let s = batch(6, 2, 4);
        let (_, cache) = net.forward_cached(x.view(), s.view()).unwrap();
        let g = net.backward(&cache, Array2::ones((2, 3)).view());
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..4 {
                let mut sp = s.clone();
                sp[[i, j]] += eps;
                let up = net.forward(x.view(), sp.view()).unwrap().sum();
                sp[[i, j]] -= 2.0 * eps;
                let down = net.forward(x.view(), sp.view()).unwrap().sum();
                let fd = (up - down) / (2.0 * eps);
                assert!((fd - g.condition[[i, j]]).abs() < 1e-6);
            }
        }
    }
}
