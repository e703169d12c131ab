//! Average-velocity training objective.
//!
//! Time runs from data at `t = 0` to noise at `t = 1`, so that one-step
//! generation `a = z1 − u(z1, 0, 1 | s)` recovers the data end of the path.
//! For data `a`, noise `ε` and times `r ≤ t`: `z_t = (1−t) a + t ε`,
//! `v = ε − a`, and the regression target is
//! `u_tgt = v − (t − r)(v·∂_z u + ∂_t u)`, evaluated with one forward-mode pass
//! along `(dz, dr, dt) = (v, 0, 1)` and treated as a constant.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::MeanFlowNet;
use crate::net::Parameters;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Probability of drawing `r = t`.
pub const P_EQUAL_TIMES: f64 = 0.25;

/// Row-wise straight line `(1 − t_i) z0_i + t_i a_i` from `z0` (at 0) to `a` (at 1).
pub fn interpolant<F: Scalar>(z0: ArrayView2<F>, a: ArrayView2<F>, t: &[F]) -> Array2<F> {
    let mut out = Array2::zeros(z0.dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let ti = t[i];
        for j in 0..row.len() {
            row[j] = (F::one() - ti) * z0[[i, j]] + ti * a[[i, j]];
        }
    }
    out
}

/// `t ~ U(0,1)`; `r = t` with probability `p_eq`, otherwise `r ~ U(0, t)`.
pub fn sample_times<R: Rng + ?Sized>(rng: &mut R, p_eq: f64) -> (f64, f64) {
    let t: f64 = rng.random();
    let r = if rng.random::<f64>() < p_eq {
        t
    } else {
        rng.random::<f64>() * t
    };
    (r, t)
}

/// Detached regression target `v − (t − r)·JVP`.
pub fn meanflow_target<F: Scalar>(
    net: &MeanFlowNet<F>,
    z_t: ArrayView2<F>,
    r: &[F],
    t: &[F],
    s: ArrayView2<F>,
    v: ArrayView2<F>,
) -> Result<Array2<F>> {
    let d = net.jvp(z_t, r, t, s, v, F::zero(), F::one())?;
    let mut target = v.to_owned();
    for (i, mut row) in target.axis_iter_mut(Axis(0)).enumerate() {
        let w = t[i] - r[i];
        if w != F::zero() {
            row.zip_mut_with(&d.tangent.row(i), |x, &g| *x -= w * g);
        }
    }
    Ok(target)
}

/// Mean squared error of `u_θ(z, r, t | s)` against a constant target, with
/// parameter gradients.
pub fn regression_loss<F: Scalar>(
    net: &MeanFlowNet<F>,
    z: ArrayView2<F>,
    r: &[F],
    t: &[F],
    s: ArrayView2<F>,
    target: ArrayView2<F>,
) -> Result<(F, Vec<F>)> {
    let x = net.input(z, r, t);
    let (pred, cache) = net.body().forward_cached(x.view(), s)?;
    let diff = &pred - &target;
    let scale = F::one() / F::of(diff.len() as f64);
    let loss = diff.iter().fold(F::zero(), |acc, &e| acc + e * e) * scale;
    if !loss.is_finite() {
        let row = diff
            .axis_iter(Axis(0))
            .position(|r| r.iter().any(|v| !v.is_finite()))
            .unwrap_or(0);
        return Err(Error::Diverged(format!("non-finite loss, first offending batch row {row}")));
    }
    let upstream = diff * (F::of(2.0) * scale);
    let grads = net.body().backward(&cache, upstream.view()).params;
    debug_assert_eq!(grads.len(), net.num_params());
    Ok((loss, grads))
}

/// Loss and gradients for explicit noise and times.
pub fn meanflow_loss_with<F: Scalar>(
    net: &MeanFlowNet<F>,
    states: ArrayView2<F>,
    actions: ArrayView2<F>,
    noise: ArrayView2<F>,
    r: &[F],
    t: &[F],
) -> Result<(F, Vec<F>)> {
    if states.nrows() == 0 {
        return Err(crate::error::invalid("empty batch"));
    }
    let z_t = interpolant(actions, noise, t);
    let v = &noise - &actions;
    let target = meanflow_target(net, z_t.view(), r, t, states, v.view())?;
    regression_loss(net, z_t.view(), r, t, states, target.view())
}

/// Loss and gradients with noise and times drawn from `rng`.
pub fn meanflow_loss<F: Scalar, R: Rng + ?Sized>(
    net: &MeanFlowNet<F>,
    states: ArrayView2<F>,
    actions: ArrayView2<F>,
    rng: &mut R,
    p_eq: f64,
) -> Result<(F, Vec<F>)> {
    let (b, d) = actions.dim();
    let noise = Array2::from_shape_fn((b, d), |_| F::of(rng.sample(StandardNormal)));
    let (mut r, mut t) = (Vec::with_capacity(b), Vec::with_capacity(b));
    for _ in 0..b {
        let (ri, ti) = sample_times(rng, p_eq);
        r.push(F::of(ri));
        t.push(F::of(ti));
    }
    meanflow_loss_with(net, states, actions, noise.view(), &r, &t)
}
