use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HawkesParams;

/// Running exponential-kernel sums of a bivariate Hawkes process.
///
/// `exc_xy` is the current contribution of past `y` events to the intensity of
/// `x` (`a` = market buys, `b` = market sells), valid at `last_update`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HawkesState {
    pub exc_aa: f64,
    pub exc_ab: f64,
    pub exc_bb: f64,
    pub exc_ba: f64,
    pub last_update: f64,
}

impl HawkesState {
    pub fn at(time: f64) -> Self {
        Self {
            last_update: time,
            ..Self::default()
        }
    }

    /// Excitation levels equal to their stationary expectations, so an episode
    /// starts with the long-run mean intensities.
    pub fn stationary(params: &HawkesParams, time: f64) -> Self {
        let (la, lb) = params.stationary_rates();
        let b = params.beta;
        Self {
            exc_aa: params.alpha_aa * la / b,
            exc_ab: params.alpha_ab * lb / b,
            exc_bb: params.alpha_bb * lb / b,
            exc_ba: params.alpha_ba * la / b,
            last_update: time,
        }
    }

    /// `(λ_a(t), λ_b(t))` without mutating the state. `t ≥ last_update`.
    pub fn intensities(&self, params: &HawkesParams, t: f64) -> (f64, f64) {
        debug_assert!(t >= self.last_update - 1e-12);
        let decay = (-params.beta * (t - self.last_update).max(0.0)).exp();
        (
            params.mu_a + (self.exc_aa + self.exc_ab) * decay,
            params.mu_b + (self.exc_bb + self.exc_ba) * decay,
        )
    }

    pub fn decay_to(&mut self, params: &HawkesParams, t: f64) {
        let decay = (-params.beta * (t - self.last_update).max(0.0)).exp();
        self.exc_aa *= decay;
        self.exc_ab *= decay;
        self.exc_bb *= decay;
        self.exc_ba *= decay;
        self.last_update = t;
    }

    pub fn record_buy(&mut self, params: &HawkesParams) {
        self.exc_aa += params.alpha_aa;
        self.exc_ba += params.alpha_ba;
    }

    pub fn record_sell(&mut self, params: &HawkesParams) {
        self.exc_bb += params.alpha_bb;
        self.exc_ab += params.alpha_ab;
    }
}

/// Convenience form of [`HawkesState::intensities`].
pub fn hawkes_intensities(state: &HawkesState, params: &HawkesParams, t: f64) -> (f64, f64) {
    state.intensities(params, t)
}

/// Samples arrivals on `[last_update, last_update + dt)` by Ogata thinning and
/// returns `(n_buy, n_sell, state decayed to the interval end)`.
///
/// Intensities only decay between events, so the total intensity right after
/// the latest accepted event bounds the intensity until the next one.
pub fn simulate_hawkes_step<R: Rng + ?Sized>(
    state: &HawkesState,
    params: &HawkesParams,
    dt: f64,
    rng: &mut R,
) -> (u32, u32, HawkesState) {
    let mut s = *state;
    let end = s.last_update + dt;
    let (mut n_buy, mut n_sell) = (0u32, 0u32);
    loop {
        let (la, lb) = s.intensities(params, s.last_update);
        let bound = la + lb;
        if bound <= 0.0 {
            s.decay_to(params, end);
            break;
        }
        let u: f64 = rng.random();
        let wait = -(1.0 - u).ln() / bound;
        let t = s.last_update + wait;
        if t >= end {
            s.decay_to(params, end);
            break;
        }
        s.decay_to(params, t);
        let (la, lb) = s.intensities(params, t);
        let v = rng.random::<f64>() * bound;
        if v < la {
            s.record_buy(params);
            n_buy += 1;
        } else if v < la + lb {
            s.record_sell(params);
            n_sell += 1;
        }
    }
    (n_buy, n_sell, s)
}
