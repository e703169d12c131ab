//! Closed-form quoting rules.
//!
//! With the market volatility `σ`, risk aversion `γ`, fill decay `κ`, arrival
//! scale `A`, inventory `I` and remaining time `τ`:
//!
//! * Avellaneda–Stoikov: reservation offset `r = −I γ σ² τ`, total spread
//!   `γ σ² τ + (2/γ) ln(1 + γ/κ)`, quotes `δ^b = spread/2 − r`,
//!   `δ^a = spread/2 + r`.
//! * Guéant–Lehalle–Fernandez-Tapia (stationary asymptotics): with
//!   `ω = sqrt(γ σ² / (2κA) · (1 + γ/κ)^{1 + κ/γ})`,
//!   `δ^b = (1/γ) ln(1 + γ/κ) + (2I + 1)/2 · ω`,
//!   `δ^a = (1/γ) ln(1 + γ/κ) − (2I − 1)/2 · ω`.
//! * GLFT with drift: the GLFT quotes skewed by `m = μ̂ τ_ref`:
//!   `δ^b + m`, `δ^a − m`.
//!
//! Single-step rules are lifted to chunks by rolling `τ` forward one step per
//! row with inventory held fixed. All quotes are clamped at zero.

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::simulator::{ActionChunk, MarketParams, Observation};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    /// γ
    pub risk_aversion: f64,
    /// κ, shared with the market's fill model.
    pub fill_decay: f64,
    /// A, arrival intensity at zero spread.
    pub fill_scale: f64,
    /// μ̂ (relative drift per unit time).
    pub drift_estimate: f64,
    /// τ_ref, horizon over which the drift skews the quotes.
    pub drift_horizon: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            risk_aversion: 0.1,
            fill_decay: 1.5,
            fill_scale: 1.0,
            drift_estimate: 0.0,
            drift_horizon: 1.0,
        }
    }
}

impl ExpertParams {
    /// Parameters for a market: κ from the fill model, μ̂ from the drift.
    pub fn for_market(market: &MarketParams, risk_aversion: f64) -> Self {
        Self {
            risk_aversion,
            fill_decay: market.fill_decay,
            drift_estimate: market.mu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.risk_aversion > 0.0 && self.fill_decay > 0.0 && self.fill_scale > 0.0) {
            return Err(invalid("expert needs risk_aversion, fill_decay, fill_scale > 0"));
        }
        if !(self.drift_estimate.is_finite() && self.drift_horizon >= 0.0) {
            return Err(invalid("expert drift parameters must be finite"));
        }
        Ok(())
    }

    /// `(1/γ) ln(1 + γ/κ)`
    pub fn base_half_spread(&self) -> f64 {
        let g = self.risk_aversion;
        (1.0 + g / self.fill_decay).ln() / g
    }

    /// GLFT inventory-skew slope `ω`.
    pub fn glft_slope(&self, sigma: f64) -> f64 {
        let (g, k, a) = (self.risk_aversion, self.fill_decay, self.fill_scale);
        (g * sigma * sigma / (2.0 * k * a) * (1.0 + g / k).powf(1.0 + k / g)).sqrt()
    }
}

/// Avellaneda–Stoikov quotes `(δ^b, δ^a)` at remaining time `tau`.
pub fn as_quote(inventory: i64, tau: f64, sigma: f64, p: &ExpertParams) -> (f64, f64) {
    let g = p.risk_aversion;
    let var = sigma * sigma;
    let r_off = -(inventory as f64) * g * var * tau;
    let spread = g * var * tau + 2.0 * p.base_half_spread();
    ((0.5 * spread - r_off).max(0.0), (0.5 * spread + r_off).max(0.0))
}

/// Stationary GLFT quotes `(δ^b, δ^a)`.
pub fn glft_quote(inventory: i64, sigma: f64, p: &ExpertParams) -> (f64, f64) {
    let base = p.base_half_spread();
    let w = p.glft_slope(sigma);
    let q = inventory as f64;
    (
        (base + (2.0 * q + 1.0) * 0.5 * w).max(0.0),
        (base - (2.0 * q - 1.0) * 0.5 * w).max(0.0),
    )
}

/// GLFT quotes skewed by the expected drift.
pub fn glft_drift_quote(inventory: i64, sigma: f64, p: &ExpertParams) -> (f64, f64) {
    let base = p.base_half_spread();
    let w = p.glft_slope(sigma);
    let q = inventory as f64;
    let shift = p.drift_estimate * p.drift_horizon;
    (
        (base + (2.0 * q + 1.0) * 0.5 * w + shift).max(0.0),
        (base - (2.0 * q - 1.0) * 0.5 * w - shift).max(0.0),
    )
}

pub fn as_quotes(obs: &Observation, params: &ExpertParams, market: &MarketParams, t_pred: usize) -> ActionChunk {
    let sig = market.sigma;
    let tau = obs.remaining_time();
    ActionChunk::new(
        (0..t_pred)
            .map(|k| {
                let tau_k = (tau - k as f64 * obs.dt).max(0.0);
                let (b, a) = as_quote(obs.inventory, tau_k, sig, params);
                [b, a]
            })
            .collect(),
    )
}

pub fn glft_quotes(obs: &Observation, params: &ExpertParams, market: &MarketParams, t_pred: usize) -> ActionChunk {
    let (b, a) = glft_quote(obs.inventory, market.sigma, params);
    ActionChunk::repeat(b, a, t_pred)
}

pub fn glft_drift_quotes(
    obs: &Observation,
    params: &ExpertParams,
    market: &MarketParams,
    t_pred: usize,
) -> ActionChunk {
    let (b, a) = glft_drift_quote(obs.inventory, market.sigma, params);
    ActionChunk::repeat(b, a, t_pred)
}
