use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::Result;

/// Coefficients of the bivariate exponential-kernel Hawkes process driving
/// market-buy (`a`) and market-sell (`b`) arrivals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub mu_a: f64,
    pub mu_b: f64,
    /// buy → buy excitation
    pub alpha_aa: f64,
    /// sell → buy excitation
    pub alpha_ab: f64,
    /// sell → sell excitation
    pub alpha_bb: f64,
    /// buy → sell excitation
    pub alpha_ba: f64,
    pub beta: f64,
}

impl HawkesParams {
    /// Symmetric parameters whose stationary per-side rate is `rate`, with
    /// branching ratios `self_ratio = α_self/β` and `cross_ratio = α_cross/β`.
    pub fn symmetric(rate: f64, self_ratio: f64, cross_ratio: f64, beta: f64) -> Result<Self> {
        let p = Self {
            mu_a: rate * (1.0 - self_ratio - cross_ratio),
            mu_b: rate * (1.0 - self_ratio - cross_ratio),
            alpha_aa: self_ratio * beta,
            alpha_ab: cross_ratio * beta,
            alpha_bb: self_ratio * beta,
            alpha_ba: cross_ratio * beta,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn poisson(mu_a: f64, mu_b: f64) -> Self {
        Self {
            mu_a,
            mu_b,
            alpha_aa: 0.0,
            alpha_ab: 0.0,
            alpha_bb: 0.0,
            alpha_ba: 0.0,
            beta: 1.0,
        }
    }

    /// Branching matrix `[[α_aa, α_ab], [α_ba, α_bb]] / β`.
    pub fn branching_matrix(&self) -> [[f64; 2]; 2] {
        [
            [self.alpha_aa / self.beta, self.alpha_ab / self.beta],
            [self.alpha_ba / self.beta, self.alpha_bb / self.beta],
        ]
    }

    pub fn spectral_radius(&self) -> f64 {
        let [[a, b], [c, d]] = self.branching_matrix();
        // nonnegative entries: both eigenvalues are real
        let half_tr = 0.5 * (a + d);
        let disc = (0.5 * (a - d)).powi(2) + b * c;
        half_tr + disc.max(0.0).sqrt()
    }

    /// Long-run mean rates `(λ̄_a, λ̄_b)` solving `λ̄ = μ + B λ̄`.
    pub fn stationary_rates(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.branching_matrix();
        let (m11, m12, m21, m22) = (1.0 - a, -b, -c, 1.0 - d);
        let det = m11 * m22 - m12 * m21;
        (
            (m22 * self.mu_a - m12 * self.mu_b) / det,
            (m11 * self.mu_b - m21 * self.mu_a) / det,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("mu_a", self.mu_a),
            ("mu_b", self.mu_b),
            ("alpha_aa", self.alpha_aa),
            ("alpha_ab", self.alpha_ab),
            ("alpha_bb", self.alpha_bb),
            ("alpha_ba", self.alpha_ba),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("hawkes.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(invalid(format!("hawkes.beta must be > 0, got {}", self.beta)));
        }
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return Err(invalid(format!(
                "Hawkes branching matrix has spectral radius {rho:.4} >= 1 (explosive)"
            )));
        }
        Ok(())
    }
}

/// All coefficients of one market scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub hurst: f64,
    pub jump_intensity: f64,
    pub jump_mean: f64,
    pub jump_std: f64,
    pub hawkes: HawkesParams,
    /// κ in the per-arrival fill probability `exp(-κ δ)`.
    pub fill_decay: f64,
    pub horizon_steps: usize,
    pub dt: f64,
    pub s0: f64,
    /// `c_inv` in `φ(I) = c_inv·I²`; defaults to half of the reference half-spread `1/κ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inventory_penalty: Option<f64>,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: 0.1,
            hurst: 0.5,
            jump_intensity: 2.0,
            jump_mean: 0.0,
            jump_std: 0.02,
            hawkes: HawkesParams::symmetric(20.0, 0.3, 0.1, 10.0).expect("stable defaults"),
            fill_decay: 1.5,
            horizon_steps: 100,
            dt: 0.01,
            s0: 100.0,
            inventory_penalty: None,
        }
    }
}

/// Largest allowed `λ_J·dt` for the per-step Bernoulli jump approximation.
pub const MAX_JUMP_PROB: f64 = 0.1;

impl MarketParams {
    pub fn inventory_penalty(&self) -> f64 {
        self.inventory_penalty
            .unwrap_or(0.5 / self.fill_decay)
    }

    /// `φ(I) = c_inv·I²`.
    pub fn terminal_penalty(&self, inventory: i64) -> f64 {
        let i = inventory as f64;
        self.inventory_penalty() * i * i
    }

    pub fn price_floor(&self) -> f64 {
        1e-6 * self.s0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_steps as f64 * self.dt
    }

    /// Mean of the two stationary arrival rates.
    pub fn mean_arrival_rate(&self) -> f64 {
        let (a, b) = self.hawkes.stationary_rates();
        0.5 * (a + b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("mu", self.mu),
            ("jump_mean", self.jump_mean),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("jump_intensity", self.jump_intensity),
            ("jump_std", self.jump_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(invalid(format!("hurst must lie in (0,1), got {}", self.hurst)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return Err(invalid(format!("s0 must be > 0, got {}", self.s0)));
        }
        if !(self.fill_decay.is_finite() && self.fill_decay > 0.0) {
            return Err(invalid(format!("fill_decay must be > 0, got {}", self.fill_decay)));
        }
        if self.horizon_steps == 0 {
            return Err(invalid("horizon_steps must be positive"));
        }
        if self.jump_intensity * self.dt > MAX_JUMP_PROB {
            return Err(invalid(format!(
                "jump_intensity·dt = {} exceeds {MAX_JUMP_PROB}; refine dt",
                self.jump_intensity * self.dt
            )));
        }
        if let Some(c) = self.inventory_penalty {
            if !(c.is_finite() && c >= 0.0) {
                return Err(invalid(format!("inventory_penalty must be >= 0, got {c}")));
            }
        }
        self.hawkes.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        MarketParams::default().validate().unwrap();
    }

    #[test]
    fn explosive_hawkes_is_rejected() {
        let mut h = HawkesParams::poisson(1.0, 1.0);
        h.alpha_aa = 0.6;
        h.alpha_ab = 0.6;
        h.alpha_ba = 0.6;
        h.alpha_bb = 0.6;
        assert!(h.validate().is_err());
        assert!((h.spectral_radius() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn stationary_rates_solve_linear_system() {
        let h = HawkesParams {
            mu_a: 1.0,
            mu_b: 2.0,
            alpha_aa: 0.2,
            alpha_ab: 0.3,
            alpha_bb: 0.1,
            alpha_ba: 0.4,
            beta: 1.0,
        };
        let (la, lb) = h.stationary_rates();
        assert!((la - (1.0 + 0.2 * la + 0.3 * lb)).abs() < 1e-12);
        assert!((lb - (2.0 + 0.4 * la + 0.1 * lb)).abs() < 1e-12);
        let s = HawkesParams::symmetric(25.0, 0.3, 0.1, 10.0).unwrap();
        let (a, b) = s.stationary_rates();
        assert!((a - 25.0).abs() < 1e-9 && (b - 25.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_market_fields_are_rejected() {
        let bad = [
            MarketParams { hurst: 1.0, ..Default::default() },
            MarketParams { sigma: -0.1, ..Default::default() },
            MarketParams { dt: 0.0, ..Default::default() },
            MarketParams { s0: 0.0, ..Default::default() },
            MarketParams { jump_intensity: 20.0, ..Default::default() },
            MarketParams { fill_decay: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
