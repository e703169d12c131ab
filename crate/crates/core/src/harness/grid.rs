//! Training scenario grids and the four benchmark regimes.

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::simulator::{HawkesParams, MarketParams, Scenario, ScenarioFile};
use crate::Result;

/// Self- and cross-excitation as fractions of `β`, shared by every generated market.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderFlowShape {
    pub self_ratio: f64,
    pub cross_ratio: f64,
    pub beta: f64,
}

impl Default for OrderFlowShape {
    fn default() -> Self {
        Self {
            self_ratio: 0.3,
            cross_ratio: 0.1,
            beta: 10.0,
        }
    }
}

impl OrderFlowShape {
    /// `base` with volatility `sigma` and mean arrival rate `rate`.
    pub fn market(&self, base: &MarketParams, sigma: f64, rate: f64) -> Result<MarketParams> {
        let market = MarketParams {
            sigma,
            hawkes: HawkesParams::symmetric(rate, self.self_ratio, self.cross_ratio, self.beta)?,
            ..base.clone()
        };
        market.validate()?;
        Ok(market)
    }
}

/// Cartesian product of volatility, arrival-rate and jump-intensity axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub volatility: Vec<f64>,
    pub arrival_rate: Vec<f64>,
    pub jump_intensity: Vec<f64>,
    pub order_flow: OrderFlowShape,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            volatility: vec![0.05, 0.1, 0.3],
            arrival_rate: vec![10.0, 20.0, 40.0],
            jump_intensity: vec![0.0, 2.0, 5.0],
            order_flow: OrderFlowShape::default(),
        }
    }
}

impl GridConfig {
    pub fn len(&self) -> usize {
        self.volatility.len() * self.arrival_rate.len() * self.jump_intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scenarios in lexicographic axis order (volatility slowest, jumps fastest).
pub fn build_scenario_grid(cfg: &GridConfig, base: &MarketParams) -> Result<Vec<Scenario>> {
    for (name, axis) in [
        ("volatility", &cfg.volatility),
        ("arrival_rate", &cfg.arrival_rate),
        ("jump_intensity", &cfg.jump_intensity),
    ] {
        if axis.is_empty() {
            return Err(invalid(format!("scenario grid axis `{name}` is empty")));
        }
    }
    let mut out = Vec::with_capacity(cfg.len());
    for &sigma in &cfg.volatility {
        for &rate in &cfg.arrival_rate {
            for &jumps in &cfg.jump_intensity {
                let mut market = cfg.order_flow.market(base, sigma, rate)?;
                market.jump_intensity = jumps;
                market.validate()?;
                out.push(Scenario {
                    name: format!("sigma{sigma}_rate{rate}_jumps{jumps}"),
                    market,
                });
            }
        }
    }
    Ok(out)
}

pub fn grid_file(cfg: &GridConfig, base: &MarketParams) -> Result<ScenarioFile> {
    Ok(ScenarioFile::new(build_scenario_grid(cfg, base)?))
}

/// One of the four evaluation regimes: high/low volatility × high/low arrival rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    HH,
    HL,
    LH,
    LL,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::HH, Regime::HL, Regime::LH, Regime::LL];

    pub fn name(self) -> &'static str {
        match self {
            Regime::HH => "HH",
            Regime::HL => "HL",
            Regime::LH => "LH",
            Regime::LL => "LL",
        }
    }

    pub fn sigma(self) -> f64 {
        match self {
            Regime::HH | Regime::HL => 0.25,
            Regime::LH | Regime::LL => 0.02,
        }
    }

    pub fn arrival_rate(self) -> f64 {
        match self {
            Regime::HH | Regime::LH => 50.0,
            Regime::HL | Regime::LL => 25.0,
        }
    }

    /// Regime market built on `base` with `H = 0.5` and zero drift.
    pub fn market(self, base: &MarketParams, flow: &OrderFlowShape) -> Result<MarketParams> {
        let mut m = flow.market(base, self.sigma(), self.arrival_rate())?;
        m.hurst = 0.5;
        m.mu = 0.0;
        Ok(m)
    }

    pub fn scenario(self, base: &MarketParams, flow: &OrderFlowShape) -> Result<Scenario> {
        Ok(Scenario {
            name: self.name().to_string(),
            market: self.market(base, flow)?,
        })
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown regime `{s}` (expected HH, HL, LH or LL)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_27_ordered_scenarios() {
        let g = build_scenario_grid(&GridConfig::default(), &MarketParams::default()).unwrap();
        assert_eq!(g.len(), 27);
        assert_eq!(g[0].market.sigma, 0.05);
        assert_eq!(g[0].market.jump_intensity, 0.0);
        assert_eq!(g[1].market.jump_intensity, 2.0);
        assert_eq!(g[26].market.sigma, 0.3);
        assert!((g[3].market.mean_arrival_rate() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn single_point_and_empty_axes() {
        let cfg = GridConfig {
            volatility: vec![0.1],
            arrival_rate: vec![20.0],
            jump_intensity: vec![1.0],
            ..GridConfig::default()
        };
        assert_eq!(build_scenario_grid(&cfg, &MarketParams::default()).unwrap().len(), 1);
        let empty = GridConfig {
            arrival_rate: vec![],
            ..cfg
        };
        assert!(build_scenario_grid(&empty, &MarketParams::default()).is_err());
    }

    #[test]
    fn grid_round_trips_through_scenario_file() {
        let f = grid_file(&GridConfig::default(), &MarketParams::default()).unwrap();
        let back = ScenarioFile::parse(&f.to_toml().unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn regimes_are_distinct_and_parse() {
        let base = MarketParams::default();
        let flow = OrderFlowShape::default();
        let hh = Regime::HH.market(&base, &flow).unwrap();
        assert_eq!(hh.sigma, 0.25);
        assert!((hh.mean_arrival_rate() - 50.0).abs() < 1e-9);
        assert_eq!(Regime::LL.market(&base, &flow).unwrap().sigma, 0.02);
        assert_eq!("lh".parse::<Regime>().unwrap(), Regime::LH);
        assert!("XX".parse::<Regime>().is_err());
    }
}
