//! Method registry: names every benchmarked strategy and builds it for a market.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::Regime;
use crate::experts::{ppo_expert, ClosedFormExpert, ExpertKind, ExpertParams, RandomExpert};
use crate::meanflow::MeanFlowNet;
use crate::noiserl::{EvalMode, FrozenMeanFlow, NoiseAgent, NoisePolicy};
use crate::simulator::{ChunkConfig, ChunkPolicy, MarketParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    As,
    Glft,
    GlftDrift,
    Ppo,
    Meanflow,
    Finflowrl,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Random,
        Method::As,
        Method::Glft,
        Method::GlftDrift,
        Method::Ppo,
        Method::Meanflow,
        Method::Finflowrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::As => "as",
            Method::Glft => "glft",
            Method::GlftDrift => "glft_drift",
            Method::Ppo => "ppo",
            Method::Meanflow => "meanflow",
            Method::Finflowrl => "finflowrl",
        }
    }

    /// The demonstration strategy this method corresponds to, if any.
    pub fn expert(self) -> Option<ExpertKind> {
        match self {
            Method::Random => Some(ExpertKind::Random),
            Method::As => Some(ExpertKind::As),
            Method::Glft => Some(ExpertKind::Glft),
            Method::GlftDrift => Some(ExpertKind::GlftDrift),
            Method::Ppo => Some(ExpertKind::Ppo),
            Method::Meanflow | Method::Finflowrl => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Parameters of the closed-form and random strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertSettings {
    /// γ shared by the closed-form rules.
    pub risk_aversion: f64,
    /// Upper bound of the random strategy's uniform spreads.
    pub random_max_spread: f64,
}

impl Default for ExpertSettings {
    fn default() -> Self {
        Self {
            risk_aversion: 0.1,
            random_max_spread: crate::experts::DEFAULT_MAX_SPREAD,
        }
    }
}

impl ExpertSettings {
    pub fn closed_form(&self, kind: ExpertKind, market: &MarketParams, t_pred: usize) -> Result<ClosedFormExpert> {
        ClosedFormExpert::new(kind, ExpertParams::for_market(market, self.risk_aversion), market.clone(), t_pred)
    }

    pub fn random(&self, t_pred: usize) -> Result<RandomExpert> {
        RandomExpert::new(self.random_max_spread, t_pred)
    }
}

/// Trained artifacts needed by the learned methods.
#[derive(Debug, Default)]
pub struct MethodSet {
    pub experts: ExpertSettings,
    pub meanflow: Option<MeanFlowNet<f64>>,
    /// PPO experts per regime; `ppo_default` serves regimes without one.
    pub ppo: BTreeMap<Regime, NoisePolicy<f64>>,
    pub ppo_default: Option<NoisePolicy<f64>>,
    /// Fine-tuned noise policies per regime.
    pub finflowrl: BTreeMap<Regime, NoisePolicy<f64>>,
    pub finflowrl_mode: Option<EvalMode>,
}

impl MethodSet {
    pub fn new(experts: ExpertSettings) -> Self {
        Self {
            experts,
            ..Self::default()
        }
    }

    /// Instantiates `method` for `market` (evaluated as `regime`).
    pub fn build(
        &self,
        method: Method,
        regime: Option<Regime>,
        market: &MarketParams,
        chunk: ChunkConfig,
    ) -> Result<Box<dyn ChunkPolicy>> {
        let missing = |what: &str| Error::Config(format!("method `{method}` needs a trained {what}"));
        Ok(match method {
            Method::Random => Box::new(self.experts.random(chunk.t_pred)?),
            Method::As | Method::Glft | Method::GlftDrift => {
                let kind = method.expert().expect("closed-form method");
                Box::new(self.experts.closed_form(kind, market, chunk.t_pred)?)
            }
            Method::Ppo => {
                let policy = regime
                    .and_then(|r| self.ppo.get(&r))
                    .or(self.ppo_default.as_ref())
                    .ok_or_else(|| missing("PPO expert"))?;
                Box::new(ppo_expert(policy.clone())?)
            }
            Method::Meanflow => Box::new(self.meanflow.clone().ok_or_else(|| missing("MeanFlow checkpoint"))?),
            Method::Finflowrl => {
                let net = self.meanflow.clone().ok_or_else(|| missing("MeanFlow checkpoint"))?;
                let policy = regime
                    .and_then(|r| self.finflowrl.get(&r))
                    .ok_or_else(|| missing("noise policy for this regime"))?;
                let mode = self.finflowrl_mode.unwrap_or(EvalMode::Sample);
                Box::new(NoiseAgent::new(policy.clone(), FrozenMeanFlow::new(net)?, mode)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("sac".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn learned_methods_need_artifacts() {
        let set = MethodSet::default();
        let m = MarketParams::default();
        let c = ChunkConfig::default();
        assert!(set.build(Method::Glft, None, &m, c).is_ok());
        assert!(set.build(Method::Meanflow, None, &m, c).is_err());
        assert!(set.build(Method::Finflowrl, Some(Regime::HH), &m, c).is_err());
    }
}
