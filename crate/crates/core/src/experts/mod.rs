//! Demonstration strategies and the random baseline.

mod closed_form;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use closed_form::{
    as_quote, as_quotes, glft_drift_quote, glft_drift_quotes, glft_quote, glft_quotes, ExpertParams,
};

use crate::noiserl::{DecoderKind, EvalMode, IdentityDecoder, NoiseAgent, NoisePolicy};
use crate::rng::Rng;
use crate::simulator::{ActionChunk, ChunkPolicy, MarketParams, Observation};
use crate::{Error, Result};

/// Default upper bound for random spreads.
pub const DEFAULT_MAX_SPREAD: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    As,
    Glft,
    GlftDrift,
    Ppo,
    Random,
}

impl ExpertKind {
    pub const ALL: [ExpertKind; 5] = [Self::As, Self::Glft, Self::GlftDrift, Self::Ppo, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::As => "as",
            Self::Glft => "glft",
            Self::GlftDrift => "glft_drift",
            Self::Ppo => "ppo",
            Self::Random => "random",
        }
    }

    pub fn is_closed_form(self) -> bool {
        matches!(self, Self::As | Self::Glft | Self::GlftDrift)
    }
}

impl fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExpertKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// `T_pred` i.i.d. `U[0, max_spread]` quote pairs.
pub fn random_quotes(rng: &mut Rng, max_spread: f64, t_pred: usize) -> ActionChunk {
    ActionChunk::new(
        (0..t_pred)
            .map(|_| [rng.random::<f64>() * max_spread, rng.random::<f64>() * max_spread])
            .collect(),
    )
}

/// One of the closed-form rules bound to a market.
#[derive(Clone, Debug)]
pub struct ClosedFormExpert {
    kind: ExpertKind,
    params: ExpertParams,
    market: MarketParams,
    t_pred: usize,
}

impl ClosedFormExpert {
    pub fn new(kind: ExpertKind, params: ExpertParams, market: MarketParams, t_pred: usize) -> Result<Self> {
        if !kind.is_closed_form() {
            return Err(crate::error::invalid(format!("{kind} is not a closed-form expert")));
        }
        params.validate()?;
        Ok(Self {
            kind,
            params,
            market,
            t_pred,
        })
    }

    pub fn kind(&self) -> ExpertKind {
        self.kind
    }

    pub fn params(&self) -> &ExpertParams {
        &self.params
    }

    pub fn quote(&self, obs: &Observation) -> ActionChunk {
        match self.kind {
            ExpertKind::As => as_quotes(obs, &self.params, &self.market, self.t_pred),
            ExpertKind::Glft => glft_quotes(obs, &self.params, &self.market, self.t_pred),
            _ => glft_drift_quotes(obs, &self.params, &self.market, self.t_pred),
        }
    }
}

impl ChunkPolicy for ClosedFormExpert {
    fn act(&self, obs: &[Observation], _rngs: &mut [Rng]) -> Result<Vec<ActionChunk>> {
        Ok(obs.iter().map(|o| self.quote(o)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct RandomExpert {
    pub max_spread: f64,
    pub t_pred: usize,
}

impl RandomExpert {
    pub fn new(max_spread: f64, t_pred: usize) -> Result<Self> {
        if !(max_spread.is_finite() && max_spread >= 0.0) {
            return Err(crate::error::invalid("max_spread must be finite and >= 0"));
        }
        Ok(Self { max_spread, t_pred })
    }
}

impl ChunkPolicy for RandomExpert {
    fn act(&self, obs: &[Observation], rngs: &mut [Rng]) -> Result<Vec<ActionChunk>> {
        Ok(rngs
            .iter_mut()
            .take(obs.len())
            .map(|r| random_quotes(r, self.max_spread, self.t_pred))
            .collect())
    }
}

/// Action-space PPO agent, quoting its mean action.
pub type PpoExpert = NoiseAgent<IdentityDecoder>;

/// Wraps a policy trained against the identity decoder.
pub fn ppo_expert(policy: NoisePolicy<f64>) -> Result<PpoExpert> {
    let info = policy.spec().decoder.clone();
    if info.kind != DecoderKind::Identity {
        return Err(Error::Checkpoint("PPO expert must use the identity decoder".into()));
    }
    let decoder = IdentityDecoder {
        t_pred: info.t_pred,
        max_spread: info.max_spread,
    };
    NoiseAgent::new(policy, decoder, EvalMode::Mean)
}

pub fn load_ppo_expert(path: &std::path::Path) -> Result<PpoExpert> {
    let ckpt = crate::net::Checkpoint::load(path)?;
    ppo_expert(NoisePolicy::from_checkpoint(&ckpt)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng;
    use crate::simulator::{run_episodes, ChunkConfig};

    #[test]
    fn names_round_trip() {
        for k in ExpertKind::ALL {
            assert_eq!(k.name().parse::<ExpertKind>().unwrap(), k);
        }
        assert!(matches!("gflt".parse::<ExpertKind>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn random_is_reproducible_and_bounded() {
        let a = random_quotes(&mut rng::policy(4, 1), 2.0, 8);
        let b = random_quotes(&mut rng::policy(4, 1), 2.0, 8);
        assert_eq!(a, b);
        assert!(a.rows().iter().flatten().all(|v| (0.0..=2.0).contains(v)));
    }

    #[test]
    fn untrained_ppo_expert_is_finite_clamped_and_deterministic() {
        use crate::meanflow::Normalizer;
        use crate::noiserl::{DecoderInfo, NoisePolicyConfig};
        let info = DecoderInfo::identity(8, 3.0);
        let cfg = NoisePolicyConfig {
            mean_bias_init: 5.0,
            ..NoisePolicyConfig::default()
        };
        let policy = NoisePolicy::new(cfg, Normalizer::identity(16), info, &mut rng::stream(1, 1)).unwrap();
        let e = ppo_expert(policy).unwrap();
        let o = vec![obs(2, 10, 100.0), obs(-4, 50, 90.0)];
        let mut r1 = vec![rng::stream(0, 1), rng::stream(0, 2)];
        let mut r2 = vec![rng::stream(5, 1), rng::stream(5, 2)];
        let a = e.act(&o, &mut r1).unwrap();
        assert_eq!(a, e.act(&o, &mut r2).unwrap());
        for c in &a {
            assert_eq!(c.len(), 8);
            assert!(c.rows().iter().flatten().all(|v| (0.0..=3.0).contains(v)));
        }
    }

    #[test]
    fn ppo_is_not_closed_form() {
        let m = MarketParams::default();
        assert!(ClosedFormExpert::new(ExpertKind::Ppo, ExpertParams::default(), m, 8).is_err());
    }

    #[test]
    fn experts_trade_in_calm_market() {
        let m = MarketParams { sigma: 0.02, ..MarketParams::default() };
        let cfg = ChunkConfig::default();
        let seeds: Vec<u64> = (0..20).collect();
        for kind in [ExpertKind::As, ExpertKind::Glft, ExpertKind::GlftDrift] {
            let e = ClosedFormExpert::new(kind, ExpertParams::for_market(&m, 0.1), m.clone(), cfg.t_pred).unwrap();
            let res = run_episodes(&e, &m, cfg, &seeds, rng::key_of(kind.name())).unwrap();
            let fills: u32 = res.iter().map(|r| r.bid_fills + r.ask_fills).sum();
            assert!(fills > 100, "{kind}: {fills}");
        }
    }

    fn obs(inventory: i64, step: usize, mid: f64) -> Observation {
        Observation {
            features: vec![0.0; 16],
            inventory,
            step,
            horizon_steps: 100,
            dt: 0.01,
            mid,
        }
    }

    proptest! {
        #[test]
        fn closed_form_chunks_are_valid(
            inv in -50i64..50,
            step in 0usize..=100,
            mid in 1.0f64..500.0,
            sigma in 0.0f64..1.0,
            gamma in 0.01f64..2.0,
            drift in -0.05f64..0.05,
        ) {
            let m = MarketParams { sigma, mu: drift, ..MarketParams::default() };
            let p = ExpertParams::for_market(&m, gamma);
            for kind in [ExpertKind::As, ExpertKind::Glft, ExpertKind::GlftDrift] {
                let e = ClosedFormExpert::new(kind, p.clone(), m.clone(), 8).unwrap();
                let c = e.quote(&obs(inv, step, mid));
                prop_assert_eq!(c.len(), 8);
                prop_assert!(c.rows().iter().flatten().all(|v| v.is_finite() && *v >= 0.0));
            }
        }

        #[test]
        fn as_is_monotone_in_inventory(inv in -50i64..50, step in 0usize..100, sigma in 0.001f64..0.5) {
            let m = MarketParams { sigma, ..MarketParams::default() };
            let p = ExpertParams::for_market(&m, 0.1);
            let lo = as_quotes(&obs(inv, step, 100.0), &p, &m, 8);
            let hi = as_quotes(&obs(inv + 1, step, 100.0), &p, &m, 8);
            for (l, h) in lo.rows().iter().zip(hi.rows()) {
                prop_assert!(h[1] <= l[1] && h[0] >= l[0]);
            }
        }

        #[test]
        fn glft_ignores_everything_but_inventory(inv in -20i64..20, step in 0usize..100, noise in -5.0f64..5.0) {
            let m = MarketParams::default();
            let p = ExpertParams::for_market(&m, 0.1);
            let mut o = obs(inv, step, 100.0);
            let base = glft_quotes(&o, &p, &m, 8);
            o.features.iter_mut().for_each(|f| *f = noise);
            o.step = 0;
            prop_assert_eq!(glft_quotes(&o, &p, &m, 8), base);
        }
    }
}
