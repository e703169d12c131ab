//! Expert demonstrations and their binary file format.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "FFDS" | u32 format_version | u32 state_dim | u32 t_pred
//! u32 n_experts | n_experts × u8 expert tag
//! u32 n_scenarios | per scenario: u32 name_len, name bytes, u8 winner tag,
//!                   n_experts × f64 mean objective
//! state mean, state std (state_dim × f64 each)
//! action mean, action std (2·t_pred × f64 each)
//! u64 n_records | per record: u32 scenario_id, u8 expert tag,
//!                 state_dim × f64 state, 2·t_pred × f64 action
//! 32-byte SHA-256 of everything above
//! ```

use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::Normalizer;
use crate::experts::ExpertKind;
use crate::scalar::Scalar;
use crate::simulator::{
    ActionChunk, ChunkConfig, ChunkPolicy, EpisodeBatch, Observation, Scenario, run_episodes_blocked,
};
use crate::{rng, Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FFDS";

/// One `(state, next T_pred actions)` training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoPair {
    pub state: Vec<f64>,
    pub action: ActionChunk,
    pub scenario_id: u32,
    pub expert: ExpertKind,
}

/// Per-scenario expert selection result.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioEntry {
    pub name: String,
    pub winner: ExpertKind,
    /// Mean objective of each candidate, in candidate order.
    pub mean_objectives: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub state_dim: usize,
    pub t_pred: usize,
    pub experts: Vec<ExpertKind>,
    pub scenarios: Vec<ScenarioEntry>,
    pub state_norm: Normalizer,
    pub action_norm: Normalizer,
    pub pairs: Vec<DemoPair>,
}

fn tag(kind: ExpertKind) -> u8 {
    ExpertKind::ALL.iter().position(|&k| k == kind).unwrap() as u8
}

fn untag(b: u8) -> Result<ExpertKind> {
    ExpertKind::ALL
        .get(b as usize)
        .copied()
        .ok_or_else(|| Error::Dataset(format!("unknown expert tag {b}")))
}

impl Dataset {
    /// Builds a dataset and fits normalizers on its pairs.
    pub fn new(
        state_dim: usize,
        t_pred: usize,
        experts: Vec<ExpertKind>,
        scenarios: Vec<ScenarioEntry>,
        pairs: Vec<DemoPair>,
    ) -> Result<Self> {
        for p in &pairs {
            if p.state.len() != state_dim {
                return Err(Error::Dataset(format!("state has {} values, expected {state_dim}", p.state.len())));
            }
            p.action.check_shape(t_pred)?;
            if p.action.rows().iter().flatten().any(|v| *v < 0.0) {
                return Err(Error::Dataset("negative spread in demonstration".into()));
            }
        }
        let state_norm = Normalizer::fit(pairs.iter().map(|p| p.state.as_slice()), state_dim)
            .map_err(|e| Error::Dataset(e.to_string()))?;
        let flats: Vec<Vec<f64>> = pairs.iter().map(|p| p.action.to_flat()).collect();
        let action_norm = Normalizer::fit(flats.iter().map(Vec::as_slice), 2 * t_pred)
            .map_err(|e| Error::Dataset(e.to_string()))?;
        Ok(Self {
            state_dim,
            t_pred,
            experts,
            scenarios,
            state_norm,
            action_norm,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        2 * self.t_pred
    }

    /// Normalized `(states, actions)` matrices; states are clipped.
    pub fn normalized<F: Scalar>(&self) -> (Array2<F>, Array2<F>) {
        let n = self.pairs.len();
        let mut s = Array2::zeros((n, self.state_dim));
        let mut a = Array2::zeros((n, self.action_dim()));
        for (i, p) in self.pairs.iter().enumerate() {
            for (j, v) in self.state_norm.normalize_clipped(&p.state).into_iter().enumerate() {
                s[[i, j]] = F::of(v);
            }
            for (j, v) in self.action_norm.normalize(&p.action.to_flat()).into_iter().enumerate() {
                a[[i, j]] = F::of(v);
            }
        }
        (s, a)
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + self.pairs.len() * 8 * (self.state_dim + self.action_dim() + 1));
        b.extend_from_slice(MAGIC);
        for v in [DATASET_FORMAT_VERSION, self.state_dim as u32, self.t_pred as u32, self.experts.len() as u32] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend(self.experts.iter().map(|&k| tag(k)));
        b.extend_from_slice(&(self.scenarios.len() as u32).to_le_bytes());
        for s in &self.scenarios {
            b.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
            b.extend_from_slice(s.name.as_bytes());
            b.push(tag(s.winner));
            for o in &s.mean_objectives {
                b.extend_from_slice(&o.to_le_bytes());
            }
        }
        for v in [&self.state_norm.mean, &self.state_norm.std, &self.action_norm.mean, &self.action_norm.std] {
            for x in v {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        b.extend_from_slice(&(self.pairs.len() as u64).to_le_bytes());
        for p in &self.pairs {
            b.extend_from_slice(&p.scenario_id.to_le_bytes());
            b.push(tag(p.expert));
            for x in p.state.iter().chain(p.action.to_flat().iter()) {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        b
    }

    /// Serialized file contents including the trailing hash.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = self.body_bytes();
        let h = Sha256::digest(&b);
        b.extend_from_slice(&h);
        b
    }

    /// Hex SHA-256 stored in the file trailer.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body_bytes()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(Error::Dataset("file too short".into()));
        }
        let (body, hash) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != hash {
            return Err(Error::Dataset("content hash mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Dataset("not a demonstration dataset".into()));
        }
        let version = r.u32()?;
        if version != DATASET_FORMAT_VERSION {
            return Err(Error::Dataset(format!("unsupported format_version {version}")));
        }
        let state_dim = r.u32()? as usize;
        let t_pred = r.u32()? as usize;
        let n_experts = r.u32()? as usize;
        let experts = (0..n_experts).map(|_| untag(r.u8()?)).collect::<Result<Vec<_>>>()?;
        let n_scen = r.u32()? as usize;
        let mut scenarios = Vec::with_capacity(n_scen);
        for _ in 0..n_scen {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| Error::Dataset(e.to_string()))?;
            let winner = untag(r.u8()?)?;
            let mean_objectives = r.f64s(n_experts)?;
            scenarios.push(ScenarioEntry {
                name,
                winner,
                mean_objectives,
            });
        }
        let ad = 2 * t_pred;
        let state_norm = Normalizer {
            mean: r.f64s(state_dim)?,
            std: r.f64s(state_dim)?,
        };
        let action_norm = Normalizer {
            mean: r.f64s(ad)?,
            std: r.f64s(ad)?,
        };
        let n = r.u64()? as usize;
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let scenario_id = r.u32()?;
            let expert = untag(r.u8()?)?;
            let state = r.f64s(state_dim)?;
            let action = ActionChunk::from_flat(&r.f64s(ad)?)?;
            pairs.push(DemoPair {
                state,
                action,
                scenario_id,
                expert,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Dataset("trailing bytes after records".into()));
        }
        Ok(Self {
            state_dim,
            t_pred,
            experts,
            scenarios,
            state_norm,
            action_norm,
            pairs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Dataset("unexpected end of file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Dataset("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Settings for demonstration collection.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub chunk: ChunkConfig,
    /// Seeded episodes used to rank the candidate experts per scenario.
    pub eval_episodes: usize,
    pub pairs_per_scenario: usize,
    /// Lockstep batch size.
    pub block: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            chunk: ChunkConfig::default(),
            eval_episodes: 200,
            pairs_per_scenario: 2000,
            block: 256,
        }
    }
}

/// Builds the policy for an expert on a scenario.
pub type ExpertFactory<'a> = dyn Fn(ExpertKind, &Scenario) -> Result<Box<dyn ChunkPolicy>> + 'a;

const EVAL_SALT: u64 = 0x4556_414c;
const DEMO_SALT: u64 = 0x4445_4d4f;

/// Ranks `experts` on each scenario by mean objective over seeded episodes
/// (ties go to the earlier expert) and records the winner's own
/// `(observation, chunk)` pairs on fresh seeds.
pub fn collect_demonstrations(
    scenarios: &[Scenario],
    experts: &[ExpertKind],
    factory: &ExpertFactory<'_>,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<Dataset> {
    if scenarios.is_empty() {
        return Err(Error::Dataset("no scenarios".into()));
    }
    if experts.is_empty() {
        return Err(Error::Dataset("no experts".into()));
    }
    cfg.chunk.validate()?;
    let mut entries = Vec::with_capacity(scenarios.len());
    let mut pairs = Vec::with_capacity(scenarios.len() * cfg.pairs_per_scenario);
    for (sid, scenario) in scenarios.iter().enumerate() {
        let base = rng::derive(seed, sid as u64);
        let eval_seeds: Vec<u64> = (0..cfg.eval_episodes as u64)
            .map(|k| rng::derive(base ^ EVAL_SALT, k))
            .collect();
        let mut means = Vec::with_capacity(experts.len());
        let mut policies = Vec::with_capacity(experts.len());
        for &kind in experts {
            let policy = factory(kind, scenario)?;
            let res = run_episodes_blocked(
                policy.as_ref(),
                &scenario.market,
                cfg.chunk,
                &eval_seeds,
                rng::key_of(kind.name()),
                cfg.block,
            )?;
            let mean = res.iter().map(|r| r.objective).sum::<f64>() / res.len().max(1) as f64;
            means.push(if mean.is_finite() { mean } else { f64::NEG_INFINITY });
            policies.push(policy);
        }
        let mut best = 0;
        for (i, &m) in means.iter().enumerate() {
            if m > means[best] {
                best = i;
            }
        }
        if means[best] == f64::NEG_INFINITY {
            return Err(Error::Dataset(format!(
                "every expert produced non-finite objectives on scenario {}",
                scenario.name
            )));
        }
        let winner = experts[best];
        let decisions = scenario.market.horizon_steps.div_ceil(cfg.chunk.t_exec);
        let episodes = cfg.pairs_per_scenario.div_ceil(decisions.max(1));
        let demo_seeds: Vec<u64> = (0..episodes as u64)
            .map(|k| rng::derive(base ^ DEMO_SALT, k))
            .collect();
        let mut recorded = Vec::new();
        for block in demo_seeds.chunks(cfg.block.max(1)) {
            record_rollouts(
                policies[best].as_ref(),
                scenario,
                cfg.chunk,
                block,
                rng::key_of(winner.name()),
                &mut recorded,
            )?;
        }
        recorded.truncate(cfg.pairs_per_scenario);
        pairs.extend(recorded.into_iter().map(|(o, a)| DemoPair {
            state: o.features,
            action: a,
            scenario_id: sid as u32,
            expert: winner,
        }));
        entries.push(ScenarioEntry {
            name: scenario.name.clone(),
            winner,
            mean_objectives: means,
        });
    }
    Dataset::new(
        cfg.chunk.obs_dim(),
        cfg.chunk.t_pred,
        experts.to_vec(),
        entries,
        pairs,
    )
}

/// Runs `policy` on `seeds` and appends every decision's observation and chunk,
/// episode by episode.
fn record_rollouts(
    policy: &dyn ChunkPolicy,
    scenario: &Scenario,
    chunk: ChunkConfig,
    seeds: &[u64],
    key: u64,
    out: &mut Vec<(Observation, ActionChunk)>,
) -> Result<()> {
    let mut batch = EpisodeBatch::new(&scenario.market, chunk, seeds)?;
    let mut rngs: Vec<rng::Rng> = seeds.iter().map(|&s| rng::policy(s, key)).collect();
    let mut per_episode: Vec<Vec<(Observation, ActionChunk)>> = vec![Vec::new(); seeds.len()];
    while !batch.is_done() {
        let obs = batch.observations();
        let chunks = policy.act(&obs, &mut rngs)?;
        batch.execute(&chunks)?;
        for (slot, pair) in per_episode.iter_mut().zip(obs.into_iter().zip(chunks)) {
            slot.push(pair);
        }
    }
    out.extend(per_episode.into_iter().flatten());
    Ok(())
}
