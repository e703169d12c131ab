//! Experiment configuration and the end-to-end pipeline:
//! PPO expert → demonstrations → MeanFlow pretraining → per-regime fine-tuning
//! and PPO baselines → benchmark report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluate::{evaluate_policy, Evaluation};
use super::grid::{build_scenario_grid, GridConfig, Regime};
use super::methods::{ExpertSettings, Method, MethodSet};
use super::report::MetricsReport;
use crate::curve::LearningCurve;
use crate::experts::{ppo_expert, ExpertKind};
use crate::meanflow::{collect_demonstrations, pretrain, CollectConfig, Dataset, MeanFlowConfig, MeanFlowNet, TrainConfig};
use crate::noiserl::{
    fine_tune, train_ppo_expert, EvalMode, FineTuneConfig, FrozenMeanFlow, NoiseDecoder, NoisePolicy, PpoExpertConfig,
};
use crate::simulator::{ChunkConfig, ChunkPolicy, MarketParams, Scenario, ScenarioFile};
use crate::{rng, Error, Result};

pub const EXPERIMENT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub trials: usize,
    /// Trials use seeds `base_seed..base_seed + trials`.
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub regimes: Vec<Regime>,
    pub finflowrl_mode: EvalMode,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            base_seed: 1_000_000,
            methods: Method::ALL.to_vec(),
            regimes: Regime::ALL.to_vec(),
            finflowrl_mode: EvalMode::Sample,
        }
    }
}

/// Everything needed to reproduce an experiment from one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub chunk: ChunkConfig,
    /// Base market; grid scenarios and regimes override volatility, order flow and jumps.
    pub market: MarketParams,
    pub grid: GridConfig,
    pub experts: ExpertSettings,
    /// Experts ranked per scenario during demonstration collection.
    pub candidates: Vec<ExpertKind>,
    pub collect: CollectConfig,
    pub meanflow: MeanFlowConfig,
    pub pretrain: TrainConfig,
    pub ppo_expert: PpoExpertConfig,
    pub finetune: FineTuneConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: EXPERIMENT_FORMAT_VERSION,
            seed: 7,
            chunk: ChunkConfig::default(),
            market: MarketParams::default(),
            grid: GridConfig::default(),
            experts: ExpertSettings::default(),
            candidates: vec![ExpertKind::As, ExpertKind::Glft, ExpertKind::GlftDrift, ExpertKind::Ppo],
            collect: CollectConfig::default(),
            meanflow: MeanFlowConfig::default(),
            pretrain: TrainConfig::default(),
            ppo_expert: PpoExpertConfig::default(),
            finetune: FineTuneConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; `format_version` is mandatory, every other key defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        match raw.get("format_version").and_then(toml::Value::as_integer) {
            Some(v) if v == i64::from(EXPERIMENT_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "unsupported experiment format_version {v} (expected {EXPERIMENT_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Config("experiment config lacks `format_version`".into())),
        }
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.chunk.validate()?;
        self.market.validate()?;
        if self.collect.chunk != self.chunk || self.meanflow.chunk != self.chunk {
            return Err(Error::Config(
                "collect.chunk and meanflow.chunk must equal the top-level [chunk]".into(),
            ));
        }
        if self.candidates.is_empty() {
            return Err(Error::Config("no candidate experts".into()));
        }
        if self.benchmark.methods.is_empty() || self.benchmark.regimes.is_empty() {
            return Err(Error::Config("benchmark needs at least one method and one regime".into()));
        }
        if self.benchmark.trials < 2 {
            return Err(Error::Config("benchmark needs at least two trials".into()));
        }
        self.finetune.ppo.validate()?;
        self.ppo_expert.train.ppo.validate()?;
        Ok(())
    }

    /// Sets the chunk layout everywhere it is repeated.
    pub fn with_chunk(mut self, chunk: ChunkConfig) -> Self {
        self.chunk = chunk;
        self.collect.chunk = chunk;
        self.meanflow.chunk = chunk;
        self
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        build_scenario_grid(&self.grid, &self.market)
    }

    pub fn regime_scenario(&self, regime: Regime) -> Result<Scenario> {
        regime.scenario(&self.market, &self.grid.order_flow)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        stage_seed(self.seed, stage)
    }
}

/// Pipeline stages, each with its own derived seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    PooledPpo,
    Collect,
    Pretrain,
    FineTune(Regime),
    RegimePpo(Regime),
    /// Fine-tuning on a user-supplied scenario set.
    FineTuneScenarios,
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let salt = match stage {
        Stage::PooledPpo => 1,
        Stage::Collect => 2,
        Stage::Pretrain => 3,
        Stage::FineTune(r) => 10 + r as u64,
        Stage::RegimePpo(r) => 20 + r as u64,
        Stage::FineTuneScenarios => 30,
    };
    rng::derive(seed, salt)
}

/// Trains an action-space PPO agent on `scenarios`.
pub fn train_ppo_stage(cfg: &ExperimentConfig, scenarios: &[Scenario], seed: u64) -> Result<(NoisePolicy<f64>, LearningCurve)> {
    let (policy, _, curve) = train_ppo_expert(scenarios, cfg.chunk, &cfg.ppo_expert, seed)?;
    Ok((policy, curve))
}

/// Ranks the candidate experts on every scenario and records the winners.
pub fn collect_stage(
    cfg: &ExperimentConfig,
    scenarios: &[Scenario],
    ppo: Option<&NoisePolicy<f64>>,
    seed: u64,
) -> Result<Dataset> {
    let factory = |kind: ExpertKind, scenario: &Scenario| -> Result<Box<dyn ChunkPolicy>> {
        match kind {
            ExpertKind::Ppo => {
                let p = ppo.ok_or_else(|| Error::Config("candidate `ppo` needs a trained PPO expert".into()))?;
                Ok(Box::new(ppo_expert(p.clone())?))
            }
            ExpertKind::Random => Ok(Box::new(cfg.experts.random(cfg.chunk.t_pred)?)),
            kind => Ok(Box::new(cfg.experts.closed_form(kind, &scenario.market, cfg.chunk.t_pred)?)),
        }
    };
    collect_demonstrations(scenarios, &cfg.candidates, &factory, &cfg.collect, seed)
}

pub fn pretrain_stage(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<(MeanFlowNet<f64>, LearningCurve)> {
    pretrain(data, cfg.meanflow.clone(), &cfg.pretrain, seed)
}

/// Fine-tunes a noise policy for `frozen` on one regime; fails if the frozen
/// parameters changed.
pub fn finetune_stage(
    cfg: &ExperimentConfig,
    frozen: &MeanFlowNet<f64>,
    regime: Regime,
    seed: u64,
) -> Result<(NoisePolicy<f64>, LearningCurve)> {
    let scenario = cfg.regime_scenario(regime)?;
    let out = fine_tune(frozen.clone(), &[scenario], &cfg.finetune, seed)?;
    if out.frozen_hash_before != out.frozen_hash_after || out.frozen_hash_after != frozen.param_hash() {
        return Err(Error::Checkpoint("frozen generator changed during fine-tuning".into()));
    }
    Ok((out.policy, out.curve))
}

/// Benchmark results with per-episode objectives for paired tests.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOutput {
    pub report: MetricsReport,
    pub objectives: BTreeMap<(Method, Regime), Vec<f64>>,
}

/// Every method on every regime over the shared seed range.
pub fn benchmark_all(
    set: &MethodSet,
    methods: &[Method],
    regimes: &[Regime],
    cfg: &ExperimentConfig,
    trials: usize,
    base_seed: u64,
    progress: &dyn Fn(&str),
) -> Result<BenchmarkOutput> {
    if methods.is_empty() || regimes.is_empty() {
        return Err(Error::Config("benchmark needs at least one method and one regime".into()));
    }
    let mut rows = Vec::new();
    let mut objectives = BTreeMap::new();
    for &regime in regimes {
        let market = cfg.regime_scenario(regime)?.market;
        for &method in methods {
            let policy = set.build(method, Some(regime), &market, cfg.chunk)?;
            let Evaluation { row, objectives: obj } =
                evaluate_policy(policy.as_ref(), method.name(), regime.name(), &market, cfg.chunk, trials, base_seed)?;
            progress(&format!(
                "{regime} {method}: pnl {:.3} sr {:.3} mdd {:.2}",
                row.pnl, row.sharpe, row.mdd
            ));
            rows.push(row);
            objectives.insert((method, regime), obj);
        }
    }
    Ok(BenchmarkOutput {
        report: MetricsReport::new(rows),
        objectives,
    })
}

/// File names inside a pipeline output directory.
pub mod files {
    pub const CONFIG: &str = "config.toml";
    pub const SCENARIOS: &str = "scenarios.toml";
    pub const PPO_POOLED: &str = "ppo_expert.json";
    pub const PPO_POOLED_CURVE: &str = "ppo_expert_curve.csv";
    pub const DATASET: &str = "demos.ffds";
    pub const MEANFLOW: &str = "meanflow.json";
    pub const MEANFLOW_CURVE: &str = "meanflow_curve.csv";
    pub const REPORT: &str = "report";
    pub const MANIFEST: &str = "manifest.json";

    pub fn finflowrl(regime: super::Regime) -> String {
        format!("finflowrl_{regime}.json")
    }

    pub fn finflowrl_curve(regime: super::Regime) -> String {
        format!("finflowrl_{regime}_curve.csv")
    }

    pub fn ppo(regime: super::Regime) -> String {
        format!("ppo_{regime}.json")
    }

    pub fn ppo_curve(regime: super::Regime) -> String {
        format!("ppo_{regime}_curve.csv")
    }
}

/// SHA-256 of every artifact, keyed by file name, plus the dataset content hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub dataset_hash: String,
    pub meanflow_param_hash: String,
    pub files: BTreeMap<String, String>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub methods: MethodSet,
    pub benchmark: BenchmarkOutput,
    pub dataset: Dataset,
}

/// Runs every stage and writes all artifacts to `dir`.
pub fn run_pipeline(cfg: &ExperimentConfig, dir: &Path, progress: &dyn Fn(&str)) -> Result<PipelineOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let path = |name: &str| dir.join(name);
    let mut written: Vec<String> = Vec::new();
    let mut record = |name: &str| written.push(name.to_string());

    cfg.save(&path(files::CONFIG))?;
    record(files::CONFIG);
    let scenarios = cfg.scenarios()?;
    ScenarioFile::new(scenarios.clone()).save(&path(files::SCENARIOS))?;
    record(files::SCENARIOS);

    let pooled_ppo = if cfg.candidates.contains(&ExpertKind::Ppo) {
        progress("training pooled PPO expert");
        let (p, curve) = train_ppo_stage(cfg, &scenarios, cfg.stage_seed(Stage::PooledPpo))?;
        p.save(&path(files::PPO_POOLED))?;
        curve.save(&path(files::PPO_POOLED_CURVE))?;
        record(files::PPO_POOLED);
        record(files::PPO_POOLED_CURVE);
        Some(p)
    } else {
        None
    };

    progress("collecting demonstrations");
    let dataset = collect_stage(cfg, &scenarios, pooled_ppo.as_ref(), cfg.stage_seed(Stage::Collect))?;
    dataset.save(&path(files::DATASET))?;
    record(files::DATASET);
    progress(&format!("{} pairs, hash {}", dataset.len(), dataset.content_hash()));

    progress("pretraining MeanFlow");
    let (net, curve) = pretrain_stage(cfg, &dataset, cfg.stage_seed(Stage::Pretrain))?;
    net.save(&path(files::MEANFLOW))?;
    curve.save(&path(files::MEANFLOW_CURVE))?;
    record(files::MEANFLOW);
    record(files::MEANFLOW_CURVE);

    let mut set = MethodSet::new(cfg.experts.clone());
    set.finflowrl_mode = Some(cfg.benchmark.finflowrl_mode);
    set.ppo_default = pooled_ppo;
    for &regime in &cfg.benchmark.regimes {
        if cfg.benchmark.methods.contains(&Method::Finflowrl) {
            progress(&format!("fine-tuning on {regime}"));
            let (policy, curve) = finetune_stage(cfg, &net, regime, cfg.stage_seed(Stage::FineTune(regime)))?;
            policy.save(&path(&files::finflowrl(regime)))?;
            curve.save(&path(&files::finflowrl_curve(regime)))?;
            record(&files::finflowrl(regime));
            record(&files::finflowrl_curve(regime));
            set.finflowrl.insert(regime, policy);
        }
        if cfg.benchmark.methods.contains(&Method::Ppo) {
            progress(&format!("training PPO baseline on {regime}"));
            let scenario = cfg.regime_scenario(regime)?;
            let (policy, curve) = train_ppo_stage(cfg, &[scenario], cfg.stage_seed(Stage::RegimePpo(regime)))?;
            policy.save(&path(&files::ppo(regime)))?;
            curve.save(&path(&files::ppo_curve(regime)))?;
            record(&files::ppo(regime));
            record(&files::ppo_curve(regime));
            set.ppo.insert(regime, policy);
        }
    }
    set.meanflow = Some(net);

    progress("benchmarking");
    let bench = benchmark_all(
        &set,
        &cfg.benchmark.methods,
        &cfg.benchmark.regimes,
        cfg,
        cfg.benchmark.trials,
        cfg.benchmark.base_seed,
        progress,
    )?;
    bench.report.save(&path(files::REPORT))?;
    let csv = format!("{}.csv", files::REPORT);
    let txt = format!("{}.txt", files::REPORT);
    record(&csv);
    record(&txt);

    let mut hashes = BTreeMap::new();
    for name in &written {
        hashes.insert(name.clone(), file_sha256(&path(name))?);
    }
    let manifest = Manifest {
        seed: cfg.seed,
        dataset_hash: dataset.content_hash(),
        meanflow_param_hash: set.meanflow.as_ref().map(|n| n.param_hash()).unwrap_or_default(),
        files: hashes,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path(files::MANIFEST), json)?;
    Ok(PipelineOutput {
        dir: dir.to_path_buf(),
        manifest,
        methods: set,
        benchmark: bench,
        dataset,
    })
}

/// Rebuilds the method set from a pipeline output directory.
pub fn load_methods(cfg: &ExperimentConfig, dir: &Path) -> Result<MethodSet> {
    let mut set = MethodSet::new(cfg.experts.clone());
    set.finflowrl_mode = Some(cfg.benchmark.finflowrl_mode);
    let ckpt = |name: &str| crate::net::Checkpoint::load(&dir.join(name));
    if dir.join(files::MEANFLOW).exists() {
        set.meanflow = Some(MeanFlowNet::load(&dir.join(files::MEANFLOW))?);
    }
    if dir.join(files::PPO_POOLED).exists() {
        set.ppo_default = Some(NoisePolicy::from_checkpoint(&ckpt(files::PPO_POOLED)?)?);
    }
    for regime in Regime::ALL {
        if dir.join(files::ppo(regime)).exists() {
            set.ppo.insert(regime, NoisePolicy::from_checkpoint(&ckpt(&files::ppo(regime))?)?);
        }
        if dir.join(files::finflowrl(regime)).exists() {
            let policy = NoisePolicy::from_checkpoint(&ckpt(&files::finflowrl(regime))?)?;
            let net = set
                .meanflow
                .as_ref()
                .ok_or_else(|| Error::Checkpoint("noise policy present without its MeanFlow checkpoint".into()))?;
            if policy.spec().decoder != FrozenMeanFlow::new(net.clone())?.info() {
                return Err(Error::Checkpoint(format!(
                    "{} was trained against a different MeanFlow checkpoint",
                    files::finflowrl(regime)
                )));
            }
            set.finflowrl.insert(regime, policy);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_requires_version() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        let partial = "format_version = 1\nseed = 3\n[benchmark]\ntrials = 50\n";
        let p = ExperimentConfig::parse(partial).unwrap();
        assert_eq!((p.seed, p.benchmark.trials), (3, 50));
        assert_eq!(p.grid, GridConfig::default());
        assert!(ExperimentConfig::parse("seed = 3\n").is_err());
        assert!(ExperimentConfig::parse("format_version = 9\n").is_err());
    }

    #[test]
    fn mismatched_chunks_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.meanflow.chunk.t_pred = 4;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::default().with_chunk(ChunkConfig {
            t_obs: 1,
            t_pred: 4,
            t_exec: 2,
        });
        cfg.validate().unwrap();
    }

    #[test]
    fn stage_seeds_differ() {
        let mut seen = std::collections::BTreeSet::new();
        for s in [Stage::PooledPpo, Stage::Collect, Stage::Pretrain, Stage::FineTuneScenarios]
            .into_iter()
            .chain(Regime::ALL.map(Stage::FineTune))
            .chain(Regime::ALL.map(Stage::RegimePpo))
        {
            assert!(seen.insert(stage_seed(7, s)));
        }
    }
}
