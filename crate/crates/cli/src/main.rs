//! `finflow`: command-line driver for simulation, training and benchmarking.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use finflow_core::experts::{load_ppo_expert, ExpertKind};
use finflow_core::harness::{
    benchmark_all, collect_stage, evaluate_policy, files, finetune_stage, load_methods, pretrain_stage, run_pipeline,
    train_ppo_stage, ExperimentConfig, Method, MethodSet, MetricsReport, Regime, Stage,
};
use finflow_core::meanflow::{Dataset, MeanFlowNet};
use finflow_core::noiserl::fine_tune;
use finflow_core::rng;
use finflow_core::simulator::{run_batch, write_episode_dump, EpisodeBatch, Scenario, ScenarioFile};

#[derive(Parser)]
#[command(name = "finflow", version, about = "Market-making simulation, imitation and noise-space fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML with `format_version`); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment seed for training commands, first trial seed for evaluation commands.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct MarketChoice {
    /// Benchmark regime (HH, HL, LH, LL).
    #[arg(long, conflicts_with = "scenarios")]
    regime: Option<Regime>,
    /// Scenario file; every scenario in it is used unless `--scenario` picks one.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, requires = "scenarios")]
    scenario: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one traced episode and writes it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        market: MarketChoice,
        #[arg(long, default_value = "glft")]
        method: Method,
        /// Pipeline output directory holding learned checkpoints.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ranks the candidate experts per scenario and records the winners' demonstrations.
    CollectDemos {
        #[command(flatten)]
        common: Common,
        /// Scenario file; the config's grid is used when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Trained PPO expert; trained on the scenarios when `ppo` is a candidate and this is omitted.
        #[arg(long)]
        ppo_expert: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrains the MeanFlow policy on a demonstration dataset.
    TrainMeanflow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the action-space PPO expert.
    TrainPpoExpert {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        market: MarketChoice,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learns a noise policy for a frozen MeanFlow checkpoint.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        market: MarketChoice,
        #[arg(long)]
        frozen: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluates one method on one regime.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Report stem; writes `<out>.csv` and `<out>.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluates every configured method on every configured regime.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders a report CSV as an aligned table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also rewrite `<out>.csv` and `<out>.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs every stage and writes all artifacts into one directory.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes the default experiment config.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn scenarios_from(cfg: &ExperimentConfig, choice: &MarketChoice) -> Result<Vec<Scenario>> {
    if let Some(r) = choice.regime {
        return Ok(vec![cfg.regime_scenario(r)?]);
    }
    let Some(path) = &choice.scenarios else {
        bail!("pass --regime or --scenarios");
    };
    let file = ScenarioFile::load(path).with_context(|| format!("reading {}", path.display()))?;
    match &choice.scenario {
        Some(name) => {
            let s = file
                .scenarios
                .into_iter()
                .find(|s| &s.name == name)
                .with_context(|| format!("no scenario named `{name}`"))?;
            Ok(vec![s])
        }
        None => Ok(file.scenarios),
    }
}

fn curve_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    out.with_file_name(format!("{stem}_curve.csv"))
}

fn progress(start: Instant) -> impl Fn(&str) {
    move |msg| eprintln!("[{:8.1}s] {msg}", start.elapsed().as_secs_f64())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let log = progress(Instant::now());
    match cli.command {
        Command::Simulate {
            common,
            market,
            method,
            artifacts,
            out,
        } => {
            let cfg = load_config(&common)?;
            let scenario = scenarios_from(&cfg, &market)?.remove(0);
            let set = match &artifacts {
                Some(dir) => load_methods(&cfg, dir)?,
                None => MethodSet::new(cfg.experts.clone()),
            };
            let policy = set.build(method, market.regime, &scenario.market, cfg.chunk)?;
            let seed = common.seed.unwrap_or(cfg.seed);
            let batch = EpisodeBatch::new(&scenario.market, cfg.chunk, &[seed])?.with_trace();
            let res = run_batch(policy.as_ref(), batch, rng::key_of(method.name()))?.remove(0);
            write_episode_dump(&res, &out)?;
            println!(
                "{method} on {}: objective {:.4}, terminal wealth {:.4}, inventory {}, fills {}/{}",
                scenario.name, res.objective, res.terminal_wealth, res.terminal_inventory, res.bid_fills, res.ask_fills
            );
        }
        Command::CollectDemos {
            common,
            scenarios,
            ppo_expert,
            out,
        } => {
            let cfg = load_config(&common)?;
            let scenarios = match &scenarios {
                Some(p) => ScenarioFile::load(p)?.scenarios,
                None => cfg.scenarios()?,
            };
            let ppo = match (&ppo_expert, cfg.candidates.contains(&ExpertKind::Ppo)) {
                (Some(p), _) => Some(load_ppo_expert(p)?.policy),
                (None, true) => {
                    log("training PPO expert on the scenarios");
                    Some(train_ppo_stage(&cfg, &scenarios, cfg.stage_seed(Stage::PooledPpo))?.0)
                }
                (None, false) => None,
            };
            log("collecting demonstrations");
            let data = collect_stage(&cfg, &scenarios, ppo.as_ref(), cfg.stage_seed(Stage::Collect))?;
            data.save(&out)?;
            for s in &data.scenarios {
                println!("{:32} winner {}", s.name, s.winner);
            }
            println!("{} pairs, content hash {}", data.len(), data.content_hash());
        }
        Command::TrainMeanflow { common, data, out } => {
            let cfg = load_config(&common)?;
            let data = Dataset::load(&data)?;
            log(&format!("training on {} pairs", data.len()));
            let (net, curve) = pretrain_stage(&cfg, &data, cfg.stage_seed(Stage::Pretrain))?;
            net.save(&out)?;
            curve.save(&curve_path(&out))?;
            println!(
                "final loss {:.5}; parameter hash {}",
                curve.last("loss").unwrap_or(f64::NAN),
                net.param_hash()
            );
        }
        Command::TrainPpoExpert { common, market, out } => {
            let cfg = load_config(&common)?;
            let scenarios = scenarios_from(&cfg, &market)?;
            log(&format!("training on {} scenario(s)", scenarios.len()));
            let (policy, curve) = train_ppo_stage(&cfg, &scenarios, cfg.stage_seed(Stage::PooledPpo))?;
            policy.save(&out)?;
            curve.save(&curve_path(&out))?;
            println!("final mean objective {:.4}", curve.last("mean_objective").unwrap_or(f64::NAN));
        }
        Command::Finetune {
            common,
            market,
            frozen,
            out,
        } => {
            let cfg = load_config(&common)?;
            let net = MeanFlowNet::load(&frozen)?;
            let (policy, curve) = match market.regime {
                Some(r) => finetune_stage(&cfg, &net, r, cfg.stage_seed(Stage::FineTune(r)))?,
                None => {
                    let scenarios = scenarios_from(&cfg, &market)?;
                    let o = fine_tune(net.clone(), &scenarios, &cfg.finetune, cfg.stage_seed(Stage::FineTuneScenarios))?;
                    if o.frozen_hash_before != o.frozen_hash_after {
                        bail!("frozen generator changed during fine-tuning");
                    }
                    (o.policy, o.curve)
                }
            };
            policy.save(&out)?;
            curve.save(&curve_path(&out))?;
            println!(
                "mean objective {:.4} -> {:.4}; frozen hash {}",
                curve.column("mean_objective").and_then(|c| c.first().copied()).unwrap_or(f64::NAN),
                curve.last("mean_objective").unwrap_or(f64::NAN),
                net.param_hash()
            );
        }
        Command::Evaluate {
            common,
            method,
            regime,
            artifacts,
            trials,
            out,
        } => {
            let cfg = load_config(&common)?;
            let set = match &artifacts {
                Some(dir) => load_methods(&cfg, dir)?,
                None => MethodSet::new(cfg.experts.clone()),
            };
            let market = cfg.regime_scenario(regime)?.market;
            let policy = set.build(method, Some(regime), &market, cfg.chunk)?;
            let trials = trials.unwrap_or(cfg.benchmark.trials);
            let base = common.seed.unwrap_or(cfg.benchmark.base_seed);
            let eval = evaluate_policy(policy.as_ref(), method.name(), regime.name(), &market, cfg.chunk, trials, base)?;
            let report = MetricsReport::new(vec![eval.row]);
            print!("{}", report.to_table());
            if let Some(out) = out {
                report.save(&out)?;
            }
        }
        Command::Benchmark {
            common,
            artifacts,
            trials,
            out,
        } => {
            let cfg = load_config(&common)?;
            let set = load_methods(&cfg, &artifacts)?;
            let trials = trials.unwrap_or(cfg.benchmark.trials);
            let base = common.seed.unwrap_or(cfg.benchmark.base_seed);
            let bench = benchmark_all(&set, &cfg.benchmark.methods, &cfg.benchmark.regimes, &cfg, trials, base, &log)?;
            bench.report.save(&out)?;
            print!("{}", bench.report.to_table());
        }
        Command::Report { input, out } => {
            let report = MetricsReport::load(&input)?;
            print!("{}", report.to_table());
            if let Some(out) = out {
                report.save(&out)?;
            }
        }
        Command::Pipeline { common, trials, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = trials {
                cfg.benchmark.trials = t;
            }
            let res = run_pipeline(&cfg, &out, &log)?;
            print!("{}", res.benchmark.report.to_table());
            println!("\ndataset hash {}", res.manifest.dataset_hash);
            println!("artifacts and {} in {}", files::MANIFEST, out.display());
        }
        Command::InitConfig { out } => {
            ExperimentConfig::default().save(&out)?;
        }
    }
    Ok(())
}
