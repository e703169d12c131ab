//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use finflow_core::experts::{ClosedFormExpert, ExpertKind, ExpertParams};
use finflow_core::harness::max_drawdown;
use finflow_core::meanflow::{
    collect_demonstrations, generation_mse, meanflow_loss_with, meanflow_target, pretrain, regression_loss,
    interpolant, CollectConfig, MeanFlowConfig, MeanFlowNet, Normalizer, TrainConfig,
};
use finflow_core::net::{Activation, DualTensor, FilmMlp, Mlp, Parameters};
use finflow_core::rng;
use finflow_core::simulator::{
    aggregated_variance_hurst, simulate_fbm, simulate_hawkes_step, ChunkPolicy, HawkesParams, HawkesState,
    MarketParams, Scenario,
};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Outcome of one check with a one-line summary.
pub struct Check {
    pub ok: bool,
    pub detail: String,
}

impl Check {
    pub fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }

    pub fn all(checks: Vec<Check>) -> Check {
        let ok = checks.iter().all(|c| c.ok);
        let detail = checks.iter().map(|c| c.detail.as_str()).collect::<Vec<_>>().join("; ");
        Check::new(ok, detail)
    }
}

/// Mean per-side event rate over `horizon` time units.
pub fn hawkes_rates(params: &HawkesParams, horizon: f64, dt: f64, seed: u64) -> (f64, f64) {
    let mut g = rng::stream(seed, 0x4857);
    let mut s = HawkesState::at(0.0);
    let (mut na, mut nb) = (0u64, 0u64);
    let steps = (horizon / dt).round() as usize;
    for _ in 0..steps {
        let (a, b, next) = simulate_hawkes_step(&s, params, dt, &mut g);
        na += u64::from(a);
        nb += u64::from(b);
        s = next;
    }
    (na as f64 / horizon, nb as f64 / horizon)
}

pub fn hawkes_poisson_check() -> Check {
    let p = HawkesParams::poisson(20.0, 20.0);
    let (a, b) = hawkes_rates(&p, 1e4, 1.0, 1);
    let err = ((a - 20.0).abs().max((b - 20.0).abs())) / 20.0;
    Check::new(err < 0.02, format!("poisson rates {a:.3}/{b:.3} vs 20 (rel err {err:.4})"))
}

pub fn hawkes_self_exciting_check() -> Check {
    let p = HawkesParams {
        alpha_aa: 0.5,
        alpha_bb: 0.5,
        ..HawkesParams::poisson(1.0, 1.0)
    };
    let expected = p.mu_a / (1.0 - p.alpha_aa / p.beta);
    let (a, b) = hawkes_rates(&p, 1e4, 1.0, 2);
    let err = ((a - expected).abs().max((b - expected).abs())) / expected;
    Check::new(
        err < 0.05 && (expected - 2.0).abs() < 1e-12,
        format!("self-exciting rates {a:.3}/{b:.3} vs {expected} (rel err {err:.4})"),
    )
}

/// Moments, short-lag autocorrelation and a Kolmogorov-Smirnov distance for
/// unit-step H=0.5 increments, each against its 3-standard-error band.
pub fn fbm_white_noise_check() -> Check {
    let paths = 2000;
    let n = 256;
    let mut xs = Vec::with_capacity(paths * n);
    let mut lag = [0.0f64; 5];
    for p in 0..paths {
        let inc = simulate_fbm(0.5, n, 1.0, 10_000 + p as u64).unwrap();
        for (k, acc) in lag.iter_mut().enumerate() {
            *acc += inc.iter().zip(&inc[k + 1..]).map(|(a, b)| a * b).sum::<f64>();
        }
        xs.extend(inc);
    }
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let skew = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / m / var.powf(1.5);
    let kurt = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m / var.powi(2) - 3.0;
    let max_corr = lag
        .iter()
        .enumerate()
        .map(|(k, s)| (s / (paths * (n - k - 1)) as f64).abs())
        .fold(0.0, f64::max);
    let pairs = (paths * (n - 5)) as f64;

    xs.sort_by(f64::total_cmp);
    let z = Normal::new(0.0, 1.0).unwrap();
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = z.cdf(x);
            (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
        })
        .fold(0.0, f64::max);

    let ok = mean.abs() < 3.0 / m.sqrt()
        && (var - 1.0).abs() < 3.0 * (2.0 / m).sqrt()
        && skew.abs() < 3.0 * (6.0 / m).sqrt()
        && kurt.abs() < 3.0 * (24.0 / m).sqrt()
        && max_corr < 3.0 / pairs.sqrt()
        && ks < 1.63 / m.sqrt();
    Check::new(
        ok,
        format!(
            "H=0.5 mean {mean:.4} var {var:.4} skew {skew:.4} kurt {kurt:.4} max|acf1..5| {max_corr:.4} KS {ks:.5}"
        ),
    )
}

pub fn fbm_hurst_check() -> Check {
    let paths: Vec<Vec<f64>> = (0..32).map(|p| simulate_fbm(0.7, 4096, 1.0, 500 + p).unwrap()).collect();
    let h = aggregated_variance_hurst(&paths, &[4, 8, 16, 32, 64, 128, 256]);
    Check::new((0.65..=0.75).contains(&h), format!("H=0.7 aggregated-variance estimate {h:.4}"))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    num / den
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a * b).sum()
}

fn random_array<R: Rng>(g: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || g.random_range(-1.0..1.0))
}

/// Largest errors over one network: parameter gradient, input gradient and
/// JVP against central differences, then `<grad, d>` against the JVP.
#[derive(Clone, Copy, Debug, Default)]
pub struct AutodiffErrors {
    pub param_grad: f64,
    pub input_grad: f64,
    pub jvp: f64,
    pub consistency: f64,
}

impl AutodiffErrors {
    fn max(self, o: Self) -> Self {
        Self {
            param_grad: self.param_grad.max(o.param_grad),
            input_grad: self.input_grad.max(o.input_grad),
            jvp: self.jvp.max(o.jvp),
            consistency: self.consistency.max(o.consistency),
        }
    }
}

const FD_STEP: f64 = 1e-5;

fn fd_param_grad(params: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn mlp_errors(seed: u64) -> AutodiffErrors {
    let mut g = rng::stream(seed, 0xad);
    let acts = [Activation::Silu, Activation::Tanh];
    let depth = 1 + (seed as usize % 3);
    let mut dims = vec![g.random_range(2..6)];
    for _ in 0..depth {
        dims.push(g.random_range(3..9));
    }
    dims.push(g.random_range(1..4));
    let out_act = if seed % 2 == 0 { Activation::Identity } else { Activation::Tanh };
    let mut net = Mlp::<f64>::new(&dims, acts[seed as usize % 2], out_act, &mut g).unwrap();
    let p: Vec<f64> = (0..net.num_params()).map(|_| g.random_range(-0.8..0.8)).collect();
    net.set_params(&p).unwrap();

    let rows = 3;
    let x = random_array(&mut g, rows, dims[0]);
    let up = random_array(&mut g, rows, *dims.last().unwrap());
    let d = random_array(&mut g, rows, dims[0]);

    let (_, cache) = net.forward_cached(x.view()).unwrap();
    let grads = net.backward(&cache, up.view());
    let mut probe = net.clone();
    let fd = fd_param_grad(&p, &mut |q| {
        probe.set_params(q).unwrap();
        dot(&probe.forward(x.view()).unwrap(), &up)
    });
    let scalar = |xx: &Array2<f64>| dot(&net.forward(xx.view()).unwrap(), &up);
    let fd_input: Vec<f64> = (0..x.len())
        .map(|i| {
            let (r, c) = (i / x.ncols(), i % x.ncols());
            let mut a = x.clone();
            a[[r, c]] += FD_STEP;
            let mut b = x.clone();
            b[[r, c]] -= FD_STEP;
            (scalar(&a) - scalar(&b)) / (2.0 * FD_STEP)
        })
        .collect();
    let jvp = net.jvp(&DualTensor::new(x.clone(), d.clone()).unwrap()).unwrap();
    let fd_jvp = (net.forward((&x + &(&d * FD_STEP)).view()).unwrap()
        - net.forward((&x - &(&d * FD_STEP)).view()).unwrap())
        / (2.0 * FD_STEP);
    let lhs = dot(&grads.input, &d);
    let rhs = dot(&up, &jvp.tangent);
    AutodiffErrors {
        param_grad: rel_err(&grads.params, &fd),
        input_grad: rel_err(&flat(&grads.input), &fd_input),
        jvp: rel_err(&flat(&jvp.tangent), &flat(&fd_jvp)),
        consistency: (lhs - rhs).abs() / rhs.abs().max(1e-12),
    }
}

fn film_errors(seed: u64) -> AutodiffErrors {
    let mut g = rng::stream(seed, 0xf1);
    let act = [Activation::Silu, Activation::Tanh][seed as usize % 2];
    let (din, dout, dc) = (g.random_range(2..6), g.random_range(1..4), g.random_range(1..5));
    let hidden: Vec<usize> = (0..1 + seed as usize % 2).map(|_| g.random_range(3..8)).collect();
    let mut net = FilmMlp::<f64>::new(din, &hidden, dout, dc, g.random_range(2..6), act, &mut g).unwrap();
    let p: Vec<f64> = (0..net.num_params()).map(|_| g.random_range(-0.6..0.6)).collect();
    net.set_params(&p).unwrap();

    let rows = 3;
    let x = random_array(&mut g, rows, din);
    let s = random_array(&mut g, rows, dc);
    let up = random_array(&mut g, rows, dout);
    let dx = random_array(&mut g, rows, din);
    let ds = random_array(&mut g, rows, dc);

    let (_, cache) = net.forward_cached(x.view(), s.view()).unwrap();
    let grads = net.backward(&cache, up.view());
    let mut probe = net.clone();
    let fd = fd_param_grad(&p, &mut |q| {
        probe.set_params(q).unwrap();
        dot(&probe.forward(x.view(), s.view()).unwrap(), &up)
    });
    let eval = |xx: &Array2<f64>, ss: &Array2<f64>| net.forward(xx.view(), ss.view()).unwrap();
    let fd_input: Vec<f64> = (0..x.len() + s.len())
        .map(|i| {
            let (mut xa, mut xb, mut sa, mut sb) = (x.clone(), x.clone(), s.clone(), s.clone());
            if i < x.len() {
                let (r, c) = (i / din, i % din);
                xa[[r, c]] += FD_STEP;
                xb[[r, c]] -= FD_STEP;
            } else {
                let j = i - x.len();
                let (r, c) = (j / dc, j % dc);
                sa[[r, c]] += FD_STEP;
                sb[[r, c]] -= FD_STEP;
            }
            (dot(&eval(&xa, &sa), &up) - dot(&eval(&xb, &sb), &up)) / (2.0 * FD_STEP)
        })
        .collect();
    let analytic_input: Vec<f64> = grads.input.iter().chain(grads.condition.iter()).copied().collect();

    let jvp = net
        .jvp(
            &DualTensor::new(x.clone(), dx.clone()).unwrap(),
            &DualTensor::new(s.clone(), ds.clone()).unwrap(),
        )
        .unwrap();
    let fd_jvp = (eval(&(&x + &(&dx * FD_STEP)), &(&s + &(&ds * FD_STEP)))
        - eval(&(&x - &(&dx * FD_STEP)), &(&s - &(&ds * FD_STEP))))
        / (2.0 * FD_STEP);
    let lhs = dot(&grads.input, &dx) + dot(&grads.condition, &ds);
    let rhs = dot(&up, &jvp.tangent);
    AutodiffErrors {
        param_grad: rel_err(&grads.params, &fd),
        input_grad: rel_err(&analytic_input, &fd_input),
        jvp: rel_err(&flat(&jvp.tangent), &flat(&fd_jvp)),
        consistency: (lhs - rhs).abs() / rhs.abs().max(1e-12),
    }
}

/// Worst errors over `n` plain MLPs and `n` FiLM-conditioned MLPs.
pub fn autodiff_errors(n: usize) -> AutodiffErrors {
    (0..n as u64)
        .map(|k| mlp_errors(k).max(film_errors(k)))
        .fold(AutodiffErrors::default(), AutodiffErrors::max)
}

pub fn autodiff_check(n: usize) -> Check {
    let e = autodiff_errors(n);
    let ok = e.param_grad < 1e-3 && e.input_grad < 1e-3 && e.jvp < 1e-3 && e.consistency < 1e-6;
    Check::new(
        ok,
        format!(
            "{} nets: grad {:.2e} input {:.2e} jvp {:.2e} <grad,d> vs jvp {:.2e}",
            2 * n,
            e.param_grad,
            e.input_grad,
            e.jvp,
            e.consistency
        ),
    )
}

/// A small MeanFlow network with randomized weights.
pub fn random_meanflow(seed: u64) -> MeanFlowNet<f64> {
    let cfg = MeanFlowConfig {
        hidden: vec![16, 16],
        cond_hidden: 8,
        ..MeanFlowConfig::default()
    };
    let mut g = rng::stream(seed, 0x6d66);
    let mut net = MeanFlowNet::new(
        cfg.clone(),
        Normalizer::identity(cfg.state_dim()),
        Normalizer::identity(cfg.action_dim()),
        &mut g,
    )
    .unwrap();
    let p: Vec<f64> = (0..net.num_params()).map(|_| g.random_range(-0.4..0.4)).collect();
    net.set_params(&p).unwrap();
    net
}

pub struct MeanFlowBatch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub noise: Array2<f64>,
    pub r: Vec<f64>,
    pub t: Vec<f64>,
}

pub fn meanflow_batch(net: &MeanFlowNet<f64>, rows: usize, seed: u64) -> MeanFlowBatch {
    let mut g = rng::stream(seed, 0x62);
    let normal = |g: &mut rng::Rng, r, c| Array2::from_shape_simple_fn((r, c), || g.sample(StandardNormal));
    let s = normal(&mut g, rows, net.state_dim());
    let a = normal(&mut g, rows, net.action_dim());
    let noise = normal(&mut g, rows, net.action_dim());
    let t: Vec<f64> = (0..rows).map(|_| g.random_range(0.05..1.0)).collect();
    let r: Vec<f64> = t.iter().map(|&ti| g.random_range(0.0..ti)).collect();
    MeanFlowBatch { s, a, noise, r, t }
}

/// Identity mechanics of the average-velocity objective.
pub fn meanflow_mechanics_check() -> Check {
    let net = random_meanflow(3);
    let b = meanflow_batch(&net, 16, 4);
    let v = &b.noise - &b.a;

    let z_t = interpolant(b.a.view(), b.noise.view(), &b.t);
    let (loss_eq, grad_eq) = meanflow_loss_with(&net, b.s.view(), b.a.view(), b.noise.view(), &b.t, &b.t).unwrap();
    let (loss_reg, grad_reg) = regression_loss(&net, z_t.view(), &b.t, &b.t, b.s.view(), v.view()).unwrap();
    let equal_times = loss_eq == loss_reg && grad_eq == grad_reg;

    let mut constant = net.clone();
    let mut p = vec![0.0; constant.num_params()];
    let last = constant.body().layers().len() - 1;
    constant.set_params(&p).unwrap();
    constant.body_mut().layers_mut()[last].bias.fill(0.37);
    p = constant.params();
    constant.set_params(&p).unwrap();
    let z_t = interpolant(b.a.view(), b.noise.view(), &b.t);
    let target = meanflow_target(&constant, z_t.view(), &b.r, &b.t, b.s.view(), v.view()).unwrap();
    let constant_ok = target == v;

    let (_, grad_full) = meanflow_loss_with(&net, b.s.view(), b.a.view(), b.noise.view(), &b.r, &b.t).unwrap();
    let detached = meanflow_target(&net, z_t.view(), &b.r, &b.t, b.s.view(), v.view()).unwrap();
    let (_, grad_fixed) = regression_loss(&net, z_t.view(), &b.r, &b.t, b.s.view(), detached.view()).unwrap();
    let stop_grad = rel_err(&grad_full, &grad_fixed);

    Check::new(
        equal_times && constant_ok && stop_grad == 0.0,
        format!(
            "r=t loss {loss_eq:.6} vs regression {loss_reg:.6}; constant net target==v: {constant_ok}; stop-gradient rel diff {stop_grad:e}"
        ),
    )
}

/// Imitation of a deterministic GLFT expert on one scenario.
pub struct Overfit {
    pub mse: f64,
    pub forward_evals_per_generation: u64,
}

pub fn overfit_glft(pairs: usize, steps: usize) -> Overfit {
    let scenario = Scenario {
        name: "overfit".into(),
        market: MarketParams::default(),
    };
    let factory = |k: ExpertKind, s: &Scenario| -> finflow_core::Result<Box<dyn ChunkPolicy>> {
        let params = ExpertParams::for_market(&s.market, 0.1);
        Ok(Box::new(ClosedFormExpert::new(k, params, s.market.clone(), 8)?))
    };
    let cfg = CollectConfig {
        eval_episodes: 4,
        pairs_per_scenario: pairs,
        ..CollectConfig::default()
    };
    let data = collect_demonstrations(&[scenario], &[ExpertKind::Glft], &factory, &cfg, 7).unwrap();
    let tc = TrainConfig {
        steps,
        ..TrainConfig::default()
    };
    let (net, _) = pretrain(&data, MeanFlowConfig::default(), &tc, 3).unwrap();
    let (s, a) = data.normalized::<f64>();
    let mse = generation_mse(&net, s.view(), a.view(), 16, 1).unwrap();
    let before = net.forward_evals();
    let z1 = Array2::zeros(a.dim());
    net.generate_normalized(s.view(), z1.view()).unwrap();
    Overfit {
        mse,
        forward_evals_per_generation: net.forward_evals() - before,
    }
}

/// `O(n²)` scan: every trough against the largest value at or before it.
pub fn brute_force_drawdown(xs: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..xs.len() {
        let mut peak = xs[0];
        for &w in &xs[..=j] {
            if w > peak {
                peak = w;
            }
        }
        worst = worst.max((peak - xs[j]) / peak.abs().max(1.0) * 100.0);
    }
    worst
}

pub fn drawdown_matches_brute_force(series: usize, seed: u64) -> Check {
    let mut g = rng::stream(seed, 0x6d6464);
    let mut worst = 0.0f64;
    for _ in 0..series {
        let n = g.random_range(1..=200);
        let start: f64 = g.random_range(-50.0..150.0);
        let xs: Vec<f64> = (0..n)
            .scan(start, |w, _| {
                *w += g.sample::<f64, _>(StandardNormal) * 5.0;
                Some(*w)
            })
            .collect();
        let fast = max_drawdown(&xs).unwrap();
        worst = worst.max((fast - brute_force_drawdown(&xs)).abs());
    }
    Check::new(worst == 0.0, format!("{series} random series, max |single-pass − brute force| {worst:e}"))
}

/// Every pipeline stage at a size that runs in seconds.
pub fn small_config() -> finflow_core::harness::ExperimentConfig {
    let mut cfg = finflow_core::harness::ExperimentConfig::default();
    cfg.grid.volatility = vec![0.1];
    cfg.grid.arrival_rate = vec![20.0, 40.0];
    cfg.grid.jump_intensity = vec![0.0];
    cfg.collect.eval_episodes = 8;
    cfg.collect.pairs_per_scenario = 200;
    cfg.pretrain.steps = 40;
    cfg.pretrain.batch_size = 64;
    cfg.pretrain.log_every = 10;
    cfg.ppo_expert.train.iterations = 2;
    cfg.ppo_expert.train.episodes_per_iteration = 8;
    cfg.ppo_expert.normalizer_episodes = 4;
    cfg.finetune.iterations = 2;
    cfg.finetune.episodes_per_iteration = 8;
    cfg.benchmark.trials = 40;
    cfg
}
