//! Episode metrics and paired statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::invalid;
use crate::scalar::Scalar;
use crate::Result;

/// Floor on `|peak|` when turning a drawdown into a percentage.
pub const DRAWDOWN_FLOOR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sharpe<F> {
    pub value: F,
    /// Set when the sample standard deviation is zero (value is then 0).
    pub degenerate: bool,
}

/// `mean / std` with the `n − 1` standard deviation and zero risk-free rate.
pub fn sharpe_ratio<F: Scalar>(returns: &[F]) -> Result<Sharpe<F>> {
    if returns.len() < 2 {
        return Err(invalid("Sharpe ratio needs at least two returns"));
    }
    let n = F::of(returns.len() as f64);
    let mean = returns.iter().fold(F::zero(), |a, &x| a + x) / n;
    let var = returns.iter().fold(F::zero(), |a, &x| a + (x - mean) * (x - mean)) / (n - F::one());
    let sd = var.sqrt();
    if sd == F::zero() {
        return Ok(Sharpe {
            value: F::zero(),
            degenerate: true,
        });
    }
    Ok(Sharpe {
        value: mean / sd,
        degenerate: false,
    })
}

/// Asymptotic standard error of a Sharpe ratio estimated from `n` i.i.d. returns.
pub fn sharpe_standard_error(sr: f64, n: usize) -> f64 {
    ((1.0 + 0.5 * sr * sr) / n as f64).sqrt()
}

/// Largest decline from a running peak, in percent of `max(|peak|, 1)`.
/// Single pass.
pub fn max_drawdown<F: Scalar>(series: &[F]) -> Result<F> {
    let (&first, rest) = series
        .split_first()
        .ok_or_else(|| invalid("drawdown of an empty series"))?;
    let floor = F::of(DRAWDOWN_FLOOR);
    let hundred = F::of(100.0);
    let mut peak = first;
    let mut worst = F::zero();
    for &w in rest {
        if w > peak {
            peak = w;
        } else {
            let dd = (peak - w) / peak.abs().max(floor) * hundred;
            if dd > worst {
                worst = dd;
            }
        }
    }
    Ok(worst)
}

/// One-sided paired t-test of `H1: mean(a − b) > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub std_err: f64,
    pub t: f64,
    pub p_value: f64,
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("paired test needs two equal-length samples of size >= 2"));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t, p) = if se == 0.0 {
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        (f64::INFINITY.copysign(mean), p)
    } else {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| invalid(e.to_string()))?;
        (t, 1.0 - dist.cdf(t))
    };
    Ok(PairedTest {
        n,
        mean_diff: mean,
        std_err: se,
        t,
        p_value: p,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean with the `n − 1` variance.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}
