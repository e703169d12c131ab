//! Fractional Gaussian noise (increments of fractional Brownian motion).
//!
//! Davies–Harte circulant embedding is used whenever the embedding's
//! eigenvalues are nonnegative; otherwise the sampler falls back to a Cholesky
//! factor of the Toeplitz covariance. Both produce the exact covariance
//! `γ(k) = ½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})` for unit steps; increments
//! over a step `dt` are scaled by `dt^H`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::invalid;
use crate::{rng, Result};

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

#[derive(Clone)]
enum Method {
    DaviesHarte {
        /// `sqrt(λ_k / m)` for the circulant eigenvalues.
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        /// Row-major lower-triangular factor.
        lower: Vec<f64>,
    },
}

/// Reusable sampler of `n` fractional Gaussian noise values for fixed `H`.
#[derive(Clone)]
pub struct FgnSampler {
    hurst: f64,
    n: usize,
    method: Method,
}

impl std::fmt::Debug for FgnSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnSampler")
            .field("hurst", &self.hurst)
            .field("n", &self.n)
            .field("circulant", &self.is_circulant())
            .finish()
    }
}

impl FgnSampler {
    pub fn new(hurst: f64, n: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(invalid(format!("Hurst exponent must lie in (0,1), got {hurst}")));
        }
        if n == 0 {
            return Err(invalid("fBm needs at least one step"));
        }
        match Self::davies_harte(hurst, n) {
            Some(method) => Ok(Self { hurst, n, method }),
            None => Self::cholesky(hurst, n),
        }
    }

    /// Forces the Cholesky method (O(n³) setup).
    pub fn cholesky(hurst: f64, n: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) || n == 0 {
            return Err(invalid("invalid fBm parameters"));
        }
        let cov: Vec<f64> = (0..n).map(|k| fgn_autocovariance(hurst, k)).collect();
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = cov[i - j];
                for k in 0..j {
                    sum -= lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(invalid("fGn covariance is not positive definite"));
                    }
                    lower[i * n + i] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Ok(Self {
            hurst,
            n,
            method: Method::Cholesky { lower },
        })
    }

    fn davies_harte(hurst: f64, n: usize) -> Option<Method> {
        let m = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= n { j } else { m - j };
                Complex::new(fgn_autocovariance(hurst, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let mut scale = Vec::with_capacity(m);
        for c in &row {
            if c.re < -1e-10 * max.max(1.0) {
                return None;
            }
            scale.push((c.re.max(0.0) / m as f64).sqrt());
        }
        Some(Method::DaviesHarte { scale, fft })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.method, Method::DaviesHarte { .. })
    }

    /// Draws `n` unit-step fGn values into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match &self.method {
            Method::DaviesHarte { scale, fft } => {
                let n = self.n;
                let m = 2 * n;
                let mut w = vec![Complex::new(0.0, 0.0); m];
                w[0] = Complex::new(scale[0] * normal(rng), 0.0);
                w[n] = Complex::new(scale[n] * normal(rng), 0.0);
                let half = std::f64::consts::FRAC_1_SQRT_2;
                for k in 1..n {
                    let re = normal(rng);
                    let im = normal(rng);
                    let v = Complex::new(re, im) * (scale[k] * half);
                    w[k] = v;
                    w[m - k] = v.conj();
                }
                fft.process(&mut w);
                out.extend(w[..n].iter().map(|c| c.re));
            }
            Method::Cholesky { lower } => {
                let n = self.n;
                let z: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
                for i in 0..n {
                    let row = &lower[i * n..i * n + i + 1];
                    out.push(row.iter().zip(&z).map(|(l, z)| l * z).sum());
                }
            }
        }
    }

    /// `n` increments of fBm over steps of length `dt`.
    pub fn increments<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        self.sample_into(rng, &mut out);
        let s = dt.powf(self.hurst);
        out.iter_mut().for_each(|x| *x *= s);
        out
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `n` fBm increments with step `dt`, deterministic in `seed`.
pub fn simulate_fbm(hurst: f64, n: usize, dt: f64, seed: u64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("dt must be > 0, got {dt}")));
    }
    let sampler = FgnSampler::new(hurst, n)?;
    Ok(sampler.increments(&mut rng::market(seed), dt))
}

/// Aggregated-variance Hurst estimate from fGn samples: regress
/// `log Var(block means)` on `log m`, slope `2H − 2`.
pub fn aggregated_variance_hurst(paths: &[Vec<f64>], block_sizes: &[usize]) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &m in block_sizes {
        let mut means = Vec::new();
        for p in paths {
            for block in p.chunks_exact(m) {
                means.push(block.iter().sum::<f64>() / m as f64);
            }
        }
        if means.len() < 2 {
            continue;
        }
        let mu = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        xs.push((m as f64).ln());
        ys.push(var.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    1.0 + 0.5 * sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_hurst() {
        assert!(simulate_fbm(0.0, 4, 1.0, 1).is_err());
        assert!(simulate_fbm(1.0, 4, 1.0, 1).is_err());
        assert!(simulate_fbm(0.5, 0, 1.0, 1).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = simulate_fbm(0.7, 64, 0.01, 5).unwrap();
        let b = simulate_fbm(0.7, 64, 0.01, 5).unwrap();
        let c = simulate_fbm(0.7, 64, 0.01, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn autocovariance_at_half_is_white() {
        assert_eq!(fgn_autocovariance(0.5, 0), 1.0);
        for k in 1..5 {
            assert!(fgn_autocovariance(0.5, k).abs() < 1e-15);
        }
    }

    #[test]
    fn both_methods_reproduce_the_covariance() {
        let h = 0.75;
        let n = 8;
        let draws = 40_000;
        for sampler in [FgnSampler::new(h, n).unwrap(), FgnSampler::cholesky(h, n).unwrap()] {
            let mut r = rng::stream(42, 3);
            let mut acc = vec![0.0; 4];
            let mut buf = Vec::new();
            for _ in 0..draws {
                sampler.sample_into(&mut r, &mut buf);
                for (lag, a) in acc.iter_mut().enumerate() {
                    *a += buf[2] * buf[2 + lag];
                }
            }
            for (lag, a) in acc.iter().enumerate() {
                let est = a / draws as f64;
                let truth = fgn_autocovariance(h, lag);
                // sd of a product of unit normals is at most sqrt(2)
                assert!((est - truth).abs() < 4.0 * 2f64.sqrt() / (draws as f64).sqrt(), "lag {lag}: {est} vs {truth}");
            }
        }
    }

    #[test]
    fn circulant_embedding_is_used_for_typical_sizes() {
        for h in [0.1, 0.5, 0.9] {
            assert!(FgnSampler::new(h, 100).unwrap().is_circulant());
        }
    }
}
