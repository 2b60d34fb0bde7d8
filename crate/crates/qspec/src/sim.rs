//! Synthetic data generators with known dependence structure and brute-force
//! reference computations used to validate the estimation paths.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::bvn::{phi, phi_inv};
use crate::data::{Frequency, Period, ReturnSeries};
use crate::error::{Error, Result};
use crate::spectral::IndicatorPair;
use crate::volatility::GarchParams;

/// What to simulate.
#[derive(Debug, Clone, PartialEq)]
pub enum SimKind {
    /// I.i.d. bivariate normal with correlation `rho`.
    GaussianWn { rho: f64 },
    /// GARCH(1,1) returns with Gaussian innovations; the second output series
    /// carries the generating conditional-variance path.
    GarchPath { params: GarchParams },
    /// Clayton copula with standard normal margins; `lower_tail_dep` is the
    /// lower-tail dependence coefficient `2^(-1/theta)`.
    TailDependent { lower_tail_dep: f64 },
}

/// A reproducible simulation request: identical specs produce identical output.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub kind: SimKind,
    pub n: usize,
    pub seed: u64,
}

fn synthetic_dates(n: usize) -> Vec<Period> {
    (0..n)
        .map(|i| Period((1900 + i as u32 / 12) * 100 + 1 + i as u32 % 12))
        .collect()
}

/// Generate a pair of monthly-labelled series per the spec.
pub fn simulate(spec: &SimSpec) -> Result<(ReturnSeries, ReturnSeries)> {
    if spec.n < 8 {
        return Err(Error::InvalidSimSpec(format!(
            "n = {} below the minimum of 8",
            spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dates = synthetic_dates(spec.n);
    let make = |id: &str, values: Vec<f64>| {
        ReturnSeries::new(id, dates.clone(), values, Frequency::Monthly)
    };

    match &spec.kind {
        SimKind::GaussianWn { rho } => {
            if rho.abs() > 1.0 {
                return Err(Error::InvalidCorrelation(*rho));
            }
            let load = (1.0 - rho * rho).sqrt();
            let mut x = Vec::with_capacity(spec.n);
            let mut y = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                x.push(z1);
                y.push(rho * z1 + load * z2);
            }
            Ok((make("ref", x)?, make("asset", y)?))
        }
        SimKind::GarchPath { params } => {
            if !params.is_stationary() {
                return Err(Error::InvalidSimSpec(
                    "GARCH parameters must be stationary".into(),
                ));
            }
            let mut sigma2 = params.unconditional_variance();
            let mut returns = Vec::with_capacity(spec.n);
            let mut variances = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let z: f64 = rng.sample(StandardNormal);
                let eps = sigma2.sqrt() * z;
                returns.push(params.mu + eps);
                variances.push(sigma2);
                sigma2 = params.omega + params.alpha * eps * eps + params.beta * sigma2;
            }
            Ok((make("garch_returns", returns)?, make("garch_sigma2", variances)?))
        }
        SimKind::TailDependent { lower_tail_dep } => {
            if !(*lower_tail_dep > 0.0 && *lower_tail_dep < 1.0) {
                return Err(Error::InvalidSimSpec(format!(
                    "lower tail dependence {lower_tail_dep} outside (0, 1)"
                )));
            }
            // lambda_L = 2^(-1/theta)  =>  theta = -1 / log2(lambda_L)
            let theta = -1.0 / lower_tail_dep.log2();
            let gamma = Gamma::new(1.0 / theta, 1.0)
                .map_err(|e| Error::InvalidSimSpec(e.to_string()))?;
            let mut x = Vec::with_capacity(spec.n);
            let mut y = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                // Marshall-Olkin sampler for the Clayton copula.
                let v: f64 = rng.sample(gamma);
                let e1 = -rng.gen_range(f64::MIN_POSITIVE..1.0_f64).ln();
                let e2 = -rng.gen_range(f64::MIN_POSITIVE..1.0_f64).ln();
                let u1 = (1.0 + e1 / v).powf(-1.0 / theta);
                let u2 = (1.0 + e2 / v).powf(-1.0 / theta);
                x.push(phi_inv(u1.clamp(1e-300, 1.0 - 1e-16)));
                y.push(phi_inv(u2.clamp(1e-300, 1.0 - 1e-16)));
            }
            Ok((make("ref", x)?, make("asset", y)?))
        }
    }
}

/// Lagged indicator covariances for `k = -max_lag ..= max_lag`.
#[derive(Debug, Clone)]
pub struct LaggedCov {
    pub max_lag: usize,
    values: Vec<f64>,
}

impl LaggedCov {
    /// Covariance at signed lag `k`.
    pub fn at(&self, k: isize) -> f64 {
        let idx = (k + self.max_lag as isize) as usize;
        self.values[idx]
    }
}

/// Direct O(n*k) lagged covariances of the indicator pair,
/// `gamma(k) = (1/n) sum_t (hits1[t+k] - m1)(hits2[t] - m2)`,
/// with circular indexing so the lag-window transform of the raw
/// cross-periodogram (frequency zero excluded) reproduces it exactly.
pub fn brute_quantile_cov(pair: &IndicatorPair, max_lag: usize) -> Result<LaggedCov> {
    let n = pair.len();
    if max_lag >= n / 4 {
        return Err(Error::InvalidSimSpec(format!(
            "max_lag {max_lag} must be below n/4 = {}",
            n / 4
        )));
    }
    let h1: Vec<f64> = pair.asset_hits.iter().map(|&b| b as f64).collect();
    let h2: Vec<f64> = pair.reference_hits.iter().map(|&b| b as f64).collect();
    let m1 = h1.iter().sum::<f64>() / n as f64;
    let m2 = h2.iter().sum::<f64>() / n as f64;
    let mut values = Vec::with_capacity(2 * max_lag + 1);
    for k in -(max_lag as isize)..=(max_lag as isize) {
        let mut acc = 0.0;
        for t in 0..n {
            let shifted = (t as isize + k).rem_euclid(n as isize) as usize;
            acc += (h1[shifted] - m1) * (h2[t] - m2);
        }
        values.push(acc / n as f64);
    }
    Ok(LaggedCov { max_lag, values })
}

/// `P(X <= h, Y <= k)` for standard bivariate normals via adaptive Simpson
/// quadrature on the correlation-integral representation
/// `Phi(h)Phi(k) + (1/2pi) \int_0^rho exp(-(h^2 - 2hkr + k^2)/(2(1-r^2))) / sqrt(1-r^2) dr`.
///
/// Independent of the quadrature used by the Gaussian-copula baseline; serves
/// as its oracle. Absolute error below 1e-8 for |rho| <= 0.99.
pub fn bvn_rectangle(h: f64, k: f64, rho: f64) -> f64 {
    assert!(rho.abs() <= 1.0, "correlation outside [-1, 1]");
    if rho == 0.0 {
        return phi(h) * phi(k);
    }
    if rho == 1.0 {
        return phi(h.min(k));
    }
    if rho == -1.0 {
        return (phi(h) + phi(k) - 1.0).max(0.0);
    }
    let integrand = |r: f64| {
        let one_minus = 1.0 - r * r;
        ((-(h * h - 2.0 * h * k * r + k * k) / (2.0 * one_minus)).exp()) / one_minus.sqrt()
    };
    let integral = adaptive_simpson(&integrand, 0.0, rho, 1e-10, 40);
    (phi(h) * phi(k) + integral / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, c, fa, fc, fd, left, tol / 2.0, depth - 1)
            + simpson_step(f, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
    }
}
