//! Market variance paths: GARCH(1,1) quasi-maximum-likelihood estimation,
//! realized variance from daily data, and volatility-standardized returns.
//!
//! The negated variance increments `-(sigma2[t] - sigma2[t-1])` are the
//! reference series for extreme-volatility-risk betas: large volatility
//! increases land in the lower quantiles of the negated series.

use crate::data::{Frequency, Period, ReturnSeries};
use crate::error::{Error, Result};

/// GARCH(1,1) parameters with a constant mean, variance in percent² units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn is_stationary(&self) -> bool {
        self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0 && self.persistence() < 1.0
    }

    /// `omega / (1 - alpha - beta)`, the stationary variance level.
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }
}

/// A conditional (or realized) variance series and its negated increments.
///
/// `neg_increments[i] = sigma2[i] - sigma2[i+1]` exactly, so the increment
/// dated `dates[i+1]` sits at index `i` and the vector is one shorter than
/// `sigma2`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePath {
    pub dates: Vec<Period>,
    pub sigma2: Vec<f64>,
    pub neg_increments: Vec<f64>,
}

impl VariancePath {
    pub fn new(dates: Vec<Period>, sigma2: Vec<f64>) -> Result<Self> {
        if dates.len() != sigma2.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: sigma2.len(),
            });
        }
        if sigma2.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::DegenerateSeries(
                "variance path must be strictly positive".into(),
            ));
        }
        let neg_increments = sigma2.windows(2).map(|w| w[0] - w[1]).collect();
        Ok(VariancePath {
            dates,
            sigma2,
            neg_increments,
        })
    }

    /// Dates of the increment observations (`dates[1..]`).
    pub fn increment_dates(&self) -> &[Period] {
        &self.dates[1..]
    }

    /// The negated-increment series as a [`ReturnSeries`]-shaped object so it
    /// can be aligned with asset returns.
    pub fn neg_increment_series(&self, frequency: Frequency) -> ReturnSeries {
        ReturnSeries {
            id: "neg_d_sigma2".into(),
            dates: self.increment_dates().to_vec(),
            values: self.neg_increments.clone(),
            frequency,
        }
    }
}

/// Conditional-variance recursion `sigma2[t] = omega + alpha*eps[t-1]^2 + beta*sigma2[t-1]`
/// with `sigma2[0] = sigma0`.
pub fn garch_variance_recursion(params: &GarchParams, eps: &[f64], sigma0: f64) -> Vec<f64> {
    let mut sigma2 = Vec::with_capacity(eps.len());
    let mut prev = sigma0;
    sigma2.push(prev);
    for t in 1..eps.len() {
        prev = params.omega + params.alpha * eps[t - 1] * eps[t - 1] + params.beta * prev;
        sigma2.push(prev);
    }
    sigma2
}

/// Gaussian quasi negative log-likelihood of demeaned returns under the
/// GARCH(1,1) recursion, `sigma2[0]` fixed at the sample variance of `eps`.
pub fn garch_neg_loglik(params: &GarchParams, eps: &[f64]) -> f64 {
    let n = eps.len() as f64;
    let sigma0 = eps.iter().map(|e| e * e).sum::<f64>() / n;
    if !(sigma0 > 0.0) {
        return f64::INFINITY;
    }
    let mut nll = 0.0;
    let mut sig = sigma0;
    const LN_2PI: f64 = 1.8378770664093453;
    for t in 0..eps.len() {
        if t > 0 {
            sig = params.omega + params.alpha * eps[t - 1] * eps[t - 1] + params.beta * sig;
        }
        if !(sig > 0.0) || !sig.is_finite() {
            return f64::INFINITY;
        }
        nll += 0.5 * (LN_2PI + sig.ln() + eps[t] * eps[t] / sig);
    }
    if nll.is_finite() {
        nll
    } else {
        f64::INFINITY
    }
}

// Unconstrained optimizer coordinates: (ln omega, logit(alpha+beta), logit(alpha/(alpha+beta))).
// The map enforces omega > 0, alpha, beta >= 0 and alpha + beta < 1.
fn theta_to_params(theta: &[f64; 3], mu: f64) -> GarchParams {
    let omega = theta[0].exp();
    let persistence = logistic(theta[1]);
    let ratio = logistic(theta[2]);
    GarchParams {
        omega,
        alpha: persistence * ratio,
        beta: persistence * (1.0 - ratio),
        mu,
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fit GARCH(1,1) by Gaussian QMLE with a constant mean (set to the sample
/// mean) and a variance-targeted start (alpha = 0.05, beta = 0.90).
///
/// Returns the parameters and the in-sample conditional variance path with
/// its negated increments.
pub fn fit_garch11(series: &ReturnSeries) -> Result<(GarchParams, VariancePath)> {
    const MIN_LEN: usize = 100;
    if series.len() < MIN_LEN {
        return Err(Error::SeriesTooShort {
            id: series.id.clone(),
            len: series.len(),
            min: MIN_LEN,
        });
    }
    let mu = series.mean();
    let eps: Vec<f64> = series.values.iter().map(|r| r - mu).collect();
    let sample_var = eps.iter().map(|e| e * e).sum::<f64>() / eps.len() as f64;
    if !(sample_var > 0.0) || !sample_var.is_finite() {
        return Err(Error::DegenerateSeries(format!(
            "series `{}` has zero variance",
            series.id
        )));
    }

    let start_alpha = 0.05;
    let start_beta = 0.90;
    let start = [
        (sample_var * (1.0 - start_alpha - start_beta)).ln(),
        logit(start_alpha + start_beta),
        logit(start_alpha / (start_alpha + start_beta)),
    ];
    let objective = |theta: &[f64; 3]| garch_neg_loglik(&theta_to_params(theta, mu), &eps);

    if !objective(&start).is_finite() {
        return Err(Error::OptimizerFailure(
            "likelihood non-finite at the starting point".into(),
        ));
    }

    // Nelder-Mead, restarted once at the incumbent to unstick a collapsed simplex.
    let mut best = nelder_mead(&objective, start, 0.25, 2000, 1e-10);
    best = nelder_mead(&objective, best.0, 0.05, 2000, 1e-12);
    let (theta, value) = best;
    if !value.is_finite() {
        return Err(Error::OptimizerFailure("optimum has non-finite likelihood".into()));
    }

    let params = theta_to_params(&theta, mu);
    if !params.is_stationary() {
        return Err(Error::NonStationaryFit {
            persistence: params.persistence(),
        });
    }
    let sigma2 = garch_variance_recursion(&params, &eps, sample_var);
    let path = VariancePath::new(series.dates.clone(), sigma2)?;
    Ok((params, path))
}

// Plain Nelder-Mead on R^3 (reflection 1, expansion 2, contraction 0.5,
// shrink 0.5). Returns the best vertex and its value.
fn nelder_mead<F>(
    f: &F,
    start: [f64; 3],
    scale: f64,
    max_iter: usize,
    tol: f64,
) -> ([f64; 3], f64)
where
    F: Fn(&[f64; 3]) -> f64,
{
    const DIM: usize = 3;
    let mut simplex: Vec<[f64; 3]> = vec![start];
    for i in 0..DIM {
        let mut v = start;
        v[i] += scale;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=DIM).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[DIM];
        let second_worst = order[DIM - 1];

        if (values[worst] - values[best]).abs() <= tol * (1.0 + values[best].abs()) {
            break;
        }

        let mut centroid = [0.0; 3];
        for &i in order.iter().take(DIM) {
            for d in 0..DIM {
                centroid[d] += simplex[i][d] / DIM as f64;
            }
        }

        let blend = |a: f64, b: f64| {
            let mut v = [0.0; 3];
            for d in 0..DIM {
                v[d] = a * centroid[d] + b * simplex[worst][d];
            }
            v
        };

        let reflected = blend(2.0, -1.0);
        let f_reflected = f(&reflected);
        if f_reflected < values[best] {
            let expanded = blend(3.0, -2.0);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = if f_reflected < values[worst] {
                blend(1.5, -0.5)
            } else {
                blend(0.5, 0.5)
            };
            let f_contracted = f(&contracted);
            if f_contracted < values[worst].min(f_reflected) {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                let anchor = simplex[best];
                for i in 0..=DIM {
                    if i == best {
                        continue;
                    }
                    for d in 0..DIM {
                        simplex[i][d] = 0.5 * (simplex[i][d] + anchor[d]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best_idx = 0;
    for i in 1..=DIM {
        if values[i] < values[best_idx] {
            best_idx = i;
        }
    }
    (simplex[best_idx], values[best_idx])
}

/// Why a month was left out of a realized-variance path.
#[derive(Debug, Clone, PartialEq)]
pub enum Exclusion {
    TooFewObservations { month: Period, count: usize },
    ZeroVariance { month: Period },
}

/// Monthly realized variance from daily returns: the sum of squared
/// within-month demeaned daily returns over each calendar month.
///
/// Months with fewer than five daily observations, and months of exactly zero
/// variance, are excluded from the path and reported in the exclusion list.
pub fn realized_variance(
    daily: &ReturnSeries,
    calendar: &[Period],
) -> Result<(VariancePath, Vec<Exclusion>)> {
    if daily.frequency != Frequency::Daily {
        return Err(Error::DegenerateSeries(format!(
            "series `{}` is not daily",
            daily.id
        )));
    }
    if calendar.is_empty() {
        return Err(Error::EmptyCalendar("empty monthly calendar".into()));
    }
    let first_month = daily.dates.first().map(|d| d.month());
    let last_month = daily.dates.last().map(|d| d.month());
    if first_month.map_or(true, |m| m > calendar[0])
        || last_month.map_or(true, |m| m < calendar[calendar.len() - 1])
    {
        return Err(Error::EmptyCalendar(
            "daily series does not span the monthly calendar".into(),
        ));
    }

    const MIN_DAYS: usize = 5;
    let mut dates = Vec::new();
    let mut sigma2 = Vec::new();
    let mut excluded = Vec::new();
    for &month in calendar {
        let day_returns: Vec<f64> = daily
            .dates
            .iter()
            .zip(&daily.values)
            .filter(|(d, _)| d.month() == month)
            .map(|(_, v)| *v)
            .collect();
        if day_returns.len() < MIN_DAYS {
            excluded.push(Exclusion::TooFewObservations {
                month,
                count: day_returns.len(),
            });
            continue;
        }
        let mean = day_returns.iter().sum::<f64>() / day_returns.len() as f64;
        let rv: f64 = day_returns.iter().map(|r| (r - mean) * (r - mean)).sum();
        if rv > 0.0 {
            dates.push(month);
            sigma2.push(rv);
        } else {
            excluded.push(Exclusion::ZeroVariance { month });
        }
    }
    if sigma2.len() < 2 {
        return Err(Error::DegenerateSeries(
            "fewer than two months with positive realized variance".into(),
        ));
    }
    Ok((VariancePath::new(dates, sigma2)?, excluded))
}

/// Divide demeaned returns by the conditional volatility from the series' own
/// GARCH(1,1) fit. Output has the same dates and length as the input.
pub fn standardize_returns(series: &ReturnSeries) -> Result<ReturnSeries> {
    let (params, path) = fit_garch11(series)?;
    let standardized = series
        .values
        .iter()
        .zip(&path.sigma2)
        .map(|(r, s2)| (r - params.mu) / s2.sqrt())
        .collect();
    ReturnSeries::new(
        series.id.clone(),
        series.dates.clone(),
        standardized,
        series.frequency,
    )
}
