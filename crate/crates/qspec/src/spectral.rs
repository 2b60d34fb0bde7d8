//! Quantile-spectral estimation: indicator series on a common reference
//! quantile, rank-based copula cross-periodograms, kernel smoothing across
//! frequencies, band-averaged quantile spectral betas, the Gaussian-copula
//! baseline, and the frequency-aggregated (simple) quantile beta.
//!
//! For a reference series `x` (market return or negated variance increment)
//! and an asset series `r`, both hit series use the single level
//! `q = tau-quantile of x`: the reference hits are `I{x_t <= q}` and the
//! asset hits are `I{r_t <= q}`, so the implied asset quantile
//! `tau_i = F_r(q)` generally differs from `tau`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::bvn::{bvn_cdf, phi_inv};
use crate::error::{Error, Result};

/// Tolerance for deciding whether a Fourier grid frequency belongs to a band.
/// Grid spacing is `2*pi/n`, many orders of magnitude above this, so the
/// tolerance only absorbs rounding at an exact band edge.
const BAND_EDGE_TOL: f64 = 1e-9;

/// Minimum number of grid points a smoothing window must hold.
const MIN_WINDOW_POINTS: usize = 3;

/// Indicator pair at one quantile level of the reference series.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPair {
    /// `I{x_t <= q_ref(tau)}` for the reference series.
    pub reference_hits: Vec<u8>,
    /// `I{r_t <= c}` for the asset at the level threshold `c`
    /// (`q_ref(tau)` itself, unless a separate level was supplied).
    pub asset_hits: Vec<u8>,
    /// Quantile level of the reference series.
    pub tau: f64,
    /// Implied asset quantile: fraction of asset observations at or below the
    /// asset threshold.
    pub tau_i: f64,
    /// The reference threshold `q_ref(tau)`.
    pub threshold: f64,
    /// The level applied to the asset series.
    pub asset_threshold: f64,
}

impl IndicatorPair {
    pub fn len(&self) -> usize {
        self.reference_hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference_hits.is_empty()
    }
}

/// Empirical tau-quantile as the `ceil(n*tau)`-th order statistic.
pub fn empirical_quantile(values: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidQuantile(tau));
    }
    if values.is_empty() {
        return Err(Error::DegenerateSeries("empty series".into()));
    }
    let n = values.len();
    // Guard against n*tau landing a hair above an exact integer product.
    let rank = ((n as f64 * tau) - 1e-9).ceil().max(1.0) as usize;
    let rank = rank.min(n);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// Build the indicator pair for an aligned (reference, asset) sample, both
/// hit series thresholded at the reference's tau-quantile.
pub fn make_indicators(reference: &[f64], asset: &[f64], tau: f64) -> Result<IndicatorPair> {
    let threshold = empirical_quantile(reference, tau)?;
    make_indicators_at_level(reference, asset, tau, threshold)
}

/// Indicator pair with a caller-supplied level for the asset series: the
/// reference hits still use the reference's tau-quantile, the asset hits use
/// `asset_level`. This is how the volatility-risk pair is built, where the
/// asset threshold stays a quantile of market returns while the reference
/// quantile lives on the variance-increment scale.
pub fn make_indicators_at_level(
    reference: &[f64],
    asset: &[f64],
    tau: f64,
    asset_level: f64,
) -> Result<IndicatorPair> {
    if reference.len() != asset.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: asset.len(),
        });
    }
    if !asset_level.is_finite() {
        return Err(Error::DegenerateSeries("non-finite asset threshold".into()));
    }
    let threshold = empirical_quantile(reference, tau)?;
    let reference_hits: Vec<u8> = reference.iter().map(|&x| (x <= threshold) as u8).collect();
    let asset_hits: Vec<u8> = asset.iter().map(|&r| (r <= asset_level) as u8).collect();
    let tau_i = asset_hits.iter().map(|&b| b as f64).sum::<f64>() / asset.len() as f64;
    Ok(IndicatorPair {
        reference_hits,
        asset_hits,
        tau,
        tau_i,
        threshold,
        asset_threshold: asset_level,
    })
}

/// Raw (unsmoothed) copula cross-periodogram over the full Fourier grid
/// `omega_s = 2*pi*s/n`, `s = 0..n-1`, plus the reference auto-periodogram.
#[derive(Debug, Clone)]
pub struct RawPeriodogram {
    pub n: usize,
    /// `I.cross[s] = d_asset(omega_s) * conj(d_ref(omega_s)) / (2*pi*n)`.
    pub cross: Vec<Complex64>,
    /// `|d_ref(omega_s)|^2 / (2*pi*n)`.
    pub reference_auto: Vec<f64>,
}

impl RawPeriodogram {
    pub fn frequency(&self, s: usize) -> f64 {
        2.0 * PI * s as f64 / self.n as f64
    }
}

/// FFT-based CCR-periodogram of an indicator pair.
pub fn ccr_periodogram(pair: &IndicatorPair) -> Result<RawPeriodogram> {
    let n = pair.len();
    if n < 8 {
        return Err(Error::SeriesTooShort {
            id: "indicator pair".into(),
            len: n,
            min: 8,
        });
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);

    let mut d_asset: Vec<Complex64> = pair
        .asset_hits
        .iter()
        .map(|&b| Complex64::new(b as f64, 0.0))
        .collect();
    let mut d_ref: Vec<Complex64> = pair
        .reference_hits
        .iter()
        .map(|&b| Complex64::new(b as f64, 0.0))
        .collect();
    fft.process(&mut d_asset);
    fft.process(&mut d_ref);

    let scale = 1.0 / (2.0 * PI * n as f64);
    let cross = d_asset
        .iter()
        .zip(&d_ref)
        .map(|(a, r)| a * r.conj() * scale)
        .collect();
    let reference_auto = d_ref.iter().map(|r| r.norm_sqr() * scale).collect();
    Ok(RawPeriodogram {
        n,
        cross,
        reference_auto,
    })
}

/// Smoothed quantile (cross-)spectral densities over `omega_s`, `s = 1..n/2`.
#[derive(Debug, Clone)]
pub struct QSSpectrum {
    pub n: usize,
    pub bandwidth: f64,
    /// Fourier grid `2*pi*s/n` for `s = 1..=n/2`.
    pub frequencies: Vec<f64>,
    pub cross: Vec<Complex64>,
    pub reference_auto: Vec<f64>,
}

/// Default smoothing bandwidth `n^(-1/4)` (fraction of the frequency range).
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-0.25)
}

/// Smooth the periodogram with Epanechnikov weights over a window of
/// half-width `bandwidth * pi`, weights renormalized to sum to one over the
/// included grid points. Frequency zero (mod n) carries only the indicator
/// means and is excluded from every window.
pub fn smooth_spectrum(periodogram: &RawPeriodogram, bandwidth: f64) -> Result<QSSpectrum> {
    if !(bandwidth > 0.0 && bandwidth < 0.5) {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    let n = periodogram.n;
    let half_width = bandwidth * PI;
    let spacing = 2.0 * PI / n as f64;
    let m = (half_width / spacing).floor() as isize;

    let half = n / 2;
    let mut frequencies = Vec::with_capacity(half);
    let mut cross = Vec::with_capacity(half);
    let mut auto = Vec::with_capacity(half);
    for j in 1..=half {
        let mut weight_sum = 0.0;
        let mut cross_acc = Complex64::new(0.0, 0.0);
        let mut auto_acc = 0.0;
        let mut included = 0usize;
        for offset in -m..=m {
            let s = (j as isize + offset).rem_euclid(n as isize) as usize;
            if s == 0 {
                continue;
            }
            let u = offset as f64 * spacing / half_width;
            let w = 0.75 * (1.0 - u * u);
            included += 1;
            weight_sum += w;
            cross_acc += periodogram.cross[s] * w;
            auto_acc += periodogram.reference_auto[s] * w;
        }
        if included < MIN_WINDOW_POINTS {
            return Err(Error::BandwidthTooSmall {
                found: included,
                min: MIN_WINDOW_POINTS,
            });
        }
        frequencies.push(2.0 * PI * j as f64 / n as f64);
        cross.push(cross_acc / weight_sum);
        auto.push(auto_acc / weight_sum);
    }
    Ok(QSSpectrum {
        n,
        bandwidth,
        frequencies,
        cross,
        reference_auto: auto,
    })
}

/// A frequency band `(lower, upper]` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    pub lower: f64,
    pub upper: f64,
}

impl FrequencyBand {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0 && upper <= PI + BAND_EDGE_TOL && lower < upper) {
            return Err(Error::InvalidBand {
                lower,
                upper,
                reason: "band must satisfy 0 <= lower < upper <= pi",
            });
        }
        Ok(FrequencyBand { lower, upper })
    }

    /// Full positive frequency range `(0, pi]`.
    pub fn full() -> Self {
        FrequencyBand {
            lower: 0.0,
            upper: PI,
        }
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega > self.lower + BAND_EDGE_TOL && omega <= self.upper + BAND_EDGE_TOL
    }
}

/// Split the positive Fourier grid at the cycle length `period_cutoff`
/// (periods per cycle): long band `(0, 2*pi/cutoff]`, short band
/// `(2*pi/cutoff, pi]`.
pub fn band_split(frequency_count: usize, period_cutoff: f64) -> Result<(FrequencyBand, FrequencyBand)> {
    if !(period_cutoff > 2.0) {
        return Err(Error::InvalidBand {
            lower: 0.0,
            upper: 2.0 * PI / period_cutoff,
            reason: "period cutoff must exceed 2 periods per cycle",
        });
    }
    let boundary = 2.0 * PI / period_cutoff;
    let first_frequency = 2.0 * PI / frequency_count as f64;
    if first_frequency > boundary + BAND_EDGE_TOL {
        return Err(Error::LongBandEmpty {
            n: frequency_count,
            cutoff: period_cutoff,
        });
    }
    Ok((
        FrequencyBand {
            lower: 0.0,
            upper: boundary,
        },
        FrequencyBand {
            lower: boundary,
            upper: PI,
        },
    ))
}

/// How per-frequency betas are aggregated over a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandAverage {
    /// Arithmetic mean of per-frequency betas over the grid (the default).
    #[default]
    Unweighted,
    /// Reference-auto-spectrum-weighted mean, the discretized integral form.
    SpectrumWeighted,
}

/// Band-averaged quantile spectral beta: mean over the band's grid
/// frequencies of `Re[cross / reference_auto]`.
pub fn qs_beta_band(spectrum: &QSSpectrum, band: &FrequencyBand) -> Result<f64> {
    qs_beta_band_with(spectrum, band, BandAverage::Unweighted)
}

/// Band beta under a chosen aggregation rule.
pub fn qs_beta_band_with(
    spectrum: &QSSpectrum,
    band: &FrequencyBand,
    average: BandAverage,
) -> Result<f64> {
    if !(band.lower >= 0.0 && band.upper <= PI + BAND_EDGE_TOL && band.lower < band.upper) {
        return Err(Error::InvalidBand {
            lower: band.lower,
            upper: band.upper,
            reason: "band must satisfy 0 <= lower < upper <= pi",
        });
    }
    let mut numer = 0.0;
    let mut denom = 0.0;
    let mut count = 0usize;
    for (idx, &omega) in spectrum.frequencies.iter().enumerate() {
        if !band.contains(omega) {
            continue;
        }
        let auto = spectrum.reference_auto[idx];
        if !(auto > 0.0) {
            return Err(Error::DegenerateSpectrum { omega });
        }
        let ratio = (spectrum.cross[idx] / auto).re;
        match average {
            BandAverage::Unweighted => {
                numer += ratio;
                denom += 1.0;
            }
            BandAverage::SpectrumWeighted => {
                numer += ratio * auto;
                denom += auto;
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyBand);
    }
    Ok(numer / denom)
}

/// Per-frequency beta ratios `(omega, Re, Im)` of `cross / reference_auto`,
/// for plotting and diagnostics. Imaginary parts are retained here only; band
/// betas use the real part.
pub fn per_frequency_betas(spectrum: &QSSpectrum) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(spectrum.frequencies.len());
    for (idx, &omega) in spectrum.frequencies.iter().enumerate() {
        let auto = spectrum.reference_auto[idx];
        if !(auto > 0.0) {
            return Err(Error::DegenerateSpectrum { omega });
        }
        let ratio = spectrum.cross[idx] / auto;
        out.push((omega, ratio.re, ratio.im));
    }
    Ok(out)
}

/// Gaussian-copula baseline beta
/// `(C(tau, tau_i; rho) - tau*tau_i) / (tau*(1 - tau))`, flat in frequency.
///
/// `tau_i` may sit on the boundary of `[0, 1]` (an asset entirely above or
/// below the reference threshold), where the copula boundary identities give
/// the exact value.
pub fn gaussian_beta(rho: f64, tau: f64, tau_i: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidQuantile(tau));
    }
    if !(0.0..=1.0).contains(&tau_i) {
        return Err(Error::InvalidQuantile(tau_i));
    }
    if rho.abs() > 1.0 {
        return Err(Error::InvalidCorrelation(rho));
    }
    let copula = if rho == 0.0 || tau_i == 0.0 || tau_i == 1.0 {
        // Independence and boundary cases are exact; in all three the
        // numerator reduces without numerical quadrature.
        if tau_i == 0.0 {
            0.0
        } else if tau_i == 1.0 {
            tau
        } else {
            tau * tau_i
        }
    } else if rho == 1.0 {
        tau.min(tau_i)
    } else if rho == -1.0 {
        (tau + tau_i - 1.0).max(0.0)
    } else {
        bvn_cdf(phi_inv(tau), phi_inv(tau_i), rho)
    };
    Ok((copula - tau * tau_i) / (tau * (1.0 - tau)))
}

/// Relative beta: the estimated QS beta minus its Gaussian baseline at the
/// same `(rho, tau, tau_i)`; `rho` is the Pearson correlation of the raw
/// reference and asset series.
pub fn relative_beta(beta: f64, rho: f64, tau: f64, tau_i: f64) -> Result<f64> {
    Ok(beta - gaussian_beta(rho, tau, tau_i)?)
}

/// Frequency-aggregated quantile beta: sample covariance (1/n convention) of
/// the indicator pair divided by `tau*(1 - tau)`.
pub fn simple_quantile_beta(pair: &IndicatorPair) -> Result<f64> {
    let n = pair.len();
    if n < 2 {
        return Err(Error::SeriesTooShort {
            id: "indicator pair".into(),
            len: n,
            min: 2,
        });
    }
    let m_ref = pair.reference_hits.iter().map(|&b| b as f64).sum::<f64>() / n as f64;
    let m_asset = pair.asset_hits.iter().map(|&b| b as f64).sum::<f64>() / n as f64;
    if m_ref == 0.0 || m_ref == 1.0 || m_asset == 0.0 || m_asset == 1.0 {
        return Err(Error::DegenerateHits);
    }
    let mut cov = 0.0;
    for (&r, &a) in pair.reference_hits.iter().zip(&pair.asset_hits) {
        cov += (a as f64 - m_asset) * (r as f64 - m_ref);
    }
    cov /= n as f64;
    Ok(cov / (pair.tau * (1.0 - pair.tau)))
}

/// Ordinary market beta `Cov(r_i, r_m) / Var(r_m)` on an aligned sample.
pub fn capm_beta(asset: &[f64], market: &[f64]) -> Result<f64> {
    if asset.len() != market.len() {
        return Err(Error::LengthMismatch {
            left: asset.len(),
            right: market.len(),
        });
    }
    let n = asset.len();
    if n < 2 {
        return Err(Error::SeriesTooShort {
            id: "capm sample".into(),
            len: n,
            min: 2,
        });
    }
    let mean_a = asset.iter().sum::<f64>() / n as f64;
    let mean_m = market.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&a, &m) in asset.iter().zip(market) {
        cov += (a - mean_a) * (m - mean_m);
        var += (m - mean_m) * (m - mean_m);
    }
    if var == 0.0 {
        return Err(Error::ZeroMarketVariance);
    }
    Ok(cov / var)
}

/// Pearson correlation of two aligned samples.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::SeriesTooShort {
            id: "correlation sample".into(),
            len: n,
            min: 2,
        });
    }
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a) * (x - mean_a);
        var_b += (y - mean_b) * (y - mean_b);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::DegenerateSeries("zero variance in correlation".into()));
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// Fréchet/Hoeffding limits of the quantile beta for serially uncorrelated
/// data: `[(max(tau + tau_i - 1, 0) - tau*tau_i), (min(tau, tau_i) - tau*tau_i)] / (tau*(1-tau))`.
pub fn frechet_bounds(tau: f64, tau_i: f64) -> (f64, f64) {
    let denom = tau * (1.0 - tau);
    let lower = ((tau + tau_i - 1.0).max(0.0) - tau * tau_i) / denom;
    let upper = (tau.min(tau_i) - tau * tau_i) / denom;
    (lower, upper)
}
