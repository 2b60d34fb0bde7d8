//! Second-stage pricing: per-asset beta records, the restricted
//! cross-sectional regression (market price of risk fixed at the sample mean
//! market excess return), competing-model dispatch, and RMSPE curves over a
//! quantile grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{CsvTable, ReturnPanel, ReturnSeries};
use crate::error::{Error, Result};
use crate::spectral::{
    band_split, capm_beta, ccr_periodogram, default_bandwidth, empirical_quantile, gaussian_beta,
    make_indicators, make_indicators_at_level, pearson_correlation, qs_beta_band_with,
    simple_quantile_beta, smooth_spectrum, BandAverage, IndicatorPair, QSSpectrum,
};
use crate::volatility::{standardize_returns, VariancePath};

/// Condition-number ceiling for the cross-sectional regressor matrix.
const MAX_CONDITION: f64 = 1e10;

/// Model families of the second-stage regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Capm,
    Tr3,
    Evr3,
    Simple3,
    Full5,
    Ff3,
    Dr1,
    HorseTr,
    HorseEvr,
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Capm => "CAPM",
            ModelFamily::Tr3 => "TR3",
            ModelFamily::Evr3 => "EVR3",
            ModelFamily::Simple3 => "SIMPLE3",
            ModelFamily::Full5 => "FULL5",
            ModelFamily::Ff3 => "FF3",
            ModelFamily::Dr1 => "DR1",
            ModelFamily::HorseTr => "HORSE_TR",
            ModelFamily::HorseEvr => "HORSE_EVR",
        }
    }

    /// Does this family take a quantile threshold?
    pub fn needs_tau(&self) -> bool {
        !matches!(self, ModelFamily::Capm | ModelFamily::Ff3 | ModelFamily::Dr1)
    }

    /// Free regressor columns in table order (the restricted CAPM column and
    /// the RMSPE are appended after these when reporting).
    pub fn regressor_names(&self) -> Vec<&'static str> {
        match self {
            ModelFamily::Capm => vec![],
            ModelFamily::Tr3 => vec!["tr_long", "tr_short"],
            ModelFamily::Evr3 => vec!["ev_long", "ev_short"],
            ModelFamily::Simple3 => vec!["tr_simple", "ev_simple"],
            ModelFamily::Full5 => vec!["tr_long", "tr_short", "ev_long", "ev_short"],
            ModelFamily::Ff3 => vec!["smb", "hml"],
            ModelFamily::Dr1 => vec!["downside"],
            ModelFamily::HorseTr => vec!["tr_simple", "tr_long", "tr_short"],
            ModelFamily::HorseEvr => vec!["ev_simple", "ev_long", "ev_short"],
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "CAPM" => Ok(ModelFamily::Capm),
            "TR3" => Ok(ModelFamily::Tr3),
            "EVR3" => Ok(ModelFamily::Evr3),
            "SIMPLE3" => Ok(ModelFamily::Simple3),
            "FULL5" => Ok(ModelFamily::Full5),
            "FF3" => Ok(ModelFamily::Ff3),
            "DR1" => Ok(ModelFamily::Dr1),
            "HORSE_TR" => Ok(ModelFamily::HorseTr),
            "HORSE_EVR" => Ok(ModelFamily::HorseEvr),
            other => Err(Error::InvalidModelSpec(format!("unknown model `{other}`"))),
        }
    }
}

/// Which betas enter the second stage; the market price is always restricted.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingModelSpec {
    pub family: ModelFamily,
    pub tau: Option<f64>,
}

impl PricingModelSpec {
    pub fn new(family: ModelFamily, tau: Option<f64>) -> Result<Self> {
        match (family.needs_tau(), tau) {
            (true, Some(t)) if t > 0.0 && t <= 0.5 => {}
            (true, Some(t)) => {
                return Err(Error::InvalidModelSpec(format!(
                    "{}: tau {t} outside (0, 0.5]",
                    family.name()
                )))
            }
            (true, None) => {
                return Err(Error::InvalidModelSpec(format!(
                    "{} requires a tau threshold",
                    family.name()
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidModelSpec(format!(
                    "{} takes no tau threshold",
                    family.name()
                )))
            }
            (false, None) => {}
        }
        Ok(PricingModelSpec { family, tau })
    }
}

/// Estimation knobs for the first stage.
#[derive(Debug, Clone)]
pub struct BetaOptions {
    /// Smoothing bandwidth; `None` uses `n^(-1/4)` of each aligned sample.
    pub bandwidth: Option<f64>,
    /// Band aggregation rule.
    pub average: BandAverage,
    /// Estimate tail-risk betas on volatility-standardized series.
    pub standardize_tr: bool,
}

impl Default for BetaOptions {
    fn default() -> Self {
        BetaOptions {
            bandwidth: None,
            average: BandAverage::Unweighted,
            standardize_tr: false,
        }
    }
}

/// First-stage betas for one asset at one quantile threshold.
#[derive(Debug, Clone)]
pub struct AssetBetas {
    pub asset: String,
    pub capm: f64,
    /// Band QS betas against market returns.
    pub tr_long: f64,
    pub tr_short: f64,
    /// Gaussian baseline for the market pair (flat across bands).
    pub tr_gauss: f64,
    pub rel_tr_long: f64,
    pub rel_tr_short: f64,
    /// Band QS betas against negated variance increments (no baseline
    /// subtraction in the pricing models).
    pub evr_long: f64,
    pub evr_short: f64,
    /// Gaussian baseline for the increment pair, reported for diagnostics.
    pub evr_gauss: f64,
    pub rel_evr_long: f64,
    pub rel_evr_short: f64,
    /// Frequency-aggregated quantile betas.
    pub simple_tr: f64,
    pub simple_tr_rel: f64,
    pub simple_evr: f64,
    pub tau_i_tr: f64,
    pub tau_i_evr: f64,
    pub rho_market: f64,
    pub rho_evr: f64,
    pub mean_return: f64,
    pub n_obs: usize,
}

/// The assembled first-stage output for one threshold.
#[derive(Debug, Clone)]
pub struct BetaMatrix {
    pub tau: f64,
    pub cutoff: f64,
    pub mean_market: f64,
    pub assets: Vec<AssetBetas>,
    /// Assets whose estimation failed, with the reported reason.
    pub failures: Vec<(String, String)>,
}

fn qs_band_betas(
    reference: &[f64],
    asset: &[f64],
    tau: f64,
    asset_level: Option<f64>,
    cutoff: f64,
    options: &BetaOptions,
) -> Result<(IndicatorPair, QSSpectrum, f64, f64)> {
    let pair = match asset_level {
        None => make_indicators(reference, asset, tau)?,
        Some(level) => make_indicators_at_level(reference, asset, tau, level)?,
    };
    let periodogram = ccr_periodogram(&pair)?;
    let bandwidth = options.bandwidth.unwrap_or_else(|| default_bandwidth(pair.len()));
    let spectrum = smooth_spectrum(&periodogram, bandwidth)?;
    let (long_band, short_band) = band_split(pair.len(), cutoff)?;
    let long = qs_beta_band_with(&spectrum, &long_band, options.average)?;
    let short = qs_beta_band_with(&spectrum, &short_band, options.average)?;
    Ok((pair, spectrum, long, short))
}

fn asset_betas(
    asset: &ReturnSeries,
    market: &ReturnSeries,
    tr_market: &ReturnSeries,
    tr_asset: &ReturnSeries,
    variance: &VariancePath,
    tau: f64,
    cutoff: f64,
    options: &BetaOptions,
) -> Result<AssetBetas> {
    // Tail market risk: asset against the market (possibly standardized),
    // both hit series thresholded at the market's tau-quantile.
    let (tr_ref_vals, tr_asset_vals) = {
        let (m, a) = tr_market.aligned_values(tr_asset);
        (m, a)
    };
    let (tr_pair, _, tr_long, tr_short) =
        qs_band_betas(&tr_ref_vals, &tr_asset_vals, tau, None, cutoff, options)?;
    let rho_market = pearson_correlation(&tr_asset_vals, &tr_ref_vals)?;
    let tr_gauss = gaussian_beta(rho_market, tau, tr_pair.tau_i)?;
    let simple_tr = simple_quantile_beta(&tr_pair)?;

    // CAPM beta and the mean return always come from raw excess returns.
    let (mkt_vals, asset_vals) = market.aligned_values(asset);
    let capm = capm_beta(&asset_vals, &mkt_vals)?;
    let mean_return = asset.mean();

    // Extreme volatility risk: raw asset returns against the negated
    // variance increments, paired at the increment's own date (the increment
    // series is one period shorter). The reference hits use the tau-quantile
    // of the increments, while the asset threshold stays the tau-quantile of
    // raw market returns — the two sides live on different scales.
    let increments = variance.neg_increment_series(asset.frequency);
    let (evr_ref_vals, evr_asset_vals) = {
        let (i, a) = increments.aligned_values(asset);
        (i, a)
    };
    let market_level = empirical_quantile(&mkt_vals, tau)?;
    let (evr_pair, _, evr_long, evr_short) = qs_band_betas(
        &evr_ref_vals,
        &evr_asset_vals,
        tau,
        Some(market_level),
        cutoff,
        options,
    )?;
    let rho_evr = pearson_correlation(&evr_asset_vals, &evr_ref_vals)?;
    let evr_gauss = gaussian_beta(rho_evr, tau, evr_pair.tau_i)?;
    let simple_evr = simple_quantile_beta(&evr_pair)?;

    Ok(AssetBetas {
        asset: asset.id.clone(),
        capm,
        tr_long,
        tr_short,
        tr_gauss,
        rel_tr_long: tr_long - tr_gauss,
        rel_tr_short: tr_short - tr_gauss,
        evr_long,
        evr_short,
        evr_gauss,
        rel_evr_long: evr_long - evr_gauss,
        rel_evr_short: evr_short - evr_gauss,
        simple_tr,
        simple_tr_rel: simple_tr - tr_gauss,
        simple_evr,
        tau_i_tr: tr_pair.tau_i,
        tau_i_evr: evr_pair.tau_i,
        rho_market,
        rho_evr,
        mean_return,
        n_obs: asset.len(),
    })
}

/// First stage: estimate CAPM, band QS (with Gaussian baselines) and simple
/// quantile betas for every asset. Per-asset failures are collected rather
/// than aborting the whole panel.
pub fn build_beta_matrix(
    panel: &ReturnPanel,
    variance: &VariancePath,
    tau: f64,
    cutoff: f64,
    options: &BetaOptions,
) -> Result<BetaMatrix> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidQuantile(tau));
    }
    let (tr_market, standardized_assets) = if options.standardize_tr {
        let market_std = standardize_returns(&panel.market)?;
        let assets_std: Vec<Result<ReturnSeries>> = panel
            .assets
            .par_iter()
            .map(standardize_returns)
            .collect();
        (market_std, Some(assets_std))
    } else {
        (panel.market.clone(), None)
    };

    let records: Vec<std::result::Result<AssetBetas, (String, String)>> = panel
        .assets
        .par_iter()
        .enumerate()
        .map(|(idx, asset)| {
            let tr_asset = match &standardized_assets {
                None => asset.clone(),
                Some(list) => match &list[idx] {
                    Ok(series) => series.clone(),
                    Err(e) => return Err((asset.id.clone(), e.to_string())),
                },
            };
            asset_betas(
                asset, &panel.market, &tr_market, &tr_asset, variance, tau, cutoff, options,
            )
            .map_err(|e| (asset.id.clone(), Error::for_asset(&asset.id, e).to_string()))
        })
        .collect();

    let mut assets = Vec::new();
    let mut failures = Vec::new();
    for record in records {
        match record {
            Ok(betas) => assets.push(betas),
            Err((id, message)) => {
                log::warn!("beta estimation failed for asset `{id}`: {message}");
                failures.push((id, message));
            }
        }
    }
    if assets.is_empty() {
        return Err(Error::EmptyCalendar(
            "no asset produced a complete beta record".into(),
        ));
    }
    Ok(BetaMatrix {
        tau,
        cutoff,
        mean_market: panel.market.mean(),
        assets,
        failures,
    })
}

/// Input of the restricted cross-sectional regression.
#[derive(Debug, Clone)]
pub struct CrossSectionInput {
    pub asset_ids: Vec<String>,
    pub regressor_names: Vec<String>,
    /// One column per free regressor, each of length `asset_ids.len()`.
    pub regressors: Vec<Vec<f64>>,
    pub capm_betas: Vec<f64>,
    pub mean_returns: Vec<f64>,
    /// Imposed market price of risk (sample mean market excess return).
    pub mean_market: f64,
}

/// Options of the second-stage regression.
#[derive(Debug, Clone, Default)]
pub struct CrossSectionOptions {
    /// When set, t-statistics are shrunk by the Shanken factor
    /// `sqrt(1 + lambda_capm^2 / market_variance)` using this market variance.
    pub shanken_market_variance: Option<f64>,
}

/// Estimated prices of risk, t-statistics, pricing errors and fitted returns.
#[derive(Debug, Clone)]
pub struct PricingResult {
    pub model: String,
    pub tau: Option<f64>,
    pub lambda_names: Vec<String>,
    pub lambdas: Vec<f64>,
    pub tstats: Vec<f64>,
    /// The imposed market price of risk.
    pub lambda_capm: f64,
    /// Root mean squared pricing error at the x100 table scale.
    pub rmspe: f64,
    /// The same in raw percent-per-period units.
    pub rmspe_raw: f64,
    pub asset_ids: Vec<String>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Restricted least squares: minimize over `lambda` the squared pricing
/// errors of `mean_return_i - capm_i * lambda_capm - x_i' * lambda`, with
/// `lambda_capm` fixed at the mean market excess return and no intercept.
pub fn fit_cross_section(
    input: &CrossSectionInput,
    options: &CrossSectionOptions,
) -> Result<PricingResult> {
    let n = input.mean_returns.len();
    let k = input.regressors.len();
    if input.capm_betas.len() != n || input.asset_ids.len() != n {
        return Err(Error::LengthMismatch {
            left: input.capm_betas.len(),
            right: n,
        });
    }
    for column in &input.regressors {
        if column.len() != n {
            return Err(Error::LengthMismatch {
                left: column.len(),
                right: n,
            });
        }
    }
    if n < k + 1 {
        return Err(Error::TooFewAssets {
            assets: n,
            regressors: k,
        });
    }

    let lambda_capm = input.mean_market;
    let target: Vec<f64> = input
        .mean_returns
        .iter()
        .zip(&input.capm_betas)
        .map(|(r, b)| r - b * lambda_capm)
        .collect();

    let (lambdas, tstats, fitted) = if k == 0 {
        (Vec::new(), Vec::new(), vec![0.0; n])
    } else {
        let x = DMatrix::from_fn(n, k, |i, j| input.regressors[j][i]);
        let y = DVector::from_column_slice(&target);
        let svd = x.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        let cond = if sigma_min > 0.0 {
            sigma_max / sigma_min
        } else {
            f64::INFINITY
        };
        if !cond.is_finite() || cond >= MAX_CONDITION {
            return Err(Error::CollinearRegressors { cond });
        }
        let solution = svd
            .solve(&y, 0.0)
            .map_err(|e| Error::OptimizerFailure(e.to_string()))?;
        let lambdas: Vec<f64> = solution.iter().copied().collect();

        let fitted_vec = &x * &solution;
        let rss: f64 = (0..n).map(|i| (target[i] - fitted_vec[i]).powi(2)).sum();
        let dof = (n - k) as f64;
        let s2 = rss / dof;
        // (X'X)^-1 diagonal via the SVD factors.
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut tstats = Vec::with_capacity(k);
        for j in 0..k {
            let mut inv_jj = 0.0;
            for l in 0..svd.singular_values.len() {
                let sv = svd.singular_values[l];
                inv_jj += (v_t[(l, j)] / sv).powi(2);
            }
            let mut se = (s2 * inv_jj).sqrt();
            if let Some(market_var) = options.shanken_market_variance {
                if market_var > 0.0 {
                    se *= (1.0 + lambda_capm * lambda_capm / market_var).sqrt();
                }
            }
            let t = if se == 0.0 {
                if lambdas[j] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(lambdas[j])
                }
            } else {
                lambdas[j] / se
            };
            tstats.push(t);
        }
        (lambdas, tstats, fitted_vec.iter().copied().collect())
    };

    let predicted: Vec<f64> = (0..n)
        .map(|i| input.capm_betas[i] * lambda_capm + fitted[i])
        .collect();
    let rmspe_raw = (input
        .mean_returns
        .iter()
        .zip(&predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        / n as f64)
        .sqrt();

    Ok(PricingResult {
        model: String::new(),
        tau: None,
        lambda_names: input.regressor_names.clone(),
        lambdas,
        tstats,
        lambda_capm,
        rmspe: 100.0 * rmspe_raw,
        rmspe_raw,
        asset_ids: input.asset_ids.clone(),
        actual: input.mean_returns.clone(),
        predicted,
    })
}

/// Everything a model run needs besides the model spec itself.
pub struct ModelContext<'a> {
    pub panel: &'a ReturnPanel,
    pub variance: Option<&'a VariancePath>,
    /// Factor table for FF3 (`date` plus `mkt-rf` or `mkt`/`rf`, `smb`, `hml`).
    pub factors: Option<&'a CsvTable>,
    pub cutoff: f64,
    pub options: BetaOptions,
    pub shanken: bool,
}

impl<'a> ModelContext<'a> {
    pub fn new(panel: &'a ReturnPanel, cutoff: f64) -> Self {
        ModelContext {
            panel,
            variance: None,
            factors: None,
            cutoff,
            options: BetaOptions::default(),
            shanken: false,
        }
    }

    fn cross_section_options(&self) -> CrossSectionOptions {
        CrossSectionOptions {
            shanken_market_variance: if self.shanken {
                let m = self.panel.market.mean();
                let var = self
                    .panel
                    .market
                    .values
                    .iter()
                    .map(|v| (v - m) * (v - m))
                    .sum::<f64>()
                    / self.panel.market.len() as f64;
                Some(var)
            } else {
                None
            },
        }
    }
}

/// Price a tau-family model from an already-built beta matrix. The matrix
/// must have been estimated at the model's threshold.
pub fn price_from_betas(
    spec: &PricingModelSpec,
    matrix: &BetaMatrix,
    context: &ModelContext,
) -> Result<PricingResult> {
    if !spec.family.needs_tau() {
        return Err(Error::InvalidModelSpec(format!(
            "{} does not price from a beta matrix",
            spec.family.name()
        )));
    }
    if spec.tau != Some(matrix.tau) {
        return Err(Error::InvalidModelSpec(format!(
            "beta matrix was estimated at tau {} but the model asks for {:?}",
            matrix.tau, spec.tau
        )));
    }
    let names = spec.family.regressor_names();
    let column = |name: &str| -> Vec<f64> {
        matrix
            .assets
            .iter()
            .map(|a| match name {
                "tr_long" => a.rel_tr_long,
                "tr_short" => a.rel_tr_short,
                "ev_long" => a.evr_long,
                "ev_short" => a.evr_short,
                "tr_simple" => a.simple_tr_rel,
                "ev_simple" => a.simple_evr,
                other => unreachable!("unknown beta column {other}"),
            })
            .collect()
    };
    let input = CrossSectionInput {
        asset_ids: matrix.assets.iter().map(|a| a.asset.clone()).collect(),
        regressor_names: names.iter().map(|s| s.to_string()).collect(),
        regressors: names.iter().map(|n| column(n)).collect(),
        capm_betas: matrix.assets.iter().map(|a| a.capm).collect(),
        mean_returns: matrix.assets.iter().map(|a| a.mean_return).collect(),
        mean_market: matrix.mean_market,
    };
    let mut result = fit_cross_section(&input, &context.cross_section_options())?;
    result.model = spec.family.name().to_string();
    result.tau = spec.tau;
    Ok(result)
}

/// Downside beta: `Cov(r_i, r_m | r_m < mean(r_m)) / Var(r_m | r_m < mean(r_m))`.
pub fn downside_beta(asset: &[f64], market: &[f64]) -> Result<f64> {
    if asset.len() != market.len() {
        return Err(Error::LengthMismatch {
            left: asset.len(),
            right: market.len(),
        });
    }
    let mean_m = market.iter().sum::<f64>() / market.len() as f64;
    let down: Vec<(f64, f64)> = asset
        .iter()
        .zip(market)
        .filter(|(_, &m)| m < mean_m)
        .map(|(&a, &m)| (a, m))
        .collect();
    if down.len() < 2 {
        return Err(Error::DegenerateSeries(
            "fewer than two downside observations".into(),
        ));
    }
    let asset_down: Vec<f64> = down.iter().map(|(a, _)| *a).collect();
    let market_down: Vec<f64> = down.iter().map(|(_, m)| *m).collect();
    capm_beta(&asset_down, &market_down)
}

fn run_capm(context: &ModelContext) -> Result<PricingResult> {
    let panel = context.panel;
    let mut capm_betas = Vec::new();
    let mut means = Vec::new();
    let mut ids = Vec::new();
    for asset in &panel.assets {
        let (mkt_vals, asset_vals) = panel.market.aligned_values(asset);
        let beta = capm_beta(&asset_vals, &mkt_vals)
            .map_err(|e| Error::for_asset(&asset.id, e))?;
        capm_betas.push(beta);
        means.push(asset.mean());
        ids.push(asset.id.clone());
    }
    let input = CrossSectionInput {
        asset_ids: ids,
        regressor_names: vec![],
        regressors: vec![],
        capm_betas,
        mean_returns: means,
        mean_market: panel.market.mean(),
    };
    fit_cross_section(&input, &context.cross_section_options())
}

fn run_dr1(context: &ModelContext) -> Result<PricingResult> {
    let panel = context.panel;
    let mut capm_betas = Vec::new();
    let mut downside = Vec::new();
    let mut means = Vec::new();
    let mut ids = Vec::new();
    for asset in &panel.assets {
        let (mkt_vals, asset_vals) = panel.market.aligned_values(asset);
        capm_betas.push(
            capm_beta(&asset_vals, &mkt_vals).map_err(|e| Error::for_asset(&asset.id, e))?,
        );
        downside.push(
            downside_beta(&asset_vals, &mkt_vals).map_err(|e| Error::for_asset(&asset.id, e))?,
        );
        means.push(asset.mean());
        ids.push(asset.id.clone());
    }
    let input = CrossSectionInput {
        asset_ids: ids,
        regressor_names: vec!["downside".into()],
        regressors: vec![downside],
        capm_betas,
        mean_returns: means,
        mean_market: panel.market.mean(),
    };
    fit_cross_section(&input, &context.cross_section_options())
}

fn run_ff3(context: &ModelContext) -> Result<PricingResult> {
    let panel = context.panel;
    let factors = context
        .factors
        .ok_or_else(|| Error::MissingInput("FF3 requires a factor table".into()))?;

    // Market excess: a `mkt-rf` column, or `mkt` minus `rf`.
    let market_excess: ReturnSeries = if let Some(premade) = factors.column("mkt-rf") {
        premade.clone()
    } else {
        let mkt = factors
            .column("mkt")
            .ok_or_else(|| Error::MissingColumn("mkt-rf or mkt".into()))?;
        let rf = factors
            .column("rf")
            .ok_or_else(|| Error::MissingColumn("rf".into()))?;
        let (m, r) = mkt.aligned_values(rf);
        let dates: Vec<_> = mkt
            .dates
            .iter()
            .copied()
            .filter(|d| rf.dates.binary_search(d).is_ok())
            .collect();
        ReturnSeries::new(
            "mkt-rf",
            dates,
            m.iter().zip(&r).map(|(a, b)| a - b).collect(),
            mkt.frequency,
        )?
    };
    let smb = factors
        .column("smb")
        .ok_or_else(|| Error::MissingColumn("smb".into()))?;
    let hml = factors
        .column("hml")
        .ok_or_else(|| Error::MissingColumn("hml".into()))?;

    let mut ids = Vec::new();
    let mut capm_betas = Vec::new();
    let mut smb_betas = Vec::new();
    let mut hml_betas = Vec::new();
    let mut means = Vec::new();
    for asset in &panel.assets {
        // Common calendar of the asset and all three factor columns.
        let dates: Vec<_> = asset
            .dates
            .iter()
            .copied()
            .filter(|d| {
                market_excess.dates.binary_search(d).is_ok()
                    && smb.dates.binary_search(d).is_ok()
                    && hml.dates.binary_search(d).is_ok()
            })
            .collect();
        let pick = |series: &ReturnSeries| -> Vec<f64> {
            dates
                .iter()
                .map(|d| series.values[series.dates.binary_search(d).unwrap()])
                .collect()
        };
        let y = pick(asset);
        let n = y.len();
        if n < 8 {
            return Err(Error::for_asset(
                &asset.id,
                Error::SeriesTooShort {
                    id: asset.id.clone(),
                    len: n,
                    min: 8,
                },
            ));
        }
        let mkt_vals = pick(&market_excess);
        let smb_vals = pick(smb);
        let hml_vals = pick(hml);

        // Time-series OLS with intercept: r_i = a + b_m mkt + b_s smb + b_h hml.
        let x = DMatrix::from_fn(n, 4, |i, j| match j {
            0 => 1.0,
            1 => mkt_vals[i],
            2 => smb_vals[i],
            3 => hml_vals[i],
            _ => unreachable!(),
        });
        let yv = DVector::from_column_slice(&y);
        let coef = x
            .svd(true, true)
            .solve(&yv, 0.0)
            .map_err(|e| Error::OptimizerFailure(e.to_string()))?;
        capm_betas.push(coef[1]);
        smb_betas.push(coef[2]);
        hml_betas.push(coef[3]);
        means.push(asset.mean());
        ids.push(asset.id.clone());
    }

    let input = CrossSectionInput {
        asset_ids: ids,
        regressor_names: vec!["smb".into(), "hml".into()],
        regressors: vec![smb_betas, hml_betas],
        capm_betas,
        mean_returns: means,
        mean_market: panel.market.mean(),
    };
    fit_cross_section(&input, &context.cross_section_options())
}

/// Run one pricing model end to end (first stage included where needed).
pub fn run_model(spec: &PricingModelSpec, context: &ModelContext) -> Result<PricingResult> {
    let mut result = match spec.family {
        ModelFamily::Capm => run_capm(context)?,
        ModelFamily::Dr1 => run_dr1(context)?,
        ModelFamily::Ff3 => run_ff3(context)?,
        _ => {
            let tau = spec
                .tau
                .ok_or_else(|| Error::InvalidModelSpec("tau missing".into()))?;
            let variance = context.variance.ok_or_else(|| {
                Error::MissingInput(format!(
                    "{} requires a variance path",
                    spec.family.name()
                ))
            })?;
            let matrix = build_beta_matrix(
                context.panel,
                variance,
                tau,
                context.cutoff,
                &context.options,
            )?;
            return price_from_betas(spec, &matrix, context);
        }
    };
    result.model = spec.family.name().to_string();
    result.tau = spec.tau;
    Ok(result)
}

/// One point of an RMSPE-versus-threshold curve.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub tau: f64,
    pub rmspe: Option<f64>,
    pub error: Option<String>,
}

/// RMSPE across a quantile grid; per-threshold failures leave a gap in the
/// curve instead of aborting it.
pub fn rmspe_curve(
    family: ModelFamily,
    context: &ModelContext,
    tau_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    if !family.needs_tau() {
        return Err(Error::InvalidModelSpec(format!(
            "{} has no threshold to sweep",
            family.name()
        )));
    }
    let mut curve = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let point = PricingModelSpec::new(family, Some(tau))
            .and_then(|spec| run_model(&spec, context));
        match point {
            Ok(result) => curve.push(CurvePoint {
                tau,
                rmspe: Some(result.rmspe),
                error: None,
            }),
            Err(e) => {
                log::warn!("rmspe curve point tau = {tau} failed: {e}");
                curve.push(CurvePoint {
                    tau,
                    rmspe: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(curve)
}

/// Evenly spaced threshold grid `lo, lo+step, ..., <= hi` (inclusive of `hi`
/// up to a half-step of rounding).
pub fn tau_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi <= 0.5 && lo <= hi && step > 0.0) {
        return Err(Error::InvalidModelSpec(format!(
            "bad tau grid {lo}:{hi}:{step} (need 0 < lo <= hi <= 0.5, step > 0)"
        )));
    }
    let count = ((hi - lo) / step + 0.5).floor() as usize + 1;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}
