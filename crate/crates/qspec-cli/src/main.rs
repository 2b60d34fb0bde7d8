//! `qspec` — batch front-end: estimate quantile-spectral betas from return
//! panels, price tail and extreme-volatility risk in the cross-section, sweep
//! RMSPE over thresholds, fit the market GARCH, and generate synthetic pairs.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{RawSettings, RunSettings, VolSource};
use output::RiskKind;
use qspec::data::{
    filter_min_history, load_panel, read_csv_table, Frequency, LoadOptions, ReturnPanel,
    ReturnSeries,
};
use qspec::pricing::{
    build_beta_matrix, price_from_betas, run_model, tau_grid, BetaMatrix, BetaOptions,
    CurvePoint, ModelContext, ModelFamily, PricingModelSpec,
};
use qspec::sim::{simulate, SimKind, SimSpec};
use qspec::spectral::BandAverage;
use qspec::volatility::{fit_garch11, realized_variance, GarchParams, VariancePath};

#[derive(Parser)]
#[command(
    name = "qspec",
    version,
    about = "Quantile-spectral betas and restricted cross-sectional pricing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate QS, Gaussian-baseline, simple and CAPM betas; one CSV per
    /// (tau, risk kind)
    Betas(CommonArgs),
    /// Run pricing models and write lambda tables, predicted-vs-actual CSVs
    /// and optional scatter SVGs
    Price(CommonArgs),
    /// RMSPE over a threshold grid for each requested model
    RmspeCurve(CommonArgs),
    /// Fit GARCH(1,1) to the market series and dump the variance path
    FitGarch(CommonArgs),
    /// Generate a synthetic series pair with known dependence structure
    Simulate(SimArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FreqArg {
    Monthly,
    Daily,
}

impl From<FreqArg> for Frequency {
    fn from(value: FreqArg) -> Self {
        match value {
            FreqArg::Monthly => Frequency::Monthly,
            FreqArg::Daily => Frequency::Daily,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file; command-line flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Portfolio panel CSV (date + one column per asset, percent)
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Market CSV (date, mkt, rf; percent)
    #[arg(long)]
    market: Option<PathBuf>,
    /// Daily market CSV for realized volatility (date, mkt, rf)
    #[arg(long)]
    daily: Option<PathBuf>,
    /// FF3 factor CSV (date plus mkt-rf or mkt/rf, smb, hml)
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long, value_enum)]
    freq: Option<FreqArg>,
    /// Quantile threshold; repeatable
    #[arg(long = "tau")]
    taus: Vec<f64>,
    /// Threshold grid lo:hi:step for rmspe-curve
    #[arg(long)]
    tau_grid: Option<String>,
    /// Long/short band boundary in periods per cycle (default 18 monthly, 378 daily)
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, value_enum)]
    vol: Option<VolSource>,
    /// Model family; repeatable (CAPM, TR3, EVR3, SIMPLE3, FULL5, FF3, DR1,
    /// HORSE_TR, HORSE_EVR)
    #[arg(long = "model")]
    models: Vec<String>,
    /// Smoothing bandwidth as a fraction of the frequency range (default n^-1/4)
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (env QSPEC_WORKERS is the fallback)
    #[arg(long)]
    workers: Option<usize>,
    /// Drop assets with fewer observations than this
    #[arg(long)]
    min_history: Option<usize>,
    /// Minimum accepted market length after alignment (default 360)
    #[arg(long)]
    min_market_len: Option<usize>,
    /// Missing-value sentinel; repeatable (default -99.99 and -999)
    #[arg(long = "missing-code")]
    missing_codes: Vec<f64>,
    /// Emit SVG plots next to the CSVs
    #[arg(long, action = clap::ArgAction::SetTrue)]
    svg: bool,
    /// Benchmark RMSPE drawn as a reference line in curve plots
    #[arg(long)]
    benchmark_rmspe: Option<f64>,
    /// Estimate tail-risk betas on volatility-standardized returns
    #[arg(long, action = clap::ArgAction::SetTrue)]
    standardize: bool,
    /// Apply the Shanken correction to second-stage t-statistics
    #[arg(long, action = clap::ArgAction::SetTrue)]
    shanken: bool,
    /// Weight band averages by the reference auto-spectrum
    #[arg(long, action = clap::ArgAction::SetTrue)]
    weighted_bands: bool,
    /// With `betas`: also dump per-frequency beta ratios per asset and tau
    #[arg(long, action = clap::ArgAction::SetTrue)]
    dump_frequencies: bool,
}

impl CommonArgs {
    fn resolve(&self) -> anyhow::Result<RunSettings> {
        let file = match &self.config {
            Some(path) => config::load_config(path)?,
            None => RawSettings::default(),
        };
        let models = self
            .models
            .iter()
            .map(|m| m.parse::<ModelFamily>().map_err(anyhow::Error::from))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let flags = RawSettings {
            panel: self.panel.clone(),
            market: self.market.clone(),
            daily: self.daily.clone(),
            factors: self.factors.clone(),
            freq: self.freq.map(Into::into),
            taus: (!self.taus.is_empty()).then(|| self.taus.clone()),
            tau_grid: match &self.tau_grid {
                Some(text) => Some(config::parse_tau_grid(text)?),
                None => None,
            },
            cutoff: self.cutoff,
            vol: self.vol,
            models: (!models.is_empty()).then_some(models),
            bandwidth: self.bandwidth,
            out: self.out.clone(),
            seed: self.seed,
            workers: self.workers,
            min_history: self.min_history,
            min_market_len: self.min_market_len,
            missing_codes: (!self.missing_codes.is_empty()).then(|| self.missing_codes.clone()),
            svg: self.svg.then_some(true),
            benchmark_rmspe: self.benchmark_rmspe,
            standardize: self.standardize.then_some(true),
            shanken: self.shanken.then_some(true),
            weighted_bands: self.weighted_bands.then_some(true),
            dump_frequencies: self.dump_frequencies.then_some(true),
        };
        file.overlay(flags).resolve()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKindArg {
    Gaussian,
    Garch,
    Clayton,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kind: SimKindArg,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Correlation for the Gaussian pair
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Lower-tail dependence coefficient for the Clayton pair
    #[arg(long, default_value_t = 0.5)]
    tail_dep: f64,
    #[arg(long, default_value_t = 0.1)]
    omega: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.90)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Betas(args) => cmd_betas(&prepare(&args)?),
        Command::Price(args) => cmd_price(&prepare(&args)?),
        Command::RmspeCurve(args) => cmd_rmspe_curve(&prepare(&args)?),
        Command::FitGarch(args) => cmd_fit_garch(&prepare(&args)?),
        Command::Simulate(args) => cmd_simulate(&args),
    }
}

fn prepare(args: &CommonArgs) -> anyhow::Result<RunSettings> {
    let settings = args.resolve()?;
    let workers = settings.workers.or_else(|| {
        std::env::var("QSPEC_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(count) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(count.max(1))
            .build_global()
            .ok();
    }
    std::fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating output directory `{}`", settings.out.display()))?;
    // The estimation pipeline itself is deterministic; the seed is recorded
    // for runs that add stochastic steps downstream.
    log::debug!("run seed {}", settings.seed);
    Ok(settings)
}

fn load_options(settings: &RunSettings) -> LoadOptions {
    LoadOptions {
        frequency: settings.freq,
        missing_codes: settings.missing_codes.clone(),
        min_market_len: settings.min_market_len,
        values_are_excess: false,
    }
}

fn beta_options(settings: &RunSettings) -> BetaOptions {
    BetaOptions {
        bandwidth: settings.bandwidth,
        average: if settings.weighted_bands {
            BandAverage::SpectrumWeighted
        } else {
            BandAverage::Unweighted
        },
        standardize_tr: settings.standardize,
    }
}

/// Market excess-return series from a `date, mkt, rf` CSV.
fn load_market_excess(
    path: &PathBuf,
    frequency: Frequency,
    missing_codes: &[f64],
) -> anyhow::Result<ReturnSeries> {
    let table = read_csv_table(path, frequency, missing_codes)?;
    let mkt = table
        .column("mkt")
        .ok_or_else(|| anyhow!("`{}` has no `mkt` column", path.display()))?;
    let rf = table
        .column("rf")
        .ok_or_else(|| anyhow!("`{}` has no `rf` column", path.display()))?;
    let (m, r) = mkt.aligned_values(rf);
    let dates: Vec<_> = mkt
        .dates
        .iter()
        .copied()
        .filter(|d| rf.dates.binary_search(d).is_ok())
        .collect();
    Ok(ReturnSeries::new(
        "mkt",
        dates,
        m.iter().zip(&r).map(|(a, b)| a - b).collect(),
        frequency,
    )?)
}

struct Inputs {
    panel: ReturnPanel,
    variance: VariancePath,
}

fn load_inputs(settings: &RunSettings) -> anyhow::Result<Inputs> {
    let panel_path = settings
        .panel
        .as_ref()
        .ok_or_else(|| anyhow!("--panel is required"))?;
    let market_path = settings
        .market
        .as_ref()
        .ok_or_else(|| anyhow!("--market is required"))?;
    let mut panel = load_panel(panel_path, market_path, &load_options(settings))?;
    if let Some(min) = settings.min_history {
        let before = panel.n_assets();
        panel = filter_min_history(panel, min);
        if panel.n_assets() < before {
            log::info!(
                "minimum-history filter kept {} of {before} assets",
                panel.n_assets()
            );
        }
    }
    let variance = match settings.vol {
        VolSource::Garch => {
            let (params, path) = fit_garch11(&panel.market)?;
            log::info!(
                "GARCH(1,1): omega {:.5}, alpha {:.4}, beta {:.4}, persistence {:.4}",
                params.omega,
                params.alpha,
                params.beta,
                params.persistence()
            );
            path
        }
        VolSource::Realized => {
            if settings.freq != Frequency::Monthly {
                bail!("realized volatility needs a monthly panel plus daily market data");
            }
            let daily_path = settings
                .daily
                .as_ref()
                .ok_or_else(|| anyhow!("--daily is required with --vol realized"))?;
            let daily =
                load_market_excess(daily_path, Frequency::Daily, &settings.missing_codes)?;
            let (path, excluded) = realized_variance(&daily, panel.calendar())?;
            for exclusion in &excluded {
                log::warn!("realized variance: excluded {exclusion:?}");
            }
            path
        }
    };
    Ok(Inputs { panel, variance })
}

fn cmd_betas(settings: &RunSettings) -> anyhow::Result<()> {
    let inputs = load_inputs(settings)?;
    let options = beta_options(settings);
    for &tau in &settings.taus {
        let matrix = build_beta_matrix(
            &inputs.panel,
            &inputs.variance,
            tau,
            settings.cutoff,
            &options,
        )?;
        for (id, message) in &matrix.failures {
            log::warn!("tau {tau}: skipped asset `{id}`: {message}");
        }
        let tr = output::write_betas(&settings.out, RiskKind::Tr, &matrix)?;
        let evr = output::write_betas(&settings.out, RiskKind::Evr, &matrix)?;
        println!("{}", tr.display());
        println!("{}", evr.display());
        if settings.dump_frequencies {
            dump_frequency_betas(settings, &inputs, tau, &options)?;
        }
    }
    Ok(())
}

/// Per-frequency beta ratios for every asset at one threshold, one CSV per
/// (asset, risk kind). Mirrors the series construction of the beta matrix.
fn dump_frequency_betas(
    settings: &RunSettings,
    inputs: &Inputs,
    tau: f64,
    options: &BetaOptions,
) -> anyhow::Result<()> {
    use qspec::spectral::{
        ccr_periodogram, default_bandwidth, empirical_quantile, make_indicators,
        make_indicators_at_level, per_frequency_betas, smooth_spectrum,
    };
    use qspec::volatility::standardize_returns;

    let tr_market = if options.standardize_tr {
        standardize_returns(&inputs.panel.market)?
    } else {
        inputs.panel.market.clone()
    };
    let increments = inputs.variance.neg_increment_series(settings.freq);
    for asset in &inputs.panel.assets {
        let tr_asset = if options.standardize_tr {
            match standardize_returns(asset) {
                Ok(series) => series,
                Err(e) => {
                    log::warn!("frequency dump skipped for `{}`: {e}", asset.id);
                    continue;
                }
            }
        } else {
            asset.clone()
        };
        // The EVR asset threshold is the tau-quantile of raw market returns
        // on the asset's aligned sample, as in the beta matrix.
        let (raw_mkt_vals, _) = inputs.panel.market.aligned_values(asset);
        for (kind, reference, target) in [
            (RiskKind::Tr, &tr_market, &tr_asset),
            (RiskKind::Evr, &increments, asset),
        ] {
            let (ref_vals, asset_vals) = reference.aligned_values(target);
            let pair = match kind {
                RiskKind::Tr => make_indicators(&ref_vals, &asset_vals, tau),
                RiskKind::Evr => empirical_quantile(&raw_mkt_vals, tau).and_then(|level| {
                    make_indicators_at_level(&ref_vals, &asset_vals, tau, level)
                }),
            };
            let rows = pair.and_then(|pair| {
                let periodogram = ccr_periodogram(&pair)?;
                let bandwidth = options
                    .bandwidth
                    .unwrap_or_else(|| default_bandwidth(pair.len()));
                let spectrum = smooth_spectrum(&periodogram, bandwidth)?;
                per_frequency_betas(&spectrum)
            });
            match rows {
                Ok(rows) => {
                    let path =
                        output::write_frequency_betas(&settings.out, kind, tau, &asset.id, &rows)?;
                    println!("{}", path.display());
                }
                Err(e) => {
                    log::warn!("frequency dump skipped for `{}` ({}): {e}", asset.id, kind.tag())
                }
            }
        }
    }
    Ok(())
}

fn emit_pricing(
    settings: &RunSettings,
    result: &qspec::pricing::PricingResult,
) -> anyhow::Result<()> {
    let table = output::write_lambda_table(&settings.out, result)?;
    let predicted = output::write_predicted(&settings.out, result)?;
    println!("{}", table.display());
    println!("{}", predicted.display());
    if settings.svg {
        let svg = output::write_scatter_svg(&settings.out, result)?;
        println!("{}", svg.display());
    }
    Ok(())
}

fn cmd_price(settings: &RunSettings) -> anyhow::Result<()> {
    let inputs = load_inputs(settings)?;
    let factors = match &settings.factors {
        Some(path) => Some(read_csv_table(
            path,
            settings.freq,
            &settings.missing_codes,
        )?),
        None => None,
    };
    let context = ModelContext {
        panel: &inputs.panel,
        variance: Some(&inputs.variance),
        factors: factors.as_ref(),
        cutoff: settings.cutoff,
        options: beta_options(settings),
        shanken: settings.shanken,
    };

    // Build each threshold's beta matrix once and price every model off it.
    let mut cache: BTreeMap<u64, BetaMatrix> = BTreeMap::new();
    for &model in &settings.models {
        if model.needs_tau() {
            for &tau in &settings.taus {
                let matrix = match cache.entry(tau.to_bits()) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => e.insert(build_beta_matrix(
                        &inputs.panel,
                        &inputs.variance,
                        tau,
                        settings.cutoff,
                        &context.options,
                    )?),
                };
                for (id, message) in &matrix.failures {
                    log::warn!("tau {tau}: skipped asset `{id}`: {message}");
                }
                let spec = PricingModelSpec::new(model, Some(tau))?;
                let result = price_from_betas(&spec, matrix, &context)?;
                emit_pricing(settings, &result)?;
            }
        } else {
            let spec = PricingModelSpec::new(model, None)?;
            let result = run_model(&spec, &context)?;
            emit_pricing(settings, &result)?;
        }
    }
    Ok(())
}

fn cmd_rmspe_curve(settings: &RunSettings) -> anyhow::Result<()> {
    let inputs = load_inputs(settings)?;
    let (lo, hi, step) = settings.tau_grid.unwrap_or((0.01, 0.50, 0.01));
    let grid = tau_grid(lo, hi, step)?;
    let models: Vec<ModelFamily> = settings
        .models
        .iter()
        .copied()
        .filter(|m| {
            if m.needs_tau() {
                true
            } else {
                log::warn!("{} has no threshold to sweep; skipping", m.name());
                false
            }
        })
        .collect();
    if models.is_empty() {
        bail!("no threshold-based model requested");
    }
    let context = ModelContext {
        panel: &inputs.panel,
        variance: Some(&inputs.variance),
        factors: None,
        cutoff: settings.cutoff,
        options: beta_options(settings),
        shanken: settings.shanken,
    };

    let mut curves: BTreeMap<&'static str, Vec<CurvePoint>> =
        models.iter().map(|m| (m.name(), Vec::new())).collect();
    for &tau in &grid {
        match build_beta_matrix(
            &inputs.panel,
            &inputs.variance,
            tau,
            settings.cutoff,
            &context.options,
        ) {
            Ok(matrix) => {
                for &model in &models {
                    let point = PricingModelSpec::new(model, Some(tau))
                        .and_then(|spec| price_from_betas(&spec, &matrix, &context));
                    curves.get_mut(model.name()).unwrap().push(match point {
                        Ok(result) => CurvePoint {
                            tau,
                            rmspe: Some(result.rmspe),
                            error: None,
                        },
                        Err(e) => {
                            log::warn!("{} at tau {tau}: {e}", model.name());
                            CurvePoint {
                                tau,
                                rmspe: None,
                                error: Some(e.to_string()),
                            }
                        }
                    });
                }
            }
            Err(e) => {
                log::warn!("beta estimation failed at tau {tau}: {e}");
                for &model in &models {
                    curves.get_mut(model.name()).unwrap().push(CurvePoint {
                        tau,
                        rmspe: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    for (model, points) in &curves {
        let csv = output::write_curve(&settings.out, model, points)?;
        println!("{}", csv.display());
        if settings.svg {
            let svg =
                output::write_curve_svg(&settings.out, model, points, settings.benchmark_rmspe)?;
            println!("{}", svg.display());
        }
    }
    Ok(())
}

fn cmd_fit_garch(settings: &RunSettings) -> anyhow::Result<()> {
    let market_path = settings
        .market
        .as_ref()
        .ok_or_else(|| anyhow!("--market is required"))?;
    let market = load_market_excess(market_path, settings.freq, &settings.missing_codes)?;
    let (params, path) = fit_garch11(&market)?;
    let (params_path, variance_path) = output::write_garch(&settings.out, &params, &path)?;
    println!("{}", params_path.display());
    println!("{}", variance_path.display());
    Ok(())
}

fn cmd_simulate(args: &SimArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let kind = match args.kind {
        SimKindArg::Gaussian => SimKind::GaussianWn { rho: args.rho },
        SimKindArg::Garch => SimKind::GarchPath {
            params: GarchParams {
                omega: args.omega,
                alpha: args.alpha,
                beta: args.beta,
                mu: args.mu,
            },
        },
        SimKindArg::Clayton => SimKind::TailDependent {
            lower_tail_dep: args.tail_dep,
        },
    };
    let spec = SimSpec {
        kind,
        n: args.n,
        seed: args.seed,
    };
    let (left, right) = simulate(&spec)?;
    let path = output::write_sim_pair(&args.out, &left, &right)?;
    println!("{}", path.display());
    Ok(())
}
