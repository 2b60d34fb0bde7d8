//! CSV and SVG emission. File layouts are fixed (documented in the README)
//! so downstream golden-file checks can rely on them; floats are written in
//! their shortest round-trip representation and all row orders are
//! deterministic.

use std::path::{Path, PathBuf};

use anyhow::Context;
use qspec::pricing::{BetaMatrix, CurvePoint, PricingResult};
use qspec::volatility::{GarchParams, VariancePath};

/// Risk kind tag used in beta file names and columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Tr,
    Evr,
}

impl RiskKind {
    pub fn tag(self) -> &'static str {
        match self {
            RiskKind::Tr => "tr",
            RiskKind::Evr => "evr",
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// `betas_{tr|evr}_tau{tau}.csv`
pub fn beta_file_name(kind: RiskKind, tau: f64) -> String {
    format!("betas_{}_tau{}.csv", kind.tag(), tau)
}

pub fn write_betas(dir: &Path, kind: RiskKind, matrix: &BetaMatrix) -> anyhow::Result<PathBuf> {
    let path = dir.join(beta_file_name(kind, matrix.tau));
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("creating `{}`", path.display()))?;
    w.write_record([
        "asset",
        "beta_long",
        "beta_short",
        "beta_gauss_long",
        "beta_gauss_short",
        "beta_rel_long",
        "beta_rel_short",
        "beta_simple",
        "beta_capm",
        "tau_i",
    ])?;
    for record in &matrix.assets {
        let (long, short, gauss, rel_long, rel_short, simple, tau_i) = match kind {
            RiskKind::Tr => (
                record.tr_long,
                record.tr_short,
                record.tr_gauss,
                record.rel_tr_long,
                record.rel_tr_short,
                record.simple_tr,
                record.tau_i_tr,
            ),
            RiskKind::Evr => (
                record.evr_long,
                record.evr_short,
                record.evr_gauss,
                record.rel_evr_long,
                record.rel_evr_short,
                record.simple_evr,
                record.tau_i_evr,
            ),
        };
        w.write_record([
            record.asset.clone(),
            fmt(long),
            fmt(short),
            fmt(gauss),
            fmt(gauss),
            fmt(rel_long),
            fmt(rel_short),
            fmt(simple),
            fmt(record.capm),
            fmt(tau_i),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// `freqs_{tr|evr}_tau{tau}_{asset}.csv`: per-frequency beta ratios for one
/// asset, real and imaginary parts.
pub fn write_frequency_betas(
    dir: &Path,
    kind: RiskKind,
    tau: f64,
    asset: &str,
    rows: &[(f64, f64, f64)],
) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!(
        "freqs_{}_tau{}_{}.csv",
        kind.tag(),
        tau,
        sanitize(asset)
    ));
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("creating `{}`", path.display()))?;
    w.write_record(["omega", "re_beta", "im_beta"])?;
    for (omega, re, im) in rows {
        w.write_record([fmt(*omega), fmt(*re), fmt(*im)])?;
    }
    w.flush()?;
    Ok(path)
}

fn model_suffix(result: &PricingResult) -> String {
    match result.tau {
        Some(tau) => format!("{}_tau{}", result.model.to_ascii_lowercase(), tau),
        None => result.model.to_ascii_lowercase(),
    }
}

/// `lambda_{model}[_tau{tau}].csv`: one row per free price of risk in table
/// order, then the imposed CAPM price, then the RMSPE (x100 scale).
pub fn write_lambda_table(dir: &Path, result: &PricingResult) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("lambda_{}.csv", model_suffix(result)));
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("creating `{}`", path.display()))?;
    w.write_record(["name", "lambda", "tstat"])?;
    for ((name, lambda), tstat) in result
        .lambda_names
        .iter()
        .zip(&result.lambdas)
        .zip(&result.tstats)
    {
        w.write_record([name.clone(), fmt(*lambda), fmt(*tstat)])?;
    }
    w.write_record(["capm".into(), fmt(result.lambda_capm), String::new()])?;
    w.write_record(["rmspe".into(), fmt(result.rmspe), String::new()])?;
    w.flush()?;
    Ok(path)
}

/// `predicted_{model}[_tau{tau}].csv`: per-asset actual and fitted mean returns.
pub fn write_predicted(dir: &Path, result: &PricingResult) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("predicted_{}.csv", model_suffix(result)));
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("creating `{}`", path.display()))?;
    w.write_record(["asset", "actual", "predicted"])?;
    for ((asset, actual), predicted) in result
        .asset_ids
        .iter()
        .zip(&result.actual)
        .zip(&result.predicted)
    {
        w.write_record([asset.clone(), fmt(*actual), fmt(*predicted)])?;
    }
    w.flush()?;
    Ok(path)
}

/// `rmspe_curve_{model}.csv`: (tau, rmspe) rows; failed thresholds keep their
/// row with an empty rmspe cell and the reason in the error column.
pub fn write_curve(dir: &Path, model: &str, points: &[CurvePoint]) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("rmspe_curve_{}.csv", model.to_ascii_lowercase()));
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("creating `{}`", path.display()))?;
    w.write_record(["tau", "rmspe", "error"])?;
    for point in points {
        w.write_record([
            fmt(point.tau),
            point.rmspe.map(fmt).unwrap_or_default(),
            point.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `garch_params.csv` + `variance_path.csv` (date, sigma2, neg_increment;
/// the first row has no increment).
pub fn write_garch(
    dir: &Path,
    params: &GarchParams,
    path_series: &VariancePath,
) -> anyhow::Result<(PathBuf, PathBuf)> {
    let params_path = dir.join("garch_params.csv");
    let mut w = csv::Writer::from_path(&params_path)?;
    w.write_record(["omega", "alpha", "beta", "mu", "persistence"])?;
    w.write_record([
        fmt(params.omega),
        fmt(params.alpha),
        fmt(params.beta),
        fmt(params.mu),
        fmt(params.persistence()),
    ])?;
    w.flush()?;

    let path_path = dir.join("variance_path.csv");
    let mut w = csv::Writer::from_path(&path_path)?;
    w.write_record(["date", "sigma2", "neg_increment"])?;
    for (idx, (date, sigma2)) in path_series
        .dates
        .iter()
        .zip(&path_series.sigma2)
        .enumerate()
    {
        let increment = if idx == 0 {
            String::new()
        } else {
            fmt(path_series.neg_increments[idx - 1])
        };
        w.write_record([date.to_string(), fmt(*sigma2), increment])?;
    }
    w.flush()?;
    Ok((params_path, path_path))
}

/// `sim_pair.csv` in the panel layout (date + one column per series), so it
/// round-trips through the panel reader.
pub fn write_sim_pair(
    dir: &Path,
    left: &qspec::data::ReturnSeries,
    right: &qspec::data::ReturnSeries,
) -> anyhow::Result<PathBuf> {
    let path = dir.join("sim_pair.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["date", left.id.as_str(), right.id.as_str()])?;
    for ((date, a), b) in left.dates.iter().zip(&left.values).zip(&right.values) {
        w.write_record([date.to_string(), fmt(*a), fmt(*b)])?;
    }
    w.flush()?;
    Ok(path)
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 48.0;

fn svg_scale(min: f64, max: f64, value: f64) -> f64 {
    let span = (max - min).max(1e-12);
    SVG_MARGIN + (value - min) / span * (SVG_SIZE - 2.0 * SVG_MARGIN)
}

/// Predicted-versus-actual scatter with a 45-degree reference line.
pub fn write_scatter_svg(dir: &Path, result: &PricingResult) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("scatter_{}.svg", model_suffix(result)));
    let values: Vec<f64> = result
        .actual
        .iter()
        .chain(&result.predicted)
        .copied()
        .collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min) - 0.05;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.05;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" \
         viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">\n"
    ));
    svg.push_str(&format!(
        "<metadata>model={} rmspe={}</metadata>\n",
        result.model, result.rmspe
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" fill=\"white\"/>\n"
    ));
    // 45-degree line.
    let (x0, y0) = (svg_scale(min, max, min), SVG_SIZE - svg_scale(min, max, min));
    let (x1, y1) = (svg_scale(min, max, max), SVG_SIZE - svg_scale(min, max, max));
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" \
         stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n"
    ));
    for ((asset, actual), predicted) in result
        .asset_ids
        .iter()
        .zip(&result.actual)
        .zip(&result.predicted)
    {
        let cx = svg_scale(min, max, *predicted);
        let cy = SVG_SIZE - svg_scale(min, max, *actual);
        svg.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3.5\" fill=\"#1f77b4\">\
             <title>{asset}</title></circle>\n"
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">predicted (% per period)</text>\n",
        SVG_SIZE / 2.0 - 60.0,
        SVG_SIZE - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\">\
         actual (% per period)</text>\n",
        SVG_SIZE / 2.0 + 50.0,
        SVG_SIZE / 2.0 + 50.0
    ));
    svg.push_str("</svg>\n");
    std::fs::write(&path, svg)?;
    Ok(path)
}

/// RMSPE-versus-threshold curve; an optional user-supplied benchmark RMSPE is
/// drawn as a horizontal reference line and echoed into the SVG metadata.
pub fn write_curve_svg(
    dir: &Path,
    model: &str,
    points: &[CurvePoint],
    benchmark: Option<f64>,
) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("rmspe_curve_{}.svg", model.to_ascii_lowercase()));
    let good: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.rmspe.map(|r| (p.tau, r)))
        .collect();
    let tau_min = good.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let tau_max = good.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut r_min = good.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut r_max = good.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if let Some(b) = benchmark {
        r_min = r_min.min(b);
        r_max = r_max.max(b);
    }
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" \
         viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">\n"
    ));
    match benchmark {
        Some(b) => svg.push_str(&format!(
            "<metadata>model={model} benchmark_rmspe={b}</metadata>\n"
        )),
        None => svg.push_str(&format!("<metadata>model={model}</metadata>\n")),
    }
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" fill=\"white\"/>\n"
    ));
    if !good.is_empty() {
        let coords: Vec<String> = good
            .iter()
            .map(|(tau, rmspe)| {
                format!(
                    "{:.2},{:.2}",
                    svg_scale(tau_min, tau_max, *tau),
                    SVG_SIZE - svg_scale(r_min, r_max, *rmspe)
                )
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        if let Some(b) = benchmark {
            let y = SVG_SIZE - svg_scale(r_min, r_max, b);
            svg.push_str(&format!(
                "<line x1=\"{SVG_MARGIN}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#444\" stroke-dasharray=\"6 3\"/>\n",
                SVG_SIZE - SVG_MARGIN
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">tau</text>\n",
        SVG_SIZE / 2.0,
        SVG_SIZE - 12.0
    ));
    svg.push_str("</svg>\n");
    std::fs::write(&path, svg)?;
    Ok(path)
}
