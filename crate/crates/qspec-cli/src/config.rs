//! Flat key-value run configuration: `key = value` lines, `#` comments.
//! Command-line flags override file values; defaults fill the rest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qspec::data::Frequency;
use qspec::pricing::ModelFamily;

/// Volatility source for the extreme-volatility reference series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VolSource {
    Garch,
    Realized,
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub panel: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub daily: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub freq: Frequency,
    pub taus: Vec<f64>,
    pub tau_grid: Option<(f64, f64, f64)>,
    pub cutoff: f64,
    pub vol: VolSource,
    pub models: Vec<ModelFamily>,
    pub bandwidth: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub min_history: Option<usize>,
    pub min_market_len: usize,
    pub missing_codes: Vec<f64>,
    pub svg: bool,
    pub benchmark_rmspe: Option<f64>,
    pub standardize: bool,
    pub shanken: bool,
    pub weighted_bands: bool,
    pub dump_frequencies: bool,
}

/// Raw option layer; `None` means "not set at this layer".
#[derive(Debug, Clone, Default)]
pub struct RawSettings {
    pub panel: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub daily: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub freq: Option<Frequency>,
    pub taus: Option<Vec<f64>>,
    pub tau_grid: Option<(f64, f64, f64)>,
    pub cutoff: Option<f64>,
    pub vol: Option<VolSource>,
    pub models: Option<Vec<ModelFamily>>,
    pub bandwidth: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub min_history: Option<usize>,
    pub min_market_len: Option<usize>,
    pub missing_codes: Option<Vec<f64>>,
    pub svg: Option<bool>,
    pub benchmark_rmspe: Option<f64>,
    pub standardize: Option<bool>,
    pub shanken: Option<bool>,
    pub weighted_bands: Option<bool>,
    pub dump_frequencies: Option<bool>,
}

impl RawSettings {
    /// Overlay `top` (higher precedence) onto `self`.
    pub fn overlay(mut self, top: RawSettings) -> RawSettings {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if top.$field.is_some() { self.$field = top.$field; })*
            };
        }
        take!(
            panel, market, daily, factors, freq, taus, tau_grid, cutoff, vol, models, bandwidth,
            out, seed, workers, min_history, min_market_len, missing_codes, svg, benchmark_rmspe,
            standardize, shanken, weighted_bands, dump_frequencies
        );
        self
    }

    /// Apply defaults and validate.
    pub fn resolve(self) -> anyhow::Result<RunSettings> {
        let freq = self.freq.unwrap_or(Frequency::Monthly);
        let cutoff = self.cutoff.unwrap_or(match freq {
            Frequency::Monthly => 18.0,
            Frequency::Daily => 378.0,
        });
        let taus = self.taus.unwrap_or_else(|| vec![0.05, 0.10]);
        if taus.is_empty() {
            bail!("tau list is empty");
        }
        for &tau in &taus {
            if !(tau > 0.0 && tau <= 0.5) {
                bail!("tau {tau} outside (0, 0.5]");
            }
        }
        if let Some((lo, hi, step)) = self.tau_grid {
            if !(lo > 0.0 && hi <= 0.5 && lo <= hi && step > 0.0) {
                bail!("tau grid {lo}:{hi}:{step} outside (0, 0.5]");
            }
        }
        if !(cutoff > 2.0) {
            bail!("cutoff {cutoff} must exceed 2 periods per cycle");
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0 && b < 0.5) {
                bail!("bandwidth {b} outside (0, 0.5)");
            }
        }
        let settings = RunSettings {
            panel: self.panel,
            market: self.market,
            daily: self.daily,
            factors: self.factors,
            freq,
            taus,
            tau_grid: self.tau_grid,
            cutoff,
            vol: self.vol.unwrap_or(VolSource::Garch),
            models: self.models.unwrap_or_else(|| {
                vec![ModelFamily::Capm, ModelFamily::Simple3, ModelFamily::Full5]
            }),
            bandwidth: self.bandwidth,
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            seed: self.seed.unwrap_or(42),
            workers: self.workers,
            min_history: self.min_history,
            min_market_len: self.min_market_len.unwrap_or(360),
            missing_codes: self.missing_codes.unwrap_or_else(|| vec![-99.99, -999.0]),
            svg: self.svg.unwrap_or(false),
            benchmark_rmspe: self.benchmark_rmspe,
            standardize: self.standardize.unwrap_or(false),
            shanken: self.shanken.unwrap_or(false),
            weighted_bands: self.weighted_bands.unwrap_or(false),
            dump_frequencies: self.dump_frequencies.unwrap_or(false),
        };
        for (label, path) in [
            ("panel", &settings.panel),
            ("market", &settings.market),
            ("daily", &settings.daily),
            ("factors", &settings.factors),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    bail!("{label} file `{}` does not exist", p.display());
                }
            }
        }
        Ok(settings)
    }
}

pub fn parse_tau_grid(text: &str) -> anyhow::Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("tau grid `{text}` must be lo:hi:step");
    }
    let lo: f64 = parts[0].trim().parse().context("tau grid lo")?;
    let hi: f64 = parts[1].trim().parse().context("tau grid hi")?;
    let step: f64 = parts[2].trim().parse().context("tau grid step")?;
    Ok((lo, hi, step))
}

fn parse_bool(value: &str) -> anyhow::Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => bail!("expected a boolean, got `{other}`"),
    }
}

fn parse_list<T, F>(value: &str, parse: F) -> anyhow::Result<Vec<T>>
where
    F: Fn(&str) -> anyhow::Result<T>,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

/// Parse a config file. Errors carry `file:line` context.
pub fn load_config(path: &Path) -> anyhow::Result<RawSettings> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading config `{}`", path.display()))?;
    let mut raw = RawSettings::default();
    let mut seen = BTreeMap::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        let at = |msg: String| anyhow::anyhow!("{}:{lineno}: {msg}", path.display());
        let stripped = line.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(at(format!("expected `key = value`, got `{stripped}`")));
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        if let Some(previous) = seen.insert(key.clone(), lineno) {
            return Err(at(format!(
                "key `{key}` already set on line {previous}"
            )));
        }
        let result: anyhow::Result<()> = (|| {
            match key.as_str() {
                "panel" => raw.panel = Some(PathBuf::from(value)),
                "market" => raw.market = Some(PathBuf::from(value)),
                "daily" => raw.daily = Some(PathBuf::from(value)),
                "factors" => raw.factors = Some(PathBuf::from(value)),
                "freq" => {
                    raw.freq = Some(match value.to_ascii_lowercase().as_str() {
                        "monthly" => Frequency::Monthly,
                        "daily" => Frequency::Daily,
                        other => bail!("unknown frequency `{other}`"),
                    })
                }
                "tau" => raw.taus = Some(parse_list(value, |s| Ok(s.parse::<f64>()?))?),
                "tau_grid" => raw.tau_grid = Some(parse_tau_grid(value)?),
                "cutoff" => raw.cutoff = Some(value.parse()?),
                "vol" => {
                    raw.vol = Some(match value.to_ascii_lowercase().as_str() {
                        "garch" => VolSource::Garch,
                        "realized" => VolSource::Realized,
                        other => bail!("unknown volatility source `{other}`"),
                    })
                }
                "models" => {
                    raw.models = Some(parse_list(value, |s| {
                        s.parse::<ModelFamily>().map_err(Into::into)
                    })?)
                }
                "bandwidth" => raw.bandwidth = Some(value.parse()?),
                "out" => raw.out = Some(PathBuf::from(value)),
                "seed" => raw.seed = Some(value.parse()?),
                "workers" => raw.workers = Some(value.parse()?),
                "min_history" => raw.min_history = Some(value.parse()?),
                "min_market_len" => raw.min_market_len = Some(value.parse()?),
                "missing_codes" => {
                    raw.missing_codes = Some(parse_list(value, |s| Ok(s.parse::<f64>()?))?)
                }
                "svg" => raw.svg = Some(parse_bool(value)?),
                "benchmark_rmspe" => raw.benchmark_rmspe = Some(value.parse()?),
                "standardize" => raw.standardize = Some(parse_bool(value)?),
                "shanken" => raw.shanken = Some(parse_bool(value)?),
                "weighted_bands" => raw.weighted_bands = Some(parse_bool(value)?),
                "dump_frequencies" => raw.dump_frequencies = Some(parse_bool(value)?),
                other => bail!("unknown key `{other}`"),
            }
            Ok(())
        })();
        result.map_err(|e| at(e.to_string()))?;
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn config_parses_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# a comment").unwrap();
        writeln!(f, "tau = 0.05, 0.25").unwrap();
        writeln!(f, "cutoff = 24").unwrap();
        writeln!(f, "models = capm, full5").unwrap();
        writeln!(f, "svg = true").unwrap();
        let file = load_config(&path).unwrap();
        let flags = RawSettings {
            cutoff: Some(12.0),
            ..RawSettings::default()
        };
        let merged = file.overlay(flags).resolve().unwrap();
        assert_eq!(merged.taus, vec![0.05, 0.25]);
        assert_eq!(merged.cutoff, 12.0);
        assert!(merged.svg);
        assert_eq!(merged.models.len(), 2);
    }

    #[test]
    fn config_errors_carry_line_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "tau = 0.05\nbogus = 1\n").unwrap();
        let err = load_config(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn validation_rejects_bad_tau() {
        let raw = RawSettings {
            taus: Some(vec![0.7]),
            ..RawSettings::default()
        };
        assert!(raw.resolve().is_err());
        let empty = RawSettings {
            taus: Some(vec![]),
            ..RawSettings::default()
        };
        assert!(empty.resolve().is_err());
    }
}
