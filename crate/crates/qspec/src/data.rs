//! Return-panel ingestion: CSV parsing, missing-value handling, excess-return
//! construction, daily-to-monthly aggregation and calendar alignment.
//!
//! Input conventions follow the Kenneth French data library: a panel file has
//! the date in the first column (`YYYYMM` monthly, `YYYYMMDD` daily) and one
//! named asset column per portfolio, values in percent per period. The market
//! file carries `date, mkt, rf`. Missing observations are encoded by sentinel
//! codes (default `-99.99` and `-999`).

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Sampling frequency of a series or panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Daily,
}

impl Frequency {
    fn date_format(self) -> &'static str {
        match self {
            Frequency::Monthly => "YYYYMM",
            Frequency::Daily => "YYYYMMDD",
        }
    }
}

/// A period label: `YYYYMM` for monthly data, `YYYYMMDD` for daily data.
///
/// Stored as the raw integer; ordering of the integers is calendar ordering
/// within one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period(pub u32);

impl Period {
    /// Parse and validate a date token for the given frequency.
    pub fn parse(text: &str, frequency: Frequency) -> Result<Period> {
        let trimmed = text.trim();
        let malformed = || Error::MalformedDate {
            text: trimmed.to_string(),
            expected: frequency.date_format(),
        };
        let value: u32 = trimmed.parse().map_err(|_| malformed())?;
        // Years with more than four digits are accepted (long synthetic
        // calendars), hence the lower bounds on the token length.
        match frequency {
            Frequency::Monthly => {
                let month = value % 100;
                let year = value / 100;
                if !(1..=12).contains(&month) || year == 0 || trimmed.len() < 6 {
                    return Err(malformed());
                }
            }
            Frequency::Daily => {
                let day = value % 100;
                let month = (value / 100) % 100;
                let year = value / 10_000;
                if !(1..=31).contains(&day)
                    || !(1..=12).contains(&month)
                    || year == 0
                    || trimmed.len() < 8
                {
                    return Err(malformed());
                }
            }
        }
        Ok(Period(value))
    }

    /// The month (`YYYYMM`) a daily period belongs to. Identity for monthly labels.
    pub fn month(self) -> Period {
        if self.0 >= 1_000_000 {
            Period(self.0 / 100)
        } else {
            self
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One asset's (or the market's) return series in percent per period.
///
/// Dates are strictly increasing and missing periods are simply absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub id: String,
    pub dates: Vec<Period>,
    pub values: Vec<f64>,
    pub frequency: Frequency,
}

impl ReturnSeries {
    pub fn new(
        id: impl Into<String>,
        dates: Vec<Period>,
        values: Vec<f64>,
        frequency: Frequency,
    ) -> Result<Self> {
        let id = id.into();
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedDates(id));
        }
        Ok(ReturnSeries {
            id,
            dates,
            values,
            frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Values of `self` and `other` on their common dates, in date order.
    ///
    /// Both input series are date-sorted, so a linear merge suffices.
    pub fn aligned_values(&self, other: &ReturnSeries) -> (Vec<f64>, Vec<f64>) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.dates.len() && j < other.dates.len() {
            match self.dates[i].cmp(&other.dates[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    left.push(self.values[i]);
                    right.push(other.values[j]);
                    i += 1;
                    j += 1;
                }
            }
        }
        (left, right)
    }

    /// Restrict the series to dates contained in `calendar` (must be sorted).
    pub fn restrict_to(&self, calendar: &[Period]) -> ReturnSeries {
        let set: BTreeSet<Period> = calendar.iter().copied().collect();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (d, v) in self.dates.iter().zip(&self.values) {
            if set.contains(d) {
                dates.push(*d);
                values.push(*v);
            }
        }
        ReturnSeries {
            id: self.id.clone(),
            dates,
            values,
            frequency: self.frequency,
        }
    }
}

/// Aligned panel of excess returns: cross-section of assets plus the market
/// and the raw risk-free series that defined the excess transformation.
///
/// The market (and risk-free) dates form the panel calendar; every asset's
/// dates are a subset of it (an asset missing at a date is absent only for
/// that asset).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub assets: Vec<ReturnSeries>,
    pub market: ReturnSeries,
    pub riskfree: ReturnSeries,
}

impl ReturnPanel {
    /// Panel calendar = market dates.
    pub fn calendar(&self) -> &[Period] {
        &self.market.dates
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Check the structural invariants (market/riskfree share one calendar,
    /// every asset is dated within it).
    pub fn validate(&self) -> Result<()> {
        if self.market.dates != self.riskfree.dates {
            return Err(Error::EmptyCalendar(
                "market and risk-free calendars differ".into(),
            ));
        }
        let cal: BTreeSet<Period> = self.market.dates.iter().copied().collect();
        for asset in &self.assets {
            if !asset.dates.iter().all(|d| cal.contains(d)) {
                return Err(Error::EmptyCalendar(format!(
                    "asset `{}` has dates outside the market calendar",
                    asset.id
                )));
            }
        }
        Ok(())
    }
}

/// Options for [`load_panel`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub frequency: Frequency,
    /// Sentinel codes marking a missing observation (matched exactly after parsing).
    pub missing_codes: Vec<f64>,
    /// Minimum accepted market-series length after alignment.
    pub min_market_len: usize,
    /// When true, panel and market cells are already excess returns and the
    /// risk-free column is carried through without being subtracted. Used by
    /// the panel writer so that write-then-load round-trips bit-exactly.
    pub values_are_excess: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            frequency: Frequency::Monthly,
            missing_codes: vec![-99.99, -999.0],
            min_market_len: 360,
            values_are_excess: false,
        }
    }
}

impl LoadOptions {
    pub fn new(frequency: Frequency) -> Self {
        LoadOptions {
            frequency,
            ..LoadOptions::default()
        }
    }
}

/// A raw CSV table: date column plus one named value column per series,
/// missing cells already dropped.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub columns: Vec<ReturnSeries>,
}

impl CsvTable {
    /// Case-insensitive column lookup (header names are trimmed on read).
    pub fn column(&self, name: &str) -> Option<&ReturnSeries> {
        let want = normalize_header(name);
        self.columns
            .iter()
            .find(|c| normalize_header(&c.id) == want)
    }
}

fn normalize_header(name: &str) -> String {
    name.trim().to_ascii_lowercase()
}

/// Read a date-keyed CSV into per-column series, dropping missing-coded cells.
pub fn read_csv_table(
    path: &Path,
    frequency: Frequency,
    missing_codes: &[f64],
) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::MissingColumn("at least one value column".into()));
    }
    let n_cols = headers.len() - 1;
    let mut dates: Vec<Vec<Period>> = vec![Vec::new(); n_cols];
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_cols];

    for record in reader.records() {
        let record = record?;
        let date = Period::parse(&record[0], frequency)?;
        for col in 0..n_cols {
            let cell = record[col + 1].trim();
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                text: cell.to_string(),
                column: headers[col + 1].clone(),
                date: date.to_string(),
            })?;
            if missing_codes.iter().any(|&code| code == value) {
                continue;
            }
            dates[col].push(date);
            values[col].push(value);
        }
    }

    let mut columns = Vec::with_capacity(n_cols);
    for (idx, (d, v)) in dates.into_iter().zip(values).enumerate() {
        columns.push(ReturnSeries::new(headers[idx + 1].clone(), d, v, frequency)?);
    }
    Ok(CsvTable { columns })
}

/// Load a return panel from a portfolio CSV and a `date, mkt, rf` market CSV,
/// construct excess returns, and align everything on the market calendar.
///
/// Rows where the market or the risk-free rate is missing are dropped
/// panel-wide; an asset missing at a date is dropped only for that asset.
pub fn load_panel(
    portfolio_csv: &Path,
    market_csv: &Path,
    options: &LoadOptions,
) -> Result<ReturnPanel> {
    let panel_table = read_csv_table(portfolio_csv, options.frequency, &options.missing_codes)?;
    let market_table = read_csv_table(market_csv, options.frequency, &options.missing_codes)?;

    let market_raw = market_table
        .column("mkt")
        .ok_or_else(|| Error::MissingColumn("mkt".into()))?;
    let riskfree_raw = market_table
        .column("rf")
        .ok_or_else(|| Error::MissingColumn("rf".into()))?;

    // The common clock: dates where both market and risk-free are present.
    let (mkt_vals, rf_vals) = market_raw.aligned_values(riskfree_raw);
    let rf_dates: BTreeSet<Period> = riskfree_raw.dates.iter().copied().collect();
    let calendar: Vec<Period> = market_raw
        .dates
        .iter()
        .copied()
        .filter(|d| rf_dates.contains(d))
        .collect();
    if calendar.is_empty() {
        return Err(Error::EmptyCalendar(
            "market and risk-free series share no dates".into(),
        ));
    }
    if calendar.len() < options.min_market_len {
        return Err(Error::MarketTooShort {
            len: calendar.len(),
            min: options.min_market_len,
        });
    }

    let market_excess: Vec<f64> = if options.values_are_excess {
        mkt_vals
    } else {
        mkt_vals
            .iter()
            .zip(&rf_vals)
            .map(|(m, rf)| m - rf)
            .collect()
    };
    let market = ReturnSeries::new("mkt", calendar.clone(), market_excess, options.frequency)?;
    let riskfree = ReturnSeries::new("rf", calendar.clone(), rf_vals, options.frequency)?;

    let mut assets = Vec::with_capacity(panel_table.columns.len());
    let mut any_overlap = false;
    for raw in panel_table.columns {
        let (asset_vals, asset_rf) = raw.aligned_values(&riskfree);
        let cal_set: BTreeSet<Period> = calendar.iter().copied().collect();
        let dates: Vec<Period> = raw
            .dates
            .iter()
            .copied()
            .filter(|d| cal_set.contains(d))
            .collect();
        let excess: Vec<f64> = if options.values_are_excess {
            asset_vals
        } else {
            asset_vals
                .iter()
                .zip(&asset_rf)
                .map(|(r, rf)| r - rf)
                .collect()
        };
        any_overlap |= !dates.is_empty();
        assets.push(ReturnSeries::new(raw.id, dates, excess, options.frequency)?);
    }
    if !assets.is_empty() && !any_overlap {
        return Err(Error::EmptyCalendar(
            "no asset shares any date with the market calendar".into(),
        ));
    }

    let panel = ReturnPanel {
        assets,
        market,
        riskfree,
    };
    panel.validate()?;
    Ok(panel)
}

/// Drop assets with fewer than `min_periods` observations (boundary inclusive).
pub fn filter_min_history(panel: ReturnPanel, min_periods: usize) -> ReturnPanel {
    let assets = panel
        .assets
        .into_iter()
        .filter(|a| a.len() >= min_periods)
        .collect();
    ReturnPanel { assets, ..panel }
}

/// Compound a daily series into monthly returns (percent):
/// `100 * (prod_d (1 + r_d/100) - 1)` over the days of each month.
/// Months without any observation are simply absent from the output.
pub fn aggregate_daily_to_monthly(series: &ReturnSeries) -> Result<ReturnSeries> {
    if series.frequency != Frequency::Daily {
        return Err(Error::DegenerateSeries(format!(
            "series `{}` is not daily",
            series.id
        )));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut current: Option<(Period, f64)> = None;
    for (d, r) in series.dates.iter().zip(&series.values) {
        let month = d.month();
        match current {
            Some((m, gross)) if m == month => current = Some((m, gross * (1.0 + r / 100.0))),
            Some((m, gross)) => {
                dates.push(m);
                values.push((gross - 1.0) * 100.0);
                current = Some((month, 1.0 + r / 100.0));
                debug_assert!(m < month);
            }
            None => current = Some((month, 1.0 + r / 100.0)),
        }
    }
    if let Some((m, gross)) = current {
        dates.push(m);
        values.push((gross - 1.0) * 100.0);
    }
    ReturnSeries::new(series.id.clone(), dates, values, Frequency::Monthly)
}

/// Write a panel back to the two-file CSV layout.
///
/// Cells are written as excess returns (shortest exact float representation)
/// with absent observations encoded by `missing_code`; the market file stores
/// the excess market and the raw risk-free rate. Reload with
/// `LoadOptions { values_are_excess: true, .. }` reproduces the panel exactly.
pub fn write_panel(
    panel: &ReturnPanel,
    portfolio_csv: &Path,
    market_csv: &Path,
    missing_code: f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(portfolio_csv)?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.assets.iter().map(|a| a.id.clone()));
    w.write_record(&header)?;

    // Per-asset cursors over their (sparse) date vectors.
    let mut cursors = vec![0usize; panel.assets.len()];
    for &date in panel.calendar() {
        let mut row = vec![date.to_string()];
        for (asset, cursor) in panel.assets.iter().zip(cursors.iter_mut()) {
            if *cursor < asset.dates.len() && asset.dates[*cursor] == date {
                row.push(format!("{}", asset.values[*cursor]));
                *cursor += 1;
            } else {
                row.push(format!("{missing_code}"));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(market_csv)?;
    w.write_record(["date", "mkt", "rf"])?;
    for ((date, mkt), rf) in panel
        .market
        .dates
        .iter()
        .zip(&panel.market.values)
        .zip(&panel.riskfree.values)
    {
        w.write_record(&[date.to_string(), format!("{mkt}"), format!("{rf}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn small_options() -> LoadOptions {
        LoadOptions {
            min_market_len: 1,
            ..LoadOptions::default()
        }
    }

    #[test]
    fn excess_return_subtraction() {
        let dir = tempfile::tempdir().unwrap();
        let panel = write_file(&dir, "panel.csv", "date,ind\n192607,2.50\n");
        let market = write_file(&dir, "market.csv", "date,mkt,rf\n192607,1.50,0.22\n");
        let p = load_panel(&panel, &market, &small_options()).unwrap();
        assert_eq!(p.assets[0].values, vec![2.50 - 0.22]);
        assert_eq!(p.market.values, vec![1.50 - 0.22]);
        assert_eq!(p.riskfree.values, vec![0.22]);
    }

    #[test]
    fn missing_codes_drop_cells_per_asset() {
        let dir = tempfile::tempdir().unwrap();
        let panel = write_file(
            &dir,
            "panel.csv",
            "date,a,b\n192607,-99.99,1.00\n192608,2.00,-999\n192609,3.00,3.50\n",
        );
        let market = write_file(
            &dir,
            "market.csv",
            "date,mkt,rf\n192607,1.0,0.0\n192608,1.0,0.0\n192609,1.0,0.0\n",
        );
        let p = load_panel(&panel, &market, &small_options()).unwrap();
        let a = &p.assets[0];
        let b = &p.assets[1];
        assert_eq!(a.dates, vec![Period(192608), Period(192609)]);
        assert_eq!(b.dates, vec![Period(192607), Period(192609)]);
        assert_eq!(p.calendar().len(), 3);
    }

    #[test]
    fn market_missing_drops_row_panel_wide() {
        let dir = tempfile::tempdir().unwrap();
        let panel = write_file(&dir, "panel.csv", "date,a\n192607,1.0\n192608,2.0\n");
        let market = write_file(
            &dir,
            "market.csv",
            "date,mkt,rf\n192607,-99.99,0.1\n192608,1.0,0.1\n",
        );
        let p = load_panel(&panel, &market, &small_options()).unwrap();
        assert_eq!(p.calendar(), &[Period(192608)]);
        assert_eq!(p.assets[0].dates, vec![Period(192608)]);
    }

    #[test]
    fn malformed_date_rejected() {
        assert!(Period::parse("1926x7", Frequency::Monthly).is_err());
        assert!(Period::parse("192613", Frequency::Monthly).is_err());
        assert!(Period::parse("19260732", Frequency::Daily).is_err());
        assert!(Period::parse("192607", Frequency::Daily).is_err());
        assert!(Period::parse("19260701", Frequency::Daily).is_ok());
    }

    #[test]
    fn non_numeric_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let panel = write_file(&dir, "panel.csv", "date,a\n192607,oops\n");
        let market = write_file(&dir, "market.csv", "date,mkt,rf\n192607,1.0,0.1\n");
        let err = load_panel(&panel, &market, &small_options()).unwrap_err();
        assert!(matches!(err, Error::NonNumericCell { .. }));
    }

    #[test]
    fn empty_calendar_intersection_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let panel = write_file(&dir, "panel.csv", "date,a\n192607,1.0\n");
        let market = write_file(&dir, "market.csv", "date,mkt,rf\n195001,1.0,0.1\n");
        let err = load_panel(&panel, &market, &small_options()).unwrap_err();
        assert!(matches!(err, Error::EmptyCalendar(_)));
    }

    #[test]
    fn min_history_boundary_inclusive() {
        let make = |len: usize, id: &str| {
            let dates: Vec<Period> = (0..len).map(|i| Period(190001 + i as u32)).collect();
            ReturnSeries::new(id, dates, vec![0.0; len], Frequency::Monthly).unwrap()
        };
        let calendar_len = 5;
        let panel = ReturnPanel {
            assets: vec![make(3, "short"), make(4, "exact"), make(5, "long")],
            market: make(calendar_len, "mkt"),
            riskfree: make(calendar_len, "rf"),
        };
        let kept = filter_min_history(panel.clone(), 4);
        assert_eq!(
            kept.assets.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
            vec!["exact", "long"]
        );
        let unchanged = filter_min_history(panel, 1);
        assert_eq!(unchanged.assets.len(), 3);
    }

    #[test]
    fn daily_to_monthly_compounding() {
        let s = ReturnSeries::new(
            "a",
            vec![Period(19260701), Period(19260702), Period(19260801)],
            vec![1.0, 1.0, 0.0],
            Frequency::Daily,
        )
        .unwrap();
        let m = aggregate_daily_to_monthly(&s).unwrap();
        assert_eq!(m.dates, vec![Period(192607), Period(192608)]);
        assert!((m.values[0] - 2.01).abs() < 1e-12);
        assert_eq!(m.values[1], 0.0);
    }

    #[test]
    fn daily_to_monthly_matches_product_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dates: Vec<Period> = (1..=21).map(|d| Period(19260700 + d)).collect();
        let values: Vec<f64> = (0..21).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s = ReturnSeries::new("a", dates, values.clone(), Frequency::Daily).unwrap();
        let m = aggregate_daily_to_monthly(&s).unwrap();
        let oracle = (values.iter().map(|r| 1.0 + r / 100.0).product::<f64>() - 1.0) * 100.0;
        assert!((m.values[0] - oracle).abs() < 1e-10);
    }

    #[test]
    fn write_then_load_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let panel = write_file(
            &dir,
            "panel.csv",
            "date,a,b\n192607,2.50,-99.99\n192608,-1.25,0.375\n192609,0.10,4.2\n",
        );
        let market = write_file(
            &dir,
            "market.csv",
            "date,mkt,rf\n192607,1.50,0.22\n192608,-0.40,0.21\n192609,0.90,0.20\n",
        );
        let p1 = load_panel(&panel, &market, &small_options()).unwrap();

        let out_panel = dir.path().join("panel_out.csv");
        let out_market = dir.path().join("market_out.csv");
        write_panel(&p1, &out_panel, &out_market, -99.99).unwrap();
        let p2 = load_panel(
            &out_panel,
            &out_market,
            &LoadOptions {
                values_are_excess: true,
                min_market_len: 1,
                ..LoadOptions::default()
            },
        )
        .unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn alignment_idempotent_and_excess_identity() {
        let dir = tempfile::tempdir().unwrap();
        let panel_path = write_file(
            &dir,
            "panel.csv",
            "date,a\n192607,2.50\n192608,1.00\n192609,-0.50\n",
        );
        let market_path = write_file(
            &dir,
            "market.csv",
            "date,mkt,rf\n192607,1.50,0.22\n192608,0.80,0.20\n192609,1.10,0.18\n",
        );
        let opts = small_options();
        let p = load_panel(&panel_path, &market_path, &opts).unwrap();

        // Excess identity: raw - rf equals the stored excess cell for cell.
        let raw = read_csv_table(&panel_path, Frequency::Monthly, &opts.missing_codes).unwrap();
        let a_raw = raw.column("a").unwrap();
        for (i, d) in p.assets[0].dates.iter().enumerate() {
            let j = a_raw.dates.iter().position(|x| x == d).unwrap();
            let k = p.riskfree.dates.iter().position(|x| x == d).unwrap();
            assert_eq!(p.assets[0].values[i], a_raw.values[j] - p.riskfree.values[k]);
        }

        // Idempotence: restricting everything to the calendar changes nothing.
        let again = ReturnPanel {
            assets: p.assets.iter().map(|a| a.restrict_to(p.calendar())).collect(),
            market: p.market.restrict_to(p.calendar()),
            riskfree: p.riskfree.restrict_to(p.calendar()),
        };
        assert_eq!(p, again);
    }
}
