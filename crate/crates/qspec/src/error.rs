//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by panel ingestion, estimation and pricing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed date `{text}` (expected {expected})")]
    MalformedDate { text: String, expected: &'static str },

    #[error("non-numeric cell `{text}` in column `{column}` at date {date}")]
    NonNumericCell {
        text: String,
        column: String,
        date: String,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("dates are not strictly increasing in series `{0}`")]
    UnsortedDates(String),

    #[error("series `{id}` has {len} observations, need at least {min}")]
    SeriesTooShort { id: String, len: usize, min: usize },

    #[error("market series has {len} periods, configured minimum is {min}")]
    MarketTooShort { len: usize, min: usize },

    #[error("empty intersection of calendars: {0}")]
    EmptyCalendar(String),

    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("optimizer failed: {0}")]
    OptimizerFailure(String),

    #[error("fitted GARCH parameters are non-stationary (alpha + beta = {persistence})")]
    NonStationaryFit { persistence: f64 },

    #[error("quantile level {0} outside (0, 1)")]
    InvalidQuantile(f64),

    #[error("correlation {0} outside [-1, 1]")]
    InvalidCorrelation(f64),

    #[error("bandwidth {0} outside (0, 0.5)")]
    InvalidBandwidth(f64),

    #[error("smoothing window holds {found} grid points, need at least {min}")]
    BandwidthTooSmall { found: usize, min: usize },

    #[error("invalid frequency band [{lower}, {upper}]: {reason}")]
    InvalidBand {
        lower: f64,
        upper: f64,
        reason: &'static str,
    },

    #[error("frequency band contains no Fourier frequencies")]
    EmptyBand,

    #[error("long band is empty: n = {n} too small for cutoff {cutoff}")]
    LongBandEmpty { n: usize, cutoff: f64 },

    #[error("indicator series is degenerate (all zero or all one)")]
    DegenerateHits,

    #[error("reference quantile auto-spectrum vanishes at frequency {omega}")]
    DegenerateSpectrum { omega: f64 },

    #[error("market return variance is zero")]
    ZeroMarketVariance,

    #[error("regressor matrix is rank deficient or collinear (condition number {cond:.3e})")]
    CollinearRegressors { cond: f64 },

    #[error("{assets} assets cannot identify {regressors} free prices of risk")]
    TooFewAssets { assets: usize, regressors: usize },

    #[error("invalid model specification: {0}")]
    InvalidModelSpec(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSimSpec(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("asset `{id}`: {source}")]
    Asset {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the asset id it was raised for.
    pub fn for_asset(id: &str, source: Error) -> Self {
        Error::Asset {
            id: id.to_string(),
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
