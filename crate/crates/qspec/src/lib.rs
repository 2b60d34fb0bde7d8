//! Quantile-spectral market risk: tail- and frequency-specific betas from
//! rank-based copula cross-periodograms, and restricted two-stage
//! cross-sectional regressions pricing tail market risk and extreme
//! volatility risk.
//!
//! The pipeline:
//!
//! 1. [`data`] ingests return panels (percent units), builds excess returns
//!    and aligns everything on the market calendar.
//! 2. [`volatility`] produces the market variance path — GARCH(1,1) QMLE or
//!    realized variance — whose negated increments are the reference series
//!    for extreme-volatility risk.
//! 3. [`spectral`] turns a (reference, asset) pair into quantile indicator
//!    series, smooths their copula cross-periodogram and averages the
//!    per-frequency beta ratio over long/short frequency bands; the
//!    Gaussian-copula baseline converts band betas into relative betas.
//! 4. [`pricing`] regresses mean excess returns on the first-stage betas with
//!    the market price of risk pinned at the sample mean market excess
//!    return, reporting prices of risk, t-statistics and RMSPE.
//! 5. [`sim`] provides seeded generators and brute-force reference
//!    computations used to validate the estimation paths.

pub mod bvn;
pub mod data;
pub mod error;
pub mod pricing;
pub mod sim;
pub mod spectral;
pub mod volatility;

pub use error::{Error, Result};
