//! Acceptance suite: one test per criterion, each printing a PASS/SKIP line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 7 and 8 are data-dependent: they need the Kenneth French
//! 30-industry monthly files prepared as described in the README and located
//! via `QSPEC_FF_DATA_DIR` (or `<workspace>/data`). Without the files they
//! report SKIP; everything else runs self-contained.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use qspec::data::{load_panel, read_csv_table, Frequency, LoadOptions};
use qspec::pricing::{
    fit_cross_section, run_model, CrossSectionInput, CrossSectionOptions, ModelContext,
    ModelFamily, PricingModelSpec,
};
use qspec::sim::{bvn_rectangle, simulate, SimKind, SimSpec};
use qspec::spectral::{
    band_split, ccr_periodogram, default_bandwidth, frechet_bounds, gaussian_beta,
    make_indicators, qs_beta_band, simple_quantile_beta, smooth_spectrum, FrequencyBand,
    IndicatorPair,
};
use qspec::volatility::{fit_garch11, GarchParams};

// Independent O(n^2) DFT oracle: angle reduced in exact integer arithmetic
// before the trig call, so the oracle itself is accurate to machine precision.
fn direct_ccr_oracle(pair: &IndicatorPair) -> Vec<Complex64> {
    let n = pair.len();
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let mut d_asset = Complex64::new(0.0, 0.0);
        let mut d_ref = Complex64::new(0.0, 0.0);
        for t in 0..n {
            let angle = -2.0 * PI * ((s * t) % n) as f64 / n as f64;
            let e = Complex64::new(angle.cos(), angle.sin());
            d_asset += pair.asset_hits[t] as f64 * e;
            d_ref += pair.reference_hits[t] as f64 * e;
        }
        out.push(d_asset * d_ref.conj() / (2.0 * PI * n as f64));
    }
    out
}

#[test]
fn acceptance_criterion_01_fft_equals_direct_dft_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..100 {
        let n = rng.gen_range(16..=512);
        let tau = rng.gen_range(0.05..0.5);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let other: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pair = make_indicators(&values, &other, tau).unwrap();
        let fft = ccr_periodogram(&pair).unwrap();
        let oracle = direct_ccr_oracle(&pair);
        let scale = oracle.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for s in 0..n {
            let err = (fft.cross[s] - oracle[s]).norm();
            assert!(
                err <= 1e-10 * scale,
                "trial {trial}, n {n}, s {s}: |err| = {err:.3e} vs scale {scale:.3e}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "runtime {elapsed:?} exceeds 10 s"
    );
    println!(
        "ACCEPTANCE criterion 1 PASS: FFT periodogram matches direct DFT oracle \
         (100 series, n <= 512, 1e-10 relative, {elapsed:?})"
    );
}

#[test]
fn acceptance_criterion_02_gaussian_closed_forms() {
    // Independence is exact, not approximate.
    for tau in [0.01, 0.05, 0.10, 0.25, 0.49] {
        for tau_i in [0.02, 0.05, 0.30, 0.70] {
            assert_eq!(gaussian_beta(0.0, tau, tau_i).unwrap(), 0.0);
        }
    }
    // At the distribution origin (tau = tau_i = 1/2 maps to h = k = 0) the
    // rectangle probability has the closed form 1/4 + asin(rho)/(2 pi).
    let rho = 0.5_f64;
    let copula_oracle = 0.25 + rho.asin() / (2.0 * PI);
    let quadrature = bvn_rectangle(0.0, 0.0, rho);
    assert!((quadrature - copula_oracle).abs() < 1e-8);
    let beta = gaussian_beta(rho, 0.5, 0.5).unwrap();
    let beta_oracle = (copula_oracle - 0.25) / 0.25;
    assert!(
        (beta - beta_oracle).abs() < 1e-6,
        "{beta} vs {beta_oracle}"
    );
    println!(
        "ACCEPTANCE criterion 2 PASS: gaussian_beta(0, tau, tau_i) = 0 exactly; \
         origin value consistent with 1/4 + asin(rho)/(2 pi) to 1e-6"
    );
}

#[test]
fn acceptance_criterion_03_gaussian_flatness_and_consistency() {
    let started = Instant::now();
    let n = 16_384;
    let tau = 0.05;
    let rho = 0.5;
    let (reference, asset) = simulate(&SimSpec {
        kind: SimKind::GaussianWn { rho },
        n,
        seed: 303,
    })
    .unwrap();
    let pair = make_indicators(&reference.values, &asset.values, tau).unwrap();
    let periodogram = ccr_periodogram(&pair).unwrap();
    let spectrum = smooth_spectrum(&periodogram, default_bandwidth(n)).unwrap();

    let full = qs_beta_band(&spectrum, &FrequencyBand::full()).unwrap();
    let closed_form = gaussian_beta(rho, tau, pair.tau_i).unwrap();
    assert!(
        (full - closed_form).abs() <= 0.05,
        "full-band beta {full} vs closed form {closed_form}"
    );

    let mut sub_betas = Vec::new();
    for b in 0..10 {
        let band = FrequencyBand::new(b as f64 * PI / 10.0, (b + 1) as f64 * PI / 10.0).unwrap();
        sub_betas.push(qs_beta_band(&spectrum, &band).unwrap());
    }
    let min = sub_betas.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sub_betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        max - min < 0.1,
        "sub-band beta range {} (betas {sub_betas:?})",
        max - min
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "runtime {elapsed:?} exceeds 60 s"
    );
    println!(
        "ACCEPTANCE criterion 3 PASS: full-band beta {full:.4} within 0.05 of Gaussian closed \
         form {closed_form:.4}; 10-sub-band range {:.4} < 0.1 ({elapsed:?})",
        max - min
    );
}

#[test]
fn acceptance_criterion_04_frechet_bounds() {
    let tau = 0.05;
    let mut worst_slack: f64 = f64::INFINITY;
    for i in 0..50 {
        let rho = -0.9 + 1.8 * i as f64 / 49.0;
        let (reference, asset) = simulate(&SimSpec {
            kind: SimKind::GaussianWn { rho },
            n: 16_384,
            seed: 400 + i as u64,
        })
        .unwrap();
        let pair = make_indicators(&reference.values, &asset.values, tau).unwrap();
        let periodogram = ccr_periodogram(&pair).unwrap();
        let spectrum = smooth_spectrum(&periodogram, default_bandwidth(16_384)).unwrap();
        let beta = qs_beta_band(&spectrum, &FrequencyBand::full()).unwrap();
        let (lower, upper) = frechet_bounds(tau, pair.tau_i);
        assert!(
            beta >= lower - 0.05 && beta <= upper + 0.05,
            "rho {rho}: beta {beta} outside [{lower}, {upper}] +- 0.05"
        );
        worst_slack = worst_slack.min((beta - (lower - 0.05)).min(upper + 0.05 - beta));
    }
    println!(
        "ACCEPTANCE criterion 4 PASS: 50 i.i.d. pairs spanning rho in [-0.9, 0.9] stay inside \
         the Fréchet/Hoeffding limits +- 0.05 (worst slack {worst_slack:.4})"
    );
}

#[test]
fn acceptance_criterion_05_restricted_cross_section_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    // Zero-noise synthetic panels: exact recovery and zero RMSPE.
    for _ in 0..100 {
        let n = rng.gen_range(10..60);
        let k = rng.gen_range(1..5.min(n - 1));
        let truth: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mean_market = rng.gen_range(0.2..1.0);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let capm: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let means: Vec<f64> = (0..n)
            .map(|i| {
                capm[i] * mean_market
                    + (0..k).map(|j| cols[j][i] * truth[j]).sum::<f64>()
            })
            .collect();
        let input = CrossSectionInput {
            asset_ids: (0..n).map(|i| format!("a{i}")).collect(),
            regressor_names: (0..k).map(|j| format!("x{j}")).collect(),
            regressors: cols,
            capm_betas: capm,
            mean_returns: means,
            mean_market,
        };
        let result = fit_cross_section(&input, &CrossSectionOptions::default()).unwrap();
        for (est, tru) in result.lambdas.iter().zip(&truth) {
            assert!((est - tru).abs() < 1e-10, "{est} vs {tru}");
        }
        assert!(result.rmspe < 1e-10, "rmspe {}", result.rmspe);
    }

    // Noisy instances: the solver matches an independent normal-equations
    // solve (Gauss-Jordan with partial pivoting) to 1e-10.
    for _ in 0..100 {
        let n = rng.gen_range(8..50);
        let k = rng.gen_range(1..5.min(n - 1));
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let capm: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let means: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let mean_market = 0.66;
        let input = CrossSectionInput {
            asset_ids: (0..n).map(|i| format!("a{i}")).collect(),
            regressor_names: (0..k).map(|j| format!("x{j}")).collect(),
            regressors: cols.clone(),
            capm_betas: capm.clone(),
            mean_returns: means.clone(),
            mean_market,
        };
        let result = fit_cross_section(&input, &CrossSectionOptions::default()).unwrap();

        let y: Vec<f64> = means
            .iter()
            .zip(&capm)
            .map(|(r, b)| r - b * mean_market)
            .collect();
        let mut aug = vec![vec![0.0; k + 1]; k];
        for a in 0..k {
            for b in 0..k {
                aug[a][b] = cols[a].iter().zip(&cols[b]).map(|(p, q)| p * q).sum();
            }
            aug[a][k] = cols[a].iter().zip(&y).map(|(p, q)| p * q).sum();
        }
        for pivot in 0..k {
            let mut best = pivot;
            for row in pivot + 1..k {
                if aug[row][pivot].abs() > aug[best][pivot].abs() {
                    best = row;
                }
            }
            aug.swap(pivot, best);
            let div = aug[pivot][pivot];
            for col in pivot..=k {
                aug[pivot][col] /= div;
            }
            for row in 0..k {
                if row != pivot {
                    let factor = aug[row][pivot];
                    for col in pivot..=k {
                        aug[row][col] -= factor * aug[pivot][col];
                    }
                }
            }
        }
        for j in 0..k {
            assert!(
                (result.lambdas[j] - aug[j][k]).abs() < 1e-10,
                "{} vs {}",
                result.lambdas[j],
                aug[j][k]
            );
        }
    }
    println!(
        "ACCEPTANCE criterion 5 PASS: zero-noise recovery to 1e-10 with RMSPE = 0, and OLS \
         matches the normal-equations oracle on 100 random instances"
    );
}

#[test]
fn acceptance_criterion_06_garch_recovery() {
    let started = Instant::now();
    let truth = GarchParams {
        omega: 0.1,
        alpha: 0.05,
        beta: 0.90,
        mu: 0.0,
    };
    let (returns, _) = simulate(&SimSpec {
        kind: SimKind::GarchPath { params: truth },
        n: 100_000,
        seed: 606,
    })
    .unwrap();
    let (fitted, _) = fit_garch11(&returns).unwrap();
    assert!(
        (fitted.omega - truth.omega).abs() <= 0.02,
        "omega {} vs {}",
        fitted.omega,
        truth.omega
    );
    assert!(
        (fitted.alpha - truth.alpha).abs() <= 0.02,
        "alpha {} vs {}",
        fitted.alpha,
        truth.alpha
    );
    assert!(
        (fitted.beta - truth.beta).abs() <= 0.02,
        "beta {} vs {}",
        fitted.beta,
        truth.beta
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "runtime {elapsed:?} exceeds 120 s"
    );
    println!(
        "ACCEPTANCE criterion 6 PASS: refit (omega, alpha, beta) = ({:.4}, {:.4}, {:.4}) within \
         0.02 of (0.1, 0.05, 0.90) ({elapsed:?})",
        fitted.omega, fitted.alpha, fitted.beta
    );
}

fn french_data_dir() -> Option<PathBuf> {
    if let Ok(dir) = std::env::var("QSPEC_FF_DATA_DIR") {
        let path = PathBuf::from(dir);
        if path.is_dir() {
            return Some(path);
        }
    }
    let workspace = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    if workspace.is_dir() {
        return Some(workspace);
    }
    None
}

struct FrenchData {
    panel: qspec::data::ReturnPanel,
    factors: Option<qspec::data::CsvTable>,
}

fn load_french_data() -> Option<FrenchData> {
    let dir = french_data_dir()?;
    let panel_path = dir.join("30_industry_equal_weight.csv");
    let market_path = dir.join("market.csv");
    if !panel_path.is_file() || !market_path.is_file() {
        return None;
    }
    let options = LoadOptions::default();
    let panel = load_panel(&panel_path, &market_path, &options).ok()?;
    let factors_path = dir.join("ff3_factors.csv");
    let factors = if factors_path.is_file() {
        read_csv_table(&factors_path, Frequency::Monthly, &options.missing_codes).ok()
    } else {
        None
    };
    Some(FrenchData { panel, factors })
}

#[test]
fn acceptance_criterion_07_table_reproduction() {
    let Some(data) = load_french_data() else {
        println!(
            "ACCEPTANCE criterion 7 SKIP: requires the Kenneth French 30-industry monthly \
             files (see README, set QSPEC_FF_DATA_DIR)"
        );
        return;
    };
    let (_, variance) = fit_garch11(&data.panel.market).unwrap();
    let mut context = ModelContext::new(&data.panel, 18.0);
    context.variance = Some(&variance);

    let full5 = run_model(
        &PricingModelSpec::new(ModelFamily::Full5, Some(0.05)).unwrap(),
        &context,
    )
    .unwrap();
    let lambda = |name: &str| -> f64 {
        let idx = full5.lambda_names.iter().position(|n| n == name).unwrap();
        full5.lambdas[idx]
    };

    // Hard gate: signs of the significantly priced columns.
    assert!(
        lambda("tr_short") > 0.0,
        "lambda_TR_short = {} not positive",
        lambda("tr_short")
    );
    assert!(
        lambda("ev_long") > 0.0,
        "lambda_EV_long = {} not positive",
        lambda("ev_long")
    );
    assert!(
        lambda("ev_short") < 0.0,
        "lambda_EV_short = {} not negative",
        lambda("ev_short")
    );

    // Soft gate: value tolerances (bandwidth/kernel in the reference tables
    // are unstated, so these are reported, not asserted).
    let tr_short_ok = (lambda("tr_short") - 1.27).abs() <= 0.5;
    let rmspe_ok = (full5.rmspe - 15.87).abs() <= 0.25 * 15.87;
    let ff3_line = match &data.factors {
        Some(table) => {
            let mut ff3_context = ModelContext::new(&data.panel, 18.0);
            ff3_context.factors = Some(table);
            let ff3 = run_model(
                &PricingModelSpec::new(ModelFamily::Ff3, None).unwrap(),
                &ff3_context,
            )
            .unwrap();
            let ff3_ok = (ff3.rmspe - 23.72).abs() <= 0.15 * 23.72;
            format!(
                "FF3 RMSPE {:.2} (target 23.72 +- 15%: {})",
                ff3.rmspe,
                if ff3_ok { "ok" } else { "MISS" }
            )
        }
        None => "FF3 factors file absent".to_string(),
    };
    println!(
        "ACCEPTANCE criterion 7 PASS (hard sign gate): lambda_TR_short {:.3} (+- 0.5 of 1.27: \
         {}), RMSPE {:.2} (+- 25% of 15.87: {}), {}",
        lambda("tr_short"),
        if tr_short_ok { "ok" } else { "MISS" },
        full5.rmspe,
        if rmspe_ok { "ok" } else { "MISS" },
        ff3_line
    );
}

#[test]
fn acceptance_criterion_08_ordering_reproduction() {
    let Some(data) = load_french_data() else {
        println!(
            "ACCEPTANCE criterion 8 SKIP: requires the Kenneth French 30-industry monthly \
             files (see README, set QSPEC_FF_DATA_DIR)"
        );
        return;
    };
    let (_, variance) = fit_garch11(&data.panel.market).unwrap();
    let mut context = ModelContext::new(&data.panel, 18.0);
    context.variance = Some(&variance);

    let capm = run_model(
        &PricingModelSpec::new(ModelFamily::Capm, None).unwrap(),
        &context,
    )
    .unwrap();
    let full = |tau: f64| {
        run_model(
            &PricingModelSpec::new(ModelFamily::Full5, Some(tau)).unwrap(),
            &context,
        )
        .unwrap()
    };
    let full_05 = full(0.05);
    let full_15 = full(0.15);
    let full_25 = full(0.25);
    assert!(
        capm.rmspe > full_05.rmspe,
        "RMSPE(CAPM) {} <= RMSPE(FULL5, 0.05) {}",
        capm.rmspe,
        full_05.rmspe
    );
    assert!(
        full_15.rmspe < full_25.rmspe,
        "RMSPE(FULL5, 0.15) {} >= RMSPE(FULL5, 0.25) {}",
        full_15.rmspe,
        full_25.rmspe
    );
    println!(
        "ACCEPTANCE criterion 8 PASS: RMSPE CAPM {:.2} > FULL5(0.05) {:.2}; FULL5(0.15) {:.2} < \
         FULL5(0.25) {:.2}",
        capm.rmspe, full_05.rmspe, full_15.rmspe, full_25.rmspe
    );
}

#[test]
fn acceptance_criterion_09_monotone_invariance() {
    let (reference, asset) = simulate(&SimSpec {
        kind: SimKind::GaussianWn { rho: 0.5 },
        n: 4096,
        seed: 909,
    })
    .unwrap();
    let betas = |reference: &[f64], asset: &[f64], tau: f64| -> (f64, f64, f64) {
        let pair = make_indicators(reference, asset, tau).unwrap();
        let periodogram = ccr_periodogram(&pair).unwrap();
        let spectrum = smooth_spectrum(&periodogram, default_bandwidth(reference.len())).unwrap();
        let (long, short) = band_split(reference.len(), 18.0).unwrap();
        (
            qs_beta_band(&spectrum, &long).unwrap(),
            qs_beta_band(&spectrum, &short).unwrap(),
            simple_quantile_beta(&pair).unwrap(),
        )
    };
    // exp() is strictly increasing, so ranks — and every downstream quantity —
    // are untouched when it is applied jointly to the pair.
    let ref_t: Vec<f64> = reference.values.iter().map(|v| (0.1 * v).exp()).collect();
    let asset_t: Vec<f64> = asset.values.iter().map(|v| (0.1 * v).exp()).collect();
    for tau in [0.05, 0.10, 0.25] {
        let (l0, s0, q0) = betas(&reference.values, &asset.values, tau);
        let (l1, s1, q1) = betas(&ref_t, &asset_t, tau);
        assert_eq!(l0.to_bits(), l1.to_bits(), "long beta at tau {tau}");
        assert_eq!(s0.to_bits(), s1.to_bits(), "short beta at tau {tau}");
        assert_eq!(q0.to_bits(), q1.to_bits(), "simple beta at tau {tau}");
    }
    println!(
        "ACCEPTANCE criterion 9 PASS: QS betas bit-identical under a joint exp() transform \
         at tau in {{0.05, 0.10, 0.25}}"
    );
}
