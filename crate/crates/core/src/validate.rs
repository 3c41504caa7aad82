//! Out-of-sample protocols: leave-one-year-out and expanding-window
//! evaluation, with pooled, mean-year, and median-panel metrics, and an
//! information-barrier check that proves holdout responses cannot reach the
//! training coefficients.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{PanelRows, RegressionSample};
use crate::par::pmap;
use crate::regress::{fit_common_slope_currency, fit_separate, FitOptions, FitResult};
use crate::types::{Currency, PanelKey};

/// Which protocol produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Protocol {
    Loyo,
    Expanding,
}

/// Fit structure used inside the validation loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CvScope {
    Separate,
    CurrencyCommon,
}

/// Validation controls.
#[derive(Debug, Clone)]
pub struct ValidateOptions {
    /// First holdout year is `first_year + initial_years` (expanding only).
    pub initial_years: usize,
    /// Minimum training rows per panel inside an expanding window.
    pub min_train_rows_expanding: usize,
    /// Minimum training rows per panel for any training fit.
    pub min_panel_rows: usize,
    /// Capture per-row holdout predictions (plot data).
    pub keep_predictions: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            initial_years: 3,
            min_train_rows_expanding: 100,
            min_panel_rows: 30,
            keep_predictions: false,
        }
    }
}

/// Per-holdout-year statistics.
#[derive(Debug, Clone, Serialize)]
pub struct YearStats {
    pub year: i32,
    pub pooled_r2: f64,
    pub median_panel_r2: f64,
    pub nobs: usize,
    pub panel_count: usize,
}

/// One captured holdout prediction.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub key: PanelKey,
    pub date: chrono::NaiveDate,
    pub actual: f64,
    pub predicted: f64,
}

/// Out-of-sample evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub protocol: Protocol,
    pub scope: CvScope,
    pub per_year: Vec<YearStats>,
    /// `1 - sum(e^2) / sum(benchmark^2)` over every holdout observation.
    pub overall_pooled_r2: f64,
    /// Unweighted mean of the per-year pooled values.
    pub mean_year_r2: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub predictions: Vec<PredictionRow>,
}

/// Calendar years present in the sample, ascending.
pub fn sample_years(sample: &RegressionSample) -> Vec<i32> {
    let mut years: Vec<i32> = sample
        .panels
        .iter()
        .flat_map(|p| p.dates.iter().map(|d| d.year()))
        .collect();
    years.sort_unstable();
    years.dedup();
    years
}

fn panel_rows_with_year(panel: &PanelRows, keep: impl Fn(i32) -> bool) -> PanelRows {
    let idx: Vec<usize> = panel
        .dates
        .iter()
        .enumerate()
        .filter(|(_, d)| keep(d.year()))
        .map(|(i, _)| i)
        .collect();
    PanelRows {
        key: panel.key,
        dates: idx.iter().map(|&i| panel.dates[i]).collect(),
        y: idx.iter().map(|&i| panel.y[i]).collect(),
        x: panel
            .x
            .iter()
            .map(|col| idx.iter().map(|&i| col[i]).collect())
            .collect(),
    }
}

/// The training extractor: rows admitted to the training set for holdout
/// year `year` under `protocol`. This is the only path from the sample to a
/// training fit, which is what the information barrier leans on.
pub fn training_sample(
    sample: &RegressionSample,
    protocol: Protocol,
    year: i32,
) -> RegressionSample {
    let panels = sample
        .panels
        .iter()
        .map(|p| match protocol {
            Protocol::Loyo => panel_rows_with_year(p, |y| y != year),
            Protocol::Expanding => panel_rows_with_year(p, |y| y < year),
        })
        .filter(|p| !p.is_empty())
        .collect();
    RegressionSample {
        regressor_names: sample.regressor_names.clone(),
        panels,
    }
}

enum YearFits {
    Separate(BTreeMap<PanelKey, FitResult>),
    Currency(BTreeMap<Currency, FitResult>),
}

impl YearFits {
    fn fit_for(&self, key: PanelKey) -> Option<&FitResult> {
        match self {
            YearFits::Separate(m) => m.get(&key),
            YearFits::Currency(m) => m.get(&key.currency),
        }
    }
}

struct YearOutcome {
    year: i32,
    sq_err: f64,
    sq_bench: f64,
    nobs: usize,
    panel_r2: Vec<f64>,
    warnings: Vec<String>,
    predictions: Vec<PredictionRow>,
}

fn evaluate_year(
    sample: &RegressionSample,
    protocol: Protocol,
    scope: CvScope,
    year: i32,
    opts: &ValidateOptions,
) -> Result<YearOutcome> {
    let min_rows = match protocol {
        Protocol::Loyo => opts.min_panel_rows,
        Protocol::Expanding => opts.min_panel_rows.max(opts.min_train_rows_expanding),
    };
    let train = training_sample(sample, protocol, year);
    let fit_opts = FitOptions::training(min_rows);

    let mut warnings = Vec::new();
    let fits = match scope {
        CvScope::Separate => {
            let (fits, mut w) = fit_separate(&train, &fit_opts)?;
            warnings.append(&mut w);
            YearFits::Separate(fits)
        }
        CvScope::CurrencyCommon => {
            let (fits, mut w) = fit_common_slope_currency(&train, &fit_opts)?;
            warnings.append(&mut w);
            YearFits::Currency(fits)
        }
    };

    // Training-sample panel means: the prediction benchmark.
    let mut train_means: BTreeMap<PanelKey, f64> = BTreeMap::new();
    let mut train_rows: BTreeMap<PanelKey, usize> = BTreeMap::new();
    for p in &train.panels {
        train_means.insert(p.key, p.y.iter().sum::<f64>() / p.len() as f64);
        train_rows.insert(p.key, p.len());
    }

    let mut out = YearOutcome {
        year,
        sq_err: 0.0,
        sq_bench: 0.0,
        nobs: 0,
        panel_r2: Vec::new(),
        warnings,
        predictions: Vec::new(),
    };

    for panel in &sample.panels {
        let holdout = panel_rows_with_year(panel, |y| y == year);
        if holdout.is_empty() {
            continue;
        }
        let Some(fit) = fits.fit_for(panel.key) else {
            out.warnings.push(format!(
                "year {year}: panel {} has no training fit; holdout skipped",
                panel.key
            ));
            continue;
        };
        // A panel can be estimable at the currency level while absent from
        // training; the benchmark then has no training mean, so skip.
        let Some(&bench_mean) = train_means.get(&panel.key) else {
            out.warnings.push(format!(
                "year {year}: panel {} absent from training; holdout skipped",
                panel.key
            ));
            continue;
        };
        if matches!(protocol, Protocol::Expanding)
            && train_rows.get(&panel.key).copied().unwrap_or(0) < opts.min_train_rows_expanding
        {
            out.warnings.push(format!(
                "year {year}: panel {} has fewer than {} training rows; holdout skipped",
                panel.key, opts.min_train_rows_expanding
            ));
            continue;
        }

        let mut p_err = 0.0;
        let mut p_bench = 0.0;
        for row in 0..holdout.len() {
            let pred = fit.predict(&holdout, row);
            let actual = holdout.y[row];
            let e = actual - pred;
            let b = actual - bench_mean;
            p_err += e * e;
            p_bench += b * b;
            if opts.keep_predictions {
                out.predictions.push(PredictionRow {
                    key: panel.key,
                    date: holdout.dates[row],
                    actual,
                    predicted: pred,
                });
            }
        }
        out.sq_err += p_err;
        out.sq_bench += p_bench;
        out.nobs += holdout.len();
        if p_bench > 0.0 {
            out.panel_r2.push(1.0 - p_err / p_bench);
        } else {
            out.warnings.push(format!(
                "year {year}: panel {} holdout has zero benchmark variation; excluded from the median",
                panel.key
            ));
        }
    }
    Ok(out)
}

fn assemble_report(
    protocol: Protocol,
    scope: CvScope,
    outcomes: Vec<YearOutcome>,
) -> Result<CvReport> {
    let mut per_year = Vec::new();
    let mut warnings = Vec::new();
    let mut predictions = Vec::new();
    let mut total_err = 0.0;
    let mut total_bench = 0.0;
    let mut year_pooled = Vec::new();
    for mut o in outcomes {
        warnings.append(&mut o.warnings);
        predictions.append(&mut o.predictions);
        if o.nobs == 0 {
            warnings.push(format!("year {}: no usable holdout observations", o.year));
            continue;
        }
        if o.sq_bench <= 0.0 {
            warnings.push(format!(
                "year {}: zero benchmark variation; year excluded",
                o.year
            ));
            continue;
        }
        let pooled = 1.0 - o.sq_err / o.sq_bench;
        let median_panel = if o.panel_r2.is_empty() {
            f64::NAN
        } else {
            crate::stats::median(&o.panel_r2)
        };
        per_year.push(YearStats {
            year: o.year,
            pooled_r2: pooled,
            median_panel_r2: median_panel,
            nobs: o.nobs,
            panel_count: o.panel_r2.len(),
        });
        total_err += o.sq_err;
        total_bench += o.sq_bench;
        year_pooled.push(pooled);
    }
    if per_year.is_empty() {
        return Err(Error::Data(
            "validation produced no usable holdout years".into(),
        ));
    }
    Ok(CvReport {
        protocol,
        scope,
        per_year,
        overall_pooled_r2: 1.0 - total_err / total_bench,
        mean_year_r2: crate::stats::mean(&year_pooled),
        warnings,
        predictions,
    })
}

/// Leave-one-year-out evaluation: for each calendar year, fit on every
/// other year and predict the excluded one, benchmarking holdout errors
/// against the training-sample panel mean.
pub fn loyo_evaluate(
    sample: &RegressionSample,
    scope: CvScope,
    opts: &ValidateOptions,
) -> Result<CvReport> {
    let years = sample_years(sample);
    if years.len() < 3 {
        return Err(Error::Data(format!(
            "leave-one-year-out needs at least 3 distinct years (found {})",
            years.len()
        )));
    }
    let outcomes = pmap(years, |year| {
        evaluate_year(sample, Protocol::Loyo, scope, year, opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    assemble_report(Protocol::Loyo, scope, outcomes)
}

/// Expanding-window evaluation: the first holdout year follows the initial
/// training window, and each holdout year is predicted from strictly
/// earlier data.
pub fn expanding_evaluate(
    sample: &RegressionSample,
    scope: CvScope,
    opts: &ValidateOptions,
) -> Result<CvReport> {
    let years = sample_years(sample);
    if years.len() < opts.initial_years + 1 {
        return Err(Error::Data(format!(
            "expanding evaluation needs more than {} distinct years (found {})",
            opts.initial_years,
            years.len()
        )));
    }
    let first_holdout = years[0] + opts.initial_years as i32;
    let holdouts: Vec<i32> = years.into_iter().filter(|&y| y >= first_holdout).collect();
    let outcomes = pmap(holdouts, |year| {
        evaluate_year(sample, Protocol::Expanding, scope, year, opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    assemble_report(Protocol::Expanding, scope, outcomes)
}

/// Proof record from one barrier check.
#[derive(Debug, Clone, Serialize)]
pub struct BarrierProof {
    pub protocol: Protocol,
    pub scope: CvScope,
    pub year: i32,
    /// Number of training fits whose coefficients were compared.
    pub fits_compared: usize,
}

fn fit_bits(sample: &RegressionSample, scope: CvScope, min_rows: usize) -> Result<Vec<(String, Vec<u64>)>> {
    let opts = FitOptions::training(min_rows);
    let collect = |label: String, fit: &FitResult| {
        let mut bits: Vec<u64> = fit.coef.iter().map(|c| c.to_bits()).collect();
        bits.push(fit.intercept.to_bits());
        bits.push(fit.global_intercept.to_bits());
        bits.extend(fit.group_intercepts.values().map(|v| v.to_bits()));
        (label, bits)
    };
    Ok(match scope {
        CvScope::Separate => {
            let (fits, _) = fit_separate(sample, &opts)?;
            fits.iter().map(|(k, f)| collect(k.to_string(), f)).collect()
        }
        CvScope::CurrencyCommon => {
            let (fits, _) = fit_common_slope_currency(sample, &opts)?;
            fits.iter().map(|(k, f)| collect(k.to_string(), f)).collect()
        }
    })
}

/// Re-run the training fits for holdout year `year` after shifting every
/// holdout-side response by +1000 bps, and require bit-identical training
/// coefficients. Any difference is a fatal leakage error.
pub fn information_barrier_check(
    sample: &RegressionSample,
    protocol: Protocol,
    scope: CvScope,
    year: i32,
    opts: &ValidateOptions,
) -> Result<BarrierProof> {
    let min_rows = match protocol {
        Protocol::Loyo => opts.min_panel_rows,
        Protocol::Expanding => opts.min_panel_rows.max(opts.min_train_rows_expanding),
    };

    let mut perturbed = sample.clone();
    for p in &mut perturbed.panels {
        for (i, d) in p.dates.iter().enumerate() {
            let hit = match protocol {
                Protocol::Loyo => d.year() == year,
                Protocol::Expanding => d.year() >= year,
            };
            if hit {
                p.y[i] += 1000.0;
            }
        }
    }

    let base = fit_bits(&training_sample(sample, protocol, year), scope, min_rows)?;
    let shifted = fit_bits(&training_sample(&perturbed, protocol, year), scope, min_rows)?;

    if base.len() != shifted.len() {
        return Err(Error::InformationLeak(format!(
            "holdout year {year}: training fit set changed under a holdout perturbation"
        )));
    }
    for ((label_a, bits_a), (label_b, bits_b)) in base.iter().zip(&shifted) {
        if label_a != label_b || bits_a != bits_b {
            return Err(Error::InformationLeak(format!(
                "holdout year {year}: training coefficients for {label_a} changed under a holdout perturbation"
            )));
        }
    }
    Ok(BarrierProof {
        protocol,
        scope,
        year,
        fits_compared: base.len(),
    })
}

/// Run the barrier check for every holdout year of a protocol.
pub fn information_barrier_full_grid(
    sample: &RegressionSample,
    protocol: Protocol,
    scope: CvScope,
    opts: &ValidateOptions,
) -> Result<Vec<BarrierProof>> {
    let years = sample_years(sample);
    let holdouts: Vec<i32> = match protocol {
        Protocol::Loyo => years,
        Protocol::Expanding => {
            let first = years[0] + opts.initial_years as i32;
            years.into_iter().filter(|&y| y >= first).collect()
        }
    };
    pmap(holdouts, |year| {
        information_barrier_check(sample, protocol, scope, year, opts)
    })
    .into_iter()
    .collect()
}
