//! Residual-based cointegration diagnostics.
//!
//! The two-step test regresses a level series on level regressors with
//! deterministic terms, then runs an augmented Dickey-Fuller regression on
//! the first-stage residuals with no deterministic terms of its own.
//! Critical values come from response-surface coefficients indexed by the
//! number of variables and the first-stage deterministic term; the surface
//! is evaluated at `T = series length - 1`.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{PanelRows, RegressionSample};
use crate::linalg::lstsq;
use crate::regress::FitResult;
use crate::stats::median;
use crate::types::Currency;

/// Deterministic terms of a regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Deterministic {
    None,
    Constant,
    ConstantTrend,
}

/// Which series pair a cointegration test relates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    ActualFitted,
    ActualRegressors,
}

impl Relation {
    pub fn label(&self) -> &'static str {
        match self {
            Relation::ActualFitted => "actual~fitted",
            Relation::ActualRegressors => "actual~regressors",
        }
    }
}

/// Aggregation level of a tested series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Unit {
    Panel,
    CurrencyAggregate,
    GlobalAggregate,
}

impl Unit {
    pub fn label(&self) -> &'static str {
        match self {
            Unit::Panel => "panel",
            Unit::CurrencyAggregate => "currency",
            Unit::GlobalAggregate => "global",
        }
    }
}

/// Where the trend term lives in the constant-plus-trend variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrendPlacement {
    /// Deterministic terms in the first-stage regression (convention).
    FirstStage,
    /// Deterministic terms in the residual ADF regression instead.
    ResidualAdf,
}

/// One Engle-Granger test outcome.
#[derive(Debug, Clone, Serialize)]
pub struct EgResult {
    pub unit: Unit,
    pub name: String,
    pub relation: Relation,
    pub det: Deterministic,
    pub tau: f64,
    pub cv5: f64,
    pub cv1: f64,
    pub reject5: bool,
    pub reject1: bool,
    pub adf_lags: usize,
    pub nobs: usize,
}

/// Schwert's lag rule: `floor(12 (n/100)^{1/4})`.
pub fn schwert_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Dickey-Fuller t-statistic on the lagged level in the ADF regression
/// `ds_t = gamma s_{t-1} + sum phi_j ds_{t-j} + det + e`.
pub fn adf_tau(series: &[f64], det: Deterministic, lags: usize) -> Result<f64> {
    let n = series.len();
    if n < lags + 12 {
        return Err(Error::Numerical(format!(
            "ADF needs more than {} observations (got {n})",
            lags + 11
        )));
    }
    // Effective sample: targets t = lags+1 .. n-1 (0-indexed).
    let n_eff = n - 1 - lags;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();

    let mut lag_level = Vec::with_capacity(n_eff);
    for t in (lags + 1)..n {
        lag_level.push(series[t - 1]);
    }
    cols.push(lag_level);
    names.push("level_lag".into());

    for j in 1..=lags {
        let mut col = Vec::with_capacity(n_eff);
        for t in (lags + 1)..n {
            col.push(series[t - j] - series[t - j - 1]);
        }
        cols.push(col);
        names.push(format!("dlag{j}"));
    }
    match det {
        Deterministic::None => {}
        Deterministic::Constant => {
            cols.push(vec![1.0; n_eff]);
            names.push("const".into());
        }
        Deterministic::ConstantTrend => {
            cols.push(vec![1.0; n_eff]);
            names.push("const".into());
            cols.push((1..=n_eff).map(|i| i as f64).collect());
            names.push("trend".into());
        }
    }
    let dy: Vec<f64> = ((lags + 1)..n).map(|t| series[t] - series[t - 1]).collect();

    let fit = lstsq(&cols, &dy, &names)?;
    let k = cols.len();
    let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
    let dof = n_eff
        .checked_sub(k)
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Numerical("ADF regression has no residual degrees of freedom".into()))?;
    let sigma2 = rss / dof as f64;
    let var = sigma2 * fit.xtx_inv[0][0];
    if !(var > 0.0) {
        return Err(Error::Numerical(
            "ADF regression degenerate: zero variance for the lagged level".into(),
        ));
    }
    Ok(fit.coef[0] / var.sqrt())
}

/// Response-surface coefficients `cv = b0 + b1/T + b2/T^2 + b3/T^3` for the
/// no-cointegration tau distribution, by (variable count, deterministic
/// term, level). Source: published response-surface estimates for
/// residual-based cointegration tests (2010 revision).
fn surface(n_vars: usize, det: Deterministic) -> Result<[[f64; 4]; 2]> {
    // Rows: [1% level, 5% level].
    let table: [[f64; 4]; 2] = match (n_vars, det) {
        (2, Deterministic::Constant) => [
            [-3.89644, -10.9519, -33.527, 0.0],
            [-3.33613, -6.1101, -6.823, 0.0],
        ],
        (2, Deterministic::ConstantTrend) => [
            [-4.32762, -15.4387, -35.679, 0.0],
            [-3.78057, -9.5106, -12.074, 0.0],
        ],
        (4, Deterministic::Constant) => [
            [-4.64332, -18.1031, -37.972, 0.0],
            [-4.09600, -11.2349, -11.175, 0.0],
        ],
        (4, Deterministic::ConstantTrend) => [
            [-4.96940, -22.4694, -52.599, 51.314],
            [-4.42871, -14.5876, -18.228, 39.647],
        ],
        _ => {
            return Err(Error::Numerical(format!(
                "no critical-value surface for {n_vars} variables with {det:?}"
            )))
        }
    };
    Ok(table)
}

/// Critical values (1%, 5%) for `n_vars` total variables and the given
/// first-stage deterministic term, at effective length `t_obs`.
pub fn mackinnon_cv(n_vars: usize, det: Deterministic, t_obs: f64) -> Result<(f64, f64)> {
    let tab = surface(n_vars, det)?;
    let eval = |c: &[f64; 4]| c[0] + c[1] / t_obs + c[2] / (t_obs * t_obs) + c[3] / (t_obs * t_obs * t_obs);
    Ok((eval(&tab[0]), eval(&tab[1])))
}

/// Two-step residual-based cointegration test of `y` on regressors `xs`.
///
/// `lags` fixes the residual ADF lag order (`None` applies the Schwert
/// rule). The reported critical values are indexed by `xs.len() + 1`
/// variables and by `det`.
pub fn eg_test(
    y: &[f64],
    xs: &[Vec<f64>],
    det: Deterministic,
    lags: Option<usize>,
    placement: TrendPlacement,
) -> Result<(f64, f64, f64, usize, usize)> {
    let n = y.len();
    if xs.is_empty() || !(xs.len() == 1 || xs.len() == 3) {
        return Err(Error::Numerical(format!(
            "cointegration test expects 1 or 3 regressors (got {})",
            xs.len()
        )));
    }
    for x in xs {
        if x.len() != n {
            return Err(Error::Numerical("unaligned series lengths".into()));
        }
    }

    let (stage1_det, adf_det) = match placement {
        TrendPlacement::FirstStage => (det, Deterministic::None),
        TrendPlacement::ResidualAdf => (Deterministic::Constant, det),
    };

    let mut cols: Vec<Vec<f64>> = xs.to_vec();
    let mut names: Vec<String> = (0..xs.len()).map(|i| format!("x{i}")).collect();
    match stage1_det {
        Deterministic::None => {}
        Deterministic::Constant => {
            cols.push(vec![1.0; n]);
            names.push("const".into());
        }
        Deterministic::ConstantTrend => {
            cols.push(vec![1.0; n]);
            names.push("const".into());
            cols.push((1..=n).map(|i| i as f64).collect());
            names.push("trend".into());
        }
    }
    let stage1 = lstsq(&cols, y, &names).map_err(|e| {
        Error::Numerical(format!("cointegration first stage degenerate: {e}"))
    })?;
    let tss: f64 = {
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - m) * (v - m)).sum()
    };
    let rss: f64 = stage1.residuals.iter().map(|e| e * e).sum();
    if tss > 0.0 && rss / tss < 1e-12 {
        return Err(Error::Numerical(
            "cointegration first stage is (almost) an exact fit; residual test undefined".into(),
        ));
    }

    let adf_lags = lags.unwrap_or_else(|| schwert_lag(n));
    let tau = adf_tau(&stage1.residuals, adf_det, adf_lags)?;
    let (cv1, cv5) = mackinnon_cv(xs.len() + 1, det, (n - 1) as f64)?;
    Ok((tau, cv1, cv5, adf_lags, n))
}

/// Daily median aggregate of a sample: per date, the cross-sectional median
/// of the response over in-scope panels, with the regressors passed through
/// (they are common across panels at a date).
pub struct AggregateSeries {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

pub fn median_aggregate(sample: &RegressionSample, scope: Option<Currency>) -> AggregateSeries {
    let k = sample.regressor_names.len();
    let mut by_date: BTreeMap<NaiveDate, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in &sample.panels {
        if let Some(c) = scope {
            if p.key.currency != c {
                continue;
            }
        }
        for (i, &d) in p.dates.iter().enumerate() {
            let entry = by_date
                .entry(d)
                .or_insert_with(|| (Vec::new(), p.x.iter().map(|col| col[i]).collect()));
            entry.0.push(p.y[i]);
        }
    }
    let mut out = AggregateSeries {
        name: scope.map_or_else(|| "global".to_string(), |c| c.to_string()),
        dates: Vec::with_capacity(by_date.len()),
        y: Vec::with_capacity(by_date.len()),
        x: vec![Vec::with_capacity(by_date.len()); k],
    };
    for (date, (ys, xrow)) in by_date {
        out.dates.push(date);
        out.y.push(median(&ys));
        for (col, v) in out.x.iter_mut().zip(xrow) {
            col.push(v);
        }
    }
    out
}

/// Settings for the diagnostic grid.
#[derive(Debug, Clone)]
pub struct EgOptions {
    /// Fixed residual-ADF lag order; `None` applies the Schwert rule.
    pub fixed_lags: Option<usize>,
    pub trend_placement: TrendPlacement,
}

impl Default for EgOptions {
    fn default() -> Self {
        EgOptions {
            fixed_lags: None,
            trend_placement: TrendPlacement::FirstStage,
        }
    }
}

fn run_unit(
    unit: Unit,
    name: &str,
    y: &[f64],
    xs: &[Vec<f64>],
    opts: &EgOptions,
) -> Result<Vec<EgResult>> {
    // Baseline fitted values for the compressed relation come from the
    // unit's own level regression on the three states.
    let mut cols = xs.to_vec();
    cols.push(vec![1.0; y.len()]);
    let mut names: Vec<String> = (0..xs.len()).map(|i| format!("x{i}")).collect();
    names.push("const".into());
    let base = lstsq(&cols, y, &names)?;

    let mut out = Vec::new();
    for det in [Deterministic::Constant, Deterministic::ConstantTrend] {
        for relation in [Relation::ActualRegressors, Relation::ActualFitted] {
            let regs: Vec<Vec<f64>> = match relation {
                Relation::ActualRegressors => xs.to_vec(),
                Relation::ActualFitted => vec![base.fitted.clone()],
            };
            let (tau, cv1, cv5, adf_lags, nobs) =
                eg_test(y, &regs, det, opts.fixed_lags, opts.trend_placement)?;
            out.push(EgResult {
                unit,
                name: name.to_string(),
                relation,
                det,
                tau,
                cv5,
                cv1,
                reject5: tau < cv5,
                reject1: tau < cv1,
                adf_lags,
                nobs,
            });
        }
    }
    Ok(out)
}

/// The full diagnostic grid: every panel, every currency aggregate, and the
/// global aggregate, for both relations and both deterministic terms.
pub fn eg_grid(
    sample: &RegressionSample,
    fits: &BTreeMap<crate::types::PanelKey, FitResult>,
    opts: &EgOptions,
) -> Result<Vec<EgResult>> {
    let _ = fits; // panel fitted values are re-derived per unit from the levels
    let mut jobs: Vec<(Unit, String, Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for p in &sample.panels {
        jobs.push((
            Unit::Panel,
            p.key.to_string(),
            p.y.clone(),
            p.x.clone(),
        ));
    }
    let mut currencies: Vec<Currency> = sample.panels.iter().map(|p| p.key.currency).collect();
    currencies.sort_unstable();
    currencies.dedup();
    for c in &currencies {
        let agg = median_aggregate(sample, Some(*c));
        jobs.push((Unit::CurrencyAggregate, agg.name, agg.y, agg.x));
    }
    let global = median_aggregate(sample, None);
    jobs.push((Unit::GlobalAggregate, global.name, global.y, global.x));

    let results = crate::par::pmap(jobs, |(unit, name, y, xs)| {
        run_unit(unit, &name, &y, &xs, opts)
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Rejection counts per (unit, relation, det) cell.
#[derive(Debug, Clone, Serialize)]
pub struct EgSummaryRow {
    pub unit: String,
    pub relation: String,
    pub det: String,
    pub reject5: usize,
    pub reject1: usize,
    pub total: usize,
}

pub fn summarize_eg(results: &[EgResult]) -> Vec<EgSummaryRow> {
    let mut cells: BTreeMap<(String, String, String), (usize, usize, usize)> = BTreeMap::new();
    for r in results {
        let det = match r.det {
            Deterministic::Constant => "constant",
            Deterministic::ConstantTrend => "constant+trend",
            Deterministic::None => "none",
        };
        let key = (
            r.unit.label().to_string(),
            r.relation.label().to_string(),
            det.to_string(),
        );
        let cell = cells.entry(key).or_insert((0, 0, 0));
        cell.0 += r.reject5 as usize;
        cell.1 += r.reject1 as usize;
        cell.2 += 1;
    }
    cells
        .into_iter()
        .map(|((unit, relation, det), (r5, r1, total))| EgSummaryRow {
            unit,
            relation,
            det,
            reject5: r5,
            reject1: r1,
            total,
        })
        .collect()
}
