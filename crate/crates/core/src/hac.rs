//! Newey-West (Bartlett kernel) covariance for the slope coefficients.
//!
//! Daily level fits use a fixed truncation lag; stacked fits first sum the
//! per-row scores within each date so cross-sectional stacking does not
//! understate the standard errors; differenced fits use a conservative
//! multiple of the automatic truncation rule.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Truncation-lag policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HacMode {
    /// Bartlett window with this many lags.
    FixedLag(usize),
    /// `floor(multiplier * floor(4 (n/100)^{2/9}))`, capped at `n - 2`.
    AutoTimesMultiplier(f64),
}

/// Covariance settings carried by the fit options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HacConfig {
    pub mode: HacMode,
    /// Sum scores within each date before the kernel (stacked fits).
    pub cluster_by_date: bool,
}

impl HacConfig {
    /// Daily level convention: 21 trading days, clustered by date.
    pub fn level_default() -> Self {
        HacConfig {
            mode: HacMode::FixedLag(21),
            cluster_by_date: true,
        }
    }

    /// Differenced-fit convention: three times the automatic rule.
    pub fn diff_default() -> Self {
        HacConfig {
            mode: HacMode::AutoTimesMultiplier(3.0),
            cluster_by_date: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let HacMode::AutoTimesMultiplier(m) = self.mode {
            if !(m >= 1.0) {
                return Err(Error::Config(format!(
                    "HAC auto-lag multiplier must be at least 1 (got {m})"
                )));
            }
        }
        Ok(())
    }

    /// Effective truncation lag for a score sequence of length `n`.
    pub fn lag_for(&self, n: usize) -> usize {
        match self.mode {
            HacMode::FixedLag(l) => l,
            HacMode::AutoTimesMultiplier(m) => auto_lag(n, m),
        }
    }
}

/// Automatic truncation rule: `floor(4 (n/100)^{2/9})` scaled by
/// `multiplier`, capped at `n - 2`.
pub fn auto_lag(n: usize, multiplier: f64) -> usize {
    let base = (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor();
    let scaled = (multiplier * base).floor();
    let cap = n.saturating_sub(2) as f64;
    scaled.clamp(0.0, cap) as usize
}

/// Sandwich covariance from time-ordered score vectors.
///
/// `S = Gamma_0 + sum_l w_l (Gamma_l + Gamma_l')` with Bartlett weights
/// `w_l = 1 - l/(lag+1)`, wrapped as `bread * S * bread` and scaled by the
/// small-sample factor `nobs / (nobs - nparams)`. At `lag = 0` this is
/// exactly the heteroskedasticity-robust sandwich.
pub fn newey_west(
    scores: &[Vec<f64>],
    bread: &[Vec<f64>],
    lag: usize,
    nobs: usize,
    nparams: usize,
) -> Result<Vec<Vec<f64>>> {
    let t = scores.len();
    if t == 0 {
        return Err(Error::Numerical("no score vectors".into()));
    }
    if lag >= t {
        return Err(Error::Numerical(format!(
            "HAC lag {lag} must be smaller than the score sequence length {t}"
        )));
    }
    if nobs <= nparams {
        return Err(Error::Numerical(format!(
            "HAC degrees of freedom exhausted: {nobs} observations, {nparams} parameters"
        )));
    }
    let k = scores[0].len();

    let mut meat = vec![vec![0.0; k]; k];
    for s in scores {
        for i in 0..k {
            for j in i..k {
                meat[i][j] += s[i] * s[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            meat[i][j] = meat[j][i];
        }
    }
    for l in 1..=lag {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let mut gamma = vec![vec![0.0; k]; k];
        for ti in l..t {
            let s_t = &scores[ti];
            let s_lag = &scores[ti - l];
            for i in 0..k {
                for j in 0..k {
                    gamma[i][j] += s_t[i] * s_lag[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                meat[i][j] += w * (gamma[i][j] + gamma[j][i]);
            }
        }
    }

    // bread * meat * bread, then symmetrize and apply the dof factor.
    let factor = nobs as f64 / (nobs - nparams) as f64;
    let mut tmp = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for m in 0..k {
                s += bread[i][m] * meat[m][j];
            }
            tmp[i][j] = s;
        }
    }
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for m in 0..k {
                s += tmp[i][m] * bread[m][j];
            }
            cov[i][j] = factor * s;
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(cov)
}

/// Per-date summed score vectors, date-ascending. Rows sharing a date are
/// accumulated in row order, so the result does not depend on how rows are
/// interleaved across panels beyond that order.
pub fn clustered_scores(
    dates: &[NaiveDate],
    x_cols: &[Vec<f64>],
    residuals: &[f64],
) -> Vec<Vec<f64>> {
    let k = x_cols.len();
    let mut by_date: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for (row, &date) in dates.iter().enumerate() {
        let entry = by_date.entry(date).or_insert_with(|| vec![0.0; k]);
        let e = residuals[row];
        for (j, col) in x_cols.iter().enumerate() {
            entry[j] += col[row] * e;
        }
    }
    by_date.into_values().collect()
}

/// Per-row score vectors in row order (no clustering).
pub fn row_scores(x_cols: &[Vec<f64>], residuals: &[f64]) -> Vec<Vec<f64>> {
    let n = residuals.len();
    (0..n)
        .map(|row| x_cols.iter().map(|c| c[row] * residuals[row]).collect())
        .collect()
}

/// Two-sided p-value against the standard normal.
pub fn normal_pvalue(coef: f64, se: f64) -> Result<f64> {
    if !(se > 0.0) {
        return Err(Error::Numerical(
            "p-value undefined: zero HAC variance".into(),
        ));
    }
    let z = (coef / se).abs();
    let normal = Normal::new(0.0, 1.0).expect("static");
    Ok(2.0 * (1.0 - normal.cdf(z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lstsq;
    use crate::synth::Lcg;

    #[test]
    fn auto_lag_formula() {
        // base rule at n = 100 is 4; multiplier 3 gives 12
        assert_eq!(auto_lag(100, 3.0), 12);
        assert_eq!(auto_lag(100, 1.0), 4);
        // monotone in n
        let mut prev = 0;
        for n in (50..4000).step_by(50) {
            let l = auto_lag(n, 3.0);
            assert!(l >= prev);
            prev = l;
        }
        // capped below the sequence length
        assert!(auto_lag(5, 3.0) <= 3);
    }

    #[test]
    fn lag_zero_is_plain_sandwich() {
        let mut rng = Lcg::new(3);
        let n = 80;
        let cols = vec![vec![1.0; n], (0..n).map(|_| rng.normal()).collect::<Vec<_>>()];
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let names = vec!["c".to_string(), "x".to_string()];
        let fit = lstsq(&cols, &y, &names).unwrap();
        let scores = row_scores(&cols, &fit.residuals);
        let cov = newey_west(&scores, &fit.xtx_inv, 0, n, 2).unwrap();
        // direct HC computation
        let k = 2;
        let mut meat = vec![vec![0.0; k]; k];
        for r in 0..n {
            for i in 0..k {
                for j in 0..k {
                    meat[i][j] += cols[i][r] * cols[j][r] * fit.residuals[r] * fit.residuals[r];
                }
            }
        }
        let factor = n as f64 / (n - k) as f64;
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        s += fit.xtx_inv[i][a] * meat[a][b] * fit.xtx_inv[b][j];
                    }
                }
                assert!((cov[i][j] - factor * s).abs() < 1e-12 * (1.0 + s.abs()));
            }
        }
    }

    #[test]
    fn frozen_reference_standard_errors() {
        // Reference values computed externally for the seed-99 system with
        // the same Bartlett weights and n/(n-k) factor.
        let mut rng = Lcg::new(99);
        let n = 60;
        let x1: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x1[i] - 0.5 * x2[i] + e[i])
            .collect();
        let cols = vec![vec![1.0; n], x1, x2];
        let names: Vec<String> = ["c", "x1", "x2"].iter().map(|s| s.to_string()).collect();
        let fit = lstsq(&cols, &y, &names).unwrap();
        let scores = row_scores(&cols, &fit.residuals);

        let cov0 = newey_west(&scores, &fit.xtx_inv, 0, n, 3).unwrap();
        let want0 = [0.14723983491773, 0.15628228051213, 0.13930738277851];
        for (i, w) in want0.iter().enumerate() {
            assert!((cov0[i][i].sqrt() - w).abs() < 1e-10);
        }
        let cov5 = newey_west(&scores, &fit.xtx_inv, 5, n, 3).unwrap();
        let want5 = [0.12431104946349, 0.15989888314804, 0.10164034264324];
        for (i, w) in want5.iter().enumerate() {
            assert!((cov5[i][i].sqrt() - w).abs() < 1e-10);
        }
    }

    #[test]
    fn lag_must_be_below_length() {
        let scores = vec![vec![1.0], vec![-1.0]];
        let bread = vec![vec![1.0]];
        assert!(newey_west(&scores, &bread, 2, 2, 1).is_err());
        assert!(newey_west(&scores, &bread, 1, 2, 1).is_ok());
    }

    #[test]
    fn psd_for_all_lags() {
        let mut rng = Lcg::new(17);
        let n = 120;
        let cols = vec![
            vec![1.0; n],
            (0..n).map(|_| rng.normal()).collect::<Vec<_>>(),
            (0..n).map(|_| rng.normal() * 2.0).collect::<Vec<_>>(),
        ];
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let names: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        let fit = lstsq(&cols, &y, &names).unwrap();
        let scores = row_scores(&cols, &fit.residuals);
        for lag in 0..40 {
            let cov = newey_west(&scores, &fit.xtx_inv, lag, n, 3).unwrap();
            let trace: f64 = (0..3).map(|i| cov[i][i]).sum();
            let min_ev = crate::linalg::min_eigenvalue(&cov).unwrap();
            assert!(
                min_ev >= -1e-10 * trace,
                "lag {lag}: min eigenvalue {min_ev}, trace {trace}"
            );
        }
    }

    #[test]
    fn clustering_degenerate_and_additive() {
        let d0: NaiveDate = "2020-01-02".parse().unwrap();
        let d1: NaiveDate = "2020-01-03".parse().unwrap();
        // one row per date: clustering is the identity
        let cols = vec![vec![1.0, 2.0]];
        let resid = vec![0.5, -1.0];
        let per_row = row_scores(&cols, &resid);
        let clustered = clustered_scores(&[d0, d1], &cols, &resid);
        assert_eq!(per_row, clustered);
        // two identical rows per date double the score
        let cols = vec![vec![1.0, 1.0, 2.0, 2.0]];
        let resid = vec![0.5, 0.5, -1.0, -1.0];
        let clustered = clustered_scores(&[d0, d0, d1, d1], &cols, &resid);
        assert_eq!(clustered, vec![vec![1.0], vec![-4.0]]);
    }

    #[test]
    fn clustered_scores_ignore_within_date_row_order() {
        let d0: NaiveDate = "2020-01-02".parse().unwrap();
        let d1: NaiveDate = "2020-01-03".parse().unwrap();
        let a = clustered_scores(
            &[d0, d0, d1],
            &[vec![1.0, 2.0, 3.0]],
            &[0.25, -0.5, 1.0],
        );
        let b = clustered_scores(
            &[d0, d0, d1],
            &[vec![2.0, 1.0, 3.0]],
            &[-0.5, 0.25, 1.0],
        );
        assert_eq!(a, b);
    }

    #[test]
    fn pvalue_landmarks() {
        assert_eq!(normal_pvalue(0.0, 1.0).unwrap(), 1.0);
        let p = normal_pvalue(1.96, 1.0).unwrap();
        assert!((p - 0.05).abs() < 1e-3, "{p}");
        assert!(normal_pvalue(1.0, 0.0).is_err());
    }

    /// Monte Carlo: with iid errors the lag-21 HAC standard error should
    /// stay close to the lag-0 error on average.
    #[test]
    fn mc_iid_hac_close_to_hc() {
        let mut rng = Lcg::new(314);
        let n = 300;
        let reps = 200;
        let mut ratio_sum = 0.0;
        for _ in 0..reps {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let y: Vec<f64> = x.iter().map(|&v| 0.5 * v + rng.normal()).collect();
            let cols = vec![vec![1.0; n], x];
            let names: Vec<String> = ["c", "x"].iter().map(|s| s.to_string()).collect();
            let fit = lstsq(&cols, &y, &names).unwrap();
            let scores = row_scores(&cols, &fit.residuals);
            let c0 = newey_west(&scores, &fit.xtx_inv, 0, n, 2).unwrap();
            let c21 = newey_west(&scores, &fit.xtx_inv, 21, n, 2).unwrap();
            ratio_sum += (c21[1][1].sqrt() / c0[1][1].sqrt() - 1.0).abs();
        }
        let avg = ratio_sum / reps as f64;
        assert!(avg < 0.15, "average |ratio-1| = {avg}");
    }

    /// Monte Carlo: persistent AR(1) errors on a persistent regressor make
    /// the HAC standard error exceed the lag-0 one almost always.
    #[test]
    fn mc_ar1_hac_exceeds_hc() {
        let mut rng = Lcg::new(2718);
        let n = 400;
        let reps = 200;
        let mut wins = 0;
        for _ in 0..reps {
            let x = crate::synth::ar1(&mut rng, n, 0.9, 1.0);
            let e = crate::synth::ar1(&mut rng, n, 0.9, 1.0);
            let y: Vec<f64> = x.iter().zip(&e).map(|(&xv, &ev)| 0.5 * xv + ev).collect();
            let cols = vec![vec![1.0; n], x];
            let names: Vec<String> = ["c", "x"].iter().map(|s| s.to_string()).collect();
            let fit = lstsq(&cols, &y, &names).unwrap();
            let scores = row_scores(&cols, &fit.residuals);
            let c0 = newey_west(&scores, &fit.xtx_inv, 0, n, 2).unwrap();
            let c21 = newey_west(&scores, &fit.xtx_inv, 21, n, 2).unwrap();
            if c21[1][1] > c0[1][1] {
                wins += 1;
            }
        }
        assert!(
            wins as f64 >= 0.95 * reps as f64,
            "HAC exceeded HC in only {wins}/{reps} replications"
        );
    }

    /// Monte Carlo: strong within-date correlation makes clustered HAC
    /// standard errors at least as large as unclustered ones nearly always.
    #[test]
    fn mc_clustered_exceeds_unclustered() {
        let mut rng = Lcg::new(555);
        let n_dates = 150;
        let per_date = 6;
        let reps = 200;
        let base: NaiveDate = "2015-01-01".parse().unwrap();
        let mut wins = 0;
        for _ in 0..reps {
            let mut dates = Vec::new();
            let mut x = Vec::new();
            let mut y = Vec::new();
            for di in 0..n_dates {
                let date = base + chrono::Days::new(di as u64);
                let xv = rng.normal();
                let common = rng.normal() * 2.0; // shared within-date shock
                for _ in 0..per_date {
                    dates.push(date);
                    x.push(xv);
                    y.push(0.5 * xv + common + 0.3 * rng.normal());
                }
            }
            let n = y.len();
            let cols = vec![vec![1.0; n], x];
            let names: Vec<String> = ["c", "x"].iter().map(|s| s.to_string()).collect();
            let fit = lstsq(&cols, &y, &names).unwrap();
            let per_row = row_scores(&cols, &fit.residuals);
            let clustered = clustered_scores(&dates, &cols, &fit.residuals);
            let lag = 5;
            let cu = newey_west(&per_row, &fit.xtx_inv, lag, n, 2).unwrap();
            let cc = newey_west(&clustered, &fit.xtx_inv, lag, n, 2).unwrap();
            if cc[1][1] >= cu[1][1] {
                wins += 1;
            }
        }
        assert!(
            wins as f64 >= 0.90 * reps as f64,
            "clustered >= unclustered in only {wins}/{reps} replications"
        );
    }

    /// Size simulation: under the null, the 5% test on the slope rejects at
    /// roughly its nominal rate.
    #[test]
    fn mc_test_size_near_nominal() {
        let mut rng = Lcg::new(9001);
        let reps = 1000;
        let n = 250;
        let mut rejections = 0;
        for _ in 0..reps {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let cols = vec![vec![1.0; n], x];
            let names: Vec<String> = ["c", "x"].iter().map(|s| s.to_string()).collect();
            let fit = lstsq(&cols, &y, &names).unwrap();
            let scores = row_scores(&cols, &fit.residuals);
            let cov = newey_west(&scores, &fit.xtx_inv, 3, n, 2).unwrap();
            let p = normal_pvalue(fit.coef[1], cov[1][1].sqrt()).unwrap();
            if p < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((rate - 0.05).abs() <= 0.02, "rejection rate {rate}");
    }
}
