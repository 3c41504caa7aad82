//! Panel-derived structures: quarter-end indicators and non-overlapping
//! block-average differences.

use chrono::{Datelike, NaiveDate};

use crate::ingest::{PanelRows, RegressionSample};
use crate::types::Tenor;

/// Indicator for the last `window` observed trading days of each calendar
/// quarter, gated to tenors of one year or less. Dates must be ascending
/// within one panel. Quarters with fewer than `window` observed days flag
/// all of their days.
pub fn quarter_end_flags(dates: &[NaiveDate], window: u32, tenor: Tenor) -> Vec<f64> {
    let mut flags = vec![0.0; dates.len()];
    if !tenor.is_short() || dates.is_empty() {
        return flags;
    }
    let quarter_of = |d: NaiveDate| (d.year(), (d.month0() / 3) as i32);
    let mut start = 0usize;
    for i in 0..=dates.len() {
        let boundary = i == dates.len() || quarter_of(dates[i]) != quarter_of(dates[start]);
        if boundary {
            let from = i.saturating_sub(window as usize).max(start);
            for f in flags.iter_mut().take(i).skip(from) {
                *f = 1.0;
            }
            if i < dates.len() {
                start = i;
            }
        }
    }
    flags
}

/// Non-overlapping `n`-day block means of one panel's rows, differenced
/// across adjacent blocks. Blocks are anchored at the panel's first row and
/// a trailing partial block is dropped. Each differenced row carries the
/// date of the last raw row in its later block, so the holdout-year
/// machinery applies unchanged. Returns `None` (with the caller expected to
/// warn) when fewer than two complete blocks exist.
pub fn block_aggregate_diff(panel: &PanelRows, n: usize) -> Option<PanelRows> {
    assert!(n >= 1, "block size must be at least 1");
    let blocks = panel.len() / n;
    if blocks < 2 {
        return None;
    }
    let k = panel.x.len();
    let block_mean = |values: &[f64], b: usize| -> f64 {
        let from = b * n;
        values[from..from + n].iter().sum::<f64>() / n as f64
    };

    let mut out = PanelRows {
        key: panel.key,
        dates: Vec::with_capacity(blocks - 1),
        y: Vec::with_capacity(blocks - 1),
        x: vec![Vec::with_capacity(blocks - 1); k],
    };
    for b in 1..blocks {
        out.dates.push(panel.dates[b * n + n - 1]);
        out.y.push(block_mean(&panel.y, b) - block_mean(&panel.y, b - 1));
        for (col, src) in out.x.iter_mut().zip(panel.x.iter()) {
            col.push(block_mean(src, b) - block_mean(src, b - 1));
        }
    }
    Some(out)
}

/// Apply `block_aggregate_diff` across a whole sample. Panels with fewer
/// than `2n` rows produce a warning and are omitted.
pub fn diff_sample(sample: &RegressionSample, n: usize) -> (RegressionSample, Vec<String>) {
    let mut warnings = Vec::new();
    let mut panels = Vec::new();
    for p in &sample.panels {
        match block_aggregate_diff(p, n) {
            Some(rows) => panels.push(rows),
            None => warnings.push(format!(
                "panel {}: fewer than two complete {n}-day blocks ({} rows); no differences",
                p.key,
                p.len()
            )),
        }
    }
    let names = sample
        .regressor_names
        .iter()
        .map(|r| format!("d_{r}"))
        .collect();
    (
        RegressionSample {
            regressor_names: names,
            panels,
        },
        warnings,
    )
}
