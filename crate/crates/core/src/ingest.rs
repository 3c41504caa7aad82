//! Input parsing and state-variable alignment on the CIP trading calendar.
//!
//! The alignment rules are the load-bearing part of this module. The master
//! calendar is the sorted union of all panel dates. Daily state series are
//! forward-filled onto that calendar and then lagged by one calendar row;
//! the weekly financial-conditions index instead takes the latest print
//! dated strictly before each calendar date. Every aligned value therefore
//! originates strictly before the date it is attached to.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::quarter_end_flags;
use crate::types::{Currency, PanelKey, Tenor};

/// Earliest admissible panel date.
pub const SAMPLE_START: &str = "2008-01-01";
/// Latest admissible panel date.
pub const SAMPLE_END: &str = "2025-06-30";

fn sample_bounds() -> (NaiveDate, NaiveDate) {
    (
        SAMPLE_START.parse().expect("valid constant"),
        SAMPLE_END.parse().expect("valid constant"),
    )
}

/// A named, date-ordered series with no missing values stored.
#[derive(Debug, Clone)]
pub struct DailySeries {
    pub name: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl DailySeries {
    pub fn empty(name: &str) -> Self {
        DailySeries {
            name: name.to_string(),
            dates: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Append an observation; dates must arrive strictly increasing.
    pub fn push(&mut self, date: NaiveDate, value: f64) {
        if let Some(last) = self.dates.last() {
            assert!(*last < date, "dates must be strictly increasing");
        }
        self.dates.push(date);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates.iter().copied().zip(self.values.iter().copied())
    }
}

/// Parse statistics recorded in the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ParseStats {
    pub rows_total: usize,
    pub rows_dropped_missing: usize,
}

/// Parse a two-column (date, value) CSV in the public-data convention:
/// header row required, missing values encoded as "." or empty and dropped.
pub fn parse_fred_csv<R: Read>(reader: R, series_name: &str) -> Result<(DailySeries, ParseStats)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut series = DailySeries::empty(series_name);
    let mut stats = ParseStats {
        rows_total: 0,
        rows_dropped_missing: 0,
    };

    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            line,
            message: format!("{series_name}: {e}"),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                line,
                message: format!("{series_name}: expected date and value columns"),
            });
        }
        stats.rows_total += 1;
        let date: NaiveDate = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("{series_name}: malformed date {:?}", &record[0]),
        })?;
        let raw = record[1].trim();
        if raw.is_empty() || raw == "." {
            stats.rows_dropped_missing += 1;
            continue;
        }
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("{series_name}: malformed value {raw:?}"),
        })?;
        if let Some(last) = series.dates.last() {
            if *last >= date {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "{series_name}: dates not strictly increasing ({last} then {date})"
                    ),
                });
            }
        }
        series.push(date, value);
    }

    if series.is_empty() {
        return Err(Error::Data(format!(
            "{series_name}: no valid rows after dropping missing values"
        )));
    }
    Ok((series, stats))
}

/// One CIP deviation observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CipObservation {
    pub currency: Currency,
    pub tenor: Tenor,
    pub date: NaiveDate,
    pub cip_bps: f64,
}

/// Parse the CIP panel CSV: columns (date, currency, tenor_years, cip bps).
pub fn parse_cip_panel<R: Read>(reader: R) -> Result<Vec<CipObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let (start, end) = sample_bounds();
    let mut out = Vec::new();
    let mut unknown_currencies = BTreeSet::new();
    let mut seen: HashMap<(Currency, Tenor, NaiveDate), usize> = HashMap::new();

    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: format!("cip panel: {e}"),
        })?;
        if record.len() < 4 {
            return Err(Error::Parse {
                line,
                message: "cip panel: expected columns date,currency,tenor_years,cip_govt_bps"
                    .into(),
            });
        }
        let date: NaiveDate = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("cip panel: malformed date {:?}", &record[0]),
        })?;
        let currency = match record[1].parse::<Currency>() {
            Ok(c) => c,
            Err(_) => {
                unknown_currencies.insert(record[1].to_string());
                continue;
            }
        };
        let tenor = Tenor::parse(&record[2]).map_err(|e| Error::Parse {
            line,
            message: format!("cip panel: {e}"),
        })?;
        let cip_bps: f64 = record[3].parse().map_err(|_| Error::Parse {
            line,
            message: format!("cip panel: malformed value {:?}", &record[3]),
        })?;
        if date < start || date > end {
            return Err(Error::Data(format!(
                "cip panel line {line}: date {date} outside the sample window [{SAMPLE_START}, {SAMPLE_END}]"
            )));
        }
        if let Some(first) = seen.insert((currency, tenor, date), line) {
            return Err(Error::Data(format!(
                "cip panel: duplicate observation for ({currency}, {tenor}, {date}) at lines {first} and {line}"
            )));
        }
        out.push(CipObservation {
            currency,
            tenor,
            date,
            cip_bps,
        });
    }

    if !unknown_currencies.is_empty() {
        let list: Vec<String> = unknown_currencies.into_iter().collect();
        return Err(Error::Data(format!(
            "cip panel: unknown currency codes: {}",
            list.join(", ")
        )));
    }
    if out.is_empty() {
        return Err(Error::Data("cip panel: no rows".into()));
    }
    Ok(out)
}

/// One currency--tenor panel of CIP deviations, date-ascending.
#[derive(Debug, Clone)]
pub struct CipPanel {
    pub key: PanelKey,
    pub dates: Vec<NaiveDate>,
    pub cip: Vec<f64>,
}

/// Group observations into panels sorted by key, and return the master
/// calendar (sorted union of all panel dates).
pub fn group_panels(observations: &[CipObservation]) -> (Vec<CipPanel>, Vec<NaiveDate>) {
    let mut by_key: BTreeMap<PanelKey, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut calendar: BTreeSet<NaiveDate> = BTreeSet::new();
    for o in observations {
        by_key
            .entry(PanelKey::new(o.currency, o.tenor))
            .or_default()
            .push((o.date, o.cip_bps));
        calendar.insert(o.date);
    }
    let panels = by_key
        .into_iter()
        .map(|(key, mut rows)| {
            rows.sort_by_key(|r| r.0);
            CipPanel {
                key,
                dates: rows.iter().map(|r| r.0).collect(),
                cip: rows.iter().map(|r| r.1).collect(),
            }
        })
        .collect();
    (panels, calendar.into_iter().collect())
}

/// Lag-aligned state variables on the master calendar.
#[derive(Debug, Clone)]
pub struct AlignedStates {
    pub dates: Vec<NaiveDate>,
    pub nfci: Vec<f64>,
    pub dollar: Vec<f64>,
    pub slope: Vec<f64>,
    /// Present only where the VIX input covers the lagged date.
    pub vix: Vec<Option<f64>>,
    index: HashMap<NaiveDate, usize>,
    /// Largest carry-forward distance (calendar days) seen in any daily
    /// series; recorded in the manifest.
    pub max_staleness_days: i64,
}

impl AlignedStates {
    pub fn lookup(&self, date: NaiveDate) -> Option<usize> {
        self.index.get(&date).copied()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Forward-fill a raw series onto the calendar, then lag one calendar row.
/// Returns the lagged values and the maximum staleness in days.
fn fill_then_lag(series: &DailySeries, calendar: &[NaiveDate]) -> (Vec<Option<f64>>, i64) {
    let mut filled: Vec<Option<(NaiveDate, f64)>> = Vec::with_capacity(calendar.len());
    let mut ptr = 0usize;
    let mut latest: Option<(NaiveDate, f64)> = None;
    for &day in calendar {
        while ptr < series.len() && series.dates[ptr] <= day {
            latest = Some((series.dates[ptr], series.values[ptr]));
            ptr += 1;
        }
        filled.push(latest);
    }
    let mut lagged = vec![None; calendar.len()];
    let mut staleness = 0i64;
    for i in 1..calendar.len() {
        if let Some((src, v)) = filled[i - 1] {
            lagged[i] = Some(v);
            staleness = staleness.max((calendar[i - 1] - src).num_days());
        }
    }
    (lagged, staleness)
}

/// Latest print dated strictly before each calendar date.
fn strictly_before(series: &DailySeries, calendar: &[NaiveDate]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(calendar.len());
    let mut ptr = 0usize;
    let mut latest: Option<f64> = None;
    for &day in calendar {
        while ptr < series.len() && series.dates[ptr] < day {
            latest = Some(series.values[ptr]);
            ptr += 1;
        }
        out.push(latest);
    }
    out
}

/// Construct the lagged state variables on the master calendar.
///
/// The Treasury slope is formed at common source dates of the two yield
/// series before the fill-and-lag step, so a slope value is never a mix of
/// two source dates. Calendar dates missing any of the three core lagged
/// states are omitted.
pub fn build_aligned_states(
    nfci: &DailySeries,
    dollar: &DailySeries,
    dgs10: &DailySeries,
    dgs2: &DailySeries,
    vix: Option<&DailySeries>,
    calendar: &[NaiveDate],
) -> Result<AlignedStates> {
    if calendar.is_empty() {
        return Err(Error::Data("empty master calendar".into()));
    }

    // Slope at common source dates.
    let mut slope_raw = DailySeries::empty("slope");
    {
        let mut j = 0usize;
        for (i, &d10_date) in dgs10.dates.iter().enumerate() {
            while j < dgs2.len() && dgs2.dates[j] < d10_date {
                j += 1;
            }
            if j < dgs2.len() && dgs2.dates[j] == d10_date {
                slope_raw.push(d10_date, dgs10.values[i] - dgs2.values[j]);
            }
        }
    }
    if slope_raw.is_empty() {
        return Err(Error::Data(
            "DGS10 and DGS2 share no common observation dates".into(),
        ));
    }

    let nfci_lag = strictly_before(nfci, calendar);
    let (dollar_lag, st_dollar) = fill_then_lag(dollar, calendar);
    let (slope_lag, st_slope) = fill_then_lag(&slope_raw, calendar);
    let (vix_lag, st_vix) = match vix {
        Some(v) => fill_then_lag(v, calendar),
        None => (vec![None; calendar.len()], 0),
    };

    let checks: [(&str, &[Option<f64>]); 3] = [
        (nfci.name.as_str(), &nfci_lag),
        (dollar.name.as_str(), &dollar_lag),
        ("slope (DGS10-DGS2)", &slope_lag),
    ];
    for (name, col) in checks {
        if col.iter().all(Option::is_none) {
            return Err(Error::Data(format!(
                "series {name} has no observations usable on the panel calendar"
            )));
        }
    }

    let mut out = AlignedStates {
        dates: Vec::new(),
        nfci: Vec::new(),
        dollar: Vec::new(),
        slope: Vec::new(),
        vix: Vec::new(),
        index: HashMap::new(),
        max_staleness_days: st_dollar.max(st_slope).max(st_vix),
    };
    for (i, &day) in calendar.iter().enumerate() {
        let (Some(n), Some(d), Some(s)) = (nfci_lag[i], dollar_lag[i], slope_lag[i]) else {
            continue;
        };
        out.index.insert(day, out.dates.len());
        out.dates.push(day);
        out.nfci.push(n);
        out.dollar.push(d);
        out.slope.push(s);
        out.vix.push(vix_lag[i]);
    }
    if out.is_empty() {
        return Err(Error::Data(
            "no calendar date has all three lagged state variables".into(),
        ));
    }
    Ok(out)
}

/// Regressors available to a specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Regressor {
    NfciLag,
    DollarLag,
    SlopeLag,
    VixLag,
    QEndShort,
}

impl Regressor {
    pub fn name(&self) -> &'static str {
        match self {
            Regressor::NfciLag => "NFCI_lag",
            Regressor::DollarLag => "Dollar_lag",
            Regressor::SlopeLag => "Slope_lag",
            Regressor::VixLag => "VIX_lag",
            Regressor::QEndShort => "QEndShort",
        }
    }

    pub fn parse(s: &str) -> Result<Regressor> {
        match s {
            "NFCI_lag" => Ok(Regressor::NfciLag),
            "Dollar_lag" => Ok(Regressor::DollarLag),
            "Slope_lag" => Ok(Regressor::SlopeLag),
            "VIX_lag" => Ok(Regressor::VixLag),
            "QEndShort" => Ok(Regressor::QEndShort),
            _ => Err(Error::Config(format!("unknown regressor {s:?}"))),
        }
    }
}

/// An ordered, duplicate-free list of regressors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegressorSet {
    pub name: String,
    pub regressors: Vec<Regressor>,
}

impl RegressorSet {
    pub fn new(name: &str, regressors: Vec<Regressor>) -> Result<Self> {
        if regressors.is_empty() {
            return Err(Error::Config(format!("regressor set {name:?} is empty")));
        }
        let mut seen = BTreeSet::new();
        for r in &regressors {
            if !seen.insert(*r) {
                return Err(Error::Config(format!(
                    "regressor set {name:?} repeats {}",
                    r.name()
                )));
            }
        }
        Ok(RegressorSet {
            name: name.to_string(),
            regressors,
        })
    }

    /// The three-variable benchmark set.
    pub fn baseline() -> Self {
        RegressorSet::new(
            "baseline",
            vec![Regressor::NfciLag, Regressor::DollarLag, Regressor::SlopeLag],
        )
        .expect("static")
    }

    pub fn names(&self) -> Vec<String> {
        self.regressors.iter().map(|r| r.name().to_string()).collect()
    }
}

/// One panel of merged rows, column-major.
#[derive(Debug, Clone)]
pub struct PanelRows {
    pub key: PanelKey,
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    /// One column per regressor, aligned with `RegressionSample::regressor_names`.
    pub x: Vec<Vec<f64>>,
}

impl PanelRows {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Merged estimation sample: panels sorted by key, shared regressor layout.
#[derive(Debug, Clone)]
pub struct RegressionSample {
    pub regressor_names: Vec<String>,
    pub panels: Vec<PanelRows>,
}

impl RegressionSample {
    pub fn total_rows(&self) -> usize {
        self.panels.iter().map(PanelRows::len).sum()
    }

    pub fn panel(&self, key: PanelKey) -> Option<&PanelRows> {
        self.panels.iter().find(|p| p.key == key)
    }

    /// Distinct dates present in any panel, ascending.
    pub fn distinct_dates(&self) -> Vec<NaiveDate> {
        let mut set = BTreeSet::new();
        for p in &self.panels {
            set.extend(p.dates.iter().copied());
        }
        set.into_iter().collect()
    }
}

/// Merge bookkeeping for the manifest.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MergeReport {
    pub per_panel_rows: Vec<(String, usize)>,
    pub excluded_panels: Vec<String>,
    pub warnings: Vec<String>,
}

/// Inner-join each panel with the aligned states and assemble the design
/// columns for `spec`. Rows missing any required regressor are dropped;
/// panels left empty are excluded with a warning rather than failing the
/// run.
pub fn merge_panel_states(
    panels: &[CipPanel],
    states: &AlignedStates,
    spec: &RegressorSet,
    qend_window: u32,
) -> Result<(RegressionSample, MergeReport)> {
    let mut report = MergeReport::default();
    let mut out_panels = Vec::new();

    for panel in panels {
        // Quarter-end flags are defined on the panel's own observed dates.
        let qend = if spec.regressors.contains(&Regressor::QEndShort) {
            Some(quarter_end_flags(&panel.dates, qend_window, panel.key.tenor))
        } else {
            None
        };

        let mut rows = PanelRows {
            key: panel.key,
            dates: Vec::new(),
            y: Vec::new(),
            x: vec![Vec::new(); spec.regressors.len()],
        };
        'row: for (i, &date) in panel.dates.iter().enumerate() {
            let Some(si) = states.lookup(date) else {
                continue;
            };
            let mut values = Vec::with_capacity(spec.regressors.len());
            for r in &spec.regressors {
                let v = match r {
                    Regressor::NfciLag => states.nfci[si],
                    Regressor::DollarLag => states.dollar[si],
                    Regressor::SlopeLag => states.slope[si],
                    Regressor::VixLag => match states.vix[si] {
                        Some(v) => v,
                        None => continue 'row,
                    },
                    Regressor::QEndShort => qend.as_ref().expect("computed above")[i],
                };
                values.push(v);
            }
            rows.dates.push(date);
            rows.y.push(panel.cip[i]);
            for (col, v) in rows.x.iter_mut().zip(values) {
                col.push(v);
            }
        }

        if rows.is_empty() {
            report
                .warnings
                .push(format!("panel {} has no rows after the state join; excluded", panel.key));
            report.excluded_panels.push(panel.key.to_string());
        } else {
            report.per_panel_rows.push((panel.key.to_string(), rows.len()));
            out_panels.push(rows);
        }
    }

    if out_panels.is_empty() {
        return Err(Error::Data(format!(
            "spec {:?}: every panel is empty after the state join",
            spec.name
        )));
    }

    Ok((
        RegressionSample {
            regressor_names: spec.names(),
            panels: out_panels,
        },
        report,
    ))
}
