//! Deterministic synthetic data used by the test suite and benchmarks.
//!
//! The generator is a 64-bit LCG with Box-Muller normals so that fixture
//! series can be reproduced exactly by external tooling; reference
//! statistics frozen into the tests were computed from the same stream.

use chrono::{Datelike, NaiveDate, Weekday};

use crate::ingest::{CipObservation, DailySeries};
use crate::types::{Currency, PanelKey, Tenor};

const LCG_A: u64 = 6364136223846793005;
const LCG_C: u64 = 1442695040888963407;

/// Deterministic generator; same constants and draw order as the
/// reference implementation used to freeze oracle values.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(LCG_A).wrapping_add(LCG_C);
        self.state
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller (cosine branch, two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.uniform();
        let u2 = self.uniform();
        while u1 <= 0.0 {
            u1 = self.uniform();
        }
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, bound).
    pub fn below(&mut self, bound: u64) -> u64 {
        self.next_u64() % bound
    }
}

/// Gaussian random walk of length `n`.
pub fn random_walk(rng: &mut Lcg, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut level = 0.0;
    for _ in 0..n {
        level += rng.normal();
        out.push(level);
    }
    out
}

/// AR(1) series with innovation scale `sigma`, started at zero.
pub fn ar1(rng: &mut Lcg, n: usize, rho: f64, sigma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for i in 0..n {
        let v = if i == 0 {
            0.0
        } else {
            rho * prev + sigma * rng.normal()
        };
        out.push(v);
        prev = v;
    }
    out
}

/// Business days (Mon-Fri) from `start`, `n` of them.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if d.weekday() != Weekday::Sat && d.weekday() != Weekday::Sun {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

/// A complete synthetic input set: state series, an optional VIX series,
/// and a CIP panel whose response loads on the lagged states with known
/// coefficients plus AR(1) noise.
pub struct Fixture {
    pub nfci: DailySeries,
    pub dollar: DailySeries,
    pub dgs10: DailySeries,
    pub dgs2: DailySeries,
    pub vix: DailySeries,
    pub observations: Vec<CipObservation>,
    /// True slope coefficients (nfci, dollar, slope) shared by all panels.
    pub true_betas: [f64; 3],
}

/// Panel layout for fixtures: which panels exist and their intercepts.
pub struct FixtureSpec {
    pub currencies: Vec<Currency>,
    pub tenors: Vec<Tenor>,
    pub days: usize,
    pub start: NaiveDate,
    pub noise_rho: f64,
    pub noise_sigma: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            currencies: vec![Currency::Aud, Currency::Eur, Currency::Jpy],
            tenors: vec![
                Tenor::parse("0.25").unwrap(),
                Tenor::parse("2").unwrap(),
                Tenor::parse("10").unwrap(),
            ],
            days: 1500,
            start: NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(),
            noise_rho: 0.5,
            noise_sigma: 4.0,
        }
    }
}

pub fn fixture(seed: u64, spec: &FixtureSpec) -> Fixture {
    let mut rng = Lcg::new(seed);
    let days = business_days(spec.start, spec.days);

    // Persistent daily state processes.
    let nfci_path = ar1(&mut rng, spec.days, 0.98, 0.08);
    let dollar_path: Vec<f64> = ar1(&mut rng, spec.days, 0.995, 0.4)
        .iter()
        .map(|v| 110.0 + v)
        .collect();
    let dgs10_path: Vec<f64> = ar1(&mut rng, spec.days, 0.99, 0.05)
        .iter()
        .map(|v| 2.5 + v)
        .collect();
    let dgs2_path: Vec<f64> = ar1(&mut rng, spec.days, 0.99, 0.05)
        .iter()
        .map(|v| 1.2 + v)
        .collect();
    let vix_path: Vec<f64> = ar1(&mut rng, spec.days, 0.95, 1.2)
        .iter()
        .map(|v| 18.0 + v)
        .collect();

    // NFCI prints weekly (Fridays); dollar index occasionally missing.
    let mut nfci = DailySeries::empty("NFCI");
    for (i, d) in days.iter().enumerate() {
        if d.weekday() == Weekday::Fri {
            nfci.push(*d, nfci_path[i]);
        }
    }
    let mut dollar = DailySeries::empty("DTWEXBGS");
    for (i, d) in days.iter().enumerate() {
        if rng.below(25) != 0 {
            dollar.push(*d, dollar_path[i]);
        }
    }
    let mut dgs10 = DailySeries::empty("DGS10");
    let mut dgs2 = DailySeries::empty("DGS2");
    let mut vix = DailySeries::empty("VIXCLS");
    for (i, d) in days.iter().enumerate() {
        dgs10.push(*d, dgs10_path[i]);
        dgs2.push(*d, dgs2_path[i]);
        vix.push(*d, vix_path[i]);
    }

    // Lagged states as the pipeline will reconstruct them: previous
    // business day for daily series, latest strictly-earlier Friday print
    // for NFCI.
    let true_betas = [20.0, -0.8, 9.0];
    let mut observations = Vec::new();
    for &currency in &spec.currencies {
        for &tenor in &spec.tenors {
            let key = PanelKey::new(currency, tenor);
            let intercept = -30.0 + 7.0 * (key.currency as u8 as f64) + 2.0 * tenor.years();
            let noise = ar1(&mut rng, spec.days, spec.noise_rho, spec.noise_sigma);
            let mut last_print: Option<f64> = None;
            for i in 1..spec.days {
                // walk the weekly print pointer
                if days[i - 1].weekday() == Weekday::Fri {
                    last_print = Some(nfci_path[i - 1]);
                }
                let Some(nfci_lag) = last_print else { continue };
                let dollar_lag = dollar_path[i - 1];
                let slope_lag = dgs10_path[i - 1] - dgs2_path[i - 1];
                let y = intercept
                    + true_betas[0] * nfci_lag
                    + true_betas[1] * dollar_lag
                    + true_betas[2] * slope_lag
                    + noise[i];
                observations.push(CipObservation {
                    currency,
                    tenor,
                    date: days[i],
                    cip_bps: y,
                });
            }
        }
    }

    Fixture {
        nfci,
        dollar,
        dgs10,
        dgs2,
        vix,
        observations,
        true_betas,
    }
}

/// Serialize a fixture to FRED-style CSV inputs under `dir` and return the
/// five file paths (nfci, dollar, dgs10, dgs2, vix, cip panel).
pub fn write_fixture_csvs(fx: &Fixture, dir: &std::path::Path) -> std::io::Result<[std::path::PathBuf; 6]> {
    use std::io::Write;
    let series = [
        ("nfci.csv", &fx.nfci),
        ("dollar.csv", &fx.dollar),
        ("dgs10.csv", &fx.dgs10),
        ("dgs2.csv", &fx.dgs2),
        ("vix.csv", &fx.vix),
    ];
    let mut paths = Vec::new();
    for (name, s) in series {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "DATE,VALUE")?;
        for (d, v) in s.iter() {
            writeln!(f, "{d},{v}")?;
        }
        paths.push(path);
    }
    let panel_path = dir.join("cip_panel.csv");
    let mut f = std::fs::File::create(&panel_path)?;
    writeln!(f, "date,currency,tenor_years,cip_govt_bps")?;
    for o in &fx.observations {
        writeln!(f, "{},{},{},{}", o.date, o.currency, o.tenor, o.cip_bps)?;
    }
    paths.push(panel_path);
    Ok([
        paths[0].clone(),
        paths[1].clone(),
        paths[2].clone(),
        paths[3].clone(),
        paths[4].clone(),
        paths[5].clone(),
    ])
}
