//! Synthetic firm-year panels and the regression design built from them.
//!
//! Bribes are generated as an exact linear function of the design columns
//! (with scenario-dependent structural coefficients) plus customary
//! transfers, firm effects and noise, so the within estimator is correctly
//! specified by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::equilibrium::Scenario;
use crate::error::{Error, Result};

/// Generator settings. Money is in USD, times in days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub seed: u64,
    pub n_firms: usize,
    pub years: Vec<i32>,
    /// Probability that a firm is N-type.
    pub theta: f64,
    pub dispute_prob: f64,
    pub papers_mean: f64,
    pub workers_mean: f64,
    pub workers_sd: f64,
    pub workers_min: u32,
    pub capital_mean: f64,
    pub capital_sigma: f64,
    pub f_l_mean: f64,
    pub f_l_sigma: f64,
    pub t_min_mean: f64,
    pub t_min_sigma: f64,
    /// Log-scale year-to-year jitter of capital, legal fee and minimum time.
    pub year_sigma: f64,
    pub delta_pi_mean: f64,
    pub delta_pi_sigma: f64,
    pub delta_pi_year_sigma: f64,
    /// Moments of the P-type delay `sqrt(c / s_P) - t_min`.
    pub delay_mean: f64,
    pub delay_sd: f64,
    /// N-type time is the P-type time scaled by `1 + u`, `u ~ U[lo, hi]`.
    pub n_markup_lo: f64,
    pub n_markup_hi: f64,
    pub contest_win_prob: f64,
    pub ns_delta_pi_coef: f64,
    pub lambda_true: f64,
    pub g_true: f64,
    pub s_p_true: f64,
    pub s_n_true: f64,
    /// Whether the N-type pays an extortionary bribe for its delay.
    pub n_pays_delay: bool,
    pub beta_pi_n: f64,
    pub beta_m: f64,
    pub beta_fl: f64,
    pub beta_tmin: f64,
    pub beta_ap: f64,
    pub beta_apd: f64,
    pub intercept: f64,
    /// Effects of every year after the first, relative to the first.
    pub year_effects: Vec<f64>,
    /// Per-worker standard deviations.
    pub firm_effect_sd: f64,
    pub noise_sd: f64,
    pub rep_noise_sd: f64,
    pub truncation_limit: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            seed: 42,
            n_firms: 500,
            years: vec![2012, 2013, 2014],
            theta: 0.30,
            dispute_prob: 0.220,
            papers_mean: 8.1,
            workers_mean: 42.7,
            workers_sd: 83.9,
            workers_min: 1,
            capital_mean: 554_300.0,
            capital_sigma: 1.0,
            f_l_mean: 40_981.0,
            f_l_sigma: 0.8,
            t_min_mean: 11.6,
            t_min_sigma: 0.5,
            year_sigma: 0.05,
            delta_pi_mean: 423_300.0,
            delta_pi_sigma: 0.9,
            delta_pi_year_sigma: 0.3,
            delay_mean: 4.5,
            delay_sd: 4.0,
            n_markup_lo: 0.2,
            n_markup_hi: 2.0,
            contest_win_prob: 1.0,
            ns_delta_pi_coef: 1.0,
            lambda_true: 0.039,
            g_true: 8.93,
            s_p_true: 8.80,
            s_n_true: 2.0,
            n_pays_delay: false,
            beta_pi_n: 0.0,
            beta_m: 0.0,
            beta_fl: 0.0,
            beta_tmin: 0.0,
            beta_ap: 27.6,
            beta_apd: 14.693,
            intercept: 35.9,
            year_effects: vec![0.0, 0.0],
            firm_effect_sd: 10.0,
            noise_sd: 5.0,
            rep_noise_sd: 6.0,
            truncation_limit: 0.05,
        }
    }
}

impl Calibration {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cal: Calibration =
            toml::from_str(text).map_err(|e| Error::Config(format!("calibration: {e}")))?;
        cal.validate()?;
        Ok(cal)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Same calibration with every noise source switched off.
    pub fn noiseless(&self) -> Self {
        Calibration {
            firm_effect_sd: 0.0,
            noise_sd: 0.0,
            rep_noise_sd: 0.0,
            ..self.clone()
        }
    }

    /// True coefficient of every design column under `scenario`, keyed by column name.
    pub fn true_coefficients(&self, scenario: Scenario) -> BTreeMap<String, f64> {
        let swc = scenario == Scenario::SwC;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), v);
        };
        put(col::PI_N, self.beta_pi_n);
        put(
            col::ONE_NS,
            if scenario == Scenario::NS {
                self.ns_delta_pi_coef
            } else {
                0.0
            },
        );
        put(
            col::SWC_LAMBDA,
            if swc {
                self.lambda_true * self.contest_win_prob
            } else {
                0.0
            },
        );
        put(col::M, self.beta_m);
        put(col::FL, self.beta_fl);
        put(col::TMIN, self.beta_tmin);
        put(
            col::NEG_S_N_1B,
            if self.n_pays_delay {
                -self.s_n_true
            } else {
                0.0
            },
        );
        put(col::NEG_S_P, -self.s_p_true);
        put(col::SWC_G, if swc { self.g_true } else { 0.0 });
        for (y, e) in self.years.iter().skip(1).zip(&self.year_effects) {
            put(&year_column(*y), *e);
        }
        put(col::AP, self.beta_ap);
        put(col::APD, self.beta_apd);
        put(col::INTERCEPT, self.intercept);
        m
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCalibration(m));
        for (name, v) in [
            ("theta", self.theta),
            ("dispute_prob", self.dispute_prob),
            ("contest_win_prob", self.contest_win_prob),
            ("truncation_limit", self.truncation_limit),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        if self.n_firms < 2 {
            return bad(format!("n_firms = {} must be at least 2", self.n_firms));
        }
        if self.years.len() < 2 {
            return bad("at least 2 years are required for within-firm variation".into());
        }
        if self.years.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "years {:?} must be strictly increasing",
                self.years
            ));
        }
        if self.year_effects.len() != self.years.len() - 1 {
            return bad(format!(
                "year_effects has {} entries, expected {} (one per year after the first)",
                self.year_effects.len(),
                self.years.len() - 1
            ));
        }
        for (name, v) in [
            ("firm_effect_sd", self.firm_effect_sd),
            ("noise_sd", self.noise_sd),
            ("rep_noise_sd", self.rep_noise_sd),
            ("capital_sigma", self.capital_sigma),
            ("f_l_sigma", self.f_l_sigma),
            ("t_min_sigma", self.t_min_sigma),
            ("year_sigma", self.year_sigma),
            ("delta_pi_sigma", self.delta_pi_sigma),
            ("delta_pi_year_sigma", self.delta_pi_year_sigma),
            ("workers_sd", self.workers_sd),
            ("delay_sd", self.delay_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("papers_mean", self.papers_mean - 1.0),
            ("workers_mean", self.workers_mean),
            ("capital_mean", self.capital_mean),
            ("f_l_mean", self.f_l_mean),
            ("t_min_mean", self.t_min_mean),
            ("delta_pi_mean", self.delta_pi_mean),
            ("delay_mean", self.delay_mean),
            ("s_p_true", self.s_p_true),
            ("s_n_true", self.s_n_true),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} out of range (must exceed its lower bound)"));
            }
        }
        if self.workers_min < 1 {
            return bad("workers_min must be at least 1".into());
        }
        if self.s_p_true <= self.s_n_true {
            return bad("s_p_true must exceed s_n_true".into());
        }
        if !(0.0 <= self.n_markup_lo && self.n_markup_lo < self.n_markup_hi) {
            return bad("need 0 <= n_markup_lo < n_markup_hi".into());
        }
        let coefs = [
            self.ns_delta_pi_coef,
            self.lambda_true,
            self.g_true,
            self.beta_pi_n,
            self.beta_m,
            self.beta_fl,
            self.beta_tmin,
            self.beta_ap,
            self.beta_apd,
            self.intercept,
        ];
        if coefs
            .iter()
            .chain(&self.year_effects)
            .any(|x| !x.is_finite())
        {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }
}

/// One firm-year observation, in CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirmYearRecord {
    pub firm_id: u64,
    pub year: i32,
    #[serde(with = "flag")]
    pub p_type: bool,
    pub reported_profit: f64,
    pub delta_pi: f64,
    pub capital: f64,
    pub f_l: f64,
    pub t_min: f64,
    pub workers: u32,
    pub papers: u32,
    #[serde(with = "flag")]
    pub dispute: bool,
    pub delay: f64,
    pub bribe: f64,
    pub rep_bribe: f64,
}

mod flag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(D::Error::custom(format!("flag must be 0 or 1, got {x}"))),
        }
    }
}

pub const CSV_HEADER: [&str; 14] = [
    "firm_id",
    "year",
    "p_type",
    "reported_profit",
    "delta_pi",
    "capital",
    "f_l",
    "t_min",
    "workers",
    "papers",
    "dispute",
    "delay",
    "bribe",
    "rep_bribe",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    pub records: Vec<FirmYearRecord>,
    /// Generating scenario; unknown for ingested data.
    pub scenario: Option<Scenario>,
    pub truncated_bribe: usize,
    pub truncated_rep_bribe: usize,
}

impl PanelDataset {
    pub fn from_records(records: Vec<FirmYearRecord>) -> Self {
        PanelDataset {
            records,
            scenario: None,
            truncated_bribe: 0,
            truncated_rep_bribe: 0,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        for (i, want) in CSV_HEADER.iter().enumerate() {
            match headers.get(i) {
                Some(h) if h == *want => {}
                Some(h) => {
                    let message = if headers.iter().any(|x| x == *want) {
                        format!("column `{want}` out of order (found `{h}`)")
                    } else {
                        format!("missing column `{want}` (found `{h}`)")
                    };
                    return Err(Error::Schema {
                        location: format!("header column {}", i + 1),
                        message,
                    });
                }
                None => {
                    return Err(Error::Schema {
                        location: format!("header column {}", i + 1),
                        message: format!("missing column `{want}`"),
                    })
                }
            }
        }
        if headers.len() > CSV_HEADER.len() {
            return Err(Error::Schema {
                location: format!("header column {}", CSV_HEADER.len() + 1),
                message: format!("unexpected column `{}`", &headers[CSV_HEADER.len()]),
            });
        }
        let mut records = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let location = |col: Option<usize>| {
                let c = col
                    .map(|j| format!(", column `{}`", CSV_HEADER[j]))
                    .unwrap_or_default();
                format!("data row {}{c}", i + 1)
            };
            let row = row.map_err(|e| Error::Schema {
                location: location(None),
                message: e.to_string(),
            })?;
            let rec = row
                .deserialize::<FirmYearRecord>(Some(&headers))
                .map_err(|e| Error::Schema {
                    location: location(first_bad_field(&row)),
                    message: e.to_string(),
                })?;
            records.push(rec);
        }
        Ok(PanelDataset::from_records(records))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn n_firms(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.firm_id)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Index of the first field that does not parse as its column's type.
fn first_bad_field(row: &csv::StringRecord) -> Option<usize> {
    (0..CSV_HEADER.len()).find(|&j| {
        let v = row.get(j).unwrap_or("").trim();
        match CSV_HEADER[j] {
            "firm_id" => v.parse::<u64>().is_err(),
            "year" => v.parse::<i32>().is_err(),
            "workers" | "papers" => v.parse::<u32>().is_err(),
            "p_type" | "dispute" => !matches!(v, "0" | "1"),
            _ => v.parse::<f64>().is_err(),
        }
    })
}

fn lognormal_from_moments(mean: f64, sd: f64) -> LogNormal<f64> {
    let s2 = (1.0 + (sd / mean).powi(2)).ln();
    LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt()).expect("valid lognormal")
}

fn lognormal_from_mean(mean: f64, sigma: f64) -> LogNormal<f64> {
    LogNormal::new(mean.ln() - 0.5 * sigma * sigma, sigma).expect("valid lognormal")
}

struct Draw {
    rec: FirmYearRecord,
    firm: usize,
    year_idx: usize,
    won: bool,
    eps: f64,
    eta: f64,
}

/// Simulates a panel under `scenario`.
///
/// All random draws are made in a fixed order independent of the scenario, so
/// panels from the same seed differ across scenarios only in their bribes.
pub fn generate_panel(cal: &Calibration, scenario: Scenario) -> Result<PanelDataset> {
    cal.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cal.seed);
    let workers_d = lognormal_from_moments(cal.workers_mean, cal.workers_sd);
    let capital_d = lognormal_from_mean(cal.capital_mean, cal.capital_sigma);
    let f_l_d = lognormal_from_mean(cal.f_l_mean, cal.f_l_sigma);
    let t_min_d = lognormal_from_mean(cal.t_min_mean, cal.t_min_sigma);
    let jitter_d = lognormal_from_mean(1.0, cal.year_sigma);
    let dpi_d = lognormal_from_mean(cal.delta_pi_mean, cal.delta_pi_sigma);
    let dpi_year_d = lognormal_from_mean(1.0, cal.delta_pi_year_sigma);
    let delay_d = lognormal_from_moments(cal.delay_mean, cal.delay_sd);
    let papers_d = Poisson::new(cal.papers_mean - 1.0).expect("positive rate");
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut draws = Vec::with_capacity(cal.n_firms * cal.years.len());
    let mut firm_effects = Vec::with_capacity(cal.n_firms);
    for firm in 0..cal.n_firms {
        let p_type = rng.gen::<f64>() >= cal.theta;
        let workers = (workers_d.sample(&mut rng).round() as u32).max(cal.workers_min);
        let capital = capital_d.sample(&mut rng);
        let f_l = f_l_d.sample(&mut rng);
        let t_min = t_min_d.sample(&mut rng);
        let dpi = dpi_d.sample(&mut rng);
        firm_effects.push(cal.firm_effect_sd * std_normal.sample(&mut rng));
        for (year_idx, &year) in cal.years.iter().enumerate() {
            let capital = capital * jitter_d.sample(&mut rng);
            let f_l = f_l * jitter_d.sample(&mut rng);
            let t_min = t_min * jitter_d.sample(&mut rng);
            let delta_pi = dpi * dpi_year_d.sample(&mut rng);
            let dispute = rng.gen::<f64>() < cal.dispute_prob;
            let papers = 1 + papers_d.sample(&mut rng) as u32;
            // Processing cost c puts the P-type's time sqrt(c / s_P) at t_min + d.
            let d = delay_d.sample(&mut rng);
            let c = cal.s_p_true * (t_min + d).powi(2);
            let t_p = (c / cal.s_p_true).sqrt();
            let t_n = t_p * (1.0 + rng.gen_range(cal.n_markup_lo..cal.n_markup_hi));
            let reported_profit = capital + f_l + cal.s_n_true * t_n;
            let delay = if p_type || !dispute {
                t_p - t_min
            } else {
                t_n - t_min
            };
            let won = rng.gen::<f64>() < cal.contest_win_prob;
            let eps = std_normal.sample(&mut rng);
            let eta = std_normal.sample(&mut rng);
            draws.push(Draw {
                rec: FirmYearRecord {
                    firm_id: firm as u64 + 1,
                    year,
                    p_type,
                    reported_profit,
                    delta_pi: if p_type { delta_pi } else { 0.0 },
                    capital,
                    f_l,
                    t_min,
                    workers,
                    papers,
                    dispute,
                    delay,
                    bribe: 0.0,
                    rep_bribe: 0.0,
                },
                firm,
                year_idx,
                won,
                eps,
                eta,
            });
        }
    }
    // Centre firm effects so the reported constant is the calibrated intercept.
    let fe_mean = firm_effects.iter().sum::<f64>() / firm_effects.len() as f64;
    let truth = cal.true_coefficients(scenario);
    let beta = |k: &str| truth[k];
    let lambda_if_won = if scenario == Scenario::SwC {
        cal.lambda_true
    } else {
        0.0
    };

    let (mut trunc_b, mut trunc_r) = (0, 0);
    let mut records = Vec::with_capacity(draws.len());
    for d in draws {
        let mut r = d.rec;
        let x = RawColumns::of(&r);
        let w = f64::from(r.workers);
        let year_effect = if d.year_idx == 0 {
            0.0
        } else {
            cal.year_effects[d.year_idx - 1]
        };
        let structural = beta(col::PI_N) * x.pi_n
            + beta(col::ONE_NS) * x.dpi_p_disp
            + if d.won { lambda_if_won * x.dpi_p } else { 0.0 }
            + beta(col::M) * x.m_disp
            + beta(col::FL) * x.fl_disp
            + beta(col::TMIN) * x.tmin_disp
            + beta(col::NEG_S_N_1B) * x.m_n
            + beta(col::NEG_S_P) * x.m_p
            + beta(col::SWC_G) * x.n
            + beta(col::AP) * x.papers
            + beta(col::APD) * x.papers_disp;
        let customary = w * (cal.intercept + year_effect + firm_effects[d.firm] - fe_mean);
        let latent = structural + customary + w * cal.noise_sd * d.eps;
        let reported = latent + w * cal.rep_noise_sd * d.eta;
        if latent < 0.0 {
            trunc_b += 1;
        }
        if reported < 0.0 {
            trunc_r += 1;
        }
        r.bribe = latent.max(0.0);
        r.rep_bribe = reported.max(0.0);
        records.push(r);
    }
    let total = records.len();
    for count in [trunc_b, trunc_r] {
        let rate = count as f64 / total as f64;
        if rate > cal.truncation_limit {
            return Err(Error::ExcessTruncation {
                rate,
                limit: cal.truncation_limit,
                count,
                total,
            });
        }
    }
    Ok(PanelDataset {
        records,
        scenario: Some(scenario),
        truncated_bribe: trunc_b,
        truncated_rep_bribe: trunc_r,
    })
}

/// Design column names, which double as coefficient names.
pub mod col {
    pub const PI_N: &str = "beta_pi_n";
    pub const ONE_NS: &str = "one_ns";
    pub const SWC_LAMBDA: &str = "swc_lambda";
    pub const M: &str = "beta_m";
    pub const FL: &str = "beta_fl";
    pub const TMIN: &str = "beta_tmin";
    pub const NEG_S_N_1B: &str = "neg_s_n_1b";
    pub const NEG_S_P: &str = "neg_s_p";
    pub const SWC_G: &str = "swc_g";
    pub const AP: &str = "beta_ap";
    pub const APD: &str = "beta_apd";
    pub const INTERCEPT: &str = "intercept";
}

pub fn year_column(year: i32) -> String {
    format!("beta_{year}")
}

/// Regressors before division by workers.
#[derive(Clone, Copy, Debug)]
struct RawColumns {
    pi_n: f64,
    dpi_p_disp: f64,
    dpi_p: f64,
    m_disp: f64,
    fl_disp: f64,
    tmin_disp: f64,
    m_n: f64,
    m_p: f64,
    n: f64,
    papers: f64,
    papers_disp: f64,
}

impl RawColumns {
    fn of(r: &FirmYearRecord) -> Self {
        let p = f64::from(u8::from(r.p_type));
        let disp = f64::from(u8::from(r.dispute));
        let papers = f64::from(r.papers);
        RawColumns {
            pi_n: r.reported_profit,
            dpi_p_disp: r.delta_pi * p * disp,
            dpi_p: r.delta_pi * p,
            m_disp: r.capital * disp,
            fl_disp: r.f_l * disp,
            tmin_disp: r.t_min * disp,
            m_n: r.delay * (1.0 - p) * disp,
            m_p: r.delay * p * disp,
            n: r.delay * p,
            papers,
            papers_disp: papers * disp,
        }
    }
}

/// Per-worker regressors of one firm-year.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignRow {
    pub firm_id: u64,
    pub year: i32,
    pub pi_n: f64,
    pub dpi_p_disp: f64,
    pub dpi_p: f64,
    pub m_disp: f64,
    pub fl_disp: f64,
    pub tmin_disp: f64,
    pub m_n: f64,
    pub m_p: f64,
    pub n: f64,
    /// Indicators for every panel year after the first.
    pub year_dummies: Vec<f64>,
    pub papers: f64,
    pub papers_disp: f64,
    pub response: f64,
}

impl DesignRow {
    pub fn new(
        rec: &FirmYearRecord,
        row: usize,
        later_years: &[i32],
        response: ResponseChoice,
    ) -> Result<Self> {
        if rec.workers == 0 {
            return Err(Error::ZeroWorkers {
                row,
                firm_id: rec.firm_id,
                year: rec.year,
            });
        }
        let w = f64::from(rec.workers);
        let x = RawColumns::of(rec);
        Ok(DesignRow {
            firm_id: rec.firm_id,
            year: rec.year,
            pi_n: x.pi_n / w,
            dpi_p_disp: x.dpi_p_disp / w,
            dpi_p: x.dpi_p / w,
            m_disp: x.m_disp / w,
            fl_disp: x.fl_disp / w,
            tmin_disp: x.tmin_disp / w,
            m_n: x.m_n / w,
            m_p: x.m_p / w,
            n: x.n / w,
            year_dummies: later_years
                .iter()
                .map(|y| if *y == rec.year { 1.0 } else { 0.0 })
                .collect(),
            papers: x.papers / w,
            papers_disp: x.papers_disp / w,
            response: match response {
                ResponseChoice::Bribe => rec.bribe,
                ResponseChoice::RepBribe => rec.rep_bribe,
            } / w,
        })
    }

    /// Named columns in specification order (intercept excluded).
    pub fn columns(&self, later_years: &[i32]) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = [
            (col::PI_N, self.pi_n),
            (col::ONE_NS, self.dpi_p_disp),
            (col::SWC_LAMBDA, self.dpi_p),
            (col::M, self.m_disp),
            (col::FL, self.fl_disp),
            (col::TMIN, self.tmin_disp),
            (col::NEG_S_N_1B, self.m_n),
            (col::NEG_S_P, self.m_p),
            (col::SWC_G, self.n),
        ]
        .into_iter()
        .map(|(k, x)| (k.to_string(), x))
        .collect();
        for (y, d) in later_years.iter().zip(&self.year_dummies) {
            v.push((year_column(*y), *d));
        }
        v.push((col::AP.to_string(), self.papers));
        v.push((col::APD.to_string(), self.papers_disp));
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseChoice {
    Bribe,
    RepBribe,
}

/// Source of a 0/1 flag used in interaction terms.
#[derive(Clone, Debug, PartialEq)]
pub enum FlagSource {
    /// Middle and top terciles of reported profit (two flags; bottom is the base).
    ProfitTercile,
    AboveMedianProfit,
    /// Firm-level indicator supplied by the caller, e.g. legal status.
    Firms {
        name: String,
        firms: BTreeSet<u64>,
    },
}

/// Interacts each listed base column with every flag of `source`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionRecipe {
    pub source: FlagSource,
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpecVariant {
    /// Indirect bribe measure, full regressor set.
    Em11,
    /// Direct (reported) bribe measure.
    Em12,
    /// Drops the unreported-profit regressors.
    Em13,
    Custom {
        base: Box<SpecVariant>,
        recipes: Vec<InteractionRecipe>,
    },
}

impl SpecVariant {
    pub fn default_response(&self) -> ResponseChoice {
        match self {
            SpecVariant::Em12 => ResponseChoice::RepBribe,
            SpecVariant::Custom { base, .. } => base.default_response(),
            _ => ResponseChoice::Bribe,
        }
    }

    fn dropped(&self) -> &'static [&'static str] {
        match self {
            SpecVariant::Em13 => &[col::ONE_NS, col::SWC_LAMBDA],
            SpecVariant::Custom { base, .. } => base.dropped(),
            _ => &[],
        }
    }
}

impl std::str::FromStr for SpecVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['.', '_', '-'], "").as_str() {
            "em11" => Ok(SpecVariant::Em11),
            "em12" => Ok(SpecVariant::Em12),
            "em13" => Ok(SpecVariant::Em13),
            _ => Err(Error::Config(format!(
                "unknown specification `{s}` (expected EM1.1, EM1.2 or EM1.3)"
            ))),
        }
    }
}

impl fmt::Display for SpecVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecVariant::Em11 => f.write_str("EM1.1"),
            SpecVariant::Em12 => f.write_str("EM1.2"),
            SpecVariant::Em13 => f.write_str("EM1.3"),
            SpecVariant::Custom { base, recipes } => {
                write!(f, "{base}+{} interaction recipe(s)", recipes.len())
            }
        }
    }
}

/// Regression design: per-worker regressors (no intercept column), response and cluster keys.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub x: nalgebra::DMatrix<f64>,
    pub y: nalgebra::DVector<f64>,
    pub firm_ids: Vec<u64>,
    pub years: Vec<i32>,
}

impl Design {
    pub fn column(&self, name: &str) -> Option<nalgebra::DVectorView<'_, f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.x.column(j))
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn flags(source: &FlagSource, panel: &PanelDataset) -> Vec<(String, Vec<f64>)> {
    let mut profits: Vec<f64> = panel.records.iter().map(|r| r.reported_profit).collect();
    profits.sort_by(f64::total_cmp);
    let ind = |f: &dyn Fn(&FirmYearRecord) -> bool| -> Vec<f64> {
        panel
            .records
            .iter()
            .map(|r| f64::from(u8::from(f(r))))
            .collect()
    };
    match source {
        FlagSource::ProfitTercile => {
            let (q1, q2) = (quantile(&profits, 1.0 / 3.0), quantile(&profits, 2.0 / 3.0));
            vec![
                (
                    "tercile2".into(),
                    ind(&|r| r.reported_profit > q1 && r.reported_profit <= q2),
                ),
                ("tercile3".into(), ind(&|r| r.reported_profit > q2)),
            ]
        }
        FlagSource::AboveMedianProfit => {
            let med = quantile(&profits, 0.5);
            vec![("above_median".into(), ind(&|r| r.reported_profit > med))]
        }
        FlagSource::Firms { name, firms } => {
            vec![(name.clone(), ind(&|r| firms.contains(&r.firm_id)))]
        }
    }
}

/// Builds the regression design for `variant`.
///
/// Year dummies cover every year in the panel after the earliest.
pub fn construct_design(
    panel: &PanelDataset,
    response: ResponseChoice,
    variant: &SpecVariant,
) -> Result<Design> {
    if panel.records.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let years: BTreeSet<i32> = panel.records.iter().map(|r| r.year).collect();
    let later: Vec<i32> = years.into_iter().skip(1).collect();
    let rows = panel
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| DesignRow::new(r, i + 1, &later, response))
        .collect::<Result<Vec<_>>>()?;
    let dropped = variant.dropped();
    let mut names: Vec<String> = rows[0]
        .columns(&later)
        .into_iter()
        .map(|(k, _)| k)
        .filter(|k| !dropped.contains(&k.as_str()))
        .collect();
    let mut cols: Vec<Vec<f64>> = names
        .iter()
        .map(|name| {
            rows.iter()
                .map(|r| {
                    r.columns(&later)
                        .into_iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| v)
                        .expect("column present")
                })
                .collect()
        })
        .collect();
    if let SpecVariant::Custom { recipes, .. } = variant {
        for recipe in recipes {
            for (flag_name, flag) in flags(&recipe.source, panel) {
                for base in &recipe.columns {
                    let j = names.iter().position(|n| n == base).ok_or_else(|| {
                        Error::Config(format!("interaction base column `{base}` not in design"))
                    })?;
                    let v: Vec<f64> = cols[j].iter().zip(&flag).map(|(a, b)| a * b).collect();
                    names.push(format!("{base}*{flag_name}"));
                    cols.push(v);
                }
            }
        }
    }
    let distinct: BTreeSet<&String> = names.iter().collect();
    if distinct.len() != names.len() {
        return Err(Error::Config("duplicate regressor names in design".into()));
    }
    let n = rows.len();
    let x = nalgebra::DMatrix::from_fn(n, names.len(), |i, j| cols[j][i]);
    Ok(Design {
        names,
        x,
        y: nalgebra::DVector::from_iterator(n, rows.iter().map(|r| r.response)),
        firm_ids: rows.iter().map(|r| r.firm_id).collect(),
        years: rows.iter().map(|r| r.year).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableSummary {
    pub name: &'static str,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeShare {
    pub year: i32,
    pub firms: usize,
    /// Percent of firms with hidden profit.
    pub p_share: f64,
    pub n_share: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanelSummary {
    pub variables: Vec<VariableSummary>,
    pub shares: Vec<TypeShare>,
}

impl PanelSummary {
    pub fn get(&self, name: &str) -> Option<&VariableSummary> {
        self.variables.iter().find(|v| v.name == name)
    }
}

impl fmt::Display for PanelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>7} {:>14} {:>14} {:>14} {:>14}",
            "variable", "n", "mean", "sd", "min", "max"
        )?;
        for v in &self.variables {
            writeln!(
                f,
                "{:<16} {:>7} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
                v.name, v.n, v.mean, v.sd, v.min, v.max
            )?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:<6} {:>7} {:>10} {:>10}",
            "year", "firms", "P-type %", "N-type %"
        )?;
        for s in &self.shares {
            writeln!(
                f,
                "{:<6} {:>7} {:>10.2} {:>10.2}",
                s.year, s.firms, s.p_share, s.n_share
            )?;
        }
        Ok(())
    }
}

/// Sample moments of every variable, plus type shares per year.
///
/// Standard deviations use the `n - 1` divisor and are 0 for a single record.
pub fn summarize_panel(panel: &PanelDataset) -> Result<PanelSummary> {
    if panel.records.is_empty() {
        return Err(Error::EmptyPanel);
    }
    type Getter = fn(&FirmYearRecord) -> f64;
    let vars: [(&'static str, Getter); 13] = [
        ("p_type", |r| f64::from(u8::from(r.p_type))),
        ("reported_profit", |r| r.reported_profit),
        ("delta_pi", |r| r.delta_pi),
        ("capital", |r| r.capital),
        ("f_l", |r| r.f_l),
        ("t_min", |r| r.t_min),
        ("workers", |r| f64::from(r.workers)),
        ("papers", |r| f64::from(r.papers)),
        ("dispute", |r| f64::from(u8::from(r.dispute))),
        ("delay", |r| r.delay),
        ("bribe", |r| r.bribe),
        ("rep_bribe", |r| r.rep_bribe),
        ("bribe_gap", |r| r.rep_bribe - r.bribe),
    ];
    let n = panel.records.len();
    let variables = vars
        .iter()
        .map(|(name, get)| {
            let xs: Vec<f64> = panel.records.iter().map(get).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            VariableSummary {
                name,
                n,
                mean,
                sd,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let mut by_year: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for r in &panel.records {
        let e = by_year.entry(r.year).or_default();
        e.0 += 1;
        e.1 += usize::from(r.p_type);
    }
    let shares = by_year
        .into_iter()
        .map(|(year, (firms, p))| {
            let p_share = 100.0 * p as f64 / firms as f64;
            TypeShare {
                year,
                firms,
                p_share,
                n_share: 100.0 - p_share,
            }
        })
        .collect();
    Ok(PanelSummary { variables, shares })
}
