//! Sign-restriction tests that map fitted coefficients to an informational scenario.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::equilibrium::Scenario;
use crate::error::{Error, Result};
use crate::estimator::{fmt_sig, FitResult};
use crate::panelgen::col;

/// Power used for minimum detectable effects.
pub const MDE_POWER: f64 = 0.80;

/// Magnitudes an SC verdict must be able to rule out before it is reported without a warning.
pub const REFERENCE_EFFECTS: [(&str, f64); 3] = [
    (col::ONE_NS, 1.0),
    (col::SWC_LAMBDA, 0.039),
    (col::SWC_G, 8.929),
];

fn z(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

fn sf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sf(x)
}

/// Estimates and standard errors by coefficient name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoefficientTable {
    pub entries: BTreeMap<String, (f64, f64)>,
}

impl CoefficientTable {
    pub fn insert(&mut self, name: &str, estimate: f64, se: f64) {
        self.entries.insert(name.to_string(), (estimate, se));
    }

    pub fn from_fit(fit: &FitResult) -> Self {
        let mut t = CoefficientTable::default();
        for c in fit.coefficients.iter().filter(|c| c.identified) {
            t.insert(&c.name, c.estimate, c.se);
        }
        t
    }

    /// Reads `name,estimate,se[,t]`. Rows with empty estimates are skipped.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rd.headers()?.clone();
        let find = |want: &str| {
            headers
                .iter()
                .position(|h| h == want)
                .ok_or_else(|| Error::Schema {
                    location: "header".into(),
                    message: format!("missing column `{want}`"),
                })
        };
        let (ni, ei, si) = (find("name")?, find("estimate")?, find("se")?);
        let mut t = CoefficientTable::default();
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let get = |j: usize| row.get(j).unwrap_or("");
            if get(ei).is_empty() {
                continue;
            }
            let parse = |j: usize, what: &str| {
                get(j).parse::<f64>().map_err(|e| Error::Schema {
                    location: format!("data row {}, column `{what}`", i + 1),
                    message: e.to_string(),
                })
            };
            t.insert(get(ni), parse(ei, "estimate")?, parse(si, "se")?);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    fn get(&self, name: &str) -> Result<(f64, f64)> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(name.to_string()))
    }
}

impl From<&FitResult> for CoefficientTable {
    fn from(fit: &FitResult) -> Self {
        Self::from_fit(fit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Zero,
    Negative,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => ">0",
            Sign::Zero => "=0",
            Sign::Negative => "<0",
        })
    }
}

/// Outcome of testing one coefficient at level `alpha`.
///
/// `>0` and `<0` are one-sided rejections of zero. A coefficient that is not
/// significantly positive is `=0` when the two-sided test fails to reject, so
/// each coefficient falls in exactly one class.
pub fn sign_at(estimate: f64, se: f64, alpha: f64) -> Sign {
    let t = estimate / se;
    if t > z(1.0 - alpha) {
        Sign::Positive
    } else if t.abs() <= z(1.0 - alpha / 2.0) {
        Sign::Zero
    } else {
        Sign::Negative
    }
}

impl Sign {
    /// Whether a coefficient with t-statistic `t` meets this requirement at
    /// level `alpha`: one-sided for `>0` and `<0`, two-sided for `=0`.
    ///
    /// Unlike [`sign_at`], requirements can overlap: `z(1-a) < t <= z(1-a/2)`
    /// satisfies both `>0` and `=0`.
    pub fn holds(self, t: f64, alpha: f64) -> bool {
        match self {
            Sign::Positive => t > z(1.0 - alpha),
            Sign::Zero => t.abs() <= z(1.0 - alpha / 2.0),
            Sign::Negative => t < -z(1.0 - alpha),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionRecord {
    pub coefficient: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    /// Exclusive summary class at `alpha`; the verdict itself applies the
    /// test each scenario requires (see [`Sign::holds`]).
    pub observed: Sign,
    /// Smallest true effect detected with 80% power by the one-sided test.
    pub mde: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Scenario(Scenario),
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Scenario(s) => write!(f, "{s}"),
            Verdict::Inconclusive => f.write_str("inconclusive"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BriberyFlags {
    pub extortionary_present: bool,
    pub non_extortionary_present: bool,
    /// Set when the N-type delay coefficient is insignificant.
    pub n_type_caveat: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioVerdict {
    pub verdict: Verdict,
    pub alpha: f64,
    pub restrictions: Vec<RestrictionRecord>,
    /// Required class of each discriminating coefficient, per scenario.
    pub patterns: Vec<(Scenario, [Sign; 3])>,
    pub bribery: Option<BriberyFlags>,
    /// An SC verdict whose tests could miss effects of the reference size.
    pub underpowered: bool,
    pub warnings: Vec<String>,
}

/// Required classes of (one_ns, swc_lambda, swc_g) for each scenario.
pub fn scenario_pattern(s: Scenario) -> [Sign; 3] {
    use Sign::*;
    match s {
        Scenario::NS => [Positive, Zero, Zero],
        Scenario::SC => [Zero, Zero, Zero],
        Scenario::SwC => [Zero, Positive, Positive],
    }
}

fn record(table: &CoefficientTable, name: &str, alpha: f64) -> Result<RestrictionRecord> {
    let (estimate, se) = table.get(name)?;
    if se.is_nan() || se <= 0.0 || !estimate.is_finite() {
        return Err(Error::Config(format!(
            "coefficient `{name}` needs a finite estimate and a positive standard error"
        )));
    }
    Ok(RestrictionRecord {
        coefficient: name.to_string(),
        estimate,
        se,
        t: estimate / se,
        observed: sign_at(estimate, se, alpha),
        mde: (z(1.0 - alpha) + z(MDE_POWER)) * se,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

/// Decides the scenario from the three discriminating coefficients.
pub fn classify_scenario(table: &CoefficientTable, alpha: f64) -> Result<ScenarioVerdict> {
    check_alpha(alpha)?;
    let restrictions = [col::ONE_NS, col::SWC_LAMBDA, col::SWC_G]
        .iter()
        .map(|n| record(table, n, alpha))
        .collect::<Result<Vec<_>>>()?;
    let patterns: Vec<(Scenario, [Sign; 3])> = Scenario::ALL
        .iter()
        .map(|s| (*s, scenario_pattern(*s)))
        .collect();
    let matching: Vec<Scenario> = patterns
        .iter()
        .filter(|(_, p)| {
            p.iter()
                .zip(&restrictions)
                .all(|(req, r)| req.holds(r.t, alpha))
        })
        .map(|(s, _)| *s)
        .collect();

    let mut warnings = Vec::new();
    let verdict = match matching.as_slice() {
        [s] => Verdict::Scenario(*s),
        [] => Verdict::Inconclusive,
        several => {
            let names: Vec<&str> = several.iter().map(|s| s.as_str()).collect();
            warnings.push(format!(
                "restrictions of {} hold simultaneously; no single scenario selected",
                names.join(" and ")
            ));
            Verdict::Inconclusive
        }
    };
    let mut underpowered = false;
    if verdict == Verdict::Scenario(Scenario::SC) {
        for (r, (_, reference)) in restrictions.iter().zip(REFERENCE_EFFECTS) {
            if r.mde > reference {
                underpowered = true;
                warnings.push(format!(
                    "SC rests on non-rejection, but `{}` has minimum detectable effect {} > {} at {:.0}% power",
                    r.coefficient,
                    fmt_sig(r.mde),
                    fmt_sig(reference),
                    100.0 * MDE_POWER
                ));
            }
        }
    }
    let bribery = detect_bribery(table, alpha).ok();
    Ok(ScenarioVerdict {
        verdict,
        alpha,
        restrictions,
        patterns,
        bribery,
        underpowered,
        warnings,
    })
}

/// Flags extortionary and non-extortionary bribery.
pub fn detect_bribery(table: &CoefficientTable, alpha: f64) -> Result<BriberyFlags> {
    check_alpha(alpha)?;
    let s_p = record(table, col::NEG_S_P, alpha)?;
    let s_n = record(table, col::NEG_S_N_1B, alpha)?;
    let lambda = record(table, col::SWC_LAMBDA, alpha)?;
    let g = record(table, col::SWC_G, alpha)?;
    let n_type_caveat = (s_n.t.abs() <= z(1.0 - alpha / 2.0)).then(|| {
        "N-type delay coefficient insignificant: cannot distinguish 1_B = 0 from s_N = 0"
            .to_string()
    });
    Ok(BriberyFlags {
        extortionary_present: s_p.t < -z(1.0 - alpha),
        non_extortionary_present: lambda.observed == Sign::Positive && g.observed == Sign::Positive,
        n_type_caveat,
    })
}

impl fmt::Display for ScenarioVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}  (alpha = {})", self.verdict, self.alpha)?;
        writeln!(
            f,
            "{:<12} {:>12} {:>12} {:>10} {:>10} {:>8} {:>12}",
            "coefficient", "estimate", "se", "t", "p(>0)", "class", "mde(80%)"
        )?;
        for r in &self.restrictions {
            writeln!(
                f,
                "{:<12} {:>12} {:>12} {:>10} {:>10} {:>8} {:>12}",
                r.coefficient,
                fmt_sig(r.estimate),
                fmt_sig(r.se),
                fmt_sig(r.t),
                fmt_sig(sf(r.t)),
                r.observed.to_string(),
                fmt_sig(r.mde)
            )?;
        }
        writeln!(f, "required patterns (one_ns, swc_lambda, swc_g):")?;
        for (s, p) in &self.patterns {
            writeln!(f, "  {:<4} {} {} {}", s.to_string(), p[0], p[1], p[2])?;
        }
        if let Some(b) = &self.bribery {
            writeln!(
                f,
                "extortionary bribery:     {}",
                yes_no(b.extortionary_present)
            )?;
            writeln!(
                f,
                "non-extortionary bribery: {}",
                yes_no(b.non_extortionary_present)
            )?;
            if let Some(c) = &b.n_type_caveat {
                writeln!(f, "note: {c}")?;
            }
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "present"
    } else {
        "not detected"
    }
}
