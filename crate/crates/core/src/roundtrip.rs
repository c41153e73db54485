//! Repeated simulate, estimate, classify runs over consecutive seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::equilibrium::Scenario;
use crate::error::Result;
use crate::estimator::{fit_within, fmt_sig, RegressionSpec};
use crate::identify::{classify_scenario, CoefficientTable, Verdict};
use crate::panelgen::{col, generate_panel, Calibration};

#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub verdict: Verdict,
    pub lambda_estimate: f64,
    pub lambda_se: f64,
    pub lambda_covered: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundtripSummary {
    pub scenario: Scenario,
    pub alpha: f64,
    pub replications: Vec<Replication>,
}

impl RoundtripSummary {
    pub fn recovered(&self) -> usize {
        self.replications
            .iter()
            .filter(|r| r.verdict == Verdict::Scenario(self.scenario))
            .count()
    }

    pub fn recovery_rate(&self) -> f64 {
        self.recovered() as f64 / self.replications.len() as f64
    }

    /// Replications whose λ estimate lies within 2 standard errors of the truth.
    pub fn lambda_covered(&self) -> usize {
        self.replications
            .iter()
            .filter(|r| r.lambda_covered)
            .count()
    }

    pub fn verdict_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.replications {
            *m.entry(r.verdict.to_string()).or_insert(0) += 1;
        }
        m
    }

    /// One row per replication.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "rep",
            "seed",
            "verdict",
            "lambda_estimate",
            "lambda_se",
            "lambda_covered",
        ])?;
        for r in &self.replications {
            wr.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                r.verdict.to_string(),
                r.lambda_estimate.to_string(),
                r.lambda_se.to_string(),
                u8::from(r.lambda_covered).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl fmt::Display for RoundtripSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.replications.len();
        writeln!(
            f,
            "scenario {}  replications {n}  alpha {}",
            self.scenario, self.alpha
        )?;
        writeln!(
            f,
            "recovery rate {}  ({} of {n})",
            fmt_sig(self.recovery_rate()),
            self.recovered()
        )?;
        writeln!(
            f,
            "lambda within 2 SE of truth: {} of {n}",
            self.lambda_covered()
        )?;
        for (v, c) in self.verdict_counts() {
            writeln!(f, "  {v:<12} {c}")?;
        }
        Ok(())
    }
}

/// Runs `reps` replications; replication `i` uses seed `cal.seed + i`.
pub fn run_roundtrip(
    cal: &Calibration,
    scenario: Scenario,
    reps: usize,
    spec: &RegressionSpec,
    alpha: f64,
) -> Result<RoundtripSummary> {
    let truth = cal.true_coefficients(scenario)[col::SWC_LAMBDA];
    let mut replications = Vec::with_capacity(reps);
    for rep in 0..reps {
        let seed = cal.seed.wrapping_add(rep as u64);
        let c = Calibration {
            seed,
            ..cal.clone()
        };
        let panel = generate_panel(&c, scenario)?;
        let fit = fit_within(&spec.design(&panel)?, spec)?;
        let verdict = classify_scenario(&CoefficientTable::from_fit(&fit), alpha)?.verdict;
        let (lambda_estimate, lambda_se) = fit
            .get(col::SWC_LAMBDA)
            .filter(|c| c.identified)
            .map_or((f64::NAN, f64::NAN), |c| (c.estimate, c.se));
        replications.push(Replication {
            rep,
            seed,
            verdict,
            lambda_estimate,
            lambda_se,
            lambda_covered: (lambda_estimate - truth).abs() <= 2.0 * lambda_se,
        });
    }
    Ok(RoundtripSummary {
        scenario,
        alpha,
        replications,
    })
}
