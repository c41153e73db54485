//! Closed-form equilibria of the certificate-issuing bureaucrat's problem.
//!
//! A firm is either N-type (no hidden profit, cannot pay extortion) or P-type
//! (hidden profit increment). In period 1 a P-type firm may enter a bribe
//! contest for a contract worth `V`; in period 2 the bureaucrat issuing the
//! certificate offers (processing time, fee) pairs. Three informational
//! scenarios differ in what that bureaucrat knows:
//!
//! * `NS`: firm type and contest entry are both observed,
//! * `SC`: type is hidden, contest entry is reported,
//! * `SwC`: neither is observed.
//!
//! All functions here are pure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for "this constraint binds" checks.
pub const BINDING_RTOL: f64 = 1e-9;

/// Informational scenario faced by the certificate-issuing bureaucrat.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// No secrecy.
    NS,
    /// Secrecy with communication.
    SC,
    /// Secrecy without communication.
    SwC,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::NS, Scenario::SC, Scenario::SwC];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::NS => "NS",
            Scenario::SC => "SC",
            Scenario::SwC => "SwC",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ns" => Ok(Scenario::NS),
            "sc" => Ok(Scenario::SC),
            "swc" => Ok(Scenario::SwC),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected NS, SC or SwC)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FirmType {
    N,
    P,
}

/// Structural parameters of the two-period model.
///
/// Money is in one currency unit throughout; times are in days. `c` has
/// units money·day so that `c / t` is money.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Reported profit of either type.
    pub pi_n: f64,
    /// Hidden profit increment of the P-type without the contract.
    pub delta_pi0: f64,
    /// Market value of capital (outside option).
    #[serde(rename = "m")]
    pub capital: f64,
    /// Official certificate fee.
    pub f_l: f64,
    /// Legal minimum processing time.
    pub t_min: f64,
    pub s_n: f64,
    pub s_p: f64,
    /// Scale of the bureaucrat's processing cost `c / t`.
    pub c: f64,
    /// Bureaucrat's salary; an additive constant in the objective.
    #[serde(default)]
    pub w: f64,
    /// Share of N-type firms.
    pub theta: f64,
    /// Net contract payoff.
    pub v: f64,
    /// Share of `v` paid as the contest bribe.
    pub kappa: f64,
    /// Daily contest participation cost.
    pub g: f64,
    /// Contest participation length.
    pub n_days: f64,
    /// Probability of winning the contest upon entry.
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    1.0
}

impl ModelParams {
    /// Profit of the P-type firm without the contract.
    pub fn pi_p0(&self) -> f64 {
        self.pi_n + self.delta_pi0
    }

    /// Profit of the P-type firm holding the contract.
    pub fn pi_p1(&self) -> f64 {
        self.pi_p0() + (1.0 - self.kappa) * self.v
    }

    /// Contest bribe as a share of the contract holder's profit: `kappa V = lambda Pi_P1`.
    pub fn lambda(&self) -> f64 {
        self.kappa * self.v / self.pi_p1()
    }

    /// N-type surplus over the outside option at zero waiting time.
    pub fn n_surplus(&self) -> f64 {
        self.pi_n - self.capital - self.f_l
    }

    pub fn profit(&self, firm: FirmType, contract: bool) -> f64 {
        match (firm, contract) {
            (FirmType::N, _) => self.pi_n,
            (FirmType::P, false) => self.pi_p0(),
            (FirmType::P, true) => self.pi_p1(),
        }
    }

    pub fn time_cost(&self, firm: FirmType) -> f64 {
        match firm {
            FirmType::N => self.s_n,
            FirmType::P => self.s_p,
        }
    }

    /// Multiplies every money-denominated parameter by `k`.
    pub fn scale_money(&self, k: f64) -> ModelParams {
        ModelParams {
            pi_n: self.pi_n * k,
            delta_pi0: self.delta_pi0 * k,
            capital: self.capital * k,
            f_l: self.f_l * k,
            c: self.c * k,
            w: self.w * k,
            v: self.v * k,
            s_n: self.s_n * k,
            s_p: self.s_p * k,
            g: self.g * k,
            ..*self
        }
    }
}

/// One violated parameter restriction and its signed slack (negative or zero means violated).
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub restriction: &'static str,
    pub slack: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (slack {})", self.restriction, self.slack)
    }
}

/// Lists every violated parameter restriction. Empty means valid.
pub fn validate_params(p: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let fields = [
        p.pi_n,
        p.delta_pi0,
        p.capital,
        p.f_l,
        p.t_min,
        p.s_n,
        p.s_p,
        p.c,
        p.w,
        p.theta,
        p.v,
        p.kappa,
        p.g,
        p.n_days,
        p.mu,
    ];
    if fields.iter().any(|x| !x.is_finite()) {
        out.push(Violation {
            restriction: "all parameters finite",
            slack: f64::NAN,
        });
        return out;
    }
    let mut check = |restriction: &'static str, slack: f64, strict: bool| {
        if slack < 0.0 || (strict && slack == 0.0) {
            out.push(Violation { restriction, slack });
        }
    };
    let surplus = p.n_surplus();
    check("Pi_N - M - F_L > 0", surplus, true);
    check("s_N > 0", p.s_n, true);
    check("s_P > s_N", p.s_p - p.s_n, true);
    check(
        "s_N < (Pi_N - M - F_L)^2 / c",
        surplus * surplus / p.c - p.s_n,
        true,
    );
    check("delta_pi0 > 0", p.delta_pi0, true);
    check("V > 0", p.v, true);
    check("c > 0", p.c, true);
    check("t_min >= 0", p.t_min, false);
    check("theta >= 0", p.theta, false);
    check("theta <= 1", 1.0 - p.theta, false);
    check("kappa >= 0", p.kappa, false);
    check("kappa <= 1", 1.0 - p.kappa, false);
    check("mu > 0", p.mu, true);
    check("mu <= 1", 1.0 - p.mu, false);
    check("g >= 0", p.g, false);
    check("n_days >= 0", p.n_days, false);
    if p.c > 0.0 && p.s_p > 0.0 {
        // Screening time for the P-type cannot undercut the legal minimum.
        check(
            "sqrt(c / s_P) >= t_min",
            (p.c / p.s_p).sqrt() - p.t_min,
            false,
        );
        if p.s_n > 0.0 {
            let t_n = surplus / p.s_n;
            check("t_N >= sqrt(c / s_P)", t_n - (p.c / p.s_p).sqrt(), false);
            // The P-type must still participate at the screening offer.
            check(
                "delta_pi0 >= (s_P - s_N) t_N",
                p.delta_pi0 - (p.s_p - p.s_n) * t_n,
                false,
            );
        }
    }
    out
}

fn ensure_valid(p: &ModelParams) -> Result<()> {
    let v = validate_params(p);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(
            v.iter().map(|x| x.to_string()).collect(),
        ))
    }
}

/// A (processing time, fee) offer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MenuOffer {
    pub t: f64,
    pub fee: f64,
}

/// The three offers: to the N-type, and to the P-type without and with the contract.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Menus {
    pub n: MenuOffer,
    pub p0: MenuOffer,
    pub p1: MenuOffer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumOutcome {
    pub scenario: Scenario,
    /// Probability the P-type stays out of the contest (0 or 1).
    pub phi: f64,
    pub menus: Menus,
    pub eb_n: f64,
    pub eb_p: f64,
    pub m_n: f64,
    pub m_p: f64,
    /// Non-extortionary bribe cost actually borne by the P-type.
    pub nbc_p: f64,
    pub bribe_n: f64,
    pub bribe_p: f64,
    pub won_contest: bool,
}

impl EquilibriumOutcome {
    /// Flat key-value view, in a fixed order.
    pub fn record(&self) -> Vec<(&'static str, String)> {
        let f = |x: f64| format!("{x}");
        vec![
            ("scenario", self.scenario.to_string()),
            ("phi", f(self.phi)),
            ("t_n", f(self.menus.n.t)),
            ("f_n", f(self.menus.n.fee)),
            ("t_p0", f(self.menus.p0.t)),
            ("f_p0", f(self.menus.p0.fee)),
            ("t_p1", f(self.menus.p1.t)),
            ("f_p1", f(self.menus.p1.fee)),
            ("eb_n", f(self.eb_n)),
            ("eb_p", f(self.eb_p)),
            ("m_n", f(self.m_n)),
            ("m_p", f(self.m_p)),
            ("nbc_p", f(self.nbc_p)),
            ("bribe_n", f(self.bribe_n)),
            ("bribe_p", f(self.bribe_p)),
            ("won_contest", u8::from(self.won_contest).to_string()),
        ]
    }
}

impl fmt::Display for EquilibriumOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.record() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// N-type offer: longest time its participation allows, legal fee.
fn n_offer(p: &ModelParams) -> MenuOffer {
    MenuOffer {
        t: p.n_surplus() / p.s_n,
        fee: p.f_l,
    }
}

fn p_time(p: &ModelParams) -> f64 {
    (p.c / p.s_p).sqrt()
}

/// Fee extracting the full surplus of a P-type with known profit.
fn full_extraction_fee(p: &ModelParams, profit: f64, t: f64) -> f64 {
    profit - p.capital - p.s_p * t
}

/// Fee at which the P-type is just indifferent to taking the N-type offer.
fn screening_fee(p: &ModelParams, t_n: f64, t_p: f64) -> f64 {
    p.s_p * (t_n - t_p) + p.f_l
}

/// Closed-form equilibrium of the baseline model (contest won with certainty).
pub fn solve_scenario(p: &ModelParams, scenario: Scenario) -> Result<EquilibriumOutcome> {
    ensure_valid(p)?;
    Ok(match scenario {
        Scenario::NS => {
            let n = n_offer(p);
            let t_p = p_time(p);
            let p0 = MenuOffer {
                t: t_p,
                fee: full_extraction_fee(p, p.pi_p0(), t_p),
            };
            let p1 = MenuOffer {
                t: t_p,
                fee: full_extraction_fee(p, p.pi_p1(), t_p),
            };
            assemble(p, scenario, Menus { n, p0, p1 }, Entry::Stays)
        }
        Scenario::SC => sc_outcome(p),
        Scenario::SwC => swc_outcome(p, true),
    })
}

enum Entry {
    Stays,
    Enters { won: bool },
}

fn assemble(p: &ModelParams, scenario: Scenario, menus: Menus, entry: Entry) -> EquilibriumOutcome {
    let (phi, served, nbc_p, won) = match entry {
        Entry::Stays => (1.0, menus.p0, 0.0, false),
        Entry::Enters { won } => {
            let sunk = p.g * p.n_days;
            let nbc = if won {
                sunk + p.lambda() * p.pi_p1()
            } else {
                sunk
            };
            (0.0, if won { menus.p1 } else { menus.p0 }, nbc, won)
        }
    };
    let eb_n = menus.n.fee - p.f_l;
    let eb_p = served.fee - p.f_l;
    EquilibriumOutcome {
        scenario,
        phi,
        menus,
        eb_n,
        eb_p,
        m_n: menus.n.t - p.t_min,
        m_p: served.t - p.t_min,
        nbc_p,
        bribe_n: eb_n,
        bribe_p: eb_p + nbc_p,
        won_contest: won,
    }
}

fn sc_outcome(p: &ModelParams) -> EquilibriumOutcome {
    let n = n_offer(p);
    let t_p = p_time(p);
    let p0 = MenuOffer {
        t: t_p,
        fee: screening_fee(p, n.t, t_p),
    };
    // The contract holder is identified by the report and fully extracted.
    let p1 = MenuOffer {
        t: t_p,
        fee: full_extraction_fee(p, p.pi_p1(), t_p),
    };
    assemble(p, Scenario::SC, Menus { n, p0, p1 }, Entry::Stays)
}

fn swc_outcome(p: &ModelParams, won: bool) -> EquilibriumOutcome {
    let n = n_offer(p);
    let t_p = p_time(p);
    let pooled = MenuOffer {
        t: t_p,
        fee: screening_fee(p, n.t, t_p),
    };
    assemble(
        p,
        Scenario::SwC,
        Menus {
            n,
            p0: pooled,
            p1: pooled,
        },
        Entry::Enters { won },
    )
}

/// Smallest win probability at which entering the contest pays:
/// `g n / ((1 - kappa) V - lambda Pi_P1)`.
pub fn entry_threshold(p: &ModelParams) -> Result<f64> {
    let denominator = (1.0 - p.kappa) * p.v - p.lambda() * p.pi_p1();
    if denominator <= 0.0 {
        return Err(Error::DegenerateThreshold { denominator });
    }
    Ok(p.g * p.n_days / denominator)
}

/// SwC equilibrium when the contest is won only with probability `p.mu`.
///
/// `won` is the realised contest outcome; it matters only if the P-type enters.
/// At `mu = 1` and `won = true` this coincides with `solve_scenario(p, SwC)`.
pub fn solve_swc_uncertain(p: &ModelParams, won: bool) -> Result<EquilibriumOutcome> {
    ensure_valid(p)?;
    let mu_star = entry_threshold(p)?;
    if p.mu > mu_star {
        Ok(swc_outcome(p, won))
    } else {
        let mut out = sc_outcome(p);
        out.scenario = Scenario::SwC;
        Ok(out)
    }
}

/// Period-2 net payoff `Pi_i(Gamma) - F - s_i t` of a firm accepting `offer`.
pub fn firm_payoff(p: &ModelParams, firm: FirmType, offer: &MenuOffer, contract: bool) -> f64 {
    p.profit(firm, contract) - offer.fee - p.time_cost(firm) * offer.t
}

/// Payoff over both periods; the contest participation cost is sunk once entered.
pub fn two_period_payoff(
    p: &ModelParams,
    firm: FirmType,
    offer: &MenuOffer,
    contract: bool,
    entered: bool,
) -> f64 {
    let sunk = if entered { p.g * p.n_days } else { 0.0 };
    firm_payoff(p, firm, offer, contract) - sunk
}

/// The bureaucrat's expected utility from a menu, weighted by the beliefs of `scenario`.
///
/// `phi` is the probability that a P-type firm stays out of the contest. In
/// `SC` only the pooled information set {N, P without contract} is scored,
/// with posterior weights; `NS` and `SwC` score all three offers with prior
/// weights (the two objectives coincide, only the constraint sets differ).
pub fn bureaucrat_objective(p: &ModelParams, scenario: Scenario, menus: &Menus, phi: f64) -> f64 {
    let gain = |m: &MenuOffer| m.fee - p.f_l - p.c / m.t;
    let theta = p.theta;
    match scenario {
        Scenario::NS | Scenario::SwC => {
            p.w + theta * gain(&menus.n)
                + (1.0 - theta) * phi * gain(&menus.p0)
                + (1.0 - theta) * (1.0 - phi) * gain(&menus.p1)
        }
        Scenario::SC => {
            let mass = theta + (1.0 - theta) * phi;
            if mass <= 0.0 {
                return p.w;
            }
            p.w + theta / mass * gain(&menus.n) + (1.0 - theta) * phi / mass * gain(&menus.p0)
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn p0() -> ModelParams {
        ModelParams {
            pi_n: 100.0,
            delta_pi0: 300.0,
            capital: 20.0,
            f_l: 10.0,
            t_min: 2.0,
            s_n: 1.0,
            s_p: 4.0,
            c: 100.0,
            w: 0.0,
            theta: 0.5,
            v: 200.0,
            kappa: 0.25,
            g: 2.0,
            n_days: 10.0,
            mu: 1.0,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn p0_is_valid() {
        assert!(validate_params(&p0()).is_empty());
    }

    #[test]
    fn large_s_n_violates_not_too_large_condition() {
        let p = ModelParams { s_n: 60.0, ..p0() };
        let v = validate_params(&p);
        let hit = v
            .iter()
            .find(|x| x.restriction == "s_N < (Pi_N - M - F_L)^2 / c")
            .expect("violation reported");
        assert!(close(hit.slack, 49.0 - 60.0));
    }

    #[test]
    fn zero_kappa_is_valid_with_zero_lambda() {
        let p = ModelParams { kappa: 0.0, ..p0() };
        assert!(validate_params(&p).is_empty());
        assert_eq!(p.lambda(), 0.0);
    }

    #[test]
    fn invalid_params_are_rejected_by_solver() {
        let p = ModelParams { s_n: 60.0, ..p0() };
        assert!(matches!(
            solve_scenario(&p, Scenario::SC),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn ns_worked_example() {
        let o = solve_scenario(&p0(), Scenario::NS).unwrap();
        assert!(close(o.menus.n.t, 70.0));
        assert!(close(o.menus.p0.fee, 360.0));
        assert!(close(o.bribe_p, 350.0));
        assert_eq!(o.phi, 1.0);
        assert_eq!(o.bribe_n, 0.0);
        // Same bribe written in terms of red tape m_P.
        let p = p0();
        let alt = p.pi_n + p.delta_pi0 - p.capital - p.f_l - p.s_p * p.t_min - p.s_p * o.m_p;
        assert!(close(o.bribe_p, alt));
    }

    #[test]
    fn sc_worked_example() {
        let o = solve_scenario(&p0(), Scenario::SC).unwrap();
        assert!(close(o.menus.p0.t, 5.0));
        assert!(close(o.menus.p0.fee, 270.0));
        assert!(close(o.bribe_p, 260.0));
        assert_eq!(o.phi, 1.0);
        let p = p0();
        let alt = p.s_p / p.s_n * p.n_surplus() - p.s_p * p.t_min - p.s_p * o.m_p;
        assert!(close(o.bribe_p, alt));
    }

    #[test]
    fn swc_worked_example() {
        let p = p0();
        assert!(close(p.pi_p1(), 550.0));
        assert!(close(p.lambda(), 50.0 / 550.0));
        let o = solve_scenario(&p, Scenario::SwC).unwrap();
        assert!(close(o.bribe_p, 330.0));
        assert_eq!(o.phi, 0.0);
        assert!(o.won_contest);
        assert_eq!(o.menus.p0, o.menus.p1);
    }

    #[test]
    fn uncertain_contest_threshold_and_outcomes() {
        let p = p0();
        assert!(close(entry_threshold(&p).unwrap(), 0.2));
        let won = solve_swc_uncertain(&p, true).unwrap();
        let lost = solve_swc_uncertain(&p, false).unwrap();
        assert!(close(won.bribe_p, 330.0));
        assert!(close(lost.bribe_p, 280.0));
        assert_eq!(won.phi, 0.0);

        let unlikely = ModelParams { mu: 0.1, ..p };
        let o = solve_swc_uncertain(&unlikely, true).unwrap();
        assert_eq!(o.phi, 1.0);
        assert!(close(o.bribe_p, 260.0));
        assert!(!o.won_contest);
    }

    #[test]
    fn certain_win_matches_baseline_bit_for_bit() {
        let a = solve_swc_uncertain(&p0(), true).unwrap();
        let b = solve_scenario(&p0(), Scenario::SwC).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn half_kappa_threshold_is_degenerate() {
        let p = ModelParams { kappa: 0.5, ..p0() };
        match solve_swc_uncertain(&p, true) {
            Err(Error::DegenerateThreshold { denominator }) => assert!(denominator.abs() < 1e-9),
            other => panic!("expected degenerate threshold, got {other:?}"),
        }
    }

    #[test]
    fn payoffs_at_designed_offers() {
        let p = p0();
        let sc = solve_scenario(&p, Scenario::SC).unwrap();
        let rent = firm_payoff(&p, FirmType::P, &sc.menus.p0, false);
        assert!(close(rent, 110.0));
        assert!(close(rent - p.capital, 90.0));
        assert!(close(
            firm_payoff(&p, FirmType::N, &sc.menus.n, false),
            p.capital
        ));
        let ns = solve_scenario(&p, Scenario::NS).unwrap();
        assert!(close(
            firm_payoff(&p, FirmType::P, &ns.menus.p0, false),
            p.capital
        ));
        assert!(close(
            two_period_payoff(&p, FirmType::P, &sc.menus.p0, false, true),
            90.0
        ));
    }

    #[test]
    fn objective_values() {
        let p = p0();
        let sc = solve_scenario(&p, Scenario::SC).unwrap();
        let v = bureaucrat_objective(&p, Scenario::SC, &sc.menus, 1.0);
        assert!((v - 119.286).abs() < 5e-4);
        let ns = solve_scenario(&p, Scenario::NS).unwrap();
        let v = bureaucrat_objective(&p, Scenario::NS, &ns.menus, 1.0);
        assert!(close(v, -0.5 * 100.0 / 70.0 + 0.5 * 330.0));
    }

    #[test]
    fn objective_increases_with_n_time() {
        let p = p0();
        let mut menus = solve_scenario(&p, Scenario::SC).unwrap().menus;
        let mut last = f64::NEG_INFINITY;
        for t in [10.0, 100.0, 1e3, 1e6] {
            menus.n.t = t;
            let v = bureaucrat_objective(&p, Scenario::SC, &menus, 1.0);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn outcome_record_is_flat_key_value() {
        let text = solve_scenario(&p0(), Scenario::SC).unwrap().to_string();
        assert!(text.lines().any(|l| l == "t_n=70"));
        assert!(text.lines().any(|l| l == "f_p0=270"));
        assert!(text.lines().all(|l| l.contains('=')));
    }

    #[test]
    fn scenario_parses_case_insensitively() {
        assert_eq!("swc".parse::<Scenario>().unwrap(), Scenario::SwC);
        assert!("XX".parse::<Scenario>().is_err());
    }
}
