//! Brute-force verification of the closed-form menus.
//!
//! The grid search enumerates (time, fee) offers on a rectangular grid,
//! discards every candidate that violates the scenario's participation and
//! incentive constraints as written, and keeps the feasible maximiser of the
//! bureaucrat's objective. It shares no code with the closed forms in
//! [`crate::equilibrium`] except the objective and the parameter accessors.

use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::{
    bureaucrat_objective, solve_scenario, validate_params, MenuOffer, Menus, ModelParams, Scenario,
    BINDING_RTOL,
};
use crate::error::{Error, Result};

/// Rectangular grid over processing times and fees, shared by every offer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    pub fee_lo: f64,
    pub fee_hi: f64,
    pub steps_t: usize,
    pub steps_fee: usize,
}

impl GridSpec {
    pub fn dt(&self) -> f64 {
        (self.t_hi - self.t_lo) / (self.steps_t - 1) as f64
    }

    pub fn dfee(&self) -> f64 {
        (self.fee_hi - self.fee_lo) / (self.steps_fee - 1) as f64
    }

    pub fn t_at(&self, i: usize) -> f64 {
        self.t_lo + i as f64 * self.dt()
    }

    pub fn fee_at(&self, k: usize) -> f64 {
        self.fee_lo + k as f64 * self.dfee()
    }

    /// Grid whose fee spacing equals `s_P` times the time spacing, anchored at `F_L`.
    ///
    /// With this alignment every fee bound of slope `s_P` in `t` moves by whole
    /// fee cells along the time axis, so fee rounding does not distort the
    /// time argmax. Bounds come from the constraints alone: no N-type time can
    /// exceed what its participation allows, and no fee can exceed the largest
    /// profit net of the outside option.
    pub fn aligned(p: &ModelParams, steps_t: usize) -> GridSpec {
        let t_n_cap = p.n_surplus() / p.s_n;
        let t_floor = (p.c / p.s_p).sqrt();
        let t_lo = p.t_min.max(0.5 * t_floor);
        let t_hi = t_lo + 1.02 * (t_n_cap - t_lo);
        let dt = (t_hi - t_lo) / (steps_t - 1) as f64;
        let dfee = p.s_p * dt;
        let fee_cap = p.pi_p1() - p.capital - p.s_p * t_lo;
        let steps_fee = (((fee_cap - p.f_l) / dfee).ceil() as usize + 2).max(2);
        GridSpec {
            t_lo,
            t_hi,
            fee_lo: p.f_l,
            fee_hi: p.f_l + dfee * (steps_fee - 1) as f64,
            steps_t,
            steps_fee,
        }
    }

    /// Halves both spacings while keeping every existing node.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            steps_t: 2 * self.steps_t - 1,
            steps_fee: 2 * self.steps_fee - 1,
            ..*self
        }
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        let bad = |m: String| Err(Error::Oracle(format!("invalid grid: {m}")));
        if self.steps_t < 2 || self.steps_fee < 2 {
            return bad("steps must be >= 2".into());
        }
        if self.t_lo.is_nan() || self.t_lo <= 0.0 {
            return bad(format!("t_lo = {} must be positive", self.t_lo));
        }
        if self.t_lo < p.t_min {
            return bad(format!("t_lo = {} below t_min = {}", self.t_lo, p.t_min));
        }
        if self.t_hi <= self.t_lo || self.fee_hi <= self.fee_lo {
            return bad("empty range".into());
        }
        let t_n = p.n_surplus() / p.s_n;
        if self.t_hi < t_n {
            return bad(format!("t_hi = {} does not bracket t_N = {t_n}", self.t_hi));
        }
        Ok(())
    }

    /// Upper bound on how far the grid optimum can fall below the continuous one.
    ///
    /// Per time coordinate the objective moves by at most `c / t_lo^2` per day,
    /// per fee coordinate by at most one per unit fee. Since `t_lo <= sqrt(c / s_P)`,
    /// `c / t_lo^2 >= s_P` also covers fees dragged along by binding constraints.
    pub fn lipschitz_bound(&self, p: &ModelParams, scenario: Scenario) -> f64 {
        let (n_t, n_fee) = match scenario {
            Scenario::SC => (2.0, 1.0),
            Scenario::NS | Scenario::SwC => (3.0, 2.0),
        };
        n_t * p.c / (self.t_lo * self.t_lo) * self.dt() + n_fee * self.dfee()
    }
}

/// Identity of one participation (IR) or incentive (IC) constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    IrN,
    IrP0,
    IrP1,
    /// N-type prefers its offer to the P-type offer without contract.
    IcNP0,
    IcNP1,
    /// P-type without contract prefers its offer to the N-type offer.
    IcP0N,
    IcP0P1,
    IcP1N,
    IcP1P0,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::IrN => "IR_N",
            Constraint::IrP0 => "IR_P,G=0",
            Constraint::IrP1 => "IR_P,G=1",
            Constraint::IcNP0 => "IC_N(P,G=0)",
            Constraint::IcNP1 => "IC_N(P,G=1)",
            Constraint::IcP0N => "IC_P,G=0(N)",
            Constraint::IcP0P1 => "IC_P,G=0(P,G=1)",
            Constraint::IcP1N => "IC_P,G=1(N)",
            Constraint::IcP1P0 => "IC_P,G=1(P,G=0)",
        }
    }

    /// The constraint list of each scenario's problem.
    pub fn for_scenario(scenario: Scenario) -> &'static [Constraint] {
        use Constraint::*;
        match scenario {
            Scenario::NS => &[IrN, IrP0, IrP1],
            Scenario::SC => &[IrN, IrP0, IcNP0, IcP0N],
            Scenario::SwC => &[IrN, IrP0, IrP1, IcNP0, IcNP1, IcP0N, IcP0P1, IcP1N, IcP1P0],
        }
    }

    /// Both sides `(lhs, rhs)` of `lhs >= rhs`.
    pub fn sides(self, p: &ModelParams, m: &Menus) -> (f64, f64) {
        let u = |profit: f64, s: f64, o: &MenuOffer| profit - s * o.t - o.fee;
        let (pn, p0, p1) = (p.pi_n, p.pi_p0(), p.pi_p1());
        match self {
            Constraint::IrN => (u(pn, p.s_n, &m.n), p.capital),
            Constraint::IrP0 => (u(p0, p.s_p, &m.p0), p.capital),
            Constraint::IrP1 => (u(p1, p.s_p, &m.p1), p.capital),
            Constraint::IcNP0 => (u(pn, p.s_n, &m.n), u(pn, p.s_n, &m.p0)),
            Constraint::IcNP1 => (u(pn, p.s_n, &m.n), u(pn, p.s_n, &m.p1)),
            Constraint::IcP0N => (u(p0, p.s_p, &m.p0), u(p0, p.s_p, &m.n)),
            Constraint::IcP0P1 => (u(p0, p.s_p, &m.p0), u(p0, p.s_p, &m.p1)),
            Constraint::IcP1N => (u(p1, p.s_p, &m.p1), u(p1, p.s_p, &m.n)),
            Constraint::IcP1P0 => (u(p1, p.s_p, &m.p1), u(p1, p.s_p, &m.p0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlackStatus {
    Binding,
    Satisfied,
    Violated,
}

impl fmt::Display for SlackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlackStatus::Binding => "binding",
            SlackStatus::Satisfied => "satisfied",
            SlackStatus::Violated => "VIOLATED",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlackEntry {
    pub name: String,
    pub slack: f64,
    pub status: SlackStatus,
}

fn classify_slack(slack: f64, scale: f64, equality: bool) -> SlackStatus {
    if slack.abs() <= BINDING_RTOL * scale.max(1.0) {
        SlackStatus::Binding
    } else if slack > 0.0 && !equality {
        SlackStatus::Satisfied
    } else {
        SlackStatus::Violated
    }
}

fn entry(name: impl Into<String>, lhs: f64, rhs: f64, equality: bool) -> SlackEntry {
    let slack = lhs - rhs;
    SlackEntry {
        name: name.into(),
        slack,
        status: classify_slack(slack, lhs.abs().max(rhs.abs()), equality),
    }
}

/// Signed slack of every constraint of `scenario`, plus the reduced system the
/// closed-form derivation relies on.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    pub scenario: Scenario,
    pub constraints: Vec<SlackEntry>,
    pub reduced: Vec<SlackEntry>,
}

impl ConstraintReport {
    pub fn all_satisfied(&self) -> bool {
        self.constraints
            .iter()
            .chain(&self.reduced)
            .all(|e| e.status != SlackStatus::Violated)
    }

    pub fn get(&self, name: &str) -> Option<&SlackEntry> {
        self.constraints
            .iter()
            .chain(&self.reduced)
            .find(|e| e.name == name)
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {}", self.scenario)?;
        writeln!(f, "{:<34} {:>14}  status", "constraint", "slack")?;
        for e in &self.constraints {
            writeln!(f, "{:<34} {:>14.6}  {}", e.name, e.slack, e.status)?;
        }
        if !self.reduced.is_empty() {
            writeln!(f, "reduced system:")?;
            for e in &self.reduced {
                writeln!(f, "{:<34} {:>14.6}  {}", e.name, e.slack, e.status)?;
            }
        }
        Ok(())
    }
}

pub fn check_constraints(p: &ModelParams, scenario: Scenario, menus: &Menus) -> ConstraintReport {
    let constraints = Constraint::for_scenario(scenario)
        .iter()
        .map(|c| {
            let (lhs, rhs) = c.sides(p, menus);
            entry(c.name(), lhs, rhs, false)
        })
        .collect();
    let mut reduced = Vec::new();
    match scenario {
        Scenario::NS => {}
        Scenario::SC => {
            let (l, r) = Constraint::IrN.sides(p, menus);
            reduced.push(entry("IR_N binds", l, r, true));
            let (l, r) = Constraint::IcP0N.sides(p, menus);
            reduced.push(entry("IC_P,G=0(N) binds", l, r, true));
            reduced.push(entry("t_N >= t_P,G=0", menus.n.t, menus.p0.t, false));
        }
        Scenario::SwC => {
            let (l, r) = Constraint::IrN.sides(p, menus);
            reduced.push(entry("IR_N binds", l, r, true));
            let (l, r) = Constraint::IcP0N.sides(p, menus);
            reduced.push(entry("IC_P,G=0(N) binds", l, r, true));
            reduced.push(entry(
                "s_P(t_P0 - t_P1) = F_P1 - F_P0",
                p.s_p * (menus.p0.t - menus.p1.t),
                menus.p1.fee - menus.p0.fee,
                true,
            ));
            reduced.push(entry("t_N >= t_P,G=0", menus.n.t, menus.p0.t, false));
            reduced.push(entry("t_N >= t_P,G=1", menus.n.t, menus.p1.t, false));
        }
    }
    ConstraintReport {
        scenario,
        constraints,
        reduced,
    }
}

/// Feasible grid maximiser.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForceResult {
    pub n: MenuOffer,
    pub p0: MenuOffer,
    /// Absent in SC, whose pooled information set excludes the contract holder.
    pub p1: Option<MenuOffer>,
    pub objective: f64,
    pub feasible_points: u64,
}

impl BruteForceResult {
    pub fn menus(&self) -> Menus {
        Menus {
            n: self.n,
            p0: self.p0,
            p1: self.p1.unwrap_or(self.p0),
        }
    }
}

#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 =
                (self.0.rotate_left(5) ^ u64::from(*b)).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
        }
    }

    fn write_i64(&mut self, i: i64) {
        self.0 = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
}

type KeyMap<V> = HashMap<i64, V, BuildHasherDefault<KeyHasher>>;

fn feasible(lhs_rhs: (f64, f64)) -> bool {
    let (l, r) = lhs_rhs;
    l - r >= -BINDING_RTOL * l.abs().max(r.abs()).max(1.0)
}

/// Weights of (N, P without contract, P with contract) in the objective.
fn weights(p: &ModelParams, scenario: Scenario, phi: f64) -> (f64, f64, f64) {
    let th = p.theta;
    match scenario {
        Scenario::NS | Scenario::SwC => (th, (1.0 - th) * phi, (1.0 - th) * (1.0 - phi)),
        Scenario::SC => {
            let mass = th + (1.0 - th) * phi;
            (th / mass, (1.0 - th) * phi / mass, 0.0)
        }
    }
}

/// Exhaustive constrained grid search for the bureaucrat's optimal menu.
///
/// `phi` weights the P-type offers in the objective. The closed-form menus are
/// optimal for every `phi` in (0, 1], so an interior value pins down every
/// offer of the scenario. The N-type fee is fixed at `F_L`. Ties resolve to the
/// lexicographically smallest (t_N, t_P0, F_P0, t_P1, F_P1).
pub fn brute_force_menu(
    p: &ModelParams,
    scenario: Scenario,
    grid: &GridSpec,
    phi: f64,
) -> Result<BruteForceResult> {
    let v = validate_params(p);
    if !v.is_empty() {
        return Err(Error::InvalidParams(
            v.iter().map(|x| x.to_string()).collect(),
        ));
    }
    grid.validate(p)?;
    if scenario == Scenario::SC && p.theta + (1.0 - p.theta) * phi <= 0.0 {
        return Err(Error::Oracle(
            "SC objective undefined at theta = phi = 0".into(),
        ));
    }
    let (w_n, w0, w1) = weights(p, scenario, phi);
    let gain = |o: &MenuOffer| o.fee - p.f_l - p.c / o.t;
    let points: Vec<MenuOffer> = (0..grid.steps_t)
        .flat_map(|j| {
            (0..grid.steps_fee).map(move |k| MenuOffer {
                t: grid.t_at(j),
                fee: grid.fee_at(k),
            })
        })
        .collect();
    // Equal P-type utility buckets, finer than any grid spacing.
    let quantum = 1e-6 * grid.dfee().min(p.s_p * grid.dt());
    let key = |o: &MenuOffer| ((-p.s_p * o.t - o.fee) / quantum).round() as i64;

    let mut best: Option<BruteForceResult> = None;
    let mut count: u64 = 0;
    for i in 0..grid.steps_t {
        let n = MenuOffer {
            t: grid.t_at(i),
            fee: p.f_l,
        };
        let probe = |o0: MenuOffer, o1: MenuOffer| Menus { n, p0: o0, p1: o1 };
        if !feasible(Constraint::IrN.sides(p, &probe(n, n))) {
            continue;
        }
        let ok0 = |o: &MenuOffer| {
            let m = probe(*o, *o);
            let ics: &[Constraint] = match scenario {
                Scenario::NS => &[],
                _ => &[Constraint::IcNP0, Constraint::IcP0N],
            };
            feasible(Constraint::IrP0.sides(p, &m)) && ics.iter().all(|c| feasible(c.sides(p, &m)))
        };
        let ok1 = |o: &MenuOffer| {
            let m = probe(*o, *o);
            let ics: &[Constraint] = match scenario {
                Scenario::SwC => &[Constraint::IcNP1, Constraint::IcP1N],
                _ => &[],
            };
            feasible(Constraint::IrP1.sides(p, &m)) && ics.iter().all(|c| feasible(c.sides(p, &m)))
        };
        let base = w_n * gain(&n);
        let candidate = match scenario {
            Scenario::SC => points
                .iter()
                .filter(|o| ok0(o))
                .inspect(|_| count += 1)
                .fold(None::<(f64, MenuOffer)>, |acc, o| {
                    let val = w0 * gain(o);
                    match acc {
                        Some((b, _)) if val <= b => acc,
                        _ => Some((val, *o)),
                    }
                })
                .map(|(v, o0)| (base + v, o0, None)),
            Scenario::NS => {
                let pick = |ok: &dyn Fn(&MenuOffer) -> bool, w: f64, count: &mut u64| {
                    points
                        .iter()
                        .filter(|o| ok(o))
                        .inspect(|_| *count += 1)
                        .fold(None::<(f64, MenuOffer)>, |acc, o| {
                            let val = w * gain(o);
                            match acc {
                                Some((b, _)) if val <= b => acc,
                                _ => Some((val, *o)),
                            }
                        })
                };
                match (pick(&ok0, w0, &mut count), pick(&ok1, w1, &mut count)) {
                    (Some((v0, o0)), Some((v1, o1))) => Some((base + v0 + v1, o0, Some(o1))),
                    _ => None,
                }
            }
            Scenario::SwC => {
                // The two P-type IC constraints against each other hold iff both
                // offers give the P-type the same utility; join on that level.
                let mut best1: KeyMap<(f64, MenuOffer)> = KeyMap::default();
                for o in points.iter().filter(|o| ok1(o)) {
                    count += 1;
                    let val = w1 * gain(o);
                    best1
                        .entry(key(o))
                        .and_modify(|e| {
                            if val > e.0 {
                                *e = (val, *o)
                            }
                        })
                        .or_insert((val, *o));
                }
                let mut acc: Option<(f64, MenuOffer, Option<MenuOffer>)> = None;
                for o in points.iter().filter(|o| ok0(o)) {
                    count += 1;
                    if let Some((v1, o1)) = best1.get(&key(o)) {
                        let m = probe(*o, *o1);
                        if !feasible(Constraint::IcP0P1.sides(p, &m))
                            || !feasible(Constraint::IcP1P0.sides(p, &m))
                        {
                            continue;
                        }
                        let val = base + w0 * gain(o) + v1;
                        if acc.is_none_or(|(b, _, _)| val > b) {
                            acc = Some((val, *o, Some(*o1)));
                        }
                    }
                }
                acc
            }
        };
        if let Some((objective, p0, p1)) = candidate {
            if best.is_none_or(|b| objective > b.objective) {
                best = Some(BruteForceResult {
                    n,
                    p0,
                    p1,
                    objective,
                    feasible_points: 0,
                });
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::Oracle("empty feasible set: grid too coarse or mis-bracketed".into())
    })?;
    best.feasible_points = count;
    // Cross-check the winner against the full constraint list.
    let report = check_constraints(p, scenario, &best.menus());
    if report
        .constraints
        .iter()
        .any(|e| e.status == SlackStatus::Violated && e.slack < -1e-6 * e.slack.abs().max(1.0))
    {
        return Err(Error::Oracle(format!(
            "grid maximiser violates constraints:\n{report}"
        )));
    }
    Ok(best)
}

/// Grid optimum versus closed form for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleComparison {
    pub scenario: Scenario,
    pub closed_objective: f64,
    pub grid_objective: f64,
    pub lipschitz_bound: f64,
    /// (coordinate name, |grid - closed|, allowed deviation)
    pub deviations: Vec<(&'static str, f64, f64)>,
}

impl OracleComparison {
    pub fn objective_ok(&self) -> bool {
        let tol = BINDING_RTOL * self.closed_objective.abs().max(1.0);
        self.grid_objective <= self.closed_objective + tol
            && self.closed_objective - self.grid_objective <= self.lipschitz_bound + tol
    }

    pub fn argmax_ok(&self) -> bool {
        self.deviations.iter().all(|(_, d, allowed)| d <= allowed)
    }

    pub fn passed(&self) -> bool {
        self.objective_ok() && self.argmax_ok()
    }
}

impl fmt::Display for OracleComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "objective: closed {:.6}  grid {:.6}  bound {:.6}  {}",
            self.closed_objective,
            self.grid_objective,
            self.lipschitz_bound,
            if self.objective_ok() { "ok" } else { "FAIL" }
        )?;
        for (name, d, allowed) in &self.deviations {
            writeln!(
                f,
                "  {name:<6} |grid - closed| = {d:<12.6} allowed {allowed:<12.6} {}",
                if d <= allowed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Runs the grid search and compares it with the closed-form menus.
///
/// Times must land within one time cell. A fee is allowed one fee cell plus
/// the drift its binding constraint picks up from the two times it depends on
/// (`s_P` per unit time).
pub fn compare_with_closed_form(
    p: &ModelParams,
    scenario: Scenario,
    grid: &GridSpec,
    phi: f64,
) -> Result<OracleComparison> {
    let closed = solve_scenario(p, scenario)?.menus;
    let bf = brute_force_menu(p, scenario, grid, phi)?;
    let dt = grid.dt();
    let fee_tol = grid.dfee() + 2.0 * p.s_p * dt;
    let mut deviations = vec![
        ("t_N", (bf.n.t - closed.n.t).abs(), dt),
        ("t_P0", (bf.p0.t - closed.p0.t).abs(), dt),
        ("F_P0", (bf.p0.fee - closed.p0.fee).abs(), fee_tol),
    ];
    if let Some(p1) = bf.p1 {
        deviations.push(("t_P1", (p1.t - closed.p1.t).abs(), dt));
        deviations.push(("F_P1", (p1.fee - closed.p1.fee).abs(), fee_tol));
    }
    Ok(OracleComparison {
        scenario,
        closed_objective: bureaucrat_objective(p, scenario, &closed, phi),
        grid_objective: bf.objective,
        lipschitz_bound: grid.lipschitz_bound(p, scenario),
        deviations,
    })
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Draws `count` valid parameter sets from `seed`.
///
/// Money scales are log-uniform; draws violating any parameter restriction
/// are rejected and redrawn. Profit increments are drawn relative to the
/// screening participation bound and contract values relative to `s_P t_N`,
/// which keeps fee grids a few hundred cells tall.
pub fn random_valid_params(seed: u64, count: usize) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s_n = log_uniform(&mut rng, 0.5, 5.0);
        let s_p = log_uniform(&mut rng, 0.5, 20.0);
        let c = log_uniform(&mut rng, 1.0, 1000.0);
        let capital = log_uniform(&mut rng, 1.0, 100.0);
        let f_l = log_uniform(&mut rng, 1.0, 50.0);
        let surplus = log_uniform(&mut rng, 1.0, 2000.0);
        let t_n = surplus / s_n;
        let delta_pi0 = (s_p - s_n).max(0.0) * t_n * log_uniform(&mut rng, 1.0, 1.8) + 1e-3;
        let v = s_p * t_n * log_uniform(&mut rng, 0.02, 0.5);
        let t_p = (c / s_p).sqrt();
        let p = ModelParams {
            pi_n: surplus + capital + f_l,
            delta_pi0,
            capital,
            f_l,
            t_min: rng.gen_range(0.0..10.0),
            s_n,
            s_p,
            c,
            w: 0.0,
            theta: rng.gen_range(0.1..0.9),
            v,
            kappa: rng.gen_range(0.0..0.45),
            g: log_uniform(&mut rng, 0.1, 10.0),
            n_days: rng.gen_range(1.0..30.0),
            mu: 1.0,
        };
        if validate_params(&p).is_empty() && t_n <= 50.0 * t_p {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::tests::p0;

    fn example_grid() -> GridSpec {
        // t in [2, 100] at 0.5 days, F in [10, 500] at 1.0.
        GridSpec {
            t_lo: 2.0,
            t_hi: 100.0,
            fee_lo: 10.0,
            fee_hi: 500.0,
            steps_t: 197,
            steps_fee: 491,
        }
    }

    #[test]
    fn sc_constraint_slacks_at_closed_form() {
        let p = p0();
        let menus = solve_scenario(&p, Scenario::SC).unwrap().menus;
        let r = check_constraints(&p, Scenario::SC, &menus);
        assert_eq!(r.get("IR_N").unwrap().status, SlackStatus::Binding);
        assert_eq!(r.get("IC_P,G=0(N)").unwrap().status, SlackStatus::Binding);
        let ic_n = r.get("IC_N(P,G=0)").unwrap();
        assert!((ic_n.slack - 195.0).abs() < 1e-9);
        assert_eq!(ic_n.status, SlackStatus::Satisfied);
        assert!(r.all_satisfied());
    }

    #[test]
    fn swc_pooling_equality_holds() {
        let p = p0();
        let menus = solve_scenario(&p, Scenario::SwC).unwrap().menus;
        let r = check_constraints(&p, Scenario::SwC, &menus);
        let eq = r.get("s_P(t_P0 - t_P1) = F_P1 - F_P0").unwrap();
        assert_eq!(eq.slack, 0.0);
        assert_eq!(r.constraints.len(), 9);
        assert!(r.all_satisfied());
    }

    #[test]
    fn raised_fee_violates_p_incentive() {
        let p = p0();
        let mut menus = solve_scenario(&p, Scenario::SC).unwrap().menus;
        menus.p0.fee = 271.0;
        let r = check_constraints(&p, Scenario::SC, &menus);
        let ic = r.get("IC_P,G=0(N)").unwrap();
        assert!((ic.slack + 1.0).abs() < 1e-9);
        assert_eq!(ic.status, SlackStatus::Violated);
        assert!(!r.all_satisfied());
    }

    #[test]
    fn sc_grid_optimum_near_closed_form() {
        let p = p0();
        let grid = example_grid();
        let bf = brute_force_menu(&p, Scenario::SC, &grid, 1.0).unwrap();
        assert!((bf.n.t - 70.0).abs() <= grid.dt());
        assert!((bf.p0.t - 5.0).abs() <= grid.dt());
        assert!((bf.p0.fee - 270.0).abs() <= grid.dfee());
        let closed = bureaucrat_objective(
            &p,
            Scenario::SC,
            &solve_scenario(&p, Scenario::SC).unwrap().menus,
            1.0,
        );
        assert!(bf.objective <= closed + 1e-9);
        assert!(closed - bf.objective <= grid.lipschitz_bound(&p, Scenario::SC));
    }

    #[test]
    fn ns_grid_fee_near_full_extraction() {
        let p = p0();
        let grid = example_grid();
        let bf = brute_force_menu(&p, Scenario::NS, &grid, 0.5).unwrap();
        assert!((bf.p0.fee - 360.0).abs() <= grid.dfee());
    }

    #[test]
    fn swc_grid_pools_contract_offers() {
        let p = p0();
        let grid = GridSpec::aligned(&p, 120);
        let bf = brute_force_menu(&p, Scenario::SwC, &grid, 0.5).unwrap();
        assert_eq!(Some(bf.p0), bf.p1);
    }

    #[test]
    fn aligned_grid_agrees_for_all_scenarios() {
        let p = p0();
        let grid = GridSpec::aligned(&p, 150);
        for s in Scenario::ALL {
            let cmp = compare_with_closed_form(&p, s, &grid, 0.5).unwrap();
            assert!(cmp.passed(), "{s}: {cmp}");
        }
    }

    #[test]
    fn refinement_never_lowers_the_optimum() {
        let p = p0();
        let grid = GridSpec::aligned(&p, 60);
        for s in Scenario::ALL {
            let coarse = brute_force_menu(&p, s, &grid, 0.5).unwrap();
            let fine = brute_force_menu(&p, s, &grid.refined(), 0.5).unwrap();
            let tol = 1e-9 * coarse.objective.abs().max(1.0);
            assert!(fine.objective >= coarse.objective - tol, "{s}");
        }
    }

    #[test]
    fn mis_bracketed_grid_is_rejected() {
        let p = p0();
        let grid = GridSpec {
            t_hi: 50.0,
            ..example_grid()
        };
        assert!(matches!(
            brute_force_menu(&p, Scenario::SC, &grid, 1.0),
            Err(Error::Oracle(_))
        ));
    }

    #[test]
    fn empty_feasible_set_is_an_error() {
        let p = p0();
        // All fees above any P-type's willingness to pay.
        let grid = GridSpec {
            fee_lo: 1000.0,
            fee_hi: 2000.0,
            ..example_grid()
        };
        let err = brute_force_menu(&p, Scenario::SC, &grid, 1.0).unwrap_err();
        assert!(err.to_string().contains("empty feasible set"));
    }

    #[test]
    fn random_draws_are_valid_and_reproducible() {
        let a = random_valid_params(11, 20);
        let b = random_valid_params(11, 20);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| validate_params(p).is_empty()));
    }
}
