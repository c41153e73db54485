//! Within (firm fixed-effects) least squares with firm-clustered standard errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panelgen::{col, construct_design, Design, PanelDataset, ResponseChoice, SpecVariant};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_RTOL: f64 = 1e-10;
/// A demeaned column this small relative to its raw scale is absorbed by the firm effects.
const ABSORBED_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterCorrection {
    CR0,
    /// `G/(G-1) * (N-1)/(N-K)`, with `K` = retained slopes + firm effects + 1.
    #[default]
    CR1,
}

impl std::str::FromStr for ClusterCorrection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CR0" => Ok(ClusterCorrection::CR0),
            "CR1" => Ok(ClusterCorrection::CR1),
            _ => Err(Error::Config(format!(
                "unknown cluster correction `{s}` (CR0 or CR1)"
            ))),
        }
    }
}

impl fmt::Display for ClusterCorrection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterCorrection::CR0 => "CR0",
            ClusterCorrection::CR1 => "CR1",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSpec {
    pub variant: SpecVariant,
    pub response: ResponseChoice,
    pub correction: ClusterCorrection,
}

impl RegressionSpec {
    pub fn new(variant: SpecVariant) -> Self {
        RegressionSpec {
            response: variant.default_response(),
            variant,
            correction: ClusterCorrection::CR1,
        }
    }

    pub fn with_correction(mut self, correction: ClusterCorrection) -> Self {
        self.correction = correction;
        self
    }

    pub fn design(&self, panel: &PanelDataset) -> Result<Design> {
        construct_design(panel, self.response, &self.variant)
    }
}

/// Firm means removed by [`within_demean`], in ascending firm order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterMeans {
    pub firms: Vec<u64>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub sizes: Vec<usize>,
}

fn groups(firm_ids: &[u64]) -> BTreeMap<u64, Vec<usize>> {
    let mut g: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, f) in firm_ids.iter().enumerate() {
        g.entry(*f).or_default().push(i);
    }
    g
}

/// Subtracts firm means from every column and the response.
///
/// A second pass removes the rounding left by the first, so within-firm
/// means are zero to machine precision.
pub fn within_demean(design: &Design) -> (Design, ClusterMeans) {
    let g = groups(&design.firm_ids);
    let k = design.x.ncols();
    let mut x = design.x.clone();
    let mut y = design.y.clone();
    let mut xm = DMatrix::zeros(g.len(), k);
    let mut ym = DVector::zeros(g.len());
    for (gi, rows) in g.values().enumerate() {
        let n = rows.len() as f64;
        for _ in 0..2 {
            for j in 0..k {
                let m = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
                rows.iter().for_each(|&i| x[(i, j)] -= m);
                xm[(gi, j)] += m;
            }
            let m = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
            rows.iter().for_each(|&i| y[i] -= m);
            ym[gi] += m;
        }
    }
    let means = ClusterMeans {
        firms: g.keys().copied().collect(),
        x: xm,
        y: ym,
        sizes: g.values().map(Vec::len).collect(),
    };
    (
        Design {
            x,
            y,
            ..design.clone()
        },
        means,
    )
}

/// Sum over firms of the outer products of within-firm score sums `X_g' u_g`,
/// accumulated in ascending firm order.
pub fn cluster_meat(x: &DMatrix<f64>, u: &DVector<f64>, firm_ids: &[u64]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut meat = DMatrix::zeros(k, k);
    for rows in groups(firm_ids).values() {
        let mut s = DVector::zeros(k);
        for &i in rows {
            s += x.row(i).transpose() * u[i];
        }
        meat += &s * s.transpose();
    }
    meat
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    /// False when the regressor is constant within every firm.
    pub identified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub variant: String,
    pub response: ResponseChoice,
    pub correction: ClusterCorrection,
    /// Every design column in order, then the intercept.
    pub coefficients: Vec<Coefficient>,
    /// Covariance over the identified coefficients, in `coefficients` order.
    pub covariance: DMatrix<f64>,
    pub covariance_names: Vec<String>,
    pub r2_within: f64,
    pub r2_between: f64,
    pub r2_overall: f64,
    pub n_obs: usize,
    pub n_firms: usize,
    /// `N - K` with `K` counting slopes, firm effects and the constant.
    pub df_resid: usize,
    pub ssr: f64,
    pub residuals: DVector<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn not_identified(&self) -> Vec<&str> {
        self.coefficients
            .iter()
            .filter(|c| !c.identified)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn corr2(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab * sab / (saa * sbb)).clamp(0.0, 1.0)
    }
}

/// Names of the columns spanning the numerical null space of `x`, if any.
fn collinear_set(x: &DMatrix<f64>, names: &[String]) -> Option<Vec<String>> {
    let svd = x.clone().svd(false, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    let (imin, min) = sv.argmin();
    if min > RANK_RTOL * max {
        return None;
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let v = v_t.row(imin);
    let vmax = v.amax();
    Some(
        names
            .iter()
            .enumerate()
            .filter(|(j, _)| v[*j].abs() > 1e-6 * vmax)
            .map(|(_, n)| n.clone())
            .collect(),
    )
}

/// Within estimator with firm-clustered covariance.
pub fn fit_within(design: &Design, spec: &RegressionSpec) -> Result<FitResult> {
    let n = design.y.len();
    if n == 0 {
        return Err(Error::EmptyPanel);
    }
    if design.x.nrows() != n || design.firm_ids.len() != n || design.names.len() != design.x.ncols()
    {
        return Err(Error::Estimator("design dimensions disagree".into()));
    }
    if design
        .x
        .iter()
        .chain(design.y.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Estimator("design contains non-finite values".into()));
    }
    let (dm, means) = within_demean(design);
    let g = means.firms.len();

    let mut keep = Vec::new();
    for j in 0..design.x.ncols() {
        let raw = design.x.column(j).amax().max(1.0);
        if dm.x.column(j).amax() > ABSORBED_RTOL * raw {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(Error::Estimator(
            "no regressor varies within firms (at least 2 periods per firm are required)".into(),
        ));
    }
    let k = keep.len();
    let kept_names: Vec<String> = keep.iter().map(|&j| design.names[j].clone()).collect();
    let xr = dm.x.select_columns(&keep);
    let scale = DVector::from_iterator(k, (0..k).map(|j| xr.column(j).norm()));
    let mut xs = xr.clone();
    for j in 0..k {
        xs.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    if let Some(set) = collinear_set(&xs, &kept_names) {
        return Err(Error::RankDeficient(set));
    }

    let k_total = k + g + 1;
    if n <= k_total && spec.correction == ClusterCorrection::CR1 {
        return Err(Error::Estimator(format!(
            "CR1 needs more observations ({n}) than parameters ({k_total})"
        )));
    }
    if g < 2 && spec.correction == ClusterCorrection::CR1 {
        return Err(Error::Estimator("CR1 needs at least 2 firms".into()));
    }

    let qr = xs.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let qty = q.transpose() * &dm.y;
    let beta_s = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Estimator("singular triangular factor".into()))?;
    let beta = beta_s.component_div(&scale);
    let u = &dm.y - &xr * &beta;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Estimator("singular triangular factor".into()))?;
    let bread_s = &r_inv * r_inv.transpose();
    let meat_s = cluster_meat(&xs, &u, &dm.firm_ids);
    let factor = match spec.correction {
        ClusterCorrection::CR0 => 1.0,
        ClusterCorrection::CR1 => {
            (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n - k_total) as f64)
        }
    };
    let v_s = &bread_s * meat_s * &bread_s * factor;
    let v_beta = DMatrix::from_fn(k, k, |a, b| v_s[(a, b)] / (scale[a] * scale[b]));
    let v_beta = (&v_beta + v_beta.transpose()) * 0.5;

    // Constant = grand mean of y minus slopes times grand means of x. Within
    // residuals sum to zero in every firm, so its score vanishes and its
    // variance comes from the slopes alone.
    let raw_kept = design.x.select_columns(&keep);
    let xbar = DVector::from_iterator(k, (0..k).map(|j| raw_kept.column(j).mean()));
    let intercept = design.y.mean() - xbar.dot(&beta);
    let v_xbar = &v_beta * &xbar;
    let mut cov = DMatrix::zeros(k + 1, k + 1);
    cov.view_mut((0, 0), (k, k)).copy_from(&v_beta);
    for a in 0..k {
        cov[(a, k)] = -v_xbar[a];
        cov[(k, a)] = -v_xbar[a];
    }
    cov[(k, k)] = xbar.dot(&v_xbar);

    let mut coefficients = Vec::with_capacity(design.names.len() + 1);
    let mut pos = 0;
    for (j, name) in design.names.iter().enumerate() {
        if keep.get(pos) == Some(&j) {
            let se = cov[(pos, pos)].max(0.0).sqrt();
            coefficients.push(Coefficient {
                name: name.clone(),
                estimate: beta[pos],
                se,
                t: beta[pos] / se,
                identified: true,
            });
            pos += 1;
        } else {
            coefficients.push(Coefficient {
                name: name.clone(),
                estimate: f64::NAN,
                se: f64::NAN,
                t: f64::NAN,
                identified: false,
            });
        }
    }
    let se_c = cov[(k, k)].max(0.0).sqrt();
    coefficients.push(Coefficient {
        name: col::INTERCEPT.into(),
        estimate: intercept,
        se: se_c,
        t: intercept / se_c,
        identified: true,
    });
    let mut covariance_names = kept_names;
    covariance_names.push(col::INTERCEPT.into());

    let ssr = u.norm_squared();
    let sst = dm.y.norm_squared();
    let r2_within = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let between_fit = means.x.select_columns(&keep) * &beta;
    let r2_between = corr2(&between_fit, &means.y);
    let r2_overall = corr2(&(&raw_kept * &beta), &design.y);

    Ok(FitResult {
        variant: spec.variant.to_string(),
        response: spec.response,
        correction: spec.correction,
        coefficients,
        covariance: cov,
        covariance_names,
        r2_within,
        r2_between,
        r2_overall,
        n_obs: n,
        n_firms: g,
        df_resid: n.saturating_sub(k_total),
        ssr,
        residuals: u,
    })
}

/// Size caps for the dummy-variable regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LsdvLimits {
    pub max_rows: usize,
    pub max_firms: usize,
}

impl Default for LsdvLimits {
    fn default() -> Self {
        LsdvLimits {
            max_rows: 5000,
            max_firms: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsdvResult {
    pub slopes: BTreeMap<String, f64>,
    /// Regressors lying in the span of the firm dummies.
    pub dropped: Vec<String>,
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    sv.iter().filter(|s| **s > RANK_RTOL * max).count()
}

/// OLS on the regressors plus one explicit dummy per firm.
pub fn lsdv_oracle(design: &Design, limits: LsdvLimits) -> Result<LsdvResult> {
    let n = design.y.len();
    let firms: BTreeSet<u64> = design.firm_ids.iter().copied().collect();
    let g = firms.len();
    if n > limits.max_rows || g > limits.max_firms {
        return Err(Error::SizeLimit {
            rows: n,
            firms: g,
            max_rows: limits.max_rows,
            max_firms: limits.max_firms,
        });
    }
    let index: BTreeMap<u64, usize> = firms.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let dummies = DMatrix::from_fn(n, g, |i, c| {
        if index[&design.firm_ids[i]] == c {
            1.0
        } else {
            0.0
        }
    });
    // Normalise columns so the rank test is scale-free.
    let unit = |v: DVector<f64>| {
        let s = v.norm();
        if s > 0.0 {
            v / s
        } else {
            v
        }
    };
    let mut cols: Vec<DVector<f64>> = (0..g).map(|c| dummies.column(c).into_owned()).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut current = rank(&DMatrix::from_columns(&cols));
    for (j, name) in design.names.iter().enumerate() {
        cols.push(unit(design.x.column(j).into_owned()));
        let r = rank(&DMatrix::from_columns(&cols));
        if r > current {
            current = r;
            kept.push(j);
        } else {
            cols.pop();
            dropped.push(name.clone());
        }
    }
    let mut z = DMatrix::zeros(n, kept.len() + g);
    for (a, &j) in kept.iter().enumerate() {
        z.set_column(a, &design.x.column(j));
    }
    z.view_mut((0, kept.len()), (n, g)).copy_from(&dummies);
    let coef = z
        .svd(true, true)
        .solve(&design.y, 1e-14)
        .map_err(|e| Error::Estimator(format!("LSDV solve failed: {e}")))?;
    Ok(LsdvResult {
        slopes: kept
            .iter()
            .enumerate()
            .map(|(a, &j)| (design.names[j].clone(), coef[a]))
            .collect(),
        dropped,
    })
}

/// Significance stars at 10/5/1% two-sided normal levels.
pub fn stars(t: f64) -> &'static str {
    let a = t.abs();
    if a > 2.575_829_303_548_901 {
        "***"
    } else if a > 1.959_963_984_540_054 {
        "**"
    } else if a > 1.644_853_626_951_472_2 {
        "*"
    } else {
        ""
    }
}

/// Formats `x` with six significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

impl FitResult {
    /// Aligned text table: estimate with stars, standard error in parentheses below.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let response = match self.response {
            ResponseChoice::Bribe => "bribe per worker",
            ResponseChoice::RepBribe => "reported bribe per worker",
        };
        s.push_str(&format!(
            "Within estimator, firm fixed effects ({})\nDependent variable: {response}\n\n",
            self.variant
        ));
        s.push_str(&format!("{:<16} {:>18}\n", "", "estimate"));
        for c in &self.coefficients {
            if c.identified {
                let est = format!("{}{}", fmt_sig(c.estimate), stars(c.t));
                s.push_str(&format!("{:<16} {:>18}\n", c.name, est));
                s.push_str(&format!(
                    "{:<16} {:>18}\n",
                    "",
                    format!("({})", fmt_sig(c.se))
                ));
            } else {
                s.push_str(&format!("{:<16} {:>18}\n", c.name, "not identified"));
            }
        }
        s.push_str(&format!(
            "\nObservations     {:>18}\nFirms            {:>18}\n",
            self.n_obs, self.n_firms
        ));
        for (name, v) in [
            ("R2 within", self.r2_within),
            ("R2 between", self.r2_between),
            ("R2 overall", self.r2_overall),
        ] {
            s.push_str(&format!("{name:<16} {:>18}\n", fmt_sig(v)));
        }
        s.push_str(&format!(
            "\nFirm-clustered standard errors ({}) in parentheses.\n\
             * p<0.10, ** p<0.05, *** p<0.01 (two-sided, normal).\n",
            self.correction
        ));
        let ni = self.not_identified();
        if !ni.is_empty() {
            s.push_str(&format!(
                "Constant within every firm, absorbed by fixed effects: {}\n",
                ni.join(", ")
            ));
        }
        s
    }

    /// Machine-readable `name,estimate,se,t`; not-identified rows have empty values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["name", "estimate", "se", "t"])?;
        for c in &self.coefficients {
            if c.identified {
                wr.write_record([
                    c.name.clone(),
                    c.estimate.to_string(),
                    c.se.to_string(),
                    c.t.to_string(),
                ])?;
            } else {
                wr.write_record([c.name.as_str(), "", "", ""])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Design {
        Design {
            names: vec!["x".into()],
            x: DMatrix::from_column_slice(4, 1, &[0.0, 2.0, 0.0, 2.0]),
            y: DVector::from_column_slice(&[1.0, 4.0, 2.0, 3.0]),
            firm_ids: vec![1, 1, 2, 2],
            years: vec![1, 2, 1, 2],
        }
    }

    fn cr0() -> RegressionSpec {
        RegressionSpec::new(SpecVariant::Em11).with_correction(ClusterCorrection::CR0)
    }

    #[test]
    fn toy_panel_under_cr0() {
        let fit = fit_within(&toy(), &cr0()).unwrap();
        let b = fit.get("x").unwrap();
        assert!((b.estimate - 1.0).abs() < 1e-12);
        assert!((b.se - 0.125f64.sqrt()).abs() < 1e-12);
        assert!((b.se - 0.35355).abs() < 1e-5);
        let u: Vec<f64> = fit.residuals.iter().copied().collect();
        for (a, e) in u.iter().zip([-0.5, 0.5, 0.5, -0.5]) {
            assert!((a - e).abs() < 1e-12);
        }
        // Grand mean 2.5 minus slope times mean x 1.
        assert!((fit.get("intercept").unwrap().estimate - 1.5).abs() < 1e-12);
    }

    #[test]
    fn toy_panel_has_no_cr1_degrees_of_freedom() {
        let err = fit_within(&toy(), &RegressionSpec::new(SpecVariant::Em11)).unwrap_err();
        assert!(err.to_string().contains("CR1"));
    }

    #[test]
    fn toy_panel_lsdv() {
        let l = lsdv_oracle(&toy(), LsdvLimits::default()).unwrap();
        assert!((l.slopes["x"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_demeaning() {
        let (d, m) = within_demean(&toy());
        assert_eq!(d.x.column(0).as_slice(), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(m.x[(0, 0)], 1.0);
    }

    #[test]
    fn firm_id_column_is_absorbed() {
        let mut d = toy();
        d.names.push("firm".into());
        d.x = d.x.insert_column(1, 0.0);
        for i in 0..4 {
            d.x[(i, 1)] = d.firm_ids[i] as f64;
        }
        let (dm, _) = within_demean(&d);
        assert!(dm.x.column(1).iter().all(|v| *v == 0.0));
        let fit = fit_within(&d, &cr0()).unwrap();
        assert_eq!(fit.not_identified(), vec!["firm"]);
        assert!((fit.get("x").unwrap().estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_regressors_are_named() {
        let mut d = toy();
        d.names = vec!["a".into(), "b".into(), "c".into()];
        d.x = DMatrix::from_row_slice(
            6,
            3,
            &[
                0.0, 1.0, 1.0, //
                2.0, 0.0, 4.0, //
                1.0, 3.0, 5.0, //
                0.0, 1.0, 1.0, //
                3.0, 2.0, 8.0, //
                1.0, 0.0, 2.0,
            ],
        );
        d.y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        d.firm_ids = vec![1, 1, 1, 2, 2, 2];
        match fit_within(&d, &cr0()).unwrap_err() {
            Error::RankDeficient(set) => assert_eq!(set, vec!["a", "b", "c"]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn singleton_clusters_have_zero_meat() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 0.5, 2.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let d = Design {
            names: vec!["a".into(), "b".into()],
            x,
            y,
            firm_ids: vec![1, 2, 3],
            years: vec![1, 1, 1],
        };
        let (dm, _) = within_demean(&d);
        let u = dm.y.clone();
        assert_eq!(cluster_meat(&dm.x, &u, &dm.firm_ids).amax(), 0.0);
        assert!(fit_within(&d, &cr0()).is_err());
    }

    #[test]
    fn lsdv_size_cap() {
        let err = lsdv_oracle(
            &toy(),
            LsdvLimits {
                max_rows: 3,
                max_firms: 10,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::SizeLimit { rows: 4, .. }));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.039), "0.0390000");
        assert_eq!(fmt_sig(-8.804), "-8.80400");
        assert_eq!(fmt_sig(123456.7), "123457");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(stars(2.155), "**");
        assert_eq!(stars(1.7), "*");
        assert_eq!(stars(-3.0), "***");
    }

    #[test]
    fn csv_output_lists_every_coefficient() {
        let fit = fit_within(&toy(), &cr0()).unwrap();
        let mut buf = Vec::new();
        fit.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name,estimate,se,t");
        assert!(lines[1].starts_with("x,"));
        assert!(lines[2].starts_with("intercept,"));
        let est: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert!((est - 1.5).abs() < 1e-12);
    }
}
