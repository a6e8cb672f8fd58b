use super::checks::{check_two_sided, linear_fit, member_bounds, run_member, BoundCheck, MemberRow};
use super::ensemble::{generate_member, EnsembleConfig};
use crate::constants::{FSConfig, Pipeline};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

/// Members with `index % RICHARDSON_EVERY == 0` are also solved on the
/// refined grid.
pub const RICHARDSON_EVERY: usize = 10;

/// Tolerance is this multiple of the largest refinement gap.
pub const TOLERANCE_FACTOR: f64 = 2.0;

/// Frozen CSV column order.
pub const CSV_COLUMNS: [&str; 26] = [
    "index",
    "family",
    "operator",
    "certified",
    "m",
    "level",
    "f_norm",
    "u_max",
    "u_origin",
    "abp_ratio",
    "thm_lb_min",
    "thm_lb_ln_bound",
    "thm_lb_margin",
    "thm_lb_proven_min",
    "thm_lb_proven_margin",
    "tsfs_min",
    "tsfs_ln_bound",
    "tsfs_margin",
    "tsfs_alpha",
    "slick_min",
    "slick_ln_bound",
    "slick_margin",
    "richardson",
    "fine_abp_ratio",
    "tolerance",
    "pass",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub ensemble: EnsembleConfig,
    pub fs: FSConfig,
    pub richardson_every: usize,
    /// Solve with the source sign-flipped; every positive member must then fail.
    pub fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { ensemble: EnsembleConfig::default(), fs: FSConfig::default(), richardson_every: RICHARDSON_EVERY, fault: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates {
    pub count: usize,
    pub passed: usize,
    pub hard_failures: usize,
    pub certified: usize,
    pub richardson_members: usize,
    pub richardson_max: f64,
    pub tolerance: f64,
    /// Ensemble max of `u_max / f_norm`.
    pub c_emp: f64,
    /// The same over the refined subsample, at `h` and at `h/2`.
    pub c_emp_h: Option<f64>,
    pub c_emp_h2: Option<f64>,
    pub abp_refinement_ratio: Option<f64>,
    pub abp_stable: bool,
    /// Slope of `ln u(0, 0)` against `ln m`.
    pub origin_slope: Option<f64>,
    pub min_thm_lb_margin: f64,
    pub min_tsfs_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub config: SuiteConfig,
    pub rows: Vec<MemberRow>,
    pub aggregates: Aggregates,
}

fn max_opt(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Aggregates depend only on the set of rows: they are sorted by index first.
pub fn aggregate(rows: &mut [MemberRow]) -> Aggregates {
    rows.sort_by_key(|r| r.index);
    let richardson: Vec<f64> = rows.iter().filter_map(|r| r.richardson).collect();
    let richardson_max = richardson.iter().copied().fold(0.0, f64::max);
    let c_emp = rows.iter().filter_map(|r| r.abp_ratio).fold(0.0, f64::max);
    let sub = || rows.iter().filter(|r| r.richardson.is_some());
    let c_emp_h = max_opt(sub().filter_map(|r| r.abp_ratio));
    let c_emp_h2 = max_opt(sub().filter_map(|r| r.fine_abp_ratio));
    let abp_refinement_ratio = match (c_emp_h, c_emp_h2) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.m > 0.0 && r.u_origin > 0.0).map(|r| (r.m.ln(), r.u_origin.ln())).collect();
    Aggregates {
        count: rows.len(),
        passed: rows.iter().filter(|r| r.pass).count(),
        hard_failures: rows.iter().filter(|r| !r.pass).count(),
        certified: rows.iter().filter(|r| r.certified).count(),
        richardson_members: richardson.len(),
        richardson_max,
        tolerance: rows.first().map_or(0.0, |r| r.tolerance),
        c_emp,
        c_emp_h,
        c_emp_h2,
        abp_refinement_ratio,
        abp_stable: abp_refinement_ratio.is_none_or(|q| (0.5..=2.0).contains(&q)) && c_emp.is_finite(),
        origin_slope: linear_fit(&pts).map(|f| f.0),
        min_thm_lb_margin: rows.iter().map(|r| r.thm_lb.margin).fold(f64::INFINITY, f64::min),
        min_tsfs_margin: rows.iter().filter_map(|r| r.tsfs.map(|c| c.margin)).fold(f64::INFINITY, f64::min),
    }
}

pub fn run_suite(config: &SuiteConfig) -> Result<VerificationReport> {
    let e = &config.ensemble;
    e.validate()?;
    if config.richardson_every == 0 {
        return Err(Error::Config("richardson_every must be positive".into()));
    }
    let pipe = Pipeline::new(e.kappa, e.ell, e.dim, config.fs)?;
    let runs = (0..e.count)
        .into_par_iter()
        .map(|i| {
            let member = generate_member(e, i)?;
            let bounds = member_bounds(&member, &pipe)?;
            let run = run_member(&member, &bounds.windows(), e.kappa, i % config.richardson_every == 0, config.fault)?;
            Ok((member, bounds, run))
        })
        .collect::<Result<Vec<_>>>()?;
    // the tolerance needs the whole subsample, so rows are built afterwards
    let gap = runs.iter().filter_map(|r| r.2.richardson).fold(0.0, f64::max);
    let tolerance = TOLERANCE_FACTOR * gap;
    let mut rows: Vec<MemberRow> = runs.iter().map(|(m, b, r)| check_two_sided(m, b, r, tolerance)).collect();
    let aggregates = aggregate(&mut rows);
    Ok(VerificationReport { config: config.clone(), rows, aggregates })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn check_fields(c: Option<&BoundCheck>, with_bound: bool) -> Vec<String> {
    let mut out = vec![opt(c.map(|c| c.observed_min))];
    if with_bound {
        out.push(opt(c.map(|c| c.bound_ln)));
    }
    out.push(opt(c.map(|c| c.margin)));
    out
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.aggregates.hard_failures == 0
    }

    fn csv_record(r: &MemberRow) -> Vec<String> {
        let mut rec = vec![
            r.index.to_string(),
            r.family.clone(),
            r.operator.clone(),
            r.certified.to_string(),
            num(r.m),
            num(r.level),
            num(r.f_norm),
            num(r.u_max),
            num(r.u_origin),
            opt(r.abp_ratio),
        ];
        rec.extend(check_fields(Some(&r.thm_lb), true));
        rec.push(num(r.thm_lb_proven.observed_min));
        rec.push(num(r.thm_lb_proven.margin));
        rec.extend(check_fields(r.tsfs.as_ref(), true));
        rec.push(opt(r.tsfs_alpha));
        rec.extend(check_fields(r.slick.as_ref(), true));
        rec.push(opt(r.richardson));
        rec.push(opt(r.fine_abp_ratio));
        rec.push(num(r.tolerance));
        rec.push(r.pass.to_string());
        debug_assert_eq!(rec.len(), CSV_COLUMNS.len());
        rec
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.rows {
            w.write_record(Self::csv_record(r)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// One JSON object per member, then one aggregate object.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&serde_json::to_string(r).expect("row serializes"));
            s.push('\n');
        }
        let tail = serde_json::json!({ "aggregates": self.aggregates, "config": self.config });
        s.push_str(&tail.to_string());
        s.push('\n');
        s
    }

    pub fn summary(&self) -> String {
        let a = &self.aggregates;
        let mut s = String::new();
        let _ = writeln!(s, "members {} passed {} hard_failures {}", a.count, a.passed, a.hard_failures);
        let _ = writeln!(s, "tolerance {:e} (richardson max {:e} over {} members)", a.tolerance, a.richardson_max, a.richardson_members);
        let _ = writeln!(s, "abp c_emp {:e} refinement ratio {} stable {}", a.c_emp, opt(a.abp_refinement_ratio), a.abp_stable);
        let _ = writeln!(s, "origin slope {}", opt(a.origin_slope));
        s
    }
}
