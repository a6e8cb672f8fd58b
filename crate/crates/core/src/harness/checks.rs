use super::ensemble::Member;
use crate::constants::Pipeline;
use crate::error::Result;
use crate::geometry::{norm, ParabolicCylinder};
use crate::logval::LogValue;
use crate::solver::{Grid, ScaledSource, Scheme, Source, ZeroBoundary};
use serde::Serialize;

/// Level for the measure form: `Gamma = {f > 1/2}`.
pub const MEASURE_LEVEL: f64 = 0.5;

/// Times are matched to windows with this slack.
const WINDOW_EPS: f64 = 1e-12;

/// Closed time window `[a, b]` probed at every node with `|x| <= kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    fn holds(&self, t: f64) -> bool {
        t >= self.start - WINDOW_EPS && t <= self.end + WINDOW_EPS
    }
}

/// What one solve records: minima per window, the global maximum, and the
/// final value at the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveStats {
    pub window_min: Vec<f64>,
    pub u_max: f64,
    pub u_origin: f64,
}

struct Tracker<'a> {
    windows: &'a [Window],
    probes: Vec<usize>,
    origin: usize,
    stats: SolveStats,
}

impl<'a> Tracker<'a> {
    fn new(grid: &'a Grid, windows: &'a [Window], kappa: f64) -> Self {
        let probes = (0..grid.space_len()).filter(|&n| norm(grid.coord(n)) <= kappa + 1e-12).collect::<Vec<_>>();
        let origin = (0..grid.space_len()).min_by(|&a, &b| norm(grid.coord(a)).total_cmp(&norm(grid.coord(b)))).unwrap_or(0);
        Tracker {
            windows,
            probes,
            origin,
            stats: SolveStats { window_min: vec![f64::INFINITY; windows.len()], u_max: f64::NEG_INFINITY, u_origin: 0.0 },
        }
    }

    fn observe(&mut self, t: f64, u: &[f64]) {
        let level_max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.stats.u_max = self.stats.u_max.max(level_max);
        for (w, slot) in self.windows.iter().zip(self.stats.window_min.iter_mut()) {
            if w.holds(t) {
                let lo = self.probes.iter().map(|&n| u[n]).fold(f64::INFINITY, f64::min);
                *slot = slot.min(lo);
            }
        }
        self.stats.u_origin = u[self.origin];
    }

    fn finish(self) -> SolveStats {
        self.stats
    }
}

/// Result of [`run_member`]: coarse statistics and, when refined, the
/// refined statistics plus the largest coarse/fine gap over probe nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberRun {
    pub coarse: SolveStats,
    pub fine: Option<SolveStats>,
    pub richardson: Option<f64>,
}

/// Solves the member (optionally sign-flipping its source) and tracks the
/// windows. With `refine`, a grid with `h/2, dt/4` runs in lockstep.
pub fn run_member(member: &Member, windows: &[Window], kappa: f64, refine: bool, flip: bool) -> Result<MemberRun> {
    let flipped = ScaledSource { inner: &member.source, factor: -1.0 };
    let source: &dyn Source = if flip { &flipped } else { &member.source };
    let grid = &member.grid;
    let scheme = Scheme::new(grid, &member.op)?;
    let mut coarse = Tracker::new(grid, windows, kappa);
    let mut u = scheme.initial(&ZeroBoundary);
    coarse.observe(grid.time(0), &u);
    if !refine {
        for k in 0..grid.steps {
            u = scheme.step(&u, k, source, &ZeroBoundary);
            coarse.observe(grid.time(k + 1), &u);
        }
        return Ok(MemberRun { coarse: coarse.finish(), fine: None, richardson: None });
    }
    let fine_grid = grid.refined(&member.op)?;
    let fine_scheme = Scheme::new(&fine_grid, &member.op)?;
    let mut fine = Tracker::new(&fine_grid, windows, kappa);
    let mut v = fine_scheme.initial(&ZeroBoundary);
    fine.observe(fine_grid.time(0), &v);
    let probes = coarse.probes.clone();
    let mut gap = 0.0f64;
    let ratio = fine_grid.steps / grid.steps;
    for k in 0..grid.steps {
        u = scheme.step(&u, k, source, &ZeroBoundary);
        coarse.observe(grid.time(k + 1), &u);
        for j in 0..ratio {
            let kf = k * ratio + j;
            v = fine_scheme.step(&v, kf, source, &ZeroBoundary);
            fine.observe(fine_grid.time(kf + 1), &v);
        }
        for &n in &probes {
            gap = gap.max((u[n] - v[grid.refined_node(n)]).abs());
        }
    }
    Ok(MemberRun { coarse: coarse.finish(), fine: Some(fine.finish()), richardson: Some(gap) })
}

/// Every bound a member is checked against, with its window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberBounds {
    pub m: f64,
    pub level: f64,
    pub f_norm: f64,
    pub thm_lb: LogValue,
    pub thm_lb_window: Window,
    pub thm_lb_proven: Window,
    pub tsfs: Option<(LogValue, f64, Window)>,
    /// Present when the source is supported in `B_{1-kappa} x (-1, -kappa]`.
    pub slick: Option<(LogValue, Window)>,
}

impl MemberBounds {
    pub fn windows(&self) -> Vec<Window> {
        let mut w = vec![self.thm_lb_window, self.thm_lb_proven];
        w.push(self.tsfs.map(|t| t.2).unwrap_or(Window::new(1.0, 1.0)));
        w.push(self.slick.map(|s| s.1).unwrap_or(Window::new(1.0, 1.0)));
        w
    }
}

pub fn member_bounds(member: &Member, pipe: &Pipeline) -> Result<MemberBounds> {
    let n = pipe.dim as f64;
    let gamma = member.source.level_set(MEASURE_LEVEL);
    let m = gamma.normalized_measure().min(1.0);
    let f_norm = member.source.norm(n + 1.0);
    let (thm_lb, thm_lb_window, thm_lb_proven) = if m > 0.0 {
        let b = pipe.thm_lb(m, MEASURE_LEVEL)?;
        (b.bound, Window::new(b.window.0, b.window.1), Window::new(b.proven_window.0, b.proven_window.1))
    } else {
        (LogValue::ZERO, Window::new(0.0, 0.0), Window::new(0.0, 0.0))
    };
    let tsfs = if f_norm > 0.0 && f_norm < 1.0 {
        let b = pipe.thm_tsfs(f_norm)?;
        b.window.map(|w| (b.bound, b.alpha, Window::new(w.0, w.1)))
    } else {
        None
    };
    let lower = ParabolicCylinder { center: [0.0, 0.0], top_time: -pipe.kappa, radius: 1.0 - pipe.kappa };
    let slick = if f_norm > 0.0 && f_norm < 1.0 && member.source.supported_in(&lower) {
        let b = pipe.cor_slicklb(f_norm)?;
        Some((b.bound, Window::new(b.window.0, b.window.1)))
    } else {
        None
    };
    Ok(MemberBounds { m, level: MEASURE_LEVEL, f_norm, thm_lb, thm_lb_window, thm_lb_proven, tsfs, slick })
}

/// One inequality: observed minimum against a bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub observed_min: f64,
    pub bound_ln: f64,
    /// `observed_min - bound`.
    pub margin: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(observed_min: f64, bound: LogValue, tolerance: f64) -> Self {
        // an empty window observes nothing and is vacuous
        let observed = if observed_min.is_finite() { observed_min } else { f64::INFINITY };
        let margin = observed - bound.value();
        BoundCheck { observed_min: observed, bound_ln: bound.ln(), margin, pass: margin >= -tolerance }
    }
}

/// Both sides of the norm form plus the measure forms for one member.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberRow {
    pub index: usize,
    pub family: String,
    pub operator: String,
    pub certified: bool,
    pub m: f64,
    pub level: f64,
    pub f_norm: f64,
    pub u_max: f64,
    pub u_origin: f64,
    /// `u_max / f_norm`, the ABP-type ratio.
    pub abp_ratio: Option<f64>,
    pub thm_lb: BoundCheck,
    pub thm_lb_proven: BoundCheck,
    pub tsfs: Option<BoundCheck>,
    pub tsfs_alpha: Option<f64>,
    pub slick: Option<BoundCheck>,
    pub richardson: Option<f64>,
    pub fine_abp_ratio: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn check_two_sided(member: &Member, bounds: &MemberBounds, run: &MemberRun, tolerance: f64) -> MemberRow {
    let s = &run.coarse;
    let w = &s.window_min;
    let thm_lb = BoundCheck::new(w[0], bounds.thm_lb, tolerance);
    let thm_lb_proven = BoundCheck::new(w[1], bounds.thm_lb, tolerance);
    let tsfs = bounds.tsfs.map(|(b, _, _)| BoundCheck::new(w[2], b, tolerance));
    let slick = bounds.slick.map(|(b, _)| BoundCheck::new(w[3], b, tolerance));
    let ratio = |u: f64| (bounds.f_norm > 0.0).then(|| u.max(0.0) / bounds.f_norm);
    let pass = thm_lb.pass && thm_lb_proven.pass && tsfs.is_none_or(|c| c.pass) && slick.is_none_or(|c| c.pass);
    MemberRow {
        index: member.index,
        family: member.family.to_string(),
        operator: member.op.kind.to_string(),
        certified: member.certified,
        m: bounds.m,
        level: bounds.level,
        f_norm: bounds.f_norm,
        u_max: s.u_max,
        u_origin: s.u_origin,
        abp_ratio: ratio(s.u_max),
        thm_lb,
        thm_lb_proven,
        tsfs,
        tsfs_alpha: bounds.tsfs.map(|t| t.1),
        slick,
        richardson: run.richardson,
        fine_abp_ratio: run.fine.as_ref().and_then(|f| ratio(f.u_max)),
        tolerance,
        pass: pass && member.certified,
    }
}

/// Least-squares slope and intercept of `y` on `x`, with `R^2`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::FSConfig;
    use crate::harness::ensemble::{generate_member, EnsembleConfig, LatticeSource};

    fn config() -> EnsembleConfig {
        EnsembleConfig { nodes: 65, ..Default::default() }
    }

    #[test]
    fn fit_recovers_a_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 2.0 * i as f64 - 1.0)).collect();
        let (s, c, r2) = linear_fit(&pts).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_member_is_trivial() {
        let c = config();
        let pipe = Pipeline::new(c.kappa, c.ell, c.dim, FSConfig::default()).unwrap();
        let mut m = generate_member(&c, 0).unwrap();
        m.source = LatticeSource::from_fn(c.source_lattice(), |_, _| 0.0).unwrap();
        let b = member_bounds(&m, &pipe).unwrap();
        assert_eq!((b.m, b.f_norm), (0.0, 0.0));
        let run = run_member(&m, &b.windows(), c.kappa, false, false).unwrap();
        let row = check_two_sided(&m, &b, &run, 0.0);
        assert!(row.pass);
        assert_eq!(row.u_max, 0.0);
    }

    #[test]
    fn refinement_gap_is_small_and_flip_fails() {
        let c = config();
        let pipe = Pipeline::new(c.kappa, c.ell, c.dim, FSConfig::default()).unwrap();
        let m = generate_member(&c, 2).unwrap();
        let b = member_bounds(&m, &pipe).unwrap();
        let run = run_member(&m, &b.windows(), c.kappa, true, false).unwrap();
        let gap = run.richardson.unwrap();
        assert!(gap > 0.0 && gap < 0.1 * run.coarse.u_max, "gap {gap}");
        let row = check_two_sided(&m, &b, &run, 2.0 * gap);
        assert!(row.pass, "{row:?}");
        let bad = run_member(&m, &b.windows(), c.kappa, true, true).unwrap();
        let row = check_two_sided(&m, &b, &bad, 2.0 * bad.richardson.unwrap());
        assert!(!row.pass);
    }
}
