//! Cylinders, rasterized subsets of the unit cylinder, coverings and the
//! planners that stack cylinders on top of each other.
//!
//! Space points are stored as `[f64; 2]`; in one space dimension the second
//! component is always zero, so Euclidean norms are correct for both cases.
//! Measures are normalized by `|Q_1|`, so the unit cylinder has measure one.

use crate::error::{Error, Result};
use std::fmt::Write as _;

pub type Coord = [f64; 2];

pub const ORIGIN: Coord = [0.0, 0.0];

/// Slack used when testing containment of closed discs in open balls.
const GEOM_EPS: f64 = 1e-12;

pub fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("space dimension must be 1 or 2, got {dim}")))
    }
}

pub fn norm(x: Coord) -> f64 {
    x[0].hypot(x[1])
}

pub fn dist(a: Coord, b: Coord) -> f64 {
    norm([a[0] - b[0], a[1] - b[1]])
}

fn lerp(a: Coord, b: Coord, s: f64) -> Coord {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Volume of the unit ball in `R^dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        _ => std::f64::consts::PI,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimePoint {
    pub x: Coord,
    pub t: f64,
}

/// `Q_r(x0, t0) = B_r(x0) x (t0 - r^2, t0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParabolicCylinder {
    pub center: Coord,
    pub top_time: f64,
    pub radius: f64,
}

impl ParabolicCylinder {
    pub fn new(center: Coord, top_time: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("cylinder radius must be positive, got {radius}")));
        }
        Ok(ParabolicCylinder { center, top_time, radius })
    }

    /// The unit cylinder `Q_1 = B_1 x (-1, 0]`.
    pub fn unit() -> Self {
        ParabolicCylinder { center: ORIGIN, top_time: 0.0, radius: 1.0 }
    }

    pub fn bottom_time(&self) -> f64 {
        self.top_time - self.radius * self.radius
    }

    pub fn contains(&self, x: Coord, t: f64) -> bool {
        dist(x, self.center) < self.radius && t > self.bottom_time() && t <= self.top_time
    }

    /// Bottom disc or lateral wall; the open top is excluded.
    pub fn on_parabolic_boundary(&self, x: Coord, t: f64, tol: f64) -> bool {
        let d = dist(x, self.center);
        let bottom = (t - self.bottom_time()).abs() <= tol && d <= self.radius + tol;
        let lateral = (d - self.radius).abs() <= tol && t >= self.bottom_time() - tol && t < self.top_time - tol;
        bottom || lateral
    }

    /// `true` when the closed cylinder lies in the closure of `Q_1`.
    pub fn inside_unit(&self) -> bool {
        norm(self.center) + self.radius <= 1.0 + GEOM_EPS && self.bottom_time() >= -1.0 - GEOM_EPS && self.top_time <= GEOM_EPS
    }
}

/// Normalized measure `|Q_r| / |Q_1| = r^(N+2)`.
pub fn cylinder_measure(cyl: &ParabolicCylinder, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    Ok(cyl.radius.powi(dim as i32 + 2))
}

/// A cylinder whose cross-section `B_R` slides linearly from `base_center`
/// at `base_time` to `top_center` at `top_time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObliqueCylinder {
    pub base_center: Coord,
    pub base_time: f64,
    pub top_center: Coord,
    pub top_time: f64,
    pub radius: f64,
}

impl ObliqueCylinder {
    pub fn new(base_center: Coord, base_time: f64, top_center: Coord, top_time: f64, radius: f64) -> Result<Self> {
        if !(top_time > base_time) {
            return Err(Error::Domain(format!("oblique cylinder needs positive height, got {}", top_time - base_time)));
        }
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("oblique cylinder radius must be positive, got {radius}")));
        }
        Ok(ObliqueCylinder { base_center, base_time, top_center, top_time, radius })
    }

    pub fn height(&self) -> f64 {
        self.top_time - self.base_time
    }

    pub fn drift(&self) -> f64 {
        dist(self.base_center, self.top_center)
    }

    /// `d / R`.
    pub fn drift_ratio(&self) -> f64 {
        self.drift() / self.radius
    }

    /// `h / R^2`.
    pub fn aspect(&self) -> f64 {
        self.height() / (self.radius * self.radius)
    }

    pub fn center_at(&self, t: f64) -> Coord {
        lerp(self.base_center, self.top_center, (t - self.base_time) / self.height())
    }

    pub fn contains(&self, x: Coord, t: f64) -> bool {
        t > self.base_time && t <= self.top_time && dist(x, self.center_at(t)) < self.radius
    }

    /// Every slab is a ball centered on a segment, so containment in `Q_1`
    /// reduces to the two end discs.
    pub fn inside_unit(&self) -> bool {
        norm(self.base_center) + self.radius <= 1.0 + GEOM_EPS
            && norm(self.top_center) + self.radius <= 1.0 + GEOM_EPS
            && self.base_time >= -1.0 - GEOM_EPS
            && self.top_time <= GEOM_EPS
    }
}

/// `|Q_1 \ Q_{1-c1 m}| = 1 - (1 - c1 m)^(N+2)` in normalized measure.
pub fn shrunk_cylinder_gap(c1: f64, m: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    let s = c1 * m;
    if !(s > 0.0 && s < 1.0) {
        if s == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Domain(format!("c1*m must lie in (0,1), got {s}")));
    }
    Ok(1.0 - (1.0 - s).powi(dim as i32 + 2))
}

/// Shrink factor with `1 - (1 - c1 m)^(N+2) <= kappa m` for every
/// `m in (0, 1]`, from Bernoulli's inequality `1 - (1-x)^k <= k x`.
pub fn choose_c1(kappa: f64, dim: usize) -> Result<f64> {
    check_dim(dim)?;
    check_kappa(kappa)?;
    Ok(kappa / (dim as f64 + 2.0))
}

pub fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("kappa must lie in (0,1), got {kappa}")))
    }
}

/// Uniform space-time lattice of cells. Space nodes sit at
/// `center - half_width + i h` on each axis; time cell `k` is
/// `(t_bottom + k dt, t_bottom + (k+1) dt]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub nodes: usize,
    pub center: Coord,
    pub half_width: f64,
    pub t_bottom: f64,
    pub dt: f64,
    pub time_cells: usize,
}

impl Lattice {
    pub fn new(dim: usize, nodes: usize, center: Coord, half_width: f64, t_bottom: f64, dt: f64, time_cells: usize) -> Result<Self> {
        check_dim(dim)?;
        if nodes < 3 {
            return Err(Error::Domain(format!("need at least 3 nodes per axis, got {nodes}")));
        }
        if !(half_width > 0.0 && dt > 0.0) || time_cells == 0 {
            return Err(Error::Domain("lattice spacing must be positive".into()));
        }
        Ok(Lattice { dim, nodes, center, half_width, t_bottom, dt, time_cells })
    }

    /// Lattice over the unit cylinder with `time_cells` equal time slabs.
    pub fn unit(dim: usize, nodes: usize, time_cells: usize) -> Result<Self> {
        Self::new(dim, nodes, ORIGIN, 1.0, -1.0, 1.0 / time_cells as f64, time_cells)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    pub fn space_len(&self) -> usize {
        if self.dim == 1 {
            self.nodes
        } else {
            self.nodes * self.nodes
        }
    }

    pub fn len(&self) -> usize {
        self.space_len() * self.time_cells
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, node: usize) -> Coord {
        let h = self.h();
        let x0 = self.center[0] - self.half_width;
        if self.dim == 1 {
            [x0 + node as f64 * h, 0.0]
        } else {
            let y0 = self.center[1] - self.half_width;
            let (i, j) = (node % self.nodes, node / self.nodes);
            [x0 + i as f64 * h, y0 + j as f64 * h]
        }
    }

    pub fn cell_time(&self, k: usize) -> f64 {
        self.t_bottom + (k as f64 + 0.5) * self.dt
    }

    /// Index of the time cell containing `t`, if any.
    pub fn time_cell_of(&self, t: f64) -> Option<usize> {
        let s = (t - self.t_bottom) / self.dt;
        if s <= 0.0 {
            return None;
        }
        let k = (s.ceil() as usize).saturating_sub(1);
        (k < self.time_cells).then_some(k)
    }

    /// Cell volume normalized by `|Q_1|`.
    pub fn cell_measure(&self) -> f64 {
        self.h().powi(self.dim as i32) * self.dt / unit_ball_volume(self.dim)
    }
}

/// Boolean mask on a [`Lattice`], restricted to cells whose centers lie in
/// `Q_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorSet {
    lattice: Lattice,
    mask: Vec<bool>,
}

impl IndicatorSet {
    pub fn empty(lattice: Lattice) -> Self {
        let n = lattice.len();
        IndicatorSet { lattice, mask: vec![false; n] }
    }

    /// Cell `(k, node)` belongs iff its center satisfies `pred` and lies in
    /// `Q_1`.
    pub fn from_predicate(lattice: Lattice, pred: impl Fn(Coord, f64) -> bool) -> Self {
        let mut set = Self::empty(lattice);
        let unit = ParabolicCylinder::unit();
        let ns = set.lattice.space_len();
        for k in 0..set.lattice.time_cells {
            let t = set.lattice.cell_time(k);
            for node in 0..ns {
                let x = set.lattice.coord(node);
                set.mask[k * ns + node] = unit.contains(x, t) && pred(x, t);
            }
        }
        set
    }

    /// Cells of `Q_1` whose centers lie in `cyl`.
    pub fn cylinder(lattice: Lattice, cyl: &ParabolicCylinder) -> Self {
        let c = *cyl;
        Self::from_predicate(lattice, move |x, t| c.contains(x, t))
    }

    /// Rebuilds a set from raw mask data; cells outside `Q_1` are rejected.
    pub fn from_mask(lattice: Lattice, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != lattice.len() {
            return Err(Error::Parse(format!("mask has {} cells, lattice has {}", mask.len(), lattice.len())));
        }
        let unit = ParabolicCylinder::unit();
        let ns = lattice.space_len();
        for (idx, &b) in mask.iter().enumerate() {
            if b && !unit.contains(lattice.coord(idx % ns), lattice.cell_time(idx / ns)) {
                return Err(Error::Geometry(format!("mask cell {idx} lies outside Q_1")));
            }
        }
        Ok(IndicatorSet { lattice, mask })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, k: usize, node: usize) -> bool {
        self.mask[k * self.lattice.space_len() + node]
    }

    pub fn set(&mut self, k: usize, node: usize, value: bool) {
        let ns = self.lattice.space_len();
        if value {
            let unit = ParabolicCylinder::unit();
            if !unit.contains(self.lattice.coord(node), self.lattice.cell_time(k)) {
                return;
            }
        }
        self.mask[k * ns + node] = value;
    }

    /// Membership of the point `(x, t)` via the cell containing it.
    pub fn contains_point(&self, node: usize, t: f64) -> bool {
        match self.lattice.time_cell_of(t) {
            Some(k) => self.get(k, node),
            None => false,
        }
    }

    /// Membership of an arbitrary point via the nearest lattice node.
    pub fn contains(&self, x: Coord, t: f64) -> bool {
        let l = &self.lattice;
        let h = l.h();
        let idx = |s: f64, c: f64| {
            let i = ((s - (c - l.half_width)) / h).round();
            (i >= 0.0 && i < l.nodes as f64).then_some(i as usize)
        };
        let node = match l.dim {
            1 => idx(x[0], l.center[0]),
            _ => match (idx(x[0], l.center[0]), idx(x[1], l.center[1])) {
                (Some(i), Some(j)) => Some(j * l.nodes + i),
                _ => None,
            },
        };
        node.is_some_and(|n| self.contains_point(n, t))
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn normalized_measure(&self) -> f64 {
        self.count() as f64 * self.lattice.cell_measure()
    }

    pub fn is_subset_of(&self, other: &IndicatorSet) -> bool {
        self.lattice == other.lattice && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn intersect(&self, other: &IndicatorSet) -> Result<IndicatorSet> {
        if self.lattice != other.lattice {
            return Err(Error::Domain("indicator sets live on different lattices".into()));
        }
        let mask = self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect();
        Ok(IndicatorSet { lattice: self.lattice.clone(), mask })
    }

    pub fn union(&self, other: &IndicatorSet) -> Result<IndicatorSet> {
        if self.lattice != other.lattice {
            return Err(Error::Domain("indicator sets live on different lattices".into()));
        }
        let mask = self.mask.iter().zip(&other.mask).map(|(&a, &b)| a || b).collect();
        Ok(IndicatorSet { lattice: self.lattice.clone(), mask })
    }

    /// Number of set cells whose centers lie in `cyl`.
    pub fn count_in(&self, cyl: &ParabolicCylinder) -> usize {
        let ns = self.lattice.space_len();
        let mut n = 0;
        for k in 0..self.lattice.time_cells {
            let t = self.lattice.cell_time(k);
            if t <= cyl.bottom_time() || t > cyl.top_time {
                continue;
            }
            for node in 0..ns {
                if self.mask[k * ns + node] && cyl.contains(self.lattice.coord(node), t) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Text form: a header followed by one run-length line per time cell.
    /// Runs alternate starting with unset cells.
    pub fn to_text(&self) -> String {
        let l = &self.lattice;
        let mut s = String::new();
        let _ = writeln!(s, "indicator-set v1");
        let _ = writeln!(s, "N {}", l.dim);
        let _ = writeln!(s, "dims {} {}", l.nodes, l.time_cells);
        let _ = writeln!(s, "h {:e}", l.h());
        let _ = writeln!(s, "dt {:e}", l.dt);
        let _ = writeln!(s, "center {:e} {:e}", l.center[0], l.center[1]);
        let _ = writeln!(s, "half_width {:e}", l.half_width);
        let _ = writeln!(s, "t_bottom {:e}", l.t_bottom);
        let _ = writeln!(s, "mask");
        let ns = l.space_len();
        for k in 0..l.time_cells {
            let row = &self.mask[k * ns..(k + 1) * ns];
            let mut runs = Vec::new();
            let mut current = false;
            let mut len = 0usize;
            for &b in row {
                if b == current {
                    len += 1;
                } else {
                    runs.push(len);
                    current = b;
                    len = 1;
                }
            }
            runs.push(len);
            let line: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic.trim() != "indicator-set v1" {
            return Err(Error::Parse(format!("bad indicator-set header {magic:?}")));
        }
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(Error::Parse(format!("expected {name}, got {line:?}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}")));
        let int = |v: &str| v.parse::<usize>().map_err(|e| Error::Parse(format!("{v}: {e}")));
        let dim = int(&field("N")?[0])?;
        let dims = field("dims")?;
        let (nodes, time_cells) = (int(&dims[0])?, int(&dims[1])?);
        let _h = field("h")?;
        let dt = num(&field("dt")?[0])?;
        let c = field("center")?;
        let center = [num(&c[0])?, num(&c[1])?];
        let half_width = num(&field("half_width")?[0])?;
        let t_bottom = num(&field("t_bottom")?[0])?;
        field("mask")?;
        let lattice = Lattice::new(dim, nodes, center, half_width, t_bottom, dt, time_cells)?;
        let ns = lattice.space_len();
        let mut mask = Vec::with_capacity(lattice.len());
        for k in 0..time_cells {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing mask row {k}")))?;
            let mut value = false;
            let start = mask.len();
            for run in line.split_whitespace() {
                let n = int(run)?;
                mask.extend(std::iter::repeat_n(value, n));
                value = !value;
            }
            if mask.len() - start != ns {
                return Err(Error::Parse(format!("mask row {k} has {} cells", mask.len() - start)));
            }
        }
        Self::from_mask(lattice, mask)
    }
}

/// `Q_r-bar = B_r x (-1, -1 + r^2]`, the lower sub-cylinder.
pub fn lower_cylinder(r: f64) -> ParabolicCylinder {
    ParabolicCylinder { center: ORIGIN, top_time: -1.0 + r * r, radius: r }
}

/// A cylinder chosen by the pigeonhole argument along with its measured
/// density `|Gamma ∩ Q*| / |Q*|` (both as rasterized cell counts).
#[derive(Clone, Debug, PartialEq)]
pub struct PigeonholeChoice {
    pub cylinder: ParabolicCylinder,
    pub density: f64,
    pub required: f64,
}

/// Covering of `region` by cylinders of radius `rho`: centers on a lattice
/// of stride `rho` in space and `rho^2 / 2` in time, each cylinder contained
/// in `region`. Ordered by top time, then by x, then by y.
pub fn covering_cylinders(region: &ParabolicCylinder, rho: f64, dim: usize) -> Vec<ParabolicCylinder> {
    let mut out = Vec::new();
    let reach = region.radius - rho;
    if reach < -GEOM_EPS {
        return out;
    }
    let steps = (reach / rho + GEOM_EPS).floor() as i64;
    let offsets: Vec<f64> = (-steps..=steps).map(|i| i as f64 * rho).collect();
    let dt = 0.5 * rho * rho;
    let first_top = region.bottom_time() + rho * rho;
    let n_t = ((region.top_time - first_top) / dt + GEOM_EPS).floor();
    if n_t < 0.0 {
        return out;
    }
    for kt in 0..=(n_t as usize) {
        let top = first_top + kt as f64 * dt;
        for &ox in &offsets {
            let ys: &[f64] = if dim == 1 { &[0.0] } else { &offsets };
            for &oy in ys {
                let c = [region.center[0] + ox, region.center[1] + oy];
                if dist(c, region.center) + rho <= region.radius + GEOM_EPS {
                    out.push(ParabolicCylinder { center: c, top_time: top, radius: rho });
                }
            }
        }
    }
    out
}

/// Picks the first cylinder of radius `c1 m / 4` in the covering of
/// `Q-bar_{1 - c1 m}` on which `Gamma` has density at least `(1 - kappa) m`.
pub fn pigeonhole_cylinder(gamma: &IndicatorSet, c1: f64, m: f64, kappa: f64) -> Result<PigeonholeChoice> {
    let lat = gamma.lattice();
    let dim = lat.dim;
    let s = c1 * m;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("c1*m must lie in (0,1), got {s}")));
    }
    check_kappa(kappa)?;
    let region = lower_cylinder(1.0 - s);
    let required = (1.0 - kappa) * m;
    let inside = gamma.count_in(&region) as f64 * lat.cell_measure();
    if inside < required * (1.0 - 1e-12) {
        return Err(Error::Domain(format!("|Gamma ∩ Q-bar| = {inside:.6} is below (1-kappa) m = {required:.6}")));
    }
    let rho = s / 4.0;
    let ns = lat.space_len();
    // per-node prefix sums over time cells
    let mut prefix = vec![0u32; ns * (lat.time_cells + 1)];
    for node in 0..ns {
        let mut acc = 0u32;
        for k in 0..lat.time_cells {
            acc += gamma.get(k, node) as u32;
            prefix[node * (lat.time_cells + 1) + k + 1] = acc;
        }
    }
    let cells_between = |lo: f64, hi: f64| -> (usize, usize) {
        // cells whose center time lies in (lo, hi]
        let first = ((lo - lat.t_bottom) / lat.dt - 0.5).floor() as i64 + 1;
        let last = ((hi - lat.t_bottom) / lat.dt - 0.5).floor() as i64;
        let first = first.clamp(0, lat.time_cells as i64) as usize;
        let last = (last + 1).clamp(0, lat.time_cells as i64) as usize;
        (first, last.max(first))
    };
    let mut best = 0.0f64;
    for cyl in covering_cylinders(&region, rho, dim) {
        let (k0, k1) = cells_between(cyl.bottom_time(), cyl.top_time);
        if k1 == k0 {
            continue;
        }
        let mut hits = 0u64;
        let mut total = 0u64;
        for node in 0..ns {
            if dist(lat.coord(node), cyl.center) < cyl.radius {
                let base = node * (lat.time_cells + 1);
                hits += (prefix[base + k1] - prefix[base + k0]) as u64;
                total += (k1 - k0) as u64;
            }
        }
        if total == 0 {
            continue;
        }
        let density = hits as f64 / total as f64;
        if density >= required {
            return Ok(PigeonholeChoice { cylinder: cyl, density, required });
        }
        best = best.max(density);
    }
    Err(Error::NoQualifyingCylinder { best, required })
}

/// Tower of oblique cylinders joining `(x0, t0 - 3r^2/4)` to `(y0, t0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPlan {
    pub step_count: u64,
    pub step_radius: f64,
    pub step_height: f64,
    pub step_drift: f64,
    pub cylinders: Vec<ObliqueCylinder>,
}

/// Smallest `l >= 1` with `d / l <= r / sqrt(l)`, i.e. `l >= (d / r)^2`.
pub fn chain_length(distance: f64, r: f64) -> u64 {
    let q = (distance / r).powi(2);
    let mut l = q.ceil().max(1.0) as u64;
    // guard the ceiling against roundoff in either direction
    while l > 1 && distance / (l - 1) as f64 <= r / ((l - 1) as f64).sqrt() {
        l -= 1;
    }
    while distance / l as f64 > r / (l as f64).sqrt() {
        l += 1;
    }
    l
}

pub fn chain_plan(x0: Coord, t0p: f64, y0: Coord, t0: f64, r: f64) -> Result<ChainPlan> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("chain radius must be positive, got {r}")));
    }
    let gap = t0 - t0p;
    if (gap - 0.75 * r * r).abs() > 1e-12 * (1.0 + gap.abs()) {
        return Err(Error::Domain(format!("chain needs t0 - t0' = 3r^2/4, got {gap}")));
    }
    let d = dist(x0, y0);
    if d > 2.0 + GEOM_EPS {
        return Err(Error::Domain(format!("chain endpoints are {d} apart (> 2)")));
    }
    let l = chain_length(d, r);
    let lf = l as f64;
    let radius = r / lf.sqrt();
    let height = 0.75 * r * r / lf;
    let mut cylinders = Vec::with_capacity(l as usize);
    for j in 0..l {
        let a = lerp(x0, y0, j as f64 / lf);
        let b = lerp(x0, y0, (j + 1) as f64 / lf);
        let ta = t0p + j as f64 * height;
        let tb = if j + 1 == l { t0 } else { t0p + (j + 1) as f64 * height };
        let cyl = ObliqueCylinder { base_center: a, base_time: ta, top_center: b, top_time: tb, radius };
        if !cyl.inside_unit() {
            return Err(Error::Geometry(format!("chain cylinder {j} leaves Q_1: {cyl:?}")));
        }
        cylinders.push(cyl);
    }
    Ok(ChainPlan { step_count: l, step_radius: radius, step_height: height, step_drift: d / lf, cylinders })
}

/// Range of `h / R^2` allowed for march steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AspectRange {
    pub lo: f64,
    pub hi: f64,
}

/// Greedy march of barrier steps: each step starts from a positivity
/// disc of radius `disc`, uses a cylinder of radius `R <= min(4 disc, cap)`
/// and concludes on the disc of radius `R / 2` around its top center. Steps
/// drift at most `R` toward `target` and have `h / R^2` in `aspect`; the
/// heights add up to exactly `budget`.
pub fn plan_march(
    start: Coord,
    disc: f64,
    start_time: f64,
    target: Coord,
    budget: f64,
    cap: f64,
    aspect: AspectRange,
) -> Result<Vec<ObliqueCylinder>> {
    if !(disc > 0.0 && cap > 0.0 && budget >= 0.0) {
        return Err(Error::Domain("march needs positive disc, cap and nonnegative budget".into()));
    }
    if aspect.hi < 2.0 * aspect.lo {
        return Err(Error::Domain("march aspect range needs hi >= 2 lo".into()));
    }
    let mut steps = Vec::new();
    let mut pos = start;
    let mut disc = disc;
    let mut remaining = budget;
    let mut t = start_time;
    loop {
        let d = dist(pos, target);
        let moving = d > GEOM_EPS;
        if !moving && remaining <= 0.0 {
            break;
        }
        if moving && remaining <= 0.0 {
            return Err(Error::Geometry(format!("march ran out of time with {d} left to travel")));
        }
        let mut radius = (4.0 * disc).min(cap);
        let height;
        if moving {
            if remaining < aspect.lo * radius * radius {
                radius = (remaining / aspect.lo).sqrt();
            }
            let travel = d.min(radius);
            height = if travel >= d - GEOM_EPS {
                remaining.min(aspect.hi * radius * radius)
            } else {
                (aspect.lo * radius * radius).min(remaining)
            };
            let next = lerp(pos, target, travel / d);
            steps.push((pos, next, radius, height));
            pos = if travel >= d - GEOM_EPS { target } else { next };
        } else {
            if remaining <= aspect.hi * radius * radius {
                radius = radius.min((remaining / aspect.lo).sqrt());
                height = remaining;
            } else {
                height = aspect.hi * radius * radius;
            }
            steps.push((pos, pos, radius, height));
        }
        if radius < 1e-300 {
            return Err(Error::Geometry("march step radius collapsed".into()));
        }
        let rest = remaining - height;
        remaining = if rest <= 1e-12 * budget {
            // absorb roundoff leftovers into the last step
            if let Some(last) = steps.last_mut() {
                last.3 += rest.max(0.0);
            }
            0.0
        } else {
            rest
        };
        disc = radius / 2.0;
        if steps.len() > 10_000_000 {
            return Err(Error::Geometry("march does not terminate".into()));
        }
    }
    let mut out = Vec::with_capacity(steps.len());
    for (a, b, radius, height) in steps {
        let cyl = ObliqueCylinder { base_center: a, base_time: t, top_center: b, top_time: t + height, radius };
        t += height;
        if !cyl.inside_unit() {
            return Err(Error::Geometry(format!("march cylinder leaves Q_1: {cyl:?}")));
        }
        out.push(cyl);
    }
    Ok(out)
}

/// Upper bound on the number of steps [`plan_march`] takes for any budget up
/// to `max_budget`: growth steps below `cap`, moving steps at `cap`, padding
/// steps at `cap`, and one final shortened step.
pub fn march_step_bound(disc: f64, distance: f64, max_budget: f64, cap: f64, aspect: AspectRange) -> u64 {
    let grow = if 4.0 * disc >= cap { 0 } else { (cap / (4.0 * disc)).log2().ceil() as u64 };
    let travel = (distance / cap).ceil() as u64;
    let pad = (max_budget / (aspect.hi * cap * cap)).ceil() as u64;
    grow + travel + pad + 1
}

/// Time budget that suffices for [`plan_march`] to reach a target at
/// `distance`, for any starting disc size.
pub fn march_min_budget(distance: f64, cap: f64, aspect: AspectRange) -> f64 {
    aspect.lo * cap * cap * (4.0 / 3.0 + (distance / cap).ceil())
}
