use super::grid::Grid;
use super::grid_function::{GridFunction, Role};
use super::operator::{OperatorKind, OperatorSpec};
use crate::error::{Error, Result};
use crate::geometry::{Coord, IndicatorSet};
use crate::pucci::{frame_angles, frame_vectors, SymMatrix};
use rayon::prelude::*;

/// Space sizes at or above this are updated in parallel within a level.
const PARALLEL_THRESHOLD: usize = 4096;

/// Target number of stored levels when no stride is requested.
pub const DEFAULT_SNAPSHOTS: usize = 64;

/// Right-hand side `g` of `u_t - F(D^2 u) = g`, sampled over a step interval.
pub trait Source: Sync {
    /// Value at `x` during the step `(t0, t1]`.
    fn value(&self, x: Coord, t0: f64, t1: f64) -> f64;
}

/// Dirichlet data on the parabolic boundary; also supplies the initial level.
pub trait Boundary: Sync {
    fn value(&self, x: Coord, t: f64) -> f64;
}

pub struct ZeroSource;

impl Source for ZeroSource {
    fn value(&self, _: Coord, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// Closure source evaluated at the start of each step.
pub struct FnSource<F>(pub F);

impl<F: Fn(Coord, f64) -> f64 + Sync> Source for FnSource<F> {
    fn value(&self, x: Coord, t0: f64, _: f64) -> f64 {
        (self.0)(x, t0)
    }
}

/// Characteristic function of a rasterized set, read at the step midpoint.
impl Source for IndicatorSet {
    fn value(&self, x: Coord, t0: f64, t1: f64) -> f64 {
        if self.contains(x, 0.5 * (t0 + t1)) {
            1.0
        } else {
            0.0
        }
    }
}

/// `factor * inner`; a negative factor gives a sign-flipped source.
pub struct ScaledSource<'a> {
    pub inner: &'a dyn Source,
    pub factor: f64,
}

impl Source for ScaledSource<'_> {
    fn value(&self, x: Coord, t0: f64, t1: f64) -> f64 {
        self.factor * self.inner.value(x, t0, t1)
    }
}

pub struct ZeroBoundary;

impl Boundary for ZeroBoundary {
    fn value(&self, _: Coord, _: f64) -> f64 {
        0.0
    }
}

pub struct FnBoundary<F>(pub F);

impl<F: Fn(Coord, f64) -> f64 + Sync> Boundary for FnBoundary<F> {
    fn value(&self, x: Coord, t: f64) -> f64 {
        (self.0)(x, t)
    }
}

/// Bilinear interpolation corners `(di, dj, weight)` of an off-grid point.
#[derive(Clone, Debug)]
struct Probe {
    corners: Vec<(isize, isize, f64)>,
    offset: Coord,
}

impl Probe {
    fn new(a: f64, b: f64, h: f64) -> Self {
        let (ia, ib) = (a.floor(), b.floor());
        let (fa, fb) = (a - ia, b - ib);
        let (ia, ib) = (ia as isize, ib as isize);
        let corners =
            [(ia, ib, (1.0 - fa) * (1.0 - fb)), (ia + 1, ib, fa * (1.0 - fb)), (ia, ib + 1, (1.0 - fa) * fb), (ia + 1, ib + 1, fa * fb)]
                .into_iter()
                .filter(|c| c.2 > 1e-14)
                .collect();
        Probe { corners, offset: [a * h, b * h] }
    }
}

/// Symmetric directional second difference along `v` with spacing `H`.
#[derive(Clone, Debug)]
struct Direction {
    plus: Probe,
    minus: Probe,
    inv_h2: f64,
}

impl Direction {
    fn new(v: [f64; 2], reach: f64, h: f64) -> Self {
        Direction {
            plus: Probe::new(reach * v[0], reach * v[1], h),
            minus: Probe::new(-reach * v[0], -reach * v[1], h),
            inv_h2: 1.0 / (reach * h).powi(2),
        }
    }
}

/// Explicit monotone scheme for one operator on one grid.
pub struct Scheme<'a> {
    grid: &'a Grid,
    op: &'a OperatorSpec,
    frames: Vec<[Direction; 2]>,
}

impl<'a> Scheme<'a> {
    pub fn new(grid: &'a Grid, op: &'a OperatorSpec) -> Result<Self> {
        op.validate(grid.dim)?;
        let limit = grid.cfl_limit(op);
        if grid.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: grid.dt, limit });
        }
        let frames = if grid.dim == 1 {
            Vec::new()
        } else {
            let count = if op.ell.lambda == op.ell.big_lambda { 1 } else { grid.options.frames };
            frame_angles(count)
                .into_iter()
                .map(|angle| {
                    let [v1, v2] = frame_vectors(angle);
                    [Direction::new(v1, grid.options.reach, grid.h), Direction::new(v2, grid.options.reach, grid.h)]
                })
                .collect()
        };
        Ok(Scheme { grid, op, frames })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    fn sample(&self, u: &[f64], node: usize, x: Coord, probe: &Probe, t: f64, boundary: &dyn Boundary) -> f64 {
        let n = self.grid.nodes as isize;
        let (i, j) = ((node % self.grid.nodes) as isize, (node / self.grid.nodes) as isize);
        let mut acc = 0.0;
        for &(di, dj, w) in &probe.corners {
            let (p, q) = (i + di, j + dj);
            if p < 0 || q < 0 || p >= n || q >= n {
                return boundary.value([x[0] + probe.offset[0], x[1] + probe.offset[1]], t);
            }
            acc += w * u[(q * n + p) as usize];
        }
        acc
    }

    fn second_difference(&self, u: &[f64], node: usize, x: Coord, d: &Direction, t: f64, boundary: &dyn Boundary) -> f64 {
        let p = self.sample(u, node, x, &d.plus, t, boundary);
        let m = self.sample(u, node, x, &d.minus, t, boundary);
        (p + m - 2.0 * u[node]) * d.inv_h2
    }

    /// `op_h(u)` at an interior node for the level at time `t`; off-lattice
    /// stencil points are read from the boundary data.
    pub fn operator_at(&self, u: &[f64], node: usize, t: f64, boundary: &dyn Boundary) -> f64 {
        let ell = &self.op.ell;
        let x = self.grid.coord(node);
        if self.grid.dim == 1 {
            let h2 = self.grid.h * self.grid.h;
            let d2 = (u[node + 1] + u[node - 1] - 2.0 * u[node]) / h2;
            return match self.op.kind {
                OperatorKind::PucciMinus => ell.minus_weight(d2),
                OperatorKind::PucciPlus => ell.plus_weight(d2),
                OperatorKind::Linear => self.coefficient(x, t).trace() * d2,
            };
        }
        match self.op.kind {
            OperatorKind::PucciMinus => self
                .frames
                .iter()
                .map(|[d1, d2]| {
                    ell.minus_weight(self.second_difference(u, node, x, d1, t, boundary))
                        + ell.minus_weight(self.second_difference(u, node, x, d2, t, boundary))
                })
                .fold(f64::INFINITY, f64::min),
            OperatorKind::PucciPlus => self
                .frames
                .iter()
                .map(|[d1, d2]| {
                    ell.plus_weight(self.second_difference(u, node, x, d1, t, boundary))
                        + ell.plus_weight(self.second_difference(u, node, x, d2, t, boundary))
                })
                .fold(f64::NEG_INFINITY, f64::max),
            OperatorKind::Linear => {
                let a = self.coefficient(x, t);
                let (p, q, r) = a.entries();
                if q == 0.0 {
                    let [d1, d2] = &self.frames[0];
                    p * self.second_difference(u, node, x, d1, t, boundary) + r * self.second_difference(u, node, x, d2, t, boundary)
                } else {
                    let phi = 0.5 * (2.0 * q).atan2(p - r);
                    let (s, c) = phi.sin_cos();
                    let (e1, e2) = ([c, s], [-s, c]);
                    let reach = self.grid.options.reach;
                    let d1 = Direction::new(e1, reach, self.grid.h);
                    let d2 = Direction::new(e2, reach, self.grid.h);
                    a.quad(e1) * self.second_difference(u, node, x, &d1, t, boundary)
                        + a.quad(e2) * self.second_difference(u, node, x, &d2, t, boundary)
                }
            }
        }
    }

    /// Coefficients are read at the midpoint of the step starting at `t`.
    fn coefficient(&self, x: Coord, t: f64) -> SymMatrix {
        match &self.op.coefficients {
            Some(field) => field.at(x, t + 0.5 * self.grid.dt),
            None => SymMatrix::identity(self.grid.dim),
        }
    }

    /// `op_h(u)` at every node (zero at boundary nodes) for level `k`.
    pub fn apply_operator(&self, u: &[f64], k: usize, boundary: &dyn Boundary) -> Vec<f64> {
        let t = self.grid.time(k);
        (0..u.len()).map(|n| if self.grid.is_interior(n) { self.operator_at(u, n, t, boundary) } else { 0.0 }).collect()
    }

    /// Initial level: boundary data at the bottom time.
    pub fn initial(&self, boundary: &dyn Boundary) -> Vec<f64> {
        let t = self.grid.time(0);
        (0..self.grid.space_len()).map(|n| boundary.value(self.grid.coord(n), t)).collect()
    }

    /// Advances level `k` to `k + 1`.
    pub fn step(&self, u: &[f64], k: usize, source: &dyn Source, boundary: &dyn Boundary) -> Vec<f64> {
        let g = self.grid;
        let (t0, t1) = (g.time(k), g.time(k + 1));
        let update = |n: usize| {
            let x = g.coord(n);
            if g.is_interior(n) {
                u[n] + g.dt * (self.operator_at(u, n, t0, boundary) + source.value(x, t0, t1))
            } else {
                boundary.value(x, t1)
            }
        };
        if u.len() >= PARALLEL_THRESHOLD {
            (0..u.len()).into_par_iter().map(update).collect()
        } else {
            (0..u.len()).map(update).collect()
        }
    }
}

/// Marches from the bottom to the top of the grid, calling `observer` with
/// every level (including the initial one). Returns the final level.
pub fn solve_observed(
    grid: &Grid,
    op: &OperatorSpec,
    source: &dyn Source,
    boundary: &dyn Boundary,
    observer: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<Vec<f64>> {
    let scheme = Scheme::new(grid, op)?;
    let mut u = scheme.initial(boundary);
    observer(0, grid.time(0), &u);
    for k in 0..grid.steps {
        u = scheme.step(&u, k, source, boundary);
        observer(k + 1, grid.time(k + 1), &u);
    }
    Ok(u)
}

/// Stride giving roughly [`DEFAULT_SNAPSHOTS`] stored levels.
pub fn default_stride(grid: &Grid) -> usize {
    grid.steps.div_ceil(DEFAULT_SNAPSHOTS).max(1)
}

/// Solves and stores every `stride`-th level plus the final one.
pub fn solve_with_stride(
    grid: &Grid,
    op: &OperatorSpec,
    source: &dyn Source,
    boundary: &dyn Boundary,
    role: Role,
    stride: usize,
) -> Result<GridFunction> {
    let stride = stride.max(1);
    let mut out = GridFunction::new(grid, role, stride);
    let steps = grid.steps;
    solve_observed(grid, op, source, boundary, &mut |k, t, u| {
        if k % stride == 0 || k == steps {
            out.push_level(t, u.to_vec());
        }
    })?;
    Ok(out)
}

pub fn solve(grid: &Grid, op: &OperatorSpec, source: &dyn Source, boundary: &dyn Boundary) -> Result<GridFunction> {
    solve_with_stride(grid, op, source, boundary, Role::Supersolution, default_stride(grid))
}

/// `w_t - M^-(D^2 w) = chi_Gamma` with zero parabolic boundary data.
pub fn fundamental_solution(grid: &Grid, gamma: &IndicatorSet, op: &OperatorSpec) -> Result<GridFunction> {
    if op.kind != OperatorKind::PucciMinus {
        return Err(Error::Config("fundamental solutions use the pucci_minus operator".into()));
    }
    solve_with_stride(grid, op, gamma, &ZeroBoundary, Role::Fundamental, default_stride(grid))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonOutcome {
    /// Data ordering `u <= v` on the parabolic boundary and for the sources.
    pub hypothesis: bool,
    /// Largest `u - v` over all nodes and levels.
    pub max_violation: f64,
}

impl ComparisonOutcome {
    pub fn holds(&self, tol: f64) -> bool {
        !self.hypothesis || self.max_violation <= tol
    }
}

/// Solves both problems in lockstep and records the largest `u - v`.
pub fn comparison_test(
    grid: &Grid,
    op: &OperatorSpec,
    (source_u, boundary_u): (&dyn Source, &dyn Boundary),
    (source_v, boundary_v): (&dyn Source, &dyn Boundary),
) -> Result<ComparisonOutcome> {
    let scheme = Scheme::new(grid, op)?;
    let mut u = scheme.initial(boundary_u);
    let mut v = scheme.initial(boundary_v);
    let ns = grid.space_len();
    let mut hypothesis = u.iter().zip(&v).all(|(a, b)| a <= b);
    let mut max_violation = max_diff(&u, &v);
    for k in 0..grid.steps {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        for n in 0..ns {
            let x = grid.coord(n);
            if grid.is_interior(n) {
                if source_u.value(x, t0, t1) > source_v.value(x, t0, t1) {
                    hypothesis = false;
                }
            } else if boundary_u.value(x, t1) > boundary_v.value(x, t1) {
                hypothesis = false;
            }
        }
        u = scheme.step(&u, k, source_u, boundary_u);
        v = scheme.step(&v, k, source_v, boundary_v);
        max_violation = max_violation.max(max_diff(&u, &v));
    }
    Ok(ComparisonOutcome { hypothesis, max_violation })
}

fn max_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Lattice, ParabolicCylinder};
    use crate::pucci::EllipticityPair;
    use crate::solver::grid::GridOptions;
    use crate::solver::operator::CoefficientField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(dim: usize, nodes: usize, op: &OperatorSpec) -> Grid {
        Grid::new(ParabolicCylinder::unit(), dim, nodes, op, GridOptions::for_dim(dim)).unwrap()
    }

    #[test]
    fn zero_stays_zero() {
        let op = OperatorSpec::pucci_minus(EllipticityPair::default());
        let g = grid(1, 33, &op);
        let w = solve(&g, &op, &ZeroSource, &ZeroBoundary).unwrap();
        assert!(w.last().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_second_difference_is_exact() {
        for (lambda, big, want) in [(1.0, 1.0, 2.0), (0.5, 2.0, 1.0)] {
            let op = OperatorSpec::pucci_minus(EllipticityPair::new(lambda, big).unwrap());
            let g = grid(1, 129, &op);
            let s = Scheme::new(&g, &op).unwrap();
            let u: Vec<f64> = (0..g.space_len()).map(|n| g.coord(n)[0].powi(2)).collect();
            let d = s.apply_operator(&u, 0, &ZeroBoundary);
            for n in (0..g.space_len()).filter(|&n| g.is_interior(n)) {
                assert!((d[n] - want).abs() < 1e-9, "{}", d[n]);
            }
        }
    }

    #[test]
    fn update_is_monotone_in_every_stencil_value() {
        let ell = EllipticityPair::new(0.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops = [
            OperatorSpec::pucci_minus(ell),
            OperatorSpec::pucci_plus(ell),
            OperatorSpec::linear(ell, CoefficientField::dyadic(1, 2, 2, &ell)).unwrap(),
        ];
        for op in &ops {
            let g = grid(2, 17, op);
            let s = Scheme::new(&g, op).unwrap();
            let u: Vec<f64> = (0..g.space_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let base = s.step(&u, 0, &ZeroSource, &ZeroBoundary);
            for probe in (0..g.space_len()).step_by(7) {
                let mut up = u.clone();
                up[probe] += 1e-3;
                let next = s.step(&up, 0, &ZeroSource, &ZeroBoundary);
                for (a, b) in next.iter().zip(&base) {
                    assert!(a - b >= -1e-15);
                }
            }
        }
    }

    #[test]
    fn linear_and_pucci_agree_when_lambda_equals_lambda() {
        let ell = EllipticityPair::new(1.5, 1.5).unwrap();
        for dim in [1, 2] {
            let pm = OperatorSpec::pucci_minus(ell);
            let lin = OperatorSpec::linear(ell, CoefficientField::Constant(SymMatrix::identity(dim).scale(1.5))).unwrap();
            let g = grid(dim, 21, &pm);
            let (a, b) = (Scheme::new(&g, &pm).unwrap(), Scheme::new(&g, &lin).unwrap());
            let u: Vec<f64> = (0..g.space_len())
                .map(|n| {
                    let x = g.coord(n);
                    (x[0] * 1.3).sin() * (x[1] + 0.4).cos()
                })
                .collect();
            let (da, db) = (a.apply_operator(&u, 0, &ZeroBoundary), b.apply_operator(&u, 0, &ZeroBoundary));
            for (p, q) in da.iter().zip(&db) {
                assert!((p - q).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fundamental_solution_of_whole_cylinder_is_below_one_plus_t() {
        let ell = EllipticityPair::new(1.0, 1.0).unwrap();
        let op = OperatorSpec::pucci_minus(ell);
        let g = grid(1, 65, &op);
        let gamma = IndicatorSet::cylinder(Lattice::unit(1, 65, 32).unwrap(), &ParabolicCylinder::unit());
        let w = fundamental_solution(&g, &gamma, &op).unwrap();
        for (t, level) in w.levels() {
            assert!(level.iter().all(|&v| v <= 1.0 + t + 1e-12 && v >= 0.0));
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let op = OperatorSpec::pucci_minus(EllipticityPair::default());
        let mut opts = GridOptions::for_dim(1);
        opts.dt = Some(1.0);
        assert!(matches!(Grid::new(ParabolicCylinder::unit(), 1, 33, &op, opts), Err(Error::Cfl { .. })));
        let g = grid(1, 33, &op);
        let stiffer = OperatorSpec::pucci_minus(EllipticityPair::new(0.5, 4.0).unwrap());
        assert!(matches!(Scheme::new(&g, &stiffer), Err(Error::Cfl { .. })));
    }
}
