use super::checks::linear_fit;
use crate::constants::{FSConfig, Pipeline};
use crate::error::{Error, Result};
use crate::geometry::{norm, Coord, ParabolicCylinder};
use crate::pucci::EllipticityPair;
use crate::solver::{solve_observed, Boundary, FnSource, Grid, GridOptions, OperatorSpec};
use serde::Serialize;

pub const STEADY_RATE: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 16.0;
pub const ELLIPTIC_RADII: [f64; 3] = [0.1, 0.2, 0.4];

/// Zero on the lateral boundary; the carried level as initial data.
struct Carry<'a> {
    grid: &'a Grid,
    level: &'a [f64],
}

impl Boundary for Carry<'_> {
    fn value(&self, x: Coord, t: f64) -> f64 {
        if t > self.grid.cylinder.bottom_time() + 0.5 * self.grid.dt || norm(x) >= 1.0 - 1e-12 {
            return 0.0;
        }
        let g = self.grid;
        let idx = |s: f64| ((s + 1.0) / g.h).round().clamp(0.0, (g.nodes - 1) as f64) as usize;
        let node = if g.dim == 1 { idx(x[0]) } else { idx(x[1]) * g.nodes + idx(x[0]) };
        self.level[node]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticRow {
    pub r: f64,
    pub dim: usize,
    pub time: f64,
    /// Last relative change per unit time.
    pub rate: f64,
    pub converged: bool,
    pub w_origin: f64,
    /// Minimum over `|x| <= kappa`.
    pub w_min: f64,
    pub bound_ln: f64,
    pub bound_pass: bool,
    /// Max error against the closed form when `N = 1` and `lambda = Lambda`.
    pub closed_form_error: Option<f64>,
    /// Node values of the final level.
    #[serde(skip)]
    pub steady: Vec<f64>,
}

/// `-a w'' = chi_{|x| < rr}` on `(-1, 1)` with zero ends.
pub fn closed_form(x: f64, rr: f64, a: f64) -> f64 {
    let ax = x.abs();
    let w = if ax <= rr { rr - 0.5 * rr * rr - 0.5 * ax * ax } else { rr * (1.0 - ax) };
    w / a
}

/// Marches `w_t - M^-(D^2 w) = chi_{B_r}` in unit-time segments until the
/// relative change per unit time drops below [`STEADY_RATE`].
pub fn elliptic_limit_run(r: f64, horizon: f64, ell: EllipticityPair, kappa: f64, dim: usize, nodes: usize) -> Result<EllipticRow> {
    if horizon < 4.0 {
        return Err(Error::Config(format!("horizon must be at least 4, got {horizon}")));
    }
    let pipe = Pipeline::new(kappa, ell, dim, FSConfig::default())?;
    let bound = pipe.elliptic_limit(r)?.bound;
    let op = OperatorSpec::pucci_minus(ell);
    let grid = Grid::new(ParabolicCylinder::unit(), dim, nodes, &op, GridOptions::for_dim(dim))?;
    let source = FnSource(move |x: Coord, _| if norm(x) <= r { 1.0 } else { 0.0 });
    let mut level = vec![0.0; grid.space_len()];
    let mut time = 0.0;
    let mut rate = f64::INFINITY;
    while time < horizon - 1e-9 {
        let carry = Carry { grid: &grid, level: &level };
        let next = solve_observed(&grid, &op, &source, &carry, &mut |_, _, _| {})?;
        let scale = next.iter().copied().fold(0.0, f64::max);
        let change = next.iter().zip(&level).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rate = if scale > 0.0 { change / scale } else { 0.0 };
        level = next;
        time += 1.0;
        if rate <= STEADY_RATE {
            break;
        }
    }
    let probes: Vec<usize> = (0..grid.space_len()).filter(|&n| norm(grid.coord(n)) <= kappa + 1e-12).collect();
    let w_min = probes.iter().map(|&n| level[n]).fold(f64::INFINITY, f64::min);
    let origin = (0..grid.space_len()).min_by(|&a, &b| norm(grid.coord(a)).total_cmp(&norm(grid.coord(b)))).unwrap();
    let closed_form_error = (dim == 1 && ell.lambda == ell.big_lambda).then(|| {
        // the source covers the nodes with |x| <= r; its effective edge is
        // half a cell past the last one
        let last = (0..grid.space_len()).map(|n| grid.coord(n)[0].abs()).filter(|&a| a <= r).fold(0.0, f64::max);
        let rr = last + 0.5 * grid.h;
        (0..grid.space_len()).map(|n| (level[n] - closed_form(grid.coord(n)[0], rr, ell.lambda)).abs()).fold(0.0, f64::max)
    });
    Ok(EllipticRow {
        r,
        dim,
        time,
        rate,
        converged: rate <= STEADY_RATE,
        w_origin: level[origin],
        w_min,
        bound_ln: bound.ln(),
        bound_pass: w_min > 0.0 && w_min.ln() >= bound.ln(),
        closed_form_error,
        steady: level,
    })
}

/// Rows for each radius and the log-log slope of `w(0)` against `r`.
pub fn elliptic_sweep(
    radii: &[f64],
    horizon: f64,
    ell: EllipticityPair,
    kappa: f64,
    dim: usize,
    nodes: usize,
) -> Result<(Vec<EllipticRow>, Option<f64>)> {
    let rows = radii.iter().map(|&r| elliptic_limit_run(r, horizon, ell, kappa, dim, nodes)).collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|w| w.w_origin > 0.0).map(|w| (w.r.ln(), w.w_origin.ln())).collect();
    Ok((rows, linear_fit(&pts).map(|f| f.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_is_continuous() {
        let rr = 0.3;
        assert!((closed_form(rr - 1e-12, rr, 1.0) - closed_form(rr + 1e-12, rr, 1.0)).abs() < 1e-10);
        assert_eq!(closed_form(1.0, rr, 1.0), 0.0);
    }

    #[test]
    fn coarse_heat_steady_state() {
        let ell = EllipticityPair::new(1.0, 1.0).unwrap();
        let row = elliptic_limit_run(0.25, 16.0, ell, 0.5, 1, 65).unwrap();
        assert!(row.converged);
        assert!(row.closed_form_error.unwrap() < 2e-3, "{:?}", row.closed_form_error);
        assert!(row.bound_pass);
    }

    #[test]
    fn short_horizon_is_rejected() {
        assert!(elliptic_limit_run(0.25, 2.0, EllipticityPair::default(), 0.5, 1, 33).is_err());
    }
}
