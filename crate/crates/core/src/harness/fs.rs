use super::checks::linear_fit;
use super::ensemble::member_rng;
use crate::constants::FSConfig;
use crate::error::{Error, Result};
use crate::geometry::{check_dim, Coord, IndicatorSet, Lattice, ParabolicCylinder};
use crate::pucci::EllipticityPair;
use crate::solver::{solve_observed, Grid, GridOptions, OperatorSpec, ZeroBoundary};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

/// Top time of the source cylinder.
pub const FS_TOP_TIME: f64 = -0.75;
/// Time cells of the lattice the sets are drawn on.
pub const FS_TIME_CELLS: usize = 1024;
/// Blocks per axis (space and time) the random sets are unions of.
pub const FS_BLOCKS: usize = 8;
/// Nested families per fit; samples are split evenly across them.
pub const FS_CHAINS: usize = 4;
pub const FS_MIN_DENSITY: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FsSample {
    pub chain: usize,
    pub density: f64,
    /// Minimum over probes of `w(E) / w(Q_r)`.
    pub ratio: f64,
    pub probe: (Coord, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FSFitReport {
    pub r: f64,
    pub dim: usize,
    pub seed: u64,
    pub cylinder_top: f64,
    pub probes: Vec<(Coord, f64)>,
    pub samples: Vec<FsSample>,
    pub sigma_hat: f64,
    /// `exp(intercept)` of the fit.
    pub c_hat: f64,
    /// Largest `C` with `ratio >= C density^sigma_hat` on every sample.
    pub c_lower: f64,
    pub r2: f64,
    /// Every `E = Q_r` sample has ratio exactly 1 at every probe.
    pub unit_exact: bool,
    /// Largest `w(E1) - w(E2)` over probes for nested `E1 ⊂ E2`.
    pub inclusion_violation: f64,
}

impl FSFitReport {
    pub fn to_config(&self) -> Result<FSConfig> {
        let mut cfg = FSConfig::new(self.sigma_hat, self.c_lower)?;
        cfg.empirical = true;
        Ok(cfg)
    }
}

/// Probes outside `B_3r x (t0 - 9r^2, t0 + 9r^2]`: three points on a line
/// through the center (five in 2D) at two times after `t0 + 9 r^2`.
fn probe_points(dim: usize, r: f64) -> Vec<(Coord, f64)> {
    let after = FS_TOP_TIME + 9.0 * r * r;
    let times = [0.5 * after, 0.0];
    let xs: Vec<Coord> = if dim == 1 {
        vec![[-0.5, 0.0], [0.0, 0.0], [0.5, 0.0]]
    } else {
        vec![[0.0, 0.0], [-0.5, 0.0], [0.5, 0.0], [0.0, -0.5], [0.0, 0.5]]
    };
    times.iter().flat_map(|&t| xs.iter().map(move |&x| (x, t))).collect()
}

pub fn fs_fit(r: f64, samples: usize, seed: u64, ell: EllipticityPair, dim: usize, nodes: usize) -> Result<FSFitReport> {
    check_dim(dim)?;
    let cyl = ParabolicCylinder::new([0.0, 0.0], FS_TOP_TIME, r)?;
    // spatial part of the tripled cylinder must fit; its time extent is
    // replaced by requiring probes after t0 + 9r^2 inside Q_1
    if 3.0 * r > 1.0 || !cyl.inside_unit() || FS_TOP_TIME + 9.0 * r * r >= 0.0 {
        return Err(Error::Geometry(format!("tripled cylinder of radius {r} does not fit the unit cylinder")));
    }
    if samples < 2 * FS_CHAINS {
        return Err(Error::Config(format!("need at least {} samples", 2 * FS_CHAINS)));
    }
    let lattice = Lattice::unit(dim, nodes, FS_TIME_CELLS)?;
    let full = IndicatorSet::cylinder(lattice.clone(), &cyl);
    let op = OperatorSpec::pucci_minus(ell);
    let grid = Grid::new(ParabolicCylinder::unit(), dim, nodes, &op, GridOptions::for_dim(dim))?;
    let probes = probe_points(dim, r);
    let probe_nodes: Vec<(usize, usize)> = probes
        .iter()
        .map(|&(x, t)| {
            let node = (0..grid.space_len())
                .min_by(|&a, &b| crate::geometry::dist(grid.coord(a), x).total_cmp(&crate::geometry::dist(grid.coord(b), x)))
                .unwrap();
            let level = ((t - grid.cylinder.bottom_time()) / grid.dt).round() as usize;
            (node, level.min(grid.steps))
        })
        .collect();
    let eval = |set: &IndicatorSet| -> Result<Vec<f64>> {
        let mut out = vec![0.0; probe_nodes.len()];
        solve_observed(&grid, &op, set, &ZeroBoundary, &mut |k, _, u| {
            for (slot, &(node, level)) in out.iter_mut().zip(&probe_nodes) {
                if k == level {
                    *slot = u[node];
                }
            }
        })?;
        Ok(out)
    };
    let reference = eval(&full)?;
    if reference.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("reference fundamental solution vanishes at a probe; refine the grid".into()));
    }

    // block of each Q_r cell
    let ns = lattice.space_len();
    let per = FS_BLOCKS;
    let spatial_blocks = per.pow(dim as u32);
    let block_of = |k: usize, node: usize| -> usize {
        let x = lattice.coord(node);
        let t = lattice.cell_time(k);
        let b = |s: f64| (((s + r) / (2.0 * r)) * per as f64).floor().clamp(0.0, (per - 1) as f64) as usize;
        let bt = (((t - cyl.bottom_time()) / (r * r)) * per as f64).floor().clamp(0.0, (per - 1) as f64) as usize;
        let bs = if dim == 1 { b(x[0] - cyl.center[0]) } else { b(x[0] - cyl.center[0]) + per * b(x[1] - cyl.center[1]) };
        bt * spatial_blocks + bs
    };
    let blocks_total = spatial_blocks * per;
    let per_chain = samples / FS_CHAINS;
    let mut jobs = Vec::new();
    for chain in 0..FS_CHAINS {
        let mut order: Vec<usize> = (0..blocks_total).collect();
        order.shuffle(&mut member_rng(seed, chain));
        let count_in_chain = per_chain + usize::from(chain < samples % FS_CHAINS);
        for i in 0..count_in_chain {
            let frac = if count_in_chain == 1 { 1.0 } else { i as f64 / (count_in_chain - 1) as f64 };
            let target = FS_MIN_DENSITY * (1.0 / FS_MIN_DENSITY).powf(frac);
            let take = ((target * blocks_total as f64).round() as usize).clamp(1, blocks_total);
            jobs.push((chain, i, take, order.clone()));
        }
    }
    let results: Vec<(usize, usize, f64, Vec<f64>)> = jobs
        .par_iter()
        .map(|(chain, i, take, order)| {
            let mut chosen = vec![false; blocks_total];
            for &b in &order[..*take] {
                chosen[b] = true;
            }
            let mut set = IndicatorSet::empty(lattice.clone());
            for k in 0..lattice.time_cells {
                for node in 0..ns {
                    if full.get(k, node) && chosen[block_of(k, node)] {
                        set.set(k, node, true);
                    }
                }
            }
            let density = set.count() as f64 / full.count() as f64;
            Ok((*chain, *i, density, eval(&set)?))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut unit_exact = true;
    let mut inclusion_violation = f64::NEG_INFINITY;
    for (idx, (chain, _, density, values)) in results.iter().enumerate() {
        let (j, ratio) = values.iter().zip(&reference).map(|(v, w)| v / w).enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        if *density == 1.0 {
            unit_exact &= values.iter().zip(&reference).all(|(v, w)| v == w);
        }
        if let Some((prev_chain, _, _, prev)) = idx.checked_sub(1).map(|p| &results[p]) {
            if prev_chain == chain {
                for (a, b) in prev.iter().zip(values) {
                    inclusion_violation = inclusion_violation.max(a - b);
                }
            }
        }
        out.push(FsSample { chain: *chain, density: *density, ratio, probe: probes[j] });
    }
    let points: Vec<(f64, f64)> = out.iter().filter(|s| s.ratio > 0.0).map(|s| (s.density.ln(), s.ratio.ln())).collect();
    let (sigma_hat, intercept, r2) = linear_fit(&points).ok_or_else(|| Error::Domain("degenerate fs fit".into()))?;
    let c_lower = out.iter().map(|s| s.ratio / s.density.powf(sigma_hat)).fold(f64::INFINITY, f64::min);
    Ok(FSFitReport {
        r,
        dim,
        seed,
        cylinder_top: FS_TOP_TIME,
        probes,
        samples: out,
        sigma_hat,
        c_hat: intercept.exp(),
        c_lower,
        r2,
        unit_exact,
        inclusion_violation,
    })
}
