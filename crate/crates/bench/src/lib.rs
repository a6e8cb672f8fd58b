//! Fixtures shared by the benchmarks.

use krylov_core::harness::{generate_member, EnsembleConfig, Member};
use krylov_core::solver::{Grid, GridOptions};
use krylov_core::{EllipticityPair, IndicatorSet, Lattice, OperatorSpec, ParabolicCylinder, Result};

/// Unit grid for `pucci_minus` with the default ellipticity pair.
pub fn unit_grid(dim: usize, nodes: usize) -> Result<(Grid, OperatorSpec)> {
    let op = OperatorSpec::pucci_minus(EllipticityPair::default());
    let grid = Grid::new(ParabolicCylinder::unit(), dim, nodes, &op, GridOptions::for_dim(dim))?;
    Ok((grid, op))
}

/// Rasterized `Q_r(0, t0)` on the solver's nodes.
pub fn cylinder_set(dim: usize, nodes: usize, top: f64, r: f64, time_cells: usize) -> Result<IndicatorSet> {
    let lattice = Lattice::unit(dim, nodes, time_cells)?;
    Ok(IndicatorSet::cylinder(lattice, &ParabolicCylinder::new([0.0, 0.0], top, r)?))
}

/// Ensemble member `index` of the default configuration at `nodes`.
pub fn member(nodes: usize, index: usize) -> Result<Member> {
    let cfg = EnsembleConfig { nodes, ..EnsembleConfig::default() };
    generate_member(&cfg, index)
}
