use super::operator::OperatorSpec;
use crate::error::{Error, Result};
use crate::geometry::{check_dim, dist, Coord, ParabolicCylinder};
use crate::pucci::DEFAULT_FRAMES;

pub const DEFAULT_CFL: f64 = 0.9;
pub const DEFAULT_NODES_1D: usize = 257;
pub const DEFAULT_NODES_2D: usize = 97;

/// Stencil reach used in 2D: directional differences sample `x ± H v` with
/// `H = reach * h`. In 1D the reach is always one node.
pub const DEFAULT_REACH_2D: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOptions {
    pub cfl: f64,
    pub frames: usize,
    pub reach: f64,
    /// Force a time step; rejected when it violates the CFL bound.
    pub dt: Option<f64>,
}

impl GridOptions {
    pub fn for_dim(dim: usize) -> Self {
        GridOptions { cfl: DEFAULT_CFL, frames: DEFAULT_FRAMES, reach: if dim == 1 { 1.0 } else { DEFAULT_REACH_2D }, dt: None }
    }
}

/// Space-time lattice covering a parabolic cylinder. Nodes at distance at
/// least the radius from the center carry boundary data.
#[derive(Clone, Debug)]
pub struct Grid {
    pub dim: usize,
    pub nodes: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub cylinder: ParabolicCylinder,
    pub options: GridOptions,
    interior: Vec<bool>,
}

impl Grid {
    pub fn new(cylinder: ParabolicCylinder, dim: usize, nodes: usize, op: &OperatorSpec, options: GridOptions) -> Result<Self> {
        check_dim(dim)?;
        op.validate(dim)?;
        if nodes < 3 {
            return Err(Error::Domain(format!("need at least 3 nodes per axis, got {nodes}")));
        }
        if dim == 1 && options.reach != 1.0 {
            return Err(Error::Domain("1D stencils have reach 1".into()));
        }
        if !(options.reach >= 1.0) || !(options.cfl > 0.0 && options.cfl <= 1.0) {
            return Err(Error::Domain("need reach >= 1 and cfl in (0, 1]".into()));
        }
        let h = 2.0 * cylinder.radius / (nodes - 1) as f64;
        let duration = cylinder.radius * cylinder.radius;
        let limit = Self::cfl_limit_for(dim, h, op, &options);
        let (dt, steps) = match options.dt {
            Some(dt) => {
                if dt > limit * (1.0 + 1e-12) || !(dt > 0.0) {
                    return Err(Error::Cfl { dt, limit });
                }
                let steps = (duration / dt).round().max(1.0) as usize;
                let dt_eff = duration / steps as f64;
                if dt_eff > limit * (1.0 + 1e-12) {
                    return Err(Error::Cfl { dt: dt_eff, limit });
                }
                (dt_eff, steps)
            }
            None => {
                let steps = (duration / (options.cfl * limit)).ceil().max(1.0) as usize;
                (duration / steps as f64, steps)
            }
        };
        let mut grid = Grid { dim, nodes, h, dt, steps, cylinder, options, interior: Vec::new() };
        grid.interior = (0..grid.space_len()).map(|n| dist(grid.coord(n), cylinder.center) < cylinder.radius - 1e-12).collect();
        Ok(grid)
    }

    /// Default grid on `Q_1`.
    pub fn unit(dim: usize, op: &OperatorSpec) -> Result<Self> {
        let nodes = if dim == 1 { DEFAULT_NODES_1D } else { DEFAULT_NODES_2D };
        Self::new(ParabolicCylinder::unit(), dim, nodes, op, GridOptions::for_dim(dim))
    }

    /// Largest monotone time step `h^2 / (2 N Lambda mult)` with
    /// `mult = (h / H)^2`.
    pub fn cfl_limit_for(dim: usize, h: f64, op: &OperatorSpec, options: &GridOptions) -> f64 {
        let stencil_multiplier = 1.0 / (options.reach * options.reach);
        h * h / (2.0 * dim as f64 * op.ell.big_lambda * stencil_multiplier)
    }

    pub fn cfl_limit(&self, op: &OperatorSpec) -> f64 {
        Self::cfl_limit_for(self.dim, self.h, op, &self.options)
    }

    /// Halves `h` and quarters `dt`, so that every level of `self` is also a
    /// level of the refined grid and node `i` maps to node `2i`.
    pub fn refined(&self, op: &OperatorSpec) -> Result<Self> {
        let mut options = self.options;
        options.dt = Some(self.dt / 4.0);
        Grid::new(self.cylinder, self.dim, 2 * self.nodes - 1, op, options)
    }

    pub fn space_len(&self) -> usize {
        if self.dim == 1 {
            self.nodes
        } else {
            self.nodes * self.nodes
        }
    }

    pub fn coord(&self, node: usize) -> Coord {
        let x0 = self.cylinder.center[0] - self.cylinder.radius;
        if self.dim == 1 {
            [x0 + node as f64 * self.h, 0.0]
        } else {
            let y0 = self.cylinder.center[1] - self.cylinder.radius;
            let (i, j) = (node % self.nodes, node / self.nodes);
            [x0 + i as f64 * self.h, y0 + j as f64 * self.h]
        }
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.interior[node]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn time(&self, level: usize) -> f64 {
        self.cylinder.bottom_time() + level as f64 * self.dt
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    /// Maps a node of this grid to the matching node of a grid refined by
    /// [`Grid::refined`].
    pub fn refined_node(&self, node: usize) -> usize {
        let fine = 2 * self.nodes - 1;
        if self.dim == 1 {
            2 * node
        } else {
            let (i, j) = (node % self.nodes, node / self.nodes);
            2 * j * fine + 2 * i
        }
    }
}
