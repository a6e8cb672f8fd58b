use super::grid::Grid;
use super::scheme::Source;
use crate::error::{Error, Result};
use crate::geometry::Coord;
use std::fmt::{self, Write as _};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Supersolution,
    Fundamental,
    Source,
    Coefficients,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Supersolution => "supersolution",
            Role::Fundamental => "fundamental",
            Role::Source => "source",
            Role::Coefficients => "coefficients",
        })
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supersolution" | "u" => Ok(Role::Supersolution),
            "fundamental" | "w" => Ok(Role::Fundamental),
            "source" | "f" => Ok(Role::Source),
            "coefficients" | "A" => Ok(Role::Coefficients),
            other => Err(Error::Parse(format!("unknown role {other:?}"))),
        }
    }
}

/// Values on the space lattice of a [`Grid`] at a list of stored time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub dim: usize,
    pub nodes: usize,
    pub h: f64,
    /// Solver time step; stored levels are `stride` steps apart.
    pub dt: f64,
    pub stride: usize,
    pub center: Coord,
    pub radius: f64,
    pub role: Role,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl GridFunction {
    pub fn new(grid: &Grid, role: Role, stride: usize) -> Self {
        GridFunction {
            dim: grid.dim,
            nodes: grid.nodes,
            h: grid.h,
            dt: grid.dt,
            stride,
            center: grid.cylinder.center,
            radius: grid.cylinder.radius,
            role,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn space_len(&self) -> usize {
        if self.dim == 1 {
            self.nodes
        } else {
            self.nodes * self.nodes
        }
    }

    pub fn push_level(&mut self, t: f64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.space_len());
        self.times.push(t);
        self.values.push(values);
    }

    pub fn level_count(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn level(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn levels(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn coord(&self, node: usize) -> Coord {
        let x0 = self.center[0] - self.radius;
        if self.dim == 1 {
            [x0 + node as f64 * self.h, 0.0]
        } else {
            let y0 = self.center[1] - self.radius;
            [x0 + (node % self.nodes) as f64 * self.h, y0 + (node / self.nodes) as f64 * self.h]
        }
    }

    /// Nearest node to `x`, if it lies on the lattice.
    pub fn nearest_node(&self, x: Coord) -> Option<usize> {
        let idx = |s: f64, c: f64| {
            let i = ((s - (c - self.radius)) / self.h).round();
            (i >= 0.0 && i < self.nodes as f64).then_some(i as usize)
        };
        if self.dim == 1 {
            idx(x[0], self.center[0])
        } else {
            Some(idx(x[1], self.center[1])? * self.nodes + idx(x[0], self.center[0])?)
        }
    }

    /// Latest stored level at or before `t`.
    pub fn level_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.dt.max(1e-300);
        let k = self.times.partition_point(|&s| s <= t + tol);
        k.checked_sub(1)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// Text form: a header followed by one line per stored level holding the
    /// level time and the row-major node values.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid-function v1");
        let _ = writeln!(s, "N {}", self.dim);
        let _ = writeln!(s, "h {:e}", self.h);
        let _ = writeln!(s, "dt {:e}", self.dt);
        if self.dim == 1 {
            let _ = writeln!(s, "dims {} {}", self.nodes, self.level_count());
        } else {
            let _ = writeln!(s, "dims {} {} {}", self.nodes, self.nodes, self.level_count());
        }
        let _ = writeln!(s, "role {}", self.role);
        let _ = writeln!(s, "stride {}", self.stride);
        let _ = writeln!(s, "center {:e} {:e}", self.center[0], self.center[1]);
        let _ = writeln!(s, "radius {:e}", self.radius);
        let _ = writeln!(s, "values");
        for (t, level) in self.levels() {
            let _ = write!(s, "{t:e}");
            for v in level {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("grid-function v1") {
            return Err(Error::Parse("missing grid-function header".into()));
        }
        let mut dim = None;
        let mut h = None;
        let mut dt = None;
        let mut dims: Vec<usize> = Vec::new();
        let mut role = Role::Supersolution;
        let mut stride = 1;
        let mut center = [0.0, 0.0];
        let mut radius = 1.0;
        let pf = |v: Option<&str>| -> Result<f64> {
            let v = v.ok_or_else(|| Error::Parse("missing value".into()))?;
            v.parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}")))
        };
        for line in lines.by_ref() {
            if line == "values" {
                break;
            }
            let mut it = line.split_whitespace();
            match it.next() {
                Some("N") => dim = Some(pf(it.next())? as usize),
                Some("h") => h = Some(pf(it.next())?),
                Some("dt") => dt = Some(pf(it.next())?),
                Some("dims") => dims = it.map(|v| v.parse().map_err(|e| Error::Parse(format!("dims: {e}")))).collect::<Result<_>>()?,
                Some("role") => role = it.next().unwrap_or("").parse()?,
                Some("stride") => stride = pf(it.next())? as usize,
                Some("center") => center = [pf(it.next())?, pf(it.next())?],
                Some("radius") => radius = pf(it.next())?,
                Some(other) => return Err(Error::Parse(format!("unknown grid-function key {other:?}"))),
                None => {}
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse("missing N".into()))?;
        if dims.len() != dim + 1 {
            return Err(Error::Parse(format!("dims needs {} entries", dim + 1)));
        }
        let (nodes, level_count) = (dims[0], dims[dim]);
        let mut gf = GridFunction {
            dim,
            nodes,
            h: h.ok_or_else(|| Error::Parse("missing h".into()))?,
            dt: dt.ok_or_else(|| Error::Parse("missing dt".into()))?,
            stride,
            center,
            radius,
            role,
            times: Vec::new(),
            values: Vec::new(),
        };
        for line in lines {
            let mut nums = line.split_whitespace().map(|v| pf(Some(v)));
            let t = nums.next().ok_or_else(|| Error::Parse("empty level".into()))??;
            let level: Vec<f64> = nums.collect::<Result<_>>()?;
            if level.len() != gf.space_len() {
                return Err(Error::Parse(format!("level has {} values, expected {}", level.len(), gf.space_len())));
            }
            gf.push_level(t, level);
        }
        if gf.level_count() != level_count {
            return Err(Error::Parse(format!("expected {level_count} levels, found {}", gf.level_count())));
        }
        if gf.role == Role::Source && gf.values.iter().flatten().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("source values must lie in [0, 1]".into()));
        }
        if !gf.all_finite() {
            return Err(Error::Domain("grid function has non-finite values".into()));
        }
        Ok(gf)
    }
}

/// Piecewise constant in time (latest stored level) and nearest-node in space.
impl Source for GridFunction {
    fn value(&self, x: Coord, t0: f64, _: f64) -> f64 {
        match (self.level_at(t0), self.nearest_node(x)) {
            (Some(k), Some(n)) => self.values[k][n],
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ParabolicCylinder;
    use crate::pucci::EllipticityPair;
    use crate::solver::grid::GridOptions;
    use crate::solver::operator::OperatorSpec;

    #[test]
    fn text_round_trip() {
        let op = OperatorSpec::pucci_minus(EllipticityPair::default());
        for dim in [1, 2] {
            let g = Grid::new(ParabolicCylinder::unit(), dim, 9, &op, GridOptions::for_dim(dim)).unwrap();
            let mut gf = GridFunction::new(&g, Role::Source, 3);
            for k in 0..3 {
                gf.push_level(g.time(k), (0..g.space_len()).map(|n| ((n + k) % 5) as f64 / 7.0).collect());
            }
            let back = GridFunction::from_text(&gf.to_text()).unwrap();
            assert_eq!(back, gf);
            assert_eq!(back.level_at(g.time(1) + 1e-6), Some(1));
        }
    }

    #[test]
    fn source_range_is_enforced() {
        let op = OperatorSpec::pucci_minus(EllipticityPair::default());
        let g = Grid::new(ParabolicCylinder::unit(), 1, 5, &op, GridOptions::for_dim(1)).unwrap();
        let mut gf = GridFunction::new(&g, Role::Source, 1);
        gf.push_level(-1.0, vec![0.0, 2.0, 0.0, 0.0, 0.0]);
        assert!(GridFunction::from_text(&gf.to_text()).is_err());
    }
}
