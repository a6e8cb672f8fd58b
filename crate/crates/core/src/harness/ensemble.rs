use crate::error::{Error, Result};
use crate::geometry::{check_dim, check_kappa, norm, Coord, IndicatorSet, Lattice, ParabolicCylinder};
use crate::pucci::{linear_dominates, EllipticityPair, SymMatrix};
use crate::solver::grid::{DEFAULT_NODES_1D, DEFAULT_NODES_2D};
use crate::solver::{solve, CoefficientField, Grid, GridFunction, GridOptions, OperatorSpec, Source, ZeroBoundary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// Time cells of the source lattice over `(-1, 0]`.
pub const SOURCE_TIME_CELLS: usize = 256;

/// Dyadic refinement levels of random coefficient fields.
pub const COEFFICIENT_LEVELS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFamily {
    IndicatorCells,
    SmoothBumps,
    LevelSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientFamily {
    Pucci,
    RandomLinear,
    /// Alternates by member index, even members pucci.
    Mixed,
}

/// Where sources may live: anywhere in `Q_1`, or in `B_{1-kappa} x (-1, -kappa]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Full,
    Lower,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $name:literal),* $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),* })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    other => Err(Error::Config(format!("unknown {} {other:?}", stringify!($ty)))),
                }
            }
        }
    };
}

text_enum!(SourceFamily { IndicatorCells => "indicator-cells", SmoothBumps => "smooth-bumps", LevelSet => "level-set" });
text_enum!(CoefficientFamily { Pucci => "pucci", RandomLinear => "random-linear", Mixed => "mixed" });
text_enum!(Support { Full => "full", Lower => "lower" });

/// Space nodes per axis from a preset name or an explicit odd count.
pub fn grid_nodes(preset: &str, dim: usize) -> Result<usize> {
    let nodes = match (preset, dim) {
        ("default", 1) => DEFAULT_NODES_1D,
        ("default", _) => DEFAULT_NODES_2D,
        ("coarse", 1) => 65,
        ("coarse", _) => 33,
        ("fine", 1) => 513,
        ("fine", _) => 129,
        (n, _) => n.parse().map_err(|_| Error::Config(format!("unknown grid preset {n:?}")))?,
    };
    if nodes < 5 || nodes % 2 == 0 {
        return Err(Error::Config(format!("grid needs an odd node count >= 5, got {nodes}")));
    }
    Ok(nodes)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub seed: u64,
    pub count: usize,
    pub source_family: SourceFamily,
    pub coefficient_family: CoefficientFamily,
    pub dim: usize,
    pub nodes: usize,
    pub kappa: f64,
    pub ell: EllipticityPair,
    /// Target measure range for the level set `{f > 1/2}`.
    pub m_range: (f64, f64),
    pub support: Support,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            seed: 42,
            count: 50,
            source_family: SourceFamily::IndicatorCells,
            coefficient_family: CoefficientFamily::Mixed,
            dim: 1,
            nodes: DEFAULT_NODES_1D,
            kappa: 0.5,
            ell: EllipticityPair::default(),
            m_range: (0.05, 0.5),
            support: Support::Full,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim).map_err(|e| Error::Config(e.to_string()))?;
        check_kappa(self.kappa).map_err(|e| Error::Config(e.to_string()))?;
        let (lo, hi) = self.m_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::Config(format!("m range must satisfy 0 < lo <= hi < 1, got {lo}..{hi}")));
        }
        grid_nodes(&self.nodes.to_string(), self.dim)?;
        Ok(())
    }

    pub fn source_lattice(&self) -> Lattice {
        Lattice::unit(self.dim, self.nodes, SOURCE_TIME_CELLS).expect("validated lattice")
    }

    fn support_region(&self) -> ParabolicCylinder {
        match self.support {
            Support::Full => ParabolicCylinder::unit(),
            Support::Lower => ParabolicCylinder { center: [0.0, 0.0], top_time: -self.kappa, radius: 1.0 - self.kappa },
        }
    }
}

/// Real-valued source, constant on each lattice cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSource {
    lattice: Lattice,
    values: Vec<f64>,
}

impl LatticeSource {
    /// Samples `f` at cell centers; cells outside `Q_1` get zero.
    pub fn from_fn(lattice: Lattice, f: impl Fn(Coord, f64) -> f64) -> Result<Self> {
        let ns = lattice.space_len();
        let unit = ParabolicCylinder::unit();
        let mut values = vec![0.0; lattice.len()];
        for k in 0..lattice.time_cells {
            let t = lattice.cell_time(k);
            for node in 0..ns {
                let x = lattice.coord(node);
                if unit.contains(x, t) {
                    let v = f(x, t);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Domain(format!("source value {v} outside [0, 1]")));
                    }
                    values[k * ns + node] = v;
                }
            }
        }
        Ok(LatticeSource { lattice, values })
    }

    pub fn from_indicator(set: &IndicatorSet) -> Self {
        let values = set.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        LatticeSource { lattice: set.lattice().clone(), values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn node_of(&self, x: Coord) -> Option<usize> {
        let l = &self.lattice;
        let h = l.h();
        let idx = |s: f64, c: f64| {
            let i = ((s - (c - l.half_width)) / h).round();
            (i >= 0.0 && i < l.nodes as f64).then_some(i as usize)
        };
        if l.dim == 1 {
            idx(x[0], l.center[0])
        } else {
            Some(idx(x[1], l.center[1])? * l.nodes + idx(x[0], l.center[0])?)
        }
    }

    /// `{f > level}` as a rasterized set.
    pub fn level_set(&self, level: f64) -> IndicatorSet {
        let mask = self.values.iter().map(|&v| v > level).collect();
        IndicatorSet::from_mask(self.lattice.clone(), mask).expect("mask matches lattice")
    }

    /// `(∫ f^p)^(1/p)` with `|Q_1|`-normalized measure.
    pub fn norm(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.powf(p)).sum();
        (s * self.lattice.cell_measure()).powf(1.0 / p)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Whether every cell with `f > 0` lies in `region`.
    pub fn supported_in(&self, region: &ParabolicCylinder) -> bool {
        let ns = self.lattice.space_len();
        self.values
            .iter()
            .enumerate()
            .all(|(i, &v)| v == 0.0 || region.contains(self.lattice.coord(i % ns), self.lattice.cell_time(i / ns)))
    }

    pub fn to_grid_function(&self, grid: &Grid) -> GridFunction {
        let mut gf = GridFunction::new(grid, crate::solver::Role::Source, 1);
        let ns = self.lattice.space_len();
        for k in 0..self.lattice.time_cells {
            gf.push_level(self.lattice.t_bottom + k as f64 * self.lattice.dt, self.values[k * ns..(k + 1) * ns].to_vec());
        }
        gf
    }
}

impl Source for LatticeSource {
    fn value(&self, x: Coord, t0: f64, t1: f64) -> f64 {
        match (self.node_of(x), self.lattice.time_cell_of(0.5 * (t0 + t1))) {
            (Some(n), Some(k)) => self.values[k * self.lattice.space_len() + n],
            _ => 0.0,
        }
    }
}

/// One ensemble draw: the problem data, not yet solved.
#[derive(Clone, Debug)]
pub struct Member {
    pub index: usize,
    pub family: SourceFamily,
    pub source: LatticeSource,
    pub op: OperatorSpec,
    pub grid: Grid,
    /// Target measure the source was drawn for.
    pub target_m: f64,
    /// Linear members: `tr(A M) >= M^-(M)` verified on every coefficient
    /// cell for a random sample of matrices. Pucci members are trivially true.
    pub certified: bool,
}

impl Member {
    pub fn solve(&self) -> Result<GridFunction> {
        solve(&self.grid, &self.op, &self.source, &ZeroBoundary)
    }
}

pub fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate_member(config: &EnsembleConfig, index: usize) -> Result<Member> {
    config.validate()?;
    let mut rng = member_rng(config.seed, index);
    let lattice = config.source_lattice();
    let region = config.support_region();
    let target_m = rng.gen_range(config.m_range.0..=config.m_range.1);
    let source = match config.source_family {
        SourceFamily::IndicatorCells => indicator_cells(&mut rng, lattice, &region, target_m)?,
        SourceFamily::SmoothBumps => smooth_bumps(&mut rng, lattice, &region)?,
        SourceFamily::LevelSet => level_set(&mut rng, lattice, &region, target_m)?,
    };
    let linear = match config.coefficient_family {
        CoefficientFamily::Pucci => false,
        CoefficientFamily::RandomLinear => true,
        CoefficientFamily::Mixed => index % 2 == 1,
    };
    let (op, certified) = if linear {
        let field = CoefficientField::dyadic(rng.gen(), COEFFICIENT_LEVELS, config.dim, &config.ell);
        let certified = certify_linear(&mut rng, &field, config.dim, &config.ell);
        (OperatorSpec::linear(config.ell, field)?, certified)
    } else {
        (OperatorSpec::pucci_minus(config.ell), true)
    };
    let grid = Grid::new(ParabolicCylinder::unit(), config.dim, config.nodes, &op, GridOptions::for_dim(config.dim))?;
    Ok(Member { index, family: config.source_family, source, op, grid, target_m, certified })
}

fn certify_linear(rng: &mut ChaCha8Rng, field: &CoefficientField, dim: usize, ell: &EllipticityPair) -> bool {
    let cells: Vec<SymMatrix> = match field {
        CoefficientField::Constant(a) => vec![*a],
        CoefficientField::Dyadic { cells, .. } => cells.clone(),
    };
    cells.iter().all(|a| {
        (0..8).all(|_| {
            let m = if dim == 1 {
                SymMatrix::scalar(rng.gen_range(-4.0..4.0))
            } else {
                SymMatrix::two(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0))
            };
            linear_dominates(a, &m, ell).unwrap_or(false)
        })
    })
}

/// Union of randomly chosen blocks of a coarse space-time partition of the
/// support region, sized to hit `target_m`.
fn indicator_cells(rng: &mut ChaCha8Rng, lattice: Lattice, region: &ParabolicCylinder, target_m: f64) -> Result<LatticeSource> {
    let dim = lattice.dim;
    let per_axis = if dim == 1 { 16 } else { 8 };
    let time_blocks = 16;
    let r = region.radius;
    let height = region.top_time - region.bottom_time();
    let side = 2.0 * r / per_axis as f64;
    let tau = height / time_blocks as f64;
    let mut blocks = Vec::new();
    for kt in 0..time_blocks {
        for i in 0..per_axis {
            for j in 0..if dim == 1 { 1 } else { per_axis } {
                let lo = [region.center[0] - r + i as f64 * side, region.center[1] - r + j as f64 * side];
                // keep blocks whose far corner sits inside the ball
                let far = [lo[0].abs().max((lo[0] + side).abs()), lo[1].abs().max((lo[1] + side).abs())];
                if dim == 2 && norm(far) > r {
                    continue;
                }
                blocks.push((lo, region.bottom_time() + kt as f64 * tau));
            }
        }
    }
    let block_measure = side.powi(dim as i32) * tau / crate::geometry::unit_ball_volume(dim);
    let want = ((target_m / block_measure).round() as usize).clamp(1, blocks.len());
    blocks.shuffle(rng);
    blocks.truncate(want);
    let region = *region;
    LatticeSource::from_fn(lattice, move |x, t| {
        let hit = region.contains(x, t)
            && blocks.iter().any(|(lo, t0)| {
                t > *t0 && t <= t0 + tau && x[0] >= lo[0] && x[0] < lo[0] + side && (dim == 1 || (x[1] >= lo[1] && x[1] < lo[1] + side))
            });
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

fn smooth_bumps(rng: &mut ChaCha8Rng, lattice: Lattice, region: &ParabolicCylinder) -> Result<LatticeSource> {
    let count = rng.gen_range(1..=4);
    let r = region.radius;
    let bumps: Vec<(Coord, f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let s = rng.gen_range(0.1..0.3) * r;
            let v = rng.gen_range(0.05..0.2) * (region.top_time - region.bottom_time());
            let reach = (r - 2.0 * s).max(0.0);
            let c = [region.center[0] + rng.gen_range(-reach..=reach), if lattice.dim == 1 { 0.0 } else { rng.gen_range(-reach..=reach) }];
            let tc = rng.gen_range(region.bottom_time() + 2.0 * v..=(region.top_time - 2.0 * v).max(region.bottom_time() + 2.0 * v));
            (c, s, tc, v, rng.gen_range(0.6..1.0))
        })
        .collect();
    let region = *region;
    LatticeSource::from_fn(lattice, move |x, t| {
        if !region.contains(x, t) {
            return 0.0;
        }
        let sum: f64 = bumps
            .iter()
            .map(|&(c, s, tc, v, a)| {
                let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                a * (-d2 / (2.0 * s * s) - (t - tc).powi(2) / (2.0 * v * v)).exp()
            })
            .sum();
        sum.min(1.0)
    })
}

/// Superlevel set of a random trigonometric field with its threshold
/// chosen as a quantile, so the measure matches `target_m` up to one cell.
fn level_set(rng: &mut ChaCha8Rng, lattice: Lattice, region: &ParabolicCylinder, target_m: f64) -> Result<LatticeSource> {
    let terms: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.2..1.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-8.0..8.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let dim = lattice.dim;
    let phi = |x: Coord, t: f64| -> f64 {
        terms.iter().map(|&(a, k0, k1, w, p)| a * (k0 * x[0] + if dim == 1 { 0.0 } else { k1 * x[1] } + w * t + p).cos()).sum()
    };
    let ns = lattice.space_len();
    let mut vals: Vec<f64> = Vec::new();
    for k in 0..lattice.time_cells {
        for node in 0..ns {
            let (x, t) = (lattice.coord(node), lattice.cell_time(k));
            if region.contains(x, t) {
                vals.push(phi(x, t));
            }
        }
    }
    let want = ((target_m / lattice.cell_measure()).round() as usize).clamp(1, vals.len().max(1));
    vals.sort_by(|a, b| b.total_cmp(a));
    let threshold = vals.get(want - 1).copied().unwrap_or(f64::INFINITY);
    let region = *region;
    LatticeSource::from_fn(lattice, move |x, t| if region.contains(x, t) && phi(x, t) >= threshold { 1.0 } else { 0.0 })
}
