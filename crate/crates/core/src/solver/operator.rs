use crate::error::{Error, Result};
use crate::geometry::Coord;
use crate::pucci::{check_admissible, EllipticityPair, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    PucciMinus,
    PucciPlus,
    Linear,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::PucciMinus => "pucci_minus",
            OperatorKind::PucciPlus => "pucci_plus",
            OperatorKind::Linear => "linear",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pucci_minus" | "pucci-minus" => Ok(OperatorKind::PucciMinus),
            "pucci_plus" | "pucci-plus" => Ok(OperatorKind::PucciPlus),
            "linear" => Ok(OperatorKind::Linear),
            other => Err(Error::Parse(format!("unknown operator kind {other:?}"))),
        }
    }
}

/// Coefficient matrix field `A(x, t)` on `Q_1` for the linear operator.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientField {
    Constant(SymMatrix),
    /// Piecewise constant on the dyadic cells of `[-1,1]^N x (-1,0]` with
    /// `2^levels` cells per axis.
    Dyadic {
        seed: u64,
        levels: u32,
        dim: usize,
        cells: Vec<SymMatrix>,
    },
}

impl CoefficientField {
    /// Random checkerboard-like field with eigenvalues drawn from the
    /// extremes `{lambda, Lambda}` and random orientations in 2D.
    pub fn dyadic(seed: u64, levels: u32, dim: usize, ell: &EllipticityPair) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_axis = 1usize << levels;
        let count = per_axis.pow(dim as u32) * per_axis;
        let pick = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { ell.lambda } else { ell.big_lambda };
        let cells = (0..count)
            .map(|_| {
                if dim == 1 {
                    SymMatrix::scalar(pick(&mut rng))
                } else {
                    let (a, b) = (pick(&mut rng), pick(&mut rng));
                    SymMatrix::rotated_diag(a, b, rng.gen_range(0.0..std::f64::consts::PI))
                }
            })
            .collect();
        CoefficientField::Dyadic { seed, levels, dim, cells }
    }

    pub fn at(&self, x: Coord, t: f64) -> SymMatrix {
        match self {
            CoefficientField::Constant(a) => *a,
            CoefficientField::Dyadic { levels, dim, cells, .. } => {
                let n = 1usize << levels;
                let idx = |s: f64| ((s * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
                let ix = idx(0.5 * (x[0] + 1.0));
                let it = idx(t + 1.0);
                let cell = if *dim == 1 {
                    it * n + ix
                } else {
                    let iy = idx(0.5 * (x[1] + 1.0));
                    (it * n + iy) * n + ix
                };
                cells[cell]
            }
        }
    }

    fn cells(&self) -> Vec<SymMatrix> {
        match self {
            CoefficientField::Constant(a) => vec![*a],
            CoefficientField::Dyadic { cells, .. } => cells.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CoefficientField::Constant(a) => {
                let (p, q, r) = a.entries();
                format!("constant {p:e} {q:e} {r:e}")
            }
            CoefficientField::Dyadic { seed, levels, .. } => format!("dyadic {seed} {levels}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub ell: EllipticityPair,
    pub coefficients: Option<CoefficientField>,
}

impl OperatorSpec {
    pub fn pucci_minus(ell: EllipticityPair) -> Self {
        OperatorSpec { kind: OperatorKind::PucciMinus, ell, coefficients: None }
    }

    pub fn pucci_plus(ell: EllipticityPair) -> Self {
        OperatorSpec { kind: OperatorKind::PucciPlus, ell, coefficients: None }
    }

    /// Linear operator `tr(A D^2 u)`; every coefficient value is checked
    /// against the ellipticity class.
    pub fn linear(ell: EllipticityPair, field: CoefficientField) -> Result<Self> {
        for a in field.cells() {
            check_admissible(&a, &ell)?;
        }
        Ok(OperatorSpec { kind: OperatorKind::Linear, ell, coefficients: Some(field) })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.kind == OperatorKind::Linear {
            let field = self.coefficients.as_ref().ok_or_else(|| Error::Config("linear operator needs a coefficient field".into()))?;
            for a in field.cells() {
                if a.dim() != dim {
                    return Err(Error::Config(format!("coefficient of size {} for dimension {dim}", a.dim())));
                }
                check_admissible(&a, &self.ell)?;
            }
        }
        Ok(())
    }

    /// Key-value text form.
    pub fn to_text(&self) -> String {
        let mut s = format!("kind {}\nlambda {:e}\nLambda {:e}\n", self.kind, self.ell.lambda, self.ell.big_lambda);
        if let Some(field) = &self.coefficients {
            s.push_str(&format!("coefficients {}\n", field.describe()));
            if let CoefficientField::Dyadic { dim, .. } = field {
                s.push_str(&format!("dim {dim}\n"));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut lambda = None;
        let mut big_lambda = None;
        let mut coeff: Option<Vec<String>> = None;
        let mut dim = 1usize;
        let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}")));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let rest: Vec<String> = parts.map(str::to_string).collect();
            let first = || rest.first().cloned().ok_or_else(|| Error::Parse(format!("{key} needs a value")));
            match key {
                "kind" => kind = Some(first()?.parse::<OperatorKind>()?),
                "lambda" => lambda = Some(num(&first()?)?),
                "Lambda" => big_lambda = Some(num(&first()?)?),
                "coefficients" => coeff = Some(rest),
                "dim" => dim = first()?.parse().map_err(|e| Error::Parse(format!("dim: {e}")))?,
                other => return Err(Error::Parse(format!("unknown operator key {other:?}"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Parse("operator file lacks kind".into()))?;
        let ell = EllipticityPair::new(
            lambda.ok_or_else(|| Error::Parse("operator file lacks lambda".into()))?,
            big_lambda.ok_or_else(|| Error::Parse("operator file lacks Lambda".into()))?,
        )?;
        match kind {
            OperatorKind::Linear => {
                let c = coeff.ok_or_else(|| Error::Parse("linear operator lacks coefficients".into()))?;
                let field = match c.first().map(String::as_str) {
                    Some("constant") if c.len() == 2 => CoefficientField::Constant(SymMatrix::scalar(num(&c[1])?)),
                    Some("constant") if c.len() == 4 => CoefficientField::Constant(SymMatrix::two(num(&c[1])?, num(&c[2])?, num(&c[3])?)),
                    Some("dyadic") if c.len() == 3 => {
                        let seed = c[1].parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
                        let levels = c[2].parse().map_err(|e| Error::Parse(format!("levels: {e}")))?;
                        CoefficientField::dyadic(seed, levels, dim, &ell)
                    }
                    _ => return Err(Error::Parse(format!("bad coefficients line {c:?}"))),
                };
                OperatorSpec::linear(ell, field)
            }
            OperatorKind::PucciMinus => Ok(OperatorSpec::pucci_minus(ell)),
            OperatorKind::PucciPlus => Ok(OperatorSpec::pucci_plus(ell)),
        }
    }
}
