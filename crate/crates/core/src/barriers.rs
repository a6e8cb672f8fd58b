//! The barrier `psi = phi^2 rho^(-alpha)` with
//! `rho(t) = (theta^2 - delta^2)(1 + t) + delta^2` and `phi = rho - |x|^2`,
//! its sampled subsolution certificate, and the constants derived from it.

use crate::error::{Error, Result};
use crate::geometry::{check_dim, check_kappa, norm, Coord};
use crate::logval::LogValue;
use crate::pucci::{pucci_minus, EllipticityPair, SymMatrix};
use rayon::prelude::*;
use serde::Serialize;

/// Relative margin by which `alpha` exceeds its threshold.
pub const DEFAULT_MARGIN: f64 = 0.01;

/// Roundoff slack for certified residuals.
pub const RESIDUAL_SLACK: f64 = 1e-9;

/// Default number of sample points per certificate.
pub const DEFAULT_SAMPLES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierParams {
    pub theta: f64,
    /// Effective inner radius; always at most `theta / 2`.
    pub delta: f64,
    /// Inner radius as requested, before any reduction.
    pub requested_delta: f64,
    pub eta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub ell: EllipticityPair,
    pub dim: usize,
}

impl BarrierParams {
    /// Rejects `delta > theta / 2`.
    pub fn new(theta: f64, delta: f64, eta: f64, tau1: f64, tau2: f64, ell: EllipticityPair, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Domain(format!("theta must lie in (0,1), got {theta}")));
        }
        if !(delta > 0.0 && delta <= 0.5 * theta * (1.0 + 1e-15)) {
            return Err(Error::Domain(format!("need 0 < delta <= theta/2, got delta={delta}, theta={theta}")));
        }
        if !(tau1 > 0.0 && tau1 <= tau2 && tau2.is_finite()) {
            return Err(Error::Domain(format!("need 0 < tau1 <= tau2, got ({tau1}, {tau2})")));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("eta must be nonnegative, got {eta}")));
        }
        Ok(BarrierParams { theta, delta, requested_delta: delta, eta, tau1, tau2, ell, dim })
    }

    /// Shrinks `delta` to `theta / 2` when needed. A lower bound on a ball
    /// also holds on every smaller concentric ball, so the reduced set of
    /// parameters applies whenever the requested one does.
    pub fn with_reduced_delta(theta: f64, delta: f64, eta: f64, tau1: f64, tau2: f64, ell: EllipticityPair, dim: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        let mut p = Self::new(theta, delta.min(0.5 * theta), eta, tau1, tau2, ell, dim)?;
        p.requested_delta = delta;
        Ok(p)
    }

    /// `rho' = theta^2 - delta^2`.
    pub fn rho_slope(&self) -> f64 {
        self.theta * self.theta - self.delta * self.delta
    }

    pub fn rho(&self, t: f64) -> f64 {
        self.rho_slope() * (1.0 + t) + self.delta * self.delta
    }

    /// Bound on the straightened drift `|(h/R) b + c| <= eta + 1 - theta`.
    pub fn drift_bound(&self) -> f64 {
        self.eta + 1.0 - self.theta
    }
}

/// `C_0 = 2(theta^2 - delta^2) + 4(eta theta + (1 - theta) theta) + 4 Lambda N tau2`.
pub fn compute_c0(p: &BarrierParams) -> f64 {
    2.0 * p.rho_slope() + 4.0 * (p.eta * p.theta + (1.0 - p.theta) * p.theta) + 4.0 * p.ell.big_lambda * p.dim as f64 * p.tau2
}

/// Threshold `C_0 (C_0 + 8 lambda tau1) / (6 theta^2 lambda tau1)` inflated
/// by `1 + margin`.
pub fn compute_alpha(p: &BarrierParams, margin: f64) -> f64 {
    let c0 = compute_c0(p);
    let lt = p.ell.lambda * p.tau1;
    (1.0 + margin) * c0 * (c0 + 8.0 * lt) / (6.0 * p.theta * p.theta * lt)
}

/// Value and derivatives of `psi` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiJet {
    /// `false` outside `Q-hat`; the value is then zero and the derivatives
    /// are meaningless.
    pub inside: bool,
    pub value: f64,
    pub gradient: Coord,
    pub hessian: SymMatrix,
    pub time_derivative: f64,
}

/// Closed-form jet of `psi`. In one dimension only `x[0]` is used.
pub fn psi_eval(x: Coord, dim: usize, t: f64, theta: f64, delta: f64, alpha: f64) -> PsiJet {
    let slope = theta * theta - delta * delta;
    let rho = slope * (1.0 + t) + delta * delta;
    let x = if dim == 1 { [x[0], 0.0] } else { x };
    let r2 = x[0] * x[0] + x[1] * x[1];
    let phi = rho - r2;
    if !(phi > 0.0 && t > -1.0 && t < 0.0) {
        return PsiJet { inside: false, value: 0.0, gradient: [0.0, 0.0], hessian: SymMatrix::zero(dim), time_derivative: f64::NAN };
    }
    let scale = rho.powf(-alpha);
    let value = phi * phi * scale;
    let gradient = [-4.0 * phi * x[0] * scale, -4.0 * phi * x[1] * scale];
    let hessian = if dim == 1 {
        SymMatrix::scalar((8.0 * x[0] * x[0] - 4.0 * phi) * scale)
    } else {
        SymMatrix::two((8.0 * x[0] * x[0] - 4.0 * phi) * scale, 8.0 * x[0] * x[1] * scale, (8.0 * x[1] * x[1] - 4.0 * phi) * scale)
    };
    let time_derivative = scale * (2.0 * phi * slope - alpha / rho * slope * phi * phi);
    PsiJet { inside: true, value, gradient, hessian, time_derivative }
}

/// `rho^alpha L[psi]` maximized over `h/R^2 in [tau1, tau2]` and drifts of
/// size at most `drift_bound` (the worst drift points along `D psi`).
pub fn normalized_residual(p: &BarrierParams, alpha: f64, drift_bound: f64, x: Coord, t: f64) -> Option<f64> {
    let slope = p.rho_slope();
    let rho = p.rho(t);
    let x = if p.dim == 1 { [x[0], 0.0] } else { x };
    let r = norm(x);
    let phi = rho - r * r;
    if !(phi > 0.0 && t > -1.0 && t < 0.0) {
        return None;
    }
    let hess = if p.dim == 1 {
        SymMatrix::scalar(8.0 * x[0] * x[0] - 4.0 * phi)
    } else {
        SymMatrix::two(8.0 * x[0] * x[0] - 4.0 * phi, 8.0 * x[0] * x[1], 8.0 * x[1] * x[1] - 4.0 * phi)
    };
    let m = pucci_minus(&hess, &p.ell);
    let time_part = -alpha / rho * slope * phi * phi + 2.0 * phi * slope;
    let diffusion = (-p.tau1 * m).max(-p.tau2 * m);
    Some(time_part + diffusion + 4.0 * drift_bound * phi * r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierCertificate {
    pub params: BarrierParams,
    #[serde(rename = "C0")]
    pub c0: f64,
    pub alpha: f64,
    pub drift_bound: f64,
    pub residual_max: f64,
    /// `(t, |x|)` of the largest residual.
    pub worst_point: (f64, f64),
    pub sample_count: usize,
    pub gamma_final: LogValue,
    pub valid: bool,
}

impl BarrierCertificate {
    pub fn into_result(self) -> Result<Self> {
        if self.valid {
            Ok(self)
        } else {
            Err(Error::Certification { residual: self.residual_max, t: self.worst_point.0, radius: self.worst_point.1 })
        }
    }

    /// Key-value report.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let rows: Vec<(&str, String)> = vec![
            ("theta", format!("{:e}", p.theta)),
            ("delta", format!("{:e}", p.delta)),
            ("delta_requested", format!("{:e}", p.requested_delta)),
            ("eta", format!("{:e}", p.eta)),
            ("tau1", format!("{:e}", p.tau1)),
            ("tau2", format!("{:e}", p.tau2)),
            ("lambda", format!("{:e}", p.ell.lambda)),
            ("Lambda", format!("{:e}", p.ell.big_lambda)),
            ("N", p.dim.to_string()),
            ("C0", format!("{:e}", self.c0)),
            ("alpha", format!("{:e}", self.alpha)),
            ("drift_bound", format!("{:e}", self.drift_bound)),
            ("residual_max", format!("{:e}", self.residual_max)),
            ("worst_t", format!("{:e}", self.worst_point.0)),
            ("worst_radius", format!("{:e}", self.worst_point.1)),
            ("sample_count", self.sample_count.to_string()),
            ("gamma_final", self.gamma_final.sci()),
            ("ln_gamma_final", format!("{:e}", self.gamma_final.ln())),
            ("valid", self.valid.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Sample points `(t, x)` of `Q-hat`. Radial samples scan `t` and
/// `|x| / sqrt(rho(t))` on a product grid, which covers every point up to
/// rotation because the residual depends on `x` only through `|x|`. In two
/// dimensions a Cartesian grid is added as an independent check of that
/// reduction.
fn sample_points(p: &BarrierParams, samples: usize) -> Vec<(f64, Coord)> {
    let radial = if p.dim == 1 { samples } else { samples - samples / 4 };
    let n = ((radial as f64).sqrt().ceil() as usize).max(2);
    let mut pts = Vec::with_capacity(samples + 2 * n);
    for i in 0..n {
        // t in (-1, 0), denser near both ends
        let s = (i as f64 + 0.5) / n as f64;
        let t = -1.0 + 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
        let reach = p.rho(t).sqrt();
        for j in 0..n {
            let q = j as f64 / n as f64;
            pts.push((t, [q * reach, 0.0]));
        }
    }
    if p.dim == 2 {
        // about pi/4 of the cube lands in the disc
        let m = ((samples as f64 / std::f64::consts::PI).cbrt().ceil() as usize + 1).max(2);
        for i in 0..m {
            let t = -1.0 + (i as f64 + 0.5) / m as f64;
            let reach = p.rho(t).sqrt();
            for j in 0..m {
                for k in 0..m {
                    let x = [reach * (2.0 * (j as f64 + 0.5) / m as f64 - 1.0), reach * (2.0 * (k as f64 + 0.5) / m as f64 - 1.0)];
                    if norm(x) < reach {
                        pts.push((t, x));
                    }
                }
            }
        }
    }
    pts
}

/// Maximizes the normalized residual over at least `samples` points of
/// `Q-hat`. The certificate is valid iff the maximum is at most
/// [`RESIDUAL_SLACK`].
pub fn certify_subsolution(p: &BarrierParams, alpha: f64, drift_bound: f64, samples: usize) -> BarrierCertificate {
    let pts = sample_points(p, samples.max(4));
    let (residual_max, worst_point) =
        pts.par_iter().filter_map(|&(t, x)| normalized_residual(p, alpha, drift_bound, x, t).map(|r| (r, (t, norm(x))))).reduce(
            || (f64::NEG_INFINITY, (0.0, 0.0)),
            |a, b| {
                // ties resolved by position so the result does not depend on
                // the reduction order
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    BarrierCertificate {
        params: *p,
        c0: compute_c0(p),
        alpha,
        drift_bound,
        residual_max,
        worst_point,
        sample_count: pts.len(),
        gamma_final: lemma_lbnd_bound(p, alpha),
        valid: residual_max <= RESIDUAL_SLACK,
    }
}

/// Certificate with the default margin, drift bound and sample count.
pub fn certify_default(p: &BarrierParams) -> BarrierCertificate {
    certify_subsolution(p, compute_alpha(p, DEFAULT_MARGIN), p.drift_bound(), DEFAULT_SAMPLES)
}

/// `theta^(4 - 2 alpha) delta^(2 alpha - 4)`: the lower bound at the top
/// disc given `u >= 1` on the base disc of radius `delta R`.
pub fn lemma_lbnd_bound(p: &BarrierParams, alpha: f64) -> LogValue {
    gamma_final(p.theta, p.delta, alpha)
}

pub fn gamma_final(theta: f64, delta: f64, alpha: f64) -> LogValue {
    LogValue::from_ln((4.0 - 2.0 * alpha) * theta.ln() + (2.0 * alpha - 4.0) * delta.ln())
}

/// Parameters of the upright unit-cylinder application behind
/// [`krylov_constant`]: `theta = 1 - kappa`, `delta = min(1/2, theta/2)`,
/// no drift, `h / R^2 = 1`.
pub fn krylov_params(kappa: f64, ell: EllipticityPair, dim: usize) -> Result<BarrierParams> {
    check_kappa(kappa)?;
    let theta = 1.0 - kappa;
    BarrierParams::with_reduced_delta(theta, 0.5, 0.0, 1.0, 1.0, ell, dim)
}

/// Lower bound `C_k` on `v(x, 0)`, `|x| <= kappa`, for `v_t - M^-(D^2 v) >= 1`
/// in `Q_1` with `v >= 0`: half of the barrier constant, since the auxiliary
/// function is at least `1/2` on `B_{1/2}` at the bottom.
pub fn krylov_constant(kappa: f64, ell: EllipticityPair, dim: usize) -> Result<LogValue> {
    let p = krylov_params(kappa, ell, dim)?;
    Ok(LogValue::new(0.5) * lemma_lbnd_bound(&p, compute_alpha(&p, DEFAULT_MARGIN)))
}

/// Scaled form `C_k sigma r^2` for a cylinder of radius `r` with source
/// level `sigma`.
pub fn krylov_constant_scaled(ck: LogValue, sigma: f64, r: f64) -> LogValue {
    ck * LogValue::new(sigma) * LogValue::new(r * r)
}
