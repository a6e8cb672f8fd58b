//! Explicit lower-bound closures composed from barrier constants.
//!
//! All values are carried as [`LogValue`]s: the barrier exponents are large
//! enough that every constant here underflows `f64`.

use crate::barriers::{compute_alpha, gamma_final, krylov_constant, BarrierParams, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::geometry::{
    chain_length, chain_plan, check_dim, check_kappa, choose_c1, dist, march_min_budget, march_step_bound, norm, plan_march, AspectRange,
    Coord, ParabolicCylinder,
};
use crate::logval::LogValue;
use crate::pucci::EllipticityPair;
use serde::Serialize;
use std::fmt::Write as _;

/// Aspect range of the upright and marching steps.
pub const MARCH_ASPECT: AspectRange = AspectRange { lo: 3.0 / 16.0, hi: 3.0 / 8.0 };

/// `theta` of the single oblique step used for large cylinders.
pub const EASY_THETA: f64 = 1.0 / 1000.0;
pub const EASY_DELTA: f64 = 0.25;

/// Exponents above this are reported as capped.
pub const ALPHA_CAP: f64 = 1e12;

/// Power-law constants `(sigma, C)` of the fundamental-solution ratio bound
/// `w(E) / w(Q_r) >= C (|E| / |Q_r|)^sigma`. They are inputs, not derived;
/// the defaults come from the seeded empirical fit in the harness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FSConfig {
    pub sigma: f64,
    #[serde(rename = "C_cfs")]
    pub c_cfs: f64,
    pub empirical: bool,
}

impl FSConfig {
    pub fn new(sigma: f64, c_cfs: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && c_cfs > 0.0 && c_cfs.is_finite()) {
            return Err(Error::Config(format!("fs constants must be positive, got sigma={sigma}, C={c_cfs}")));
        }
        Ok(FSConfig { sigma, c_cfs, empirical: false })
    }
}

impl Default for FSConfig {
    /// Frozen from `fs_fit` with N = 1, r = 1/4, 40 samples, seed 17, and
    /// the default ellipticity pair.
    fn default() -> Self {
        FSConfig { sigma: DEFAULT_FS_SIGMA, c_cfs: DEFAULT_FS_C, empirical: true }
    }
}

pub const DEFAULT_FS_SIGMA: f64 = 1.1706;
pub const DEFAULT_FS_C: f64 = 0.9441;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropCase {
    Easy,
    Chain,
}

/// Lower bound for `w(., .; Q_r)` with the route that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PropBound {
    pub bound: LogValue,
    pub case: PropCase,
    /// Radius the chain was evaluated at (a sub-cylinder of `Q_r`).
    pub chain_radius: f64,
    pub chain_steps: u64,
    pub upright_steps: u64,
}

/// Bound with its scaling exponent and time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TsfsBound {
    pub bound: LogValue,
    /// `ln(bound) / ln(f)`, so that `bound = f^alpha`.
    pub alpha: f64,
    pub alpha_capped: bool,
    /// `[-kappa f^(N+1) / 2, 0]`; `None` for `f = 0`.
    pub window: Option<(f64, f64)>,
    pub m: f64,
    pub level: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureBound {
    pub bound: LogValue,
    /// Window as stated: `[-kappa m, 0]`.
    pub window: (f64, f64),
    /// Window covered by the composed argument (later starts are possible
    /// because the selected cylinder can sit up to the top of the shrunk
    /// lower cylinder).
    pub proven_window: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlickBound {
    pub bound: LogValue,
    pub window: (f64, f64),
    /// `bound = coefficient * f^exponent`.
    pub coefficient: LogValue,
    pub exponent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllipticBound {
    pub bound: LogValue,
    pub iterations: u64,
    pub doubling_steps: u64,
}

/// `c r^rho exp(-beta / r^p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub coefficient: LogValue,
    pub rho: f64,
    pub beta: f64,
    pub decay_power: f64,
}

impl Envelope {
    pub fn eval(&self, r: f64) -> LogValue {
        self.coefficient * LogValue::from_ln(self.rho * r.ln() - self.beta / r.powf(self.decay_power))
    }
}

/// All step constants for one `(kappa, lambda, Lambda, N)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pipeline {
    pub kappa: f64,
    pub ell: EllipticityPair,
    pub dim: usize,
    pub fs: FSConfig,
    pub c1: f64,
    pub ck: LogValue,
    pub ck_half: LogValue,
    pub c0: LogValue,
    pub easy_params: BarrierParams,
    pub alpha_easy: f64,
    pub c_e: LogValue,
    pub chain_params: BarrierParams,
    pub alpha_chain: f64,
    pub chain_step_constant: LogValue,
    pub upright_params: BarrierParams,
    pub alpha_upright: f64,
    pub upright_step_constant: LogValue,
    pub doubling_params: BarrierParams,
    pub alpha_doubling: f64,
    pub doubling_step_constant: LogValue,
    pub cover_params: BarrierParams,
    pub alpha_cover: f64,
    pub cover_step_constant: LogValue,
}

fn step_constant(p: &BarrierParams) -> (f64, LogValue) {
    let alpha = compute_alpha(p, DEFAULT_MARGIN);
    (alpha, gamma_final(p.theta, p.delta, alpha))
}

impl Pipeline {
    pub fn new(kappa: f64, ell: EllipticityPair, dim: usize, fs: FSConfig) -> Result<Self> {
        check_kappa(kappa)?;
        check_dim(dim)?;
        let c1 = choose_c1(kappa, dim)?;
        let ck = krylov_constant(kappa, ell, dim)?;
        let ck_half = krylov_constant(0.5, ell, dim)?;
        // Q_{r/2}(x0, t0 - 3r^2/4) sits in Q_r; the scaled constant on it
        // covers |x - x0| <= r/4 with radius (r/2)^2
        let c0 = ck_half * LogValue::new(0.25);
        let easy_params =
            BarrierParams::with_reduced_delta(EASY_THETA, EASY_DELTA, 1.0 / kappa - 1.0, 0.75, 1.0 / (kappa * kappa), ell, dim)?;
        let (alpha_easy, g_easy) = step_constant(&easy_params);
        let chain_params = BarrierParams::new(0.5, 0.25, 1.0, 0.75, 0.75, ell, dim)?;
        let (alpha_chain, chain_step_constant) = step_constant(&chain_params);
        let upright_params = BarrierParams::new(0.5, 0.25, 1.0, MARCH_ASPECT.lo, MARCH_ASPECT.hi, ell, dim)?;
        let (alpha_upright, upright_step_constant) = step_constant(&upright_params);
        let doubling_params = BarrierParams::new(0.5, 0.25, 0.0, 1.0, 1.0, ell, dim)?;
        let (alpha_doubling, doubling_step_constant) = step_constant(&doubling_params);
        let r_f = 0.5 * (1.0 + kappa);
        let theta_f = 1.0 - kappa / r_f;
        let cover_params = BarrierParams::new(theta_f, 0.5 * theta_f, 0.0, 1.0, 1.0, ell, dim)?;
        let (alpha_cover, cover_step_constant) = step_constant(&cover_params);
        Ok(Pipeline {
            kappa,
            ell,
            dim,
            fs,
            c1,
            ck,
            ck_half,
            c0,
            easy_params,
            alpha_easy,
            c_e: c0 * g_easy,
            chain_params,
            alpha_chain,
            chain_step_constant,
            upright_params,
            alpha_upright,
            upright_step_constant,
            doubling_params,
            alpha_doubling,
            doubling_step_constant,
            cover_params,
            alpha_cover,
            cover_step_constant,
        })
    }

    /// Largest radius the chain construction is run at.
    pub fn chain_radius_cap(&self) -> f64 {
        self.kappa.min(1.0 - self.kappa)
    }

    /// Largest march radius around a point of `B_kappa`.
    pub fn upright_cap(&self) -> f64 {
        1.0 - self.kappa
    }

    /// The single oblique step reaches all of `B_kappa` iff
    /// `(1 - theta) r >= kappa`.
    pub fn easy_applies(&self, r: f64) -> bool {
        (1.0 - EASY_THETA) * r >= self.kappa
    }

    fn check_radius(r: f64) -> Result<()> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Domain(format!("cylinder radius must lie in (0, 1], got {r}")));
        }
        Ok(())
    }

    /// Worst case over all `Q_r(x0, t0) ⊂ Q_1`: a lower bound for
    /// `w(x, t; Q_r)` at every `|x| <= kappa`, `t0 <= t <= 0`.
    pub fn prop_qlbnd(&self, r: f64) -> Result<PropBound> {
        Self::check_radius(r)?;
        let r_ch = r.min(self.chain_radius_cap());
        let d = (1.0 - r_ch + self.kappa).min(2.0);
        let l = chain_length(d, r_ch);
        // smallest possible starting disc R/2 = r / (2 sqrt(l)), with
        // l <= (d/r)^2 + 1
        let disc = r_ch * r_ch / (2.0 * (d * d + r_ch * r_ch).sqrt());
        let n_up = march_step_bound(disc, 0.0, 1.0, self.upright_cap(), MARCH_ASPECT);
        let chain = self.c0 * LogValue::new(r_ch * r_ch) * self.chain_step_constant.powi(l) * self.upright_step_constant.powi(n_up);
        let out = PropBound { bound: chain, case: PropCase::Chain, chain_radius: r_ch, chain_steps: l, upright_steps: n_up };
        if self.easy_applies(r) {
            let easy = self.c_e * LogValue::new(r * r);
            if easy > chain {
                return Ok(PropBound { bound: easy, case: PropCase::Easy, ..out });
            }
        }
        Ok(out)
    }

    /// Same bound for a concrete cylinder, target point `y` and time `t`,
    /// built from explicit chain and march plans.
    pub fn prop_qlbnd_at(&self, cyl: &ParabolicCylinder, y: Coord, t: f64) -> Result<PropBound> {
        if !cyl.inside_unit() {
            return Err(Error::Geometry(format!("{cyl:?} is not inside Q_1")));
        }
        if norm(y) > self.kappa + 1e-12 || t < cyl.top_time - 1e-12 || t > 1e-12 {
            return Err(Error::Domain("target must satisfy |y| <= kappa and t0 <= t <= 0".into()));
        }
        let r = cyl.radius;
        let r_ch = r.min(self.chain_radius_cap());
        let t0 = cyl.top_time;
        let plan = chain_plan(cyl.center, t0 - 0.75 * r_ch * r_ch, y, t0, r_ch)?;
        let march = plan_march(y, 0.5 * plan.step_radius, t0, y, (t - t0).max(0.0), self.upright_cap(), MARCH_ASPECT)?;
        let n_up = march.len() as u64;
        let chain =
            self.c0 * LogValue::new(r_ch * r_ch) * self.chain_step_constant.powi(plan.step_count) * self.upright_step_constant.powi(n_up);
        let out = PropBound { bound: chain, case: PropCase::Chain, chain_radius: r_ch, chain_steps: plan.step_count, upright_steps: n_up };
        if self.easy_applies(r) && dist(cyl.center, ORIGIN_XY) <= 1.0 - r + 1e-12 {
            let easy = self.c_e * LogValue::new(r * r);
            if easy > chain {
                return Ok(PropBound { bound: easy, case: PropCase::Easy, ..out });
            }
        }
        Ok(out)
    }

    /// `prop(c1 m / 4) C_cfs ((1 - kappa) m)^sigma level`.
    pub fn thm_lb(&self, m: f64, level: f64) -> Result<MeasureBound> {
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::Domain(format!("m must lie in (0, 1], got {m}")));
        }
        if !(level >= 0.0) {
            return Err(Error::Domain(format!("level must be nonnegative, got {level}")));
        }
        let s = self.c1 * m;
        let rho = s / 4.0;
        let window = (-self.kappa * m, 0.0);
        let proven_start = -2.0 * s + s * s + 9.0 * rho * rho;
        let proven_window = (proven_start.min(0.0), 0.0);
        if level == 0.0 {
            return Ok(MeasureBound { bound: LogValue::ZERO, window, proven_window });
        }
        let prop = self.prop_qlbnd(rho)?.bound;
        let fs = LogValue::new(self.fs.c_cfs) * LogValue::new((1.0 - self.kappa) * m).powf(self.fs.sigma);
        Ok(MeasureBound { bound: prop * fs * LogValue::new(level), window, proven_window })
    }

    /// Level-set reduction `m = f^(N+1) / 2`, `level = f / 2`.
    pub fn thm_tsfs(&self, f_norm: f64) -> Result<TsfsBound> {
        if !(0.0..1.0).contains(&f_norm) {
            return Err(Error::Domain(format!("f_norm must lie in [0, 1), got {f_norm}")));
        }
        if f_norm == 0.0 {
            return Ok(TsfsBound { bound: LogValue::ZERO, alpha: f64::INFINITY, alpha_capped: true, window: None, m: 0.0, level: 0.0 });
        }
        let m = 0.5 * f_norm.powi(self.dim as i32 + 1);
        let level = 0.5 * f_norm;
        let bound = self.thm_lb(m, level)?.bound;
        let raw = bound.ln() / f_norm.ln();
        let alpha_capped = !(raw.is_finite() && raw <= ALPHA_CAP);
        Ok(TsfsBound {
            bound,
            alpha: if alpha_capped { ALPHA_CAP } else { raw },
            alpha_capped,
            window: Some((-self.kappa * m, 0.0)),
            m,
            level,
        })
    }

    /// Radius of the covering cylinders used for sources supported in
    /// `B_{1-kappa} x (-1, -kappa]`.
    pub fn slick_cover_radius(&self) -> f64 {
        0.25 * self.kappa.min(1.0 - self.kappa)
    }

    /// Number of cylinders of radius `r` in a covering of
    /// `B_{1-kappa} x (-1, -kappa]`: cubes of side `2r/sqrt(N)` in space,
    /// slabs of height `r^2` in time.
    pub fn slick_cover_count(&self) -> u64 {
        let r = self.slick_cover_radius();
        let side = 2.0 * r / (self.dim as f64).sqrt();
        let per_axis = (2.0 * (1.0 - self.kappa) / side).ceil() as u64 + 1;
        let slabs = ((1.0 - self.kappa) / (r * r)).ceil() as u64;
        per_axis.pow(self.dim as u32) * slabs
    }

    /// Start of the window on which [`Pipeline::cor_slicklb`] holds.
    pub fn slick_window_start(&self) -> f64 {
        let r = self.slick_cover_radius();
        let d = (1.0 - r + self.kappa).min(2.0);
        let t_req = march_min_budget(d, r, MARCH_ASPECT);
        (-self.kappa + (0.25 * r * r + t_req).max(10.0 * r * r)).min(0.0)
    }

    /// Algebraic bound `coefficient * f^exponent` for sources supported in
    /// `B_{1-kappa} x (-1, -kappa]`.
    pub fn cor_slicklb(&self, f_norm: f64) -> Result<SlickBound> {
        if !(0.0..1.0).contains(&f_norm) {
            return Err(Error::Domain(format!("f_norm must lie in [0, 1), got {f_norm}")));
        }
        let r = self.slick_cover_radius();
        let n = self.dim as f64;
        let d = (1.0 - r + self.kappa).min(2.0);
        let steps = march_step_bound(0.25 * r, d, 1.0, r, MARCH_ASPECT);
        let prop = self.c0 * LogValue::new(r * r) * self.upright_step_constant.powi(steps);
        // density of the best cylinder >= (m / K) / |Q_r|, m = f^(N+1)/2
        let k = self.slick_cover_count() as f64;
        let density_coef = 0.5 / (k * r.powf(n + 2.0));
        let coefficient = prop * LogValue::new(self.fs.c_cfs) * LogValue::new(density_coef).powf(self.fs.sigma) * LogValue::new(0.5);
        let exponent = 1.0 + (n + 1.0) * self.fs.sigma;
        let window = (self.slick_window_start(), 0.0);
        let bound = if f_norm == 0.0 {
            LogValue::ZERO
        } else {
            // the density can never exceed one
            let density = (density_coef * f_norm.powf(n + 1.0)).min(1.0);
            prop * LogValue::new(self.fs.c_cfs) * LogValue::new(density).powf(self.fs.sigma) * LogValue::new(0.5 * f_norm)
        };
        Ok(SlickBound { bound, window, coefficient, exponent })
    }

    /// Steady-state bound at `|x| <= kappa` for the source `chi_{B_r(0)}`.
    pub fn elliptic_limit(&self, r: f64) -> Result<EllipticBound> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Domain(format!("r must lie in (0, 1], got {r}")));
        }
        let rho0 = 0.5 * r;
        let r_f = 0.5 * (1.0 + self.kappa);
        let target = self.cover_params.delta * r_f;
        let doubling = if rho0 >= target { 0 } else { (target / rho0).log2().ceil() as u64 };
        let bound = self.ck_half * LogValue::new(r * r) * self.doubling_step_constant.powi(doubling) * self.cover_step_constant;
        Ok(EllipticBound { bound, iterations: doubling + 1, doubling_steps: doubling })
    }

    /// Envelope `C r^rho exp(-beta / r^2)` below [`Pipeline::prop_qlbnd`] for
    /// `r <= min(kappa, 1 - kappa)`.
    pub fn prop_envelope(&self) -> Envelope {
        let cap = self.upright_cap();
        let r_cap = self.chain_radius_cap();
        let a = -self.upright_step_constant.ln() / std::f64::consts::LN_2;
        let d_bar = ((1.0 + self.kappa).powi(2) + r_cap * r_cap).sqrt();
        let pad = (1.0 / (MARCH_ASPECT.hi * cap * cap)).ceil() as u64;
        let x = LogValue::new(cap * d_bar / 2.0).powf(-a).min(LogValue::ONE);
        let coefficient = self.c0 * self.chain_step_constant * self.upright_step_constant.powi(pad + 2) * x;
        Envelope { coefficient, rho: 2.0 + 2.0 * a, beta: (1.0 + self.kappa).powi(2) * -self.chain_step_constant.ln(), decay_power: 2.0 }
    }

    /// Envelope in `m` below [`Pipeline::thm_lb`] at `level = 1`.
    pub fn thm_envelope(&self) -> Envelope {
        let p = self.prop_envelope();
        let fs = LogValue::new(self.fs.c_cfs) * LogValue::new(1.0 - self.kappa).powf(self.fs.sigma);
        Envelope {
            coefficient: p.coefficient * LogValue::new(self.c1 / 4.0).powf(p.rho) * fs,
            rho: p.rho + self.fs.sigma,
            beta: 16.0 * p.beta / (self.c1 * self.c1),
            decay_power: 2.0,
        }
    }

    pub fn report(&self) -> ConstantsReport {
        let p_env = self.prop_envelope();
        let t_env = self.thm_envelope();
        let mut entries = Vec::new();
        let mut push = |name: &str, value: LogValue, note: &str| {
            entries.push(ReportEntry { name: name.into(), ln: value.ln(), value: value.sci(), note: note.into() });
        };
        push("C_k", self.ck, "barrier on Q_1 with theta = 1 - kappa, halved");
        push("C_k_half", self.ck_half, "C_k at kappa = 1/2");
        push("c0", self.c0, "C_k_half / 4: scaled bound on B_{r/4} at t0 - 3r^2/4");
        push("C_e", self.c_e, "c0 times the single oblique step with theta = 1/1000");
        push("chain_step_constant", self.chain_step_constant, "per oblique chain step, theta = 1/2, delta = 1/4");
        push("upright_step_constant", self.upright_step_constant, "per march step, h/R^2 in [3/16, 3/8]");
        push("doubling_step_constant", self.doubling_step_constant, "per doubling step of the steady-state chain");
        push("cover_step_constant", self.cover_step_constant, "final steady-state step onto B_kappa");
        push("prop_C", p_env.coefficient, "prop bound >= prop_C r^prop_rho exp(-prop_beta / r^2)");
        push("c", t_env.coefficient, "thm bound >= c m^rho exp(-beta / m^2) level");
        let mut scalars = Vec::new();
        let mut put = |name: &str, v: f64, note: &str| scalars.push(ReportScalar { name: name.into(), value: v, note: note.into() });
        put("kappa", self.kappa, "input");
        put("lambda", self.ell.lambda, "input");
        put("Lambda", self.ell.big_lambda, "input");
        put("N", self.dim as f64, "input");
        put("c1", self.c1, "kappa / (N + 2)");
        put("alpha_easy", self.alpha_easy, "exponent of the single oblique step");
        put("delta_easy", self.easy_params.delta, "1/4 reduced to theta/2");
        put("alpha_chain", self.alpha_chain, "exponent per chain step");
        put("alpha_upright", self.alpha_upright, "exponent per march step");
        put("alpha_doubling", self.alpha_doubling, "exponent per doubling step");
        put("alpha_cover", self.alpha_cover, "exponent of the final steady-state step");
        put("prop_rho", p_env.rho, "2 + 2 |ln upright_step_constant| / ln 2");
        put("prop_beta", p_env.beta, "(1 + kappa)^2 |ln chain_step_constant|");
        put("rho", t_env.rho, "prop_rho + sigma");
        put("beta", t_env.beta, "16 prop_beta / c1^2");
        put("decay_power", t_env.decay_power, "exponent of m in exp(-beta / m^p)");
        put("fs_sigma", self.fs.sigma, if self.fs.empirical { "empirical" } else { "supplied" });
        put("fs_C", self.fs.c_cfs, if self.fs.empirical { "empirical" } else { "supplied" });
        let chain_comparison = [0.2, 0.1, 0.05, 0.01]
            .into_iter()
            .map(|r| {
                let d = (1.0 - r + self.kappa).min(2.0);
                let l = chain_length(d, r);
                let claimed = (5.0 / r).ceil() as u64;
                ChainComparison {
                    r,
                    exact_steps: l,
                    ln_exact_product: self.chain_step_constant.powi(l).ln(),
                    claimed_steps: claimed,
                    ln_claimed_product: self.chain_step_constant.powi(claimed).ln(),
                }
            })
            .collect();
        ConstantsReport { entries, scalars, chain_comparison }
    }
}

const ORIGIN_XY: Coord = [0.0, 0.0];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportEntry {
    pub name: String,
    pub ln: f64,
    pub value: String,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportScalar {
    pub name: String,
    pub value: f64,
    pub note: String,
}

/// Exact chain length against the `5 / r` count at the worst distance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainComparison {
    pub r: f64,
    pub exact_steps: u64,
    pub ln_exact_product: f64,
    pub claimed_steps: u64,
    pub ln_claimed_product: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub entries: Vec<ReportEntry>,
    pub scalars: Vec<ReportScalar>,
    pub chain_comparison: Vec<ChainComparison>,
}

impl ConstantsReport {
    pub fn get(&self, name: &str) -> Option<LogValue> {
        self.entries.iter().find(|e| e.name == name).map(|e| LogValue::from_ln(e.ln))
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|e| e.name == name).map(|e| e.value)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.scalars {
            let _ = writeln!(s, "{} = {:e}  # {}", e.name, e.value, e.note);
        }
        for e in &self.entries {
            let _ = writeln!(s, "{} = {}  # ln = {:e}; {}", e.name, e.value, e.ln, e.note);
        }
        for c in &self.chain_comparison {
            let _ = writeln!(
                s,
                "chain r={:e} exact_steps={} ln_product={:e} claimed_steps={} ln_claimed_product={:e}",
                c.r, c.exact_steps, c.ln_exact_product, c.claimed_steps, c.ln_claimed_product
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn prop_qlbnd_bound(r: f64, kappa: f64, ell: EllipticityPair, dim: usize) -> Result<LogValue> {
    Ok(Pipeline::new(kappa, ell, dim, FSConfig::default())?.prop_qlbnd(r)?.bound)
}

pub fn thm_lb_bound(m: f64, level: f64, kappa: f64, ell: EllipticityPair, dim: usize, fs: FSConfig) -> Result<LogValue> {
    Ok(Pipeline::new(kappa, ell, dim, fs)?.thm_lb(m, level)?.bound)
}

pub fn thm_tsfs_bound(f_norm: f64, kappa: f64, ell: EllipticityPair, dim: usize, fs: FSConfig) -> Result<TsfsBound> {
    Pipeline::new(kappa, ell, dim, fs)?.thm_tsfs(f_norm)
}

pub fn cor_slicklb_bound(f_norm: f64, kappa: f64, ell: EllipticityPair, dim: usize, fs: FSConfig) -> Result<SlickBound> {
    Pipeline::new(kappa, ell, dim, fs)?.cor_slicklb(f_norm)
}

pub fn elliptic_limit_bound(r: f64, kappa: f64, ell: EllipticityPair, dim: usize) -> Result<LogValue> {
    Ok(Pipeline::new(kappa, ell, dim, FSConfig::default())?.elliptic_limit(r)?.bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipe(dim: usize) -> Pipeline {
        Pipeline::new(0.5, EllipticityPair::new(1.0, 1.0).unwrap(), dim, FSConfig::default()).unwrap()
    }

    #[test]
    fn chain_constants_match_hand_values() {
        let p = pipe(1);
        assert!((p.alpha_chain - 70.82625).abs() < 1e-9);
        assert!((p.chain_step_constant.ln() - gamma_final(0.5, 0.25, 70.82625).ln()).abs() < 1e-9);
        assert_eq!(p.easy_params.delta, 0.5 * EASY_THETA);
    }

    #[test]
    fn cylinder_bound_is_positive_and_monotone() {
        let p = pipe(1);
        let mut last = LogValue::ZERO;
        for i in 1..=100 {
            let r = i as f64 / 100.0;
            let b = p.prop_qlbnd(r).unwrap();
            assert!(b.bound.is_positive());
            assert!(b.bound >= last, "r={r}");
            last = b.bound;
        }
        // the wide oblique step is valid here but far weaker than the chain
        assert!(p.easy_applies(1.0));
        assert_eq!(p.prop_qlbnd(1.0).unwrap().case, PropCase::Chain);
        assert!(p.prop_qlbnd(0.0).is_err());
    }

    #[test]
    fn concrete_bound_dominates_worst_case() {
        let p = pipe(1);
        for &(x0, r, y, t) in &[(0.0f64, 0.25f64, 0.3, 0.0), (-0.7, 0.2, 0.5, -0.2f64), (0.4, 0.1, -0.5, -0.3)] {
            let cyl = ParabolicCylinder::new([x0, 0.0], -0.4, r).unwrap();
            let at = p.prop_qlbnd_at(&cyl, [y, 0.0], t.max(-0.4)).unwrap();
            assert!(at.bound >= p.prop_qlbnd(r).unwrap().bound);
        }
    }

    #[test]
    fn envelopes_sit_below_closures() {
        for dim in [1, 2] {
            let p = pipe(dim);
            let env = p.prop_envelope();
            for i in 1..=50 {
                let r = p.chain_radius_cap() * i as f64 / 50.0;
                assert!(env.eval(r) <= p.prop_qlbnd(r).unwrap().bound, "r={r}");
            }
            let tenv = p.thm_envelope();
            for i in 1..=20 {
                let m = i as f64 / 20.0;
                assert!(tenv.eval(m) <= p.thm_lb(m, 1.0).unwrap().bound, "m={m}");
            }
        }
    }

    #[test]
    fn measure_bound_properties() {
        let p = pipe(1);
        assert!(p.thm_lb(0.3, 0.0).unwrap().bound.is_zero());
        assert!(p.thm_lb(1.0, 1.0).unwrap().bound.is_positive());
        let mut last = LogValue::ZERO;
        for i in 1..=10 {
            let b = p.thm_lb(i as f64 / 10.0, 1.0).unwrap().bound;
            assert!(b >= last);
            last = b;
        }
        assert!(p.thm_lb(0.5, 0.25).unwrap().bound < p.thm_lb(0.5, 0.5).unwrap().bound);
    }

    #[test]
    fn tsfs_reduction() {
        let p = pipe(1);
        let t = p.thm_tsfs(0.5).unwrap();
        assert_eq!((t.m, t.level), (0.125, 0.25));
        assert_eq!(t.bound, p.thm_lb(0.125, 0.25).unwrap().bound);
        assert_eq!(t.window, Some((-0.0625, 0.0)));
        let z = p.thm_tsfs(0.0).unwrap();
        assert!(z.bound.is_zero() && z.window.is_none());
        assert!(p.thm_tsfs(1.0).is_err());
        let near_one = p.thm_tsfs(1.0 - 1e-15).unwrap();
        assert!(near_one.alpha_capped);
        let mut last = LogValue::ZERO;
        for i in 1..10 {
            let b = p.thm_tsfs(i as f64 / 10.0).unwrap().bound;
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn slick_is_algebraic_and_beats_tsfs() {
        let p = pipe(1);
        assert!(p.cor_slicklb(0.0).unwrap().bound.is_zero());
        let b = p.cor_slicklb(0.25).unwrap();
        assert!(b.bound.is_positive());
        assert!(b.window.0 > -0.5 && b.window.0 < 0.0);
        for f in [0.01, 0.1, 0.3, 0.6] {
            assert!(p.cor_slicklb(f).unwrap().bound >= p.thm_tsfs(f).unwrap().bound);
        }
        let (a, c) = (p.cor_slicklb(0.01).unwrap(), p.cor_slicklb(0.02).unwrap());
        assert!(((c.bound.ln() - a.bound.ln()) / 2f64.ln() - a.exponent).abs() < 1e-9);
    }

    #[test]
    fn elliptic_iterations() {
        let p = pipe(1);
        assert_eq!(p.elliptic_limit(0.25).unwrap().iterations, 1);
        for k in 1..6 {
            let r = 0.5 / 2f64.powi(k);
            let e = p.elliptic_limit(r).unwrap();
            assert_eq!(e.iterations, (0.5f64 / r).log2().ceil() as u64);
        }
        // pure power law between dyadic radii
        let (a, b, c) = (p.elliptic_limit(0.125).unwrap(), p.elliptic_limit(0.0625).unwrap(), p.elliptic_limit(0.03125).unwrap());
        let s1 = b.bound.ln() - a.bound.ln();
        let s2 = c.bound.ln() - b.bound.ln();
        assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn report_is_deterministic() {
        let a = pipe(2).report();
        let b = pipe(2).report();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.entries.iter().all(|e| e.ln.is_finite()));
    }
}
