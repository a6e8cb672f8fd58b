//! Pucci extremal operators in one and two space dimensions.
//!
//! Eigenvalues are computed in closed form; nothing here iterates.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Roundoff slack for the inequality checks in this module.
pub const ALGEBRA_SLACK: f64 = 1e-12;

/// Default number of frames for the discretization-ready operators.
pub const DEFAULT_FRAMES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityPair {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

impl EllipticityPair {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(Error::Ellipticity(format!("need 0 < lambda <= Lambda, got ({lambda}, {big_lambda})")));
        }
        Ok(EllipticityPair { lambda, big_lambda })
    }

    /// Weight applied to a directional second derivative `s` by `M^-`.
    #[inline]
    pub fn minus_weight(&self, s: f64) -> f64 {
        if s > 0.0 {
            self.lambda * s
        } else {
            self.big_lambda * s
        }
    }

    #[inline]
    pub fn plus_weight(&self, s: f64) -> f64 {
        if s > 0.0 {
            self.big_lambda * s
        } else {
            self.lambda * s
        }
    }
}

impl Default for EllipticityPair {
    fn default() -> Self {
        EllipticityPair { lambda: 0.5, big_lambda: 1.0 }
    }
}

/// Symmetric matrix of size 1 or 2, stored as `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    a: f64,
    b: f64,
    c: f64,
}

impl SymMatrix {
    pub fn scalar(a: f64) -> Self {
        SymMatrix { dim: 1, a, b: 0.0, c: 0.0 }
    }

    pub fn two(a: f64, b: f64, c: f64) -> Self {
        SymMatrix { dim: 2, a, b, c }
    }

    pub fn zero(dim: usize) -> Self {
        SymMatrix { dim, a: 0.0, b: 0.0, c: 0.0 }
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix { dim, a: 1.0, b: 0.0, c: if dim == 2 { 1.0 } else { 0.0 } }
    }

    pub fn diag(d: &[f64]) -> Self {
        match d {
            [a] => Self::scalar(*a),
            [a, c] => Self::two(*a, 0.0, *c),
            _ => panic!("diag expects 1 or 2 entries"),
        }
    }

    /// Builds `R diag(d) R^T` with `R` the rotation by `angle` (2x2 only).
    pub fn rotated_diag(d0: f64, d1: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        SymMatrix::two(d0 * c * c + d1 * s * s, (d0 - d1) * c * s, d0 * s * s + d1 * c * c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn quad(&self, v: [f64; 2]) -> f64 {
        self.a * v[0] * v[0] + 2.0 * self.b * v[0] * v[1] + self.c * v[1] * v[1]
    }

    /// `tr(A B)` for two symmetric matrices of equal size.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.a * other.a + 2.0 * self.b * other.b + self.c * other.c
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix { dim: self.dim, a: s * self.a, b: s * self.b, c: s * self.c }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        SymMatrix { dim: self.dim, a: self.a + other.a, b: self.b + other.b, c: self.c + other.c }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.a];
        }
        let mean = 0.5 * (self.a + self.c);
        let rad = (0.5 * (self.a - self.c)).hypot(self.b);
        vec![mean - rad, mean + rad]
    }

    /// `||K||`, the largest eigenvalue.
    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

pub fn eigenvalues(m: &SymMatrix) -> Vec<f64> {
    m.eigenvalues()
}

/// `M^-(M) = lambda * sum(e_i > 0) + Lambda * sum(e_i < 0)`.
pub fn pucci_minus(m: &SymMatrix, ell: &EllipticityPair) -> f64 {
    m.eigenvalues().into_iter().map(|e| ell.minus_weight(e)).sum()
}

/// `M^+(M) = Lambda * sum(e_i > 0) + lambda * sum(e_i < 0)`.
pub fn pucci_plus(m: &SymMatrix, ell: &EllipticityPair) -> f64 {
    m.eigenvalues().into_iter().map(|e| ell.plus_weight(e)).sum()
}

/// Orthonormal frames at uniformly spaced angles in `[0, pi/2)`.
pub fn frame_angles(frames: usize) -> Vec<f64> {
    let k = frames.max(1);
    (0..k).map(|j| j as f64 * std::f64::consts::FRAC_PI_2 / k as f64).collect()
}

pub fn frame_vectors(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, s], [-s, c]]
}

/// Minimum over `frames` orthonormal frames of
/// `sum_i lambda (v_i^T M v_i)^+ - Lambda (v_i^T M v_i)^-`.
pub fn frame_min(m: &SymMatrix, ell: &EllipticityPair, frames: usize) -> f64 {
    if m.dim == 1 {
        return ell.minus_weight(m.a);
    }
    frame_angles(frames)
        .into_iter()
        .map(|angle| {
            let [v1, v2] = frame_vectors(angle);
            ell.minus_weight(m.quad(v1)) + ell.minus_weight(m.quad(v2))
        })
        .fold(f64::INFINITY, f64::min)
}

/// The maximizing counterpart of [`frame_min`], consistent with `M^+`.
pub fn frame_max(m: &SymMatrix, ell: &EllipticityPair, frames: usize) -> f64 {
    if m.dim == 1 {
        return ell.plus_weight(m.a);
    }
    frame_angles(frames)
        .into_iter()
        .map(|angle| {
            let [v1, v2] = frame_vectors(angle);
            ell.plus_weight(m.quad(v1)) + ell.plus_weight(m.quad(v2))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Checks `lambda ||K|| <= M^±(M + K) - M^±(M) <= N Lambda ||K||` for both
/// operators.
pub fn sandwich_check(m: &SymMatrix, k: &SymMatrix, ell: &EllipticityPair) -> Result<bool> {
    let min_eig = k.min_eigenvalue();
    if min_eig < -ALGEBRA_SLACK {
        return Err(Error::NotPsd(min_eig));
    }
    let norm_k = k.max_eigenvalue().max(0.0);
    let lo = ell.lambda * norm_k;
    let hi = m.dim as f64 * ell.big_lambda * norm_k;
    let mk = m.add(k);
    let diffs = [pucci_minus(&mk, ell) - pucci_minus(m, ell), pucci_plus(&mk, ell) - pucci_plus(m, ell)];
    Ok(diffs.iter().all(|&d| d >= lo - ALGEBRA_SLACK && d <= hi + ALGEBRA_SLACK))
}

pub fn check_admissible(a: &SymMatrix, ell: &EllipticityPair) -> Result<()> {
    let ev = a.eigenvalues();
    let (lo, hi) = (ev[0], *ev.last().unwrap());
    if lo < ell.lambda - ALGEBRA_SLACK || hi > ell.big_lambda + ALGEBRA_SLACK {
        return Err(Error::Ellipticity(format!("coefficient eigenvalues [{lo}, {hi}] outside [{}, {}]", ell.lambda, ell.big_lambda)));
    }
    Ok(())
}

/// `tr(A M) >= M^-(M)` for an admissible coefficient matrix `A`.
pub fn linear_dominates(a: &SymMatrix, m: &SymMatrix, ell: &EllipticityPair) -> Result<bool> {
    check_admissible(a, ell)?;
    Ok(a.trace_product(m) >= pucci_minus(m, ell) - ALGEBRA_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, dim: usize) -> SymMatrix {
        if dim == 1 {
            SymMatrix::scalar(rng.gen_range(-3.0..3.0))
        } else {
            SymMatrix::two(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))
        }
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(SymMatrix::scalar(0.0).eigenvalues(), vec![0.0]);
        assert_eq!(SymMatrix::two(0.0, 1.0, 0.0).eigenvalues(), vec![-1.0, 1.0]);
        assert_eq!(SymMatrix::two(2.0, 1.0, 2.0).eigenvalues(), vec![1.0, 3.0]);
    }

    #[test]
    fn pucci_examples() {
        let ell = EllipticityPair::new(1.0, 2.0).unwrap();
        assert_eq!(pucci_minus(&SymMatrix::zero(2), &ell), 0.0);
        assert_eq!(pucci_plus(&SymMatrix::zero(2), &ell), 0.0);
        assert_eq!(pucci_minus(&SymMatrix::diag(&[1.0, -1.0]), &ell), -1.0);
        assert_eq!(pucci_plus(&SymMatrix::diag(&[1.0, -1.0]), &ell), 1.0);
        let half = EllipticityPair::new(0.5, 1.0).unwrap();
        assert_eq!(pucci_minus(&SymMatrix::identity(2), &half), 1.0);
    }

    #[test]
    fn ellipticity_pair_rejects_bad_order() {
        assert!(EllipticityPair::new(2.0, 1.0).is_err());
        assert!(EllipticityPair::new(0.0, 1.0).is_err());
    }

    #[test]
    fn frames_attain_and_bound_pucci() {
        let ell = EllipticityPair::new(1.0, 2.0).unwrap();
        let diag = SymMatrix::diag(&[3.0, -2.0]);
        assert_eq!(frame_min(&diag, &ell, 4), pucci_minus(&diag, &ell));
        assert_eq!(frame_min(&SymMatrix::zero(2), &ell, 7), 0.0);
        let m = SymMatrix::two(2.0, 1.0, 2.0);
        assert!((frame_min(&m, &ell, 64) - 4.0).abs() < 5e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = random_sym(&mut rng, 2);
            let exact = pucci_minus(&m, &ell);
            let mut prev = f64::INFINITY;
            for k in [2, 4, 8, 16, 32, 64] {
                let v = frame_min(&m, &ell, k);
                assert!(v >= exact - 1e-12);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
            assert!(frame_max(&m, &ell, 32) <= pucci_plus(&m, &ell) + 1e-12);
        }
    }

    #[test]
    fn frame_gap_decays_quadratically() {
        let ell = EllipticityPair::new(1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let set: Vec<_> = (0..50).map(|_| random_sym(&mut rng, 2)).collect();
        let gap = |k| set.iter().map(|m| frame_min(m, &ell, k) - pucci_minus(m, &ell)).fold(0.0, f64::max);
        let (g16, g64) = (gap(16), gap(64));
        // quadratic decay predicts a factor 16
        assert!(g64 <= g16 / 8.0, "{g16} {g64}");
    }

    #[test]
    fn duality_and_homogeneity() {
        let ell = EllipticityPair::new(0.7, 1.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [1, 2] {
            for _ in 0..100 {
                let m = random_sym(&mut rng, dim);
                assert!((pucci_plus(&m, &ell) + pucci_minus(&m.scale(-1.0), &ell)).abs() < 1e-14);
                let s = rng.gen_range(0.0..5.0);
                assert!((pucci_minus(&m.scale(s), &ell) - s * pucci_minus(&m, &ell)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monotone_in_matrix_order() {
        let ell = EllipticityPair::new(0.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let m = random_sym(&mut rng, 2);
            let p = SymMatrix::rotated_diag(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..3.0));
            assert!(pucci_minus(&m, &ell) <= pucci_minus(&m.add(&p), &ell) + 1e-12);
        }
    }

    #[test]
    fn sandwich_examples() {
        let ell = EllipticityPair::new(1.0, 2.0).unwrap();
        let m = SymMatrix::two(0.3, -0.2, 1.0);
        assert!(sandwich_check(&m, &SymMatrix::zero(2), &ell).unwrap());
        assert!(sandwich_check(&SymMatrix::zero(2), &SymMatrix::identity(2), &ell).unwrap());
        assert!(matches!(sandwich_check(&m, &SymMatrix::diag(&[1.0, -1.0]), &ell), Err(Error::NotPsd(_))));
    }

    #[test]
    fn linear_domination_examples() {
        let ell = EllipticityPair::new(0.5, 2.0).unwrap();
        let psd = SymMatrix::two(2.0, 0.5, 1.0);
        assert!(linear_dominates(&SymMatrix::identity(2).scale(0.5), &psd, &ell).unwrap());
        assert!(linear_dominates(&SymMatrix::identity(2).scale(2.0), &psd.scale(-1.0), &ell).unwrap());
        assert!(linear_dominates(&SymMatrix::identity(2).scale(3.0), &psd, &ell).is_err());
    }
}
