//! Leading-order fields of a thin rod.
//!
//! For thickness `δ → 0` the perturbation `u − H` outside the rod is carried
//! by the axis segment `Γ₀ = (−L/2, L/2) × {0}` and by two point charges at
//! the cap centres, all scaled by the strength `c = δ (λ − ½)⁻¹`. Everything
//! here is evaluated in the rod's local frame and mapped back to the world
//! frame, so the formulas read exactly as for an axis-aligned rod centred at
//! the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RodSpec, Vec2};
use crate::potentials::{Flagged, HarmonicBackground};
use crate::quadrature::{focused_breakpoints, CompositeGauss};
use crate::solver::{lambda_of_sigma, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticError {
    #[error("point ({0}, {1}) coincides with a cap centre")]
    SingularPoint(f64, f64),
    #[error("the closed-form field needs a uniform background gradient")]
    NotLinear,
    #[error("L = 0 has no axis segment; use the disc solution instead")]
    Degenerate,
    #[error(transparent)]
    Contrast(#[from] SolverError),
}

/// Cap centres of an axis-aligned rod of length `L` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapPoints {
    pub p: Vec2,
    pub q: Vec2,
}

impl CapPoints {
    pub fn new(length: f64) -> Self {
        Self {
            p: Vec2::new(-0.5 * length, 0.0),
            q: Vec2::new(0.5 * length, 0.0),
        }
    }
}

fn check_regular(x: Vec2, length: f64) -> Result<(f64, f64), AsymptoticError> {
    let caps = CapPoints::new(length);
    let rq = (x - caps.q).norm_squared();
    let rp = (x - caps.p).norm_squared();
    if rq == 0.0 || rp == 0.0 || !rq.is_finite() || !rp.is_finite() {
        return Err(AsymptoticError::SingularPoint(x.x, x.y));
    }
    Ok((rp, rq))
}

/// Localization functions `(f₁, f₂)` at a local-frame point.
pub fn f1_f2(x: Vec2, length: f64) -> Result<(f64, f64), AsymptoticError> {
    let (rp, rq) = check_regular(x, length)?;
    let h = 0.5 * length;
    let f1 = x.y / rq - x.y / rp;
    let f2 = (x.x - h) / rq - (x.x + h) / rp;
    Ok((f1, f2))
}

/// `f₁² + f₂²` written through the distances to `P` and `Q` and the angle
/// they subtend at `x`.
pub fn localization_geometric(x: Vec2, length: f64) -> Result<f64, AsymptoticError> {
    check_regular(x, length)?;
    let caps = CapPoints::new(length);
    let dp = x - caps.p;
    let dq = x - caps.q;
    let (np, nq) = (dp.norm(), dq.norm());
    let cos = dp.dot(&dq) / (np * nq);
    Ok((1.0 / nq - 1.0 / np).powi(2) + 2.0 / (np * nq) * (1.0 - cos))
}

/// Leading-order model of a placed rod.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticModel {
    pub length: f64,
    /// `c = δ (λ − ½)⁻¹`, the only combination of thickness and contrast the
    /// leading-order field sees.
    pub strength: f64,
    pub center: [f64; 2],
    pub angle: f64,
    pub background: HarmonicBackground,
    /// Strength of the terms driven by the normal derivative `∂₂H` on the
    /// axis, relative to `strength`. The leading-order formula as usually
    /// stated uses 1; matching the transverse polarization of a thin layer
    /// requires `−1/σ₀` (see [`transverse_ratio`]).
    #[serde(default = "unit_ratio")]
    pub transverse: f64,
}

fn unit_ratio() -> f64 {
    1.0
}

/// Transverse-to-axial strength ratio `−(λ − ½)/(λ + ½) = −1/σ₀` of a thin
/// layer of conductivity `σ₀`.
pub fn transverse_ratio(sigma0: f64) -> f64 {
    -1.0 / sigma0
}

impl AsymptoticModel {
    pub fn new(spec: &RodSpec, background: HarmonicBackground) -> Result<Self, AsymptoticError> {
        let lambda = lambda_of_sigma(spec.sigma0)?;
        Self::from_thickness(spec.length, spec.delta, lambda, spec.center, spec.angle, background)
    }

    pub fn from_thickness(
        length: f64,
        delta: f64,
        lambda: f64,
        center: [f64; 2],
        angle: f64,
        background: HarmonicBackground,
    ) -> Result<Self, AsymptoticError> {
        if length <= 0.0 {
            return Err(AsymptoticError::Degenerate);
        }
        Ok(Self {
            length,
            strength: delta / (lambda - 0.5),
            center,
            angle,
            background,
            transverse: 1.0,
        })
    }

    pub fn with_transverse(mut self, ratio: f64) -> Self {
        self.transverse = ratio;
        self
    }

    fn frame(&self) -> RodSpec {
        RodSpec {
            length: self.length,
            delta: 0.0,
            center: self.center,
            angle: self.angle,
            sigma0: 2.0,
        }
    }

    pub fn to_local(&self, x: Vec2) -> Vec2 {
        self.frame().to_local(x)
    }

    pub fn cap_centers(&self) -> (Vec2, Vec2) {
        self.frame().cap_centers()
    }

    /// Background gradient expressed in the local frame.
    fn local_gradient(&self) -> Result<Vec2, AsymptoticError> {
        let a = self.background.uniform_gradient().ok_or(AsymptoticError::NotLinear)?;
        Ok(self.frame().unrotate(a))
    }

    /// Perturbation `u − H` for a uniform background.
    ///
    /// On the axis segment itself (`x₂ = 0`, `|x₁| < L/2`) the arctan pair is
    /// taken as its one-sided limit from the side given by the sign of `x₂`,
    /// `+0.0` being the upper side.
    pub fn perturbation_linear(&self, x: Vec2) -> Result<f64, AsymptoticError> {
        let a = self.local_gradient()?;
        let xi = self.to_local(x);
        let (rp, rq) = check_regular(xi, self.length)?;
        let h = 0.5 * self.length;
        let arctans = if a.y != 0.0 {
            ((h - xi.x) / xi.y).atan() + ((h + xi.x) / xi.y).atan()
        } else {
            0.0
        };
        Ok(self.transverse * self.strength / PI * a.y * arctans + self.strength / (2.0 * PI) * a.x * (rq / rp).ln())
    }

    pub fn u_linear(&self, x: Vec2) -> Result<f64, AsymptoticError> {
        Ok(self.background.value(x) + self.perturbation_linear(x)?)
    }

    /// Leading-order perturbed gradient `Eˢ` in world coordinates.
    pub fn perturbed_gradient(&self, x: Vec2) -> Result<Vec2, AsymptoticError> {
        let a = self.local_gradient()?;
        let (f1, f2) = f1_f2(self.to_local(x), self.length)?;
        let t = self.transverse;
        let local = self.strength / PI * Vec2::new(f2 * a.x - t * f1 * a.y, f1 * a.x + t * f2 * a.y);
        Ok(self.frame().rotate(local))
    }

    pub fn grad_linear(&self, x: Vec2) -> Result<Vec2, AsymptoticError> {
        Ok(self.background.gradient(x) + self.perturbed_gradient(x)?)
    }

    /// `|Eˢ|² = c² π⁻² |a|² (f₁² + f₂²)` for unit transverse ratio; the
    /// squared norm of [`Self::perturbed_gradient`] otherwise.
    pub fn perturbed_gradient_sq(&self, x: Vec2) -> Result<f64, AsymptoticError> {
        if self.transverse != 1.0 {
            return Ok(self.perturbed_gradient(x)?.norm_squared());
        }
        let a = self.local_gradient()?;
        let (f1, f2) = f1_f2(self.to_local(x), self.length)?;
        Ok((self.strength / PI).powi(2) * a.norm_squared() * (f1 * f1 + f2 * f2))
    }

    /// Leading-order `u` for any harmonic background of degree ≤ 2, with the
    /// axis integrals done by composite Gauss–Legendre of order `n_quad`.
    ///
    /// The value is flagged when `|x₂| < L / n_quad` in the local frame.
    pub fn u_general(&self, x: Vec2, n_quad: usize) -> Result<Flagged<f64>, AsymptoticError> {
        let xi = self.to_local(x);
        let (rp, rq) = check_regular(xi, self.length)?;
        let h = 0.5 * self.length;
        let local_bg = self.background.in_frame(self.frame().center(), self.angle);
        let d2 = |y: f64| local_bg.gradient(Vec2::new(y, 0.0)).y;
        let d22 = |y: f64| local_bg.hessian(Vec2::new(y, 0.0))[(1, 1)];
        let d1_at_q = local_bg.gradient(Vec2::new(h, 0.0)).x;

        let focus = xi.x.clamp(-h, h);
        let width = ((xi.x - focus).powi(2) + xi.y * xi.y).sqrt();
        let breaks = focused_breakpoints(-h, h, focus, width, 4);
        let rule = CompositeGauss::new(n_quad.max(1));
        let x2sq = xi.y * xi.y;

        let log_term = rule.integrate(&breaks, |y| {
            let s = d22(y);
            if s == 0.0 {
                0.0
            } else {
                (((xi.x - y).powi(2) + x2sq) / rp).ln() * s
            }
        });
        let poisson_term = if xi.y == 0.0 {
            0.0
        } else {
            rule.integrate(&breaks, |y| xi.y / ((xi.x - y).powi(2) + x2sq) * d2(y))
        };
        let cap_term = (rq / rp).ln() * d1_at_q;

        let c = self.strength;
        let value = self.background.value(x)
            + c / (2.0 * PI) * log_term
            + self.transverse * c / PI * poisson_term
            + c / (2.0 * PI) * cap_term;
        Ok(Flagged {
            value,
            near_boundary: xi.y.abs() < self.length / n_quad.max(1) as f64,
        })
    }
}

/// `A_δ[ψ](x₁) = (1/π) ∫ δ / ((x₁ − y)² + 4δ²) ψ(y) dy` over `(−L/2, L/2)`.
pub fn a_delta_apply<F: Fn(f64) -> f64>(psi: F, delta: f64, length: f64, x1: f64, n_quad: usize) -> f64 {
    let h = 0.5 * length;
    let breaks = focused_breakpoints(-h, h, x1, 2.0 * delta, 0);
    let rule = CompositeGauss::new(n_quad.max(1));
    rule.integrate(&breaks, |y| delta / ((x1 - y).powi(2) + 4.0 * delta * delta) * psi(y)) / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(a: [f64; 2]) -> AsymptoticModel {
        AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.0, 0.0], 0.0, HarmonicBackground::Linear(a)).unwrap()
    }

    #[test]
    fn f_on_bisector() {
        let (l, h) = (2.0, 0.7);
        let (f1, f2) = f1_f2(Vec2::new(0.0, h), l).unwrap();
        assert_eq!(f1, 0.0);
        assert_relative_eq!(f2, -l / (0.25 * l * l + h * h), epsilon = 1e-15);
    }

    #[test]
    fn f_beyond_cap() {
        let (l, d) = (2.0, 0.01);
        let (f1, f2) = f1_f2(Vec2::new(1.0 + d, 0.0), l).unwrap();
        assert_eq!(f1, 0.0);
        assert_relative_eq!(f2, 1.0 / d - 1.0 / (l + d), max_relative = 1e-14);
        let v = d * d * (f1 * f1 + f2 * f2);
        assert!((0.9..=1.0).contains(&v));
    }

    #[test]
    fn singular_at_caps() {
        assert!(matches!(
            f1_f2(Vec2::new(1.0, 0.0), 2.0),
            Err(AsymptoticError::SingularPoint(..))
        ));
        assert!(matches!(
            model([1.0, 0.0]).u_linear(Vec2::new(-1.0, 0.0)),
            Err(AsymptoticError::SingularPoint(..))
        ));
    }

    #[test]
    fn cap_blow_up_tends_to_one() {
        for alpha in [-1.2, -0.4, 0.0, 0.6, 1.3] {
            let mut prev = f64::INFINITY;
            for d in [0.1, 0.01, 0.001] {
                let x = Vec2::new(1.0, 0.0) + d * Vec2::new(f64::cos(alpha), f64::sin(alpha));
                let (f1, f2) = f1_f2(x, 2.0).unwrap();
                let gap = (d * d * (f1 * f1 + f2 * f2) - 1.0).abs();
                assert!(gap < prev);
                assert!(gap <= 5.0 * d / 2.0);
                prev = gap;
            }
        }
    }

    #[test]
    fn midsection_bounded() {
        for l in [1.0, 2.0, 10.0] {
            for h in [0.01, 0.1, 1.0, 5.0] {
                let (f1, f2) = f1_f2(Vec2::new(0.0, h), l).unwrap();
                assert!(f1 * f1 + f2 * f2 <= 64.0 / (l * l));
            }
        }
    }

    #[test]
    fn u_linear_on_axis_beyond_rod() {
        let m = model([1.0, 0.0]);
        let u = m.u_linear(Vec2::new(2.0, 0.0)).unwrap();
        assert_relative_eq!(u, 2.0 + 0.05 / (2.0 * PI) * (1.0f64 / 9.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(u, 2.0 - 0.017_486, epsilon = 2e-6);
        // a₂ part vanishes by symmetry there
        let m = model([0.0, 1.0]);
        assert_eq!(m.perturbation_linear(Vec2::new(2.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn axis_branch_follows_sign_of_zero() {
        let m = model([0.0, 1.0]);
        let up = m.perturbation_linear(Vec2::new(0.3, 0.0)).unwrap();
        let down = m.perturbation_linear(Vec2::new(0.3, -0.0)).unwrap();
        assert_relative_eq!(up, 0.05, epsilon = 1e-15);
        assert_relative_eq!(down, -0.05, epsilon = 1e-15);
    }

    #[test]
    fn perturbation_vanishes_far_on_bisector() {
        let m = model([0.0, 1.0]);
        let v: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|r| m.perturbation_linear(Vec2::new(0.0, *r)).unwrap().abs())
            .collect();
        assert!(v[0] > v[1] && v[1] > v[2] && v[2] < 1e-7);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m =
            AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.3, -0.2], 0.4, HarmonicBackground::linear(0.7, -1.1))
                .unwrap();
        let mut s = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let spec = RodSpec::centered(2.0, 0.05, 2.0).with_placement([0.3, -0.2], 0.4);
        let mut n = 0;
        while n < 50 {
            let x = Vec2::new(-3.0 + 6.0 * next(), -3.0 + 6.0 * next());
            if spec.distance(x) < 0.1 {
                continue;
            }
            n += 1;
            let h = 1e-6;
            let fd = Vec2::new(
                m.u_linear(x + Vec2::new(h, 0.0)).unwrap() - m.u_linear(x - Vec2::new(h, 0.0)).unwrap(),
                m.u_linear(x + Vec2::new(0.0, h)).unwrap() - m.u_linear(x - Vec2::new(0.0, h)).unwrap(),
            ) / (2.0 * h);
            let g = m.grad_linear(x).unwrap();
            assert!((fd - g).norm() <= 1e-6 * g.norm(), "{fd} vs {g}");
        }
    }

    #[test]
    fn general_reduces_to_linear() {
        let bg = HarmonicBackground::linear(0.6, -0.8);
        let m = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.1, 0.2], 0.7, bg).unwrap();
        for (x1, x2) in [(0.0, 0.1), (0.5, -0.3), (1.5, 0.1), (-2.0, 2.0), (0.99, 0.1)] {
            let x = m.frame().to_world(Vec2::new(x1, x2));
            let g = m.u_general(x, 16).unwrap();
            let l = m.u_linear(x).unwrap();
            assert!((g.value - l).abs() <= 1e-8, "{} vs {}", g.value, l);
        }
    }

    #[test]
    fn general_self_convergence() {
        let bg = HarmonicBackground::Quadratic([0.0, 0.0, 0.0, 0.0, 1.0]);
        let m = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.0, 0.0], 0.0, bg).unwrap();
        for x in [Vec2::new(0.2, 0.3), Vec2::new(1.3, -0.2), Vec2::new(-0.5, 1.5)] {
            let lo = m.u_general(x, 16).unwrap();
            let hi = m.u_general(x, 256).unwrap();
            assert!(!lo.near_boundary);
            assert!((lo.value - hi.value).abs() <= 1e-8);
        }
        // the flag marks points close to the axis relative to the rule order
        assert!(m.u_general(Vec2::new(0.0, 0.1), 16).unwrap().near_boundary);
    }

    #[test]
    fn general_quadratic_against_closed_form() {
        // H = x₁² − x₂²: ∂²_{y₂}H = −2, ∂_{y₂}H(y, 0) = 0, ∂₁H(L/2, 0) = L
        let bg = HarmonicBackground::Quadratic([0.0, 0.0, 0.0, 1.0, 0.0]);
        let m = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.0, 0.0], 0.0, bg).unwrap();
        let x = Vec2::new(0.4, 0.5);
        let anti = |y: f64| {
            // ∫ ln((x₁ − y)² + x₂²) dy
            let t = y - x.x;
            t * (t * t + x.y * x.y).ln() - 2.0 * t + 2.0 * x.y * (t / x.y).atan()
        };
        let rp = (x.x + 1.0).powi(2) + x.y * x.y;
        let rq = (x.x - 1.0).powi(2) + x.y * x.y;
        let log_int = anti(1.0) - anti(-1.0) - 2.0 * rp.ln();
        let c = 0.05;
        let want = x.x * x.x - x.y * x.y + c / (2.0 * PI) * (-2.0 * log_int) + c / (2.0 * PI) * (rq / rp).ln() * 2.0;
        assert_relative_eq!(m.u_general(x, 16).unwrap().value, want, epsilon = 1e-12);
    }

    #[test]
    fn general_odd_symmetry_on_axis() {
        let bg = HarmonicBackground::Quadratic([0.0, 0.0, 1.0, 0.0, 0.0]);
        let m = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.0, 0.0], 0.0, bg).unwrap();
        assert_eq!(m.u_general(Vec2::new(1.7, 0.0), 16).unwrap().value, 0.0);
    }

    #[test]
    fn a_delta_constant() {
        let v = a_delta_apply(|_| 1.0, 0.01, 2.0, 0.0, 16);
        assert_relative_eq!(v, 50.0f64.atan() / PI, epsilon = 1e-13);
        assert_relative_eq!(v, 0.49363, epsilon = 1e-5);
    }

    #[test]
    fn a_delta_quadratic_moment() {
        let v = a_delta_apply(|y| y * y, 1e-3, 2.0, 0.5, 16);
        assert!((v - 0.125).abs() <= 0.05);
    }

    #[test]
    fn a_delta_moment_convergence() {
        for n in 0..4 {
            for x1 in [-0.5, 0.0, 0.5] {
                let err: Vec<f64> = [1e-2, 1e-3, 1e-4]
                    .iter()
                    .map(|d| (a_delta_apply(|y: f64| y.powi(n), *d, 2.0, x1, 16) - 0.5 * f64::powi(x1, n)).abs())
                    .collect();
                assert!(err[1] < err[0] || err[0] < 1e-12, "n={n} x1={x1} {err:?}");
                assert!(err[2] < err[1] || err[1] < 1e-12, "n={n} x1={x1} {err:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn localization_identity(x in -5.0f64..5.0, y in -5.0f64..5.0, l in 0.1f64..10.0) {
            let p = Vec2::new(x, y);
            let (f1, f2) = f1_f2(p, l).unwrap();
            let direct = f1 * f1 + f2 * f2;
            let geo = localization_geometric(p, l).unwrap();
            prop_assert!((direct - geo).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn frame_covariance(angle in 0.0f64..std::f64::consts::TAU, cx in -2.0f64..2.0, cy in -2.0f64..2.0,
                            x in -3.0f64..3.0, y in 0.2f64..3.0) {
            let a = Vec2::new(0.8, -0.3);
            let base = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.0, 0.0], 0.0,
                HarmonicBackground::linear(a.x, a.y)).unwrap();
            let frame = RodSpec::centered(2.0, 0.05, 2.0).with_placement([cx, cy], angle);
            let ra = frame.rotate(a);
            let moved = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [cx, cy], angle,
                HarmonicBackground::linear(ra.x, ra.y)).unwrap();
            let xl = Vec2::new(x, y);
            let xw = frame.to_world(xl);
            prop_assert!((base.perturbation_linear(xl).unwrap() - moved.perturbation_linear(xw).unwrap()).abs() <= 1e-10);
            let g0 = frame.rotate(base.perturbed_gradient(xl).unwrap());
            prop_assert!((g0 - moved.perturbed_gradient(xw).unwrap()).norm() <= 1e-9);
        }

        #[test]
        fn es_norm_independent_of_direction(psi in 0.0f64..std::f64::consts::TAU, x in -3.0f64..3.0, y in 0.2f64..3.0) {
            let p = Vec2::new(x, y);
            let m0 = model([1.0, 0.0]);
            let m1 = model([psi.cos(), psi.sin()]);
            let e0 = m0.perturbed_gradient(p).unwrap().norm_squared();
            let e1 = m1.perturbed_gradient(p).unwrap().norm_squared();
            prop_assert!((e0 - e1).abs() <= 1e-12 * e0.max(1e-300));
            prop_assert!((m1.perturbed_gradient_sq(p).unwrap() - e1).abs() <= 1e-12 * e1.max(1e-300));
        }
    }

    #[test]
    fn strength_is_the_only_material_parameter() {
        let bg = HarmonicBackground::linear(1.0, 1.0);
        // δ/(λ − ½) = 0.05 for both
        let a = AsymptoticModel::from_thickness(2.0, 0.05, 1.5, [0.0, 0.0], 0.3, bg).unwrap();
        let b = AsymptoticModel::from_thickness(2.0, 0.025, 1.0, [0.0, 0.0], 0.3, bg).unwrap();
        for x in [Vec2::new(0.1, 0.5), Vec2::new(3.0, -1.0)] {
            assert!((a.u_linear(x).unwrap() - b.u_linear(x).unwrap()).abs() <= 1e-12);
        }
    }
}
