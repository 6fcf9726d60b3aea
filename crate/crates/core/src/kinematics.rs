//! Binary collision laws for inelastic hard spheres and the Povzner constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RadialProfile;
use crate::quadrature::{adaptive, AdaptiveOptions, GaussLegendre, SphereRule};
use crate::velocity::Velocity;

/// Tolerance on `|σ| = 1` accepted by the collision transforms.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// A restitution coefficient in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Restitution(f64);

impl Restitution {
    pub const ELASTIC: Restitution = Restitution(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Restitution(value))
        } else {
            Err(Error::input(format!("restitution coefficient {value} outside (0, 1]")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Fraction `(1 + α)/4` of `|q|σ − q` transferred to each partner.
    #[inline]
    pub fn transfer(self) -> f64 {
        0.25 * (1.0 + self.0)
    }
}

impl TryFrom<f64> for Restitution {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Restitution::new(v)
    }
}

impl From<Restitution> for f64 {
    fn from(r: Restitution) -> f64 {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionOutcome {
    pub v_post: Velocity,
    pub w_post: Velocity,
    /// `|v'|² + |w'|² − |v|² − |w|²`, never positive.
    pub energy_change: f64,
}

/// Momentum exchange `(1+α)/4 (|q|σ − q)` for `q = v − w`; added to `v`, subtracted from `w`.
#[inline]
pub(crate) fn exchange(v: Velocity, w: Velocity, sigma: Velocity, coeff: Restitution) -> Velocity {
    let q = v - w;
    (sigma * q.norm() - q) * coeff.transfer()
}

fn check_unit(sigma: Velocity) -> Result<()> {
    if !sigma.is_finite() || (sigma.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::input(format!("σ = {:?} is not a unit vector", sigma.0)));
    }
    Ok(())
}

/// Post-collisional velocities of an inelastic hard-sphere pair.
pub fn post_collision(v: Velocity, w: Velocity, sigma: Velocity, alpha: Restitution) -> Result<CollisionOutcome> {
    check_unit(sigma)?;
    let dv = exchange(v, w, sigma, alpha);
    let v_post = v + dv;
    let w_post = w - dv;
    Ok(CollisionOutcome {
        v_post,
        w_post,
        energy_change: v_post.norm_sq() + w_post.norm_sq() - v.norm_sq() - w.norm_sq(),
    })
}

/// Closed form of the energy change: `−(1−α²)/4 · |q|² (1 − σ·q̂)`.
pub fn energy_loss_closed_form(v: Velocity, w: Velocity, sigma: Velocity, alpha: Restitution) -> f64 {
    let q = v - w;
    let a = alpha.get();
    let q2 = q.norm_sq();
    if q2 == 0.0 {
        return 0.0;
    }
    -(1.0 - a * a) / 4.0 * (q2 - q.norm() * sigma.dot(&q))
}

/// Post-collisional velocity of a gas particle after hitting a bath particle; the bath
/// partner's outgoing velocity is discarded.
pub fn bath_post_collision(v: Velocity, w: Velocity, sigma: Velocity, e: Restitution) -> Result<Velocity> {
    check_unit(sigma)?;
    Ok(v + exchange(v, w, sigma, e))
}

/// Povzner weight `g_α(x)`.
pub fn g_alpha(x: f64, alpha: Restitution) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::input(format!("g_alpha argument {x} outside [-1, 1]")));
    }
    Ok(g_alpha_raw(x, alpha.get()))
}

#[inline]
fn g_alpha_raw(x: f64, a: f64) -> f64 {
    let b = 1.0 - a;
    let root = (b * b * x * x + 4.0 * a).sqrt();
    let num = b * x + root;
    num * num / ((1.0 + a) * root)
}

/// Even part `h_α(x) = (g_α(x) + g_α(−x)) / 2`.
pub fn h_alpha(x: f64, alpha: Restitution) -> Result<f64> {
    Ok(0.5 * (g_alpha(x, alpha)? + g_alpha(-x, alpha)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PovznerCoeffs {
    pub alpha: f64,
    pub p: f64,
    /// `γ_{α,p} = ∫_{-1}^{1} ((1+x)/2)^p h_α(x) dx`.
    pub gamma_alpha_p: f64,
    /// `γ_p = min(1, 4/(p+1))`.
    pub gamma_p: f64,
    /// Estimated absolute quadrature error of `gamma_alpha_p`.
    pub error: f64,
}

/// `min(1, 4/(p+1))`.
pub fn gamma_p(p: f64) -> f64 {
    (4.0 / (p + 1.0)).min(1.0)
}

const POVZNER_REL_TOL: f64 = 1e-10;

/// Povzner constant `γ_{α,p}`: 256-point Gauss–Legendre, confirmed against a 128-point
/// rule and replaced by adaptive quadrature if the two disagree.
pub fn gamma_alpha_p(p: f64, alpha: Restitution) -> Result<PovznerCoeffs> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::input(format!("Povzner exponent p = {p} must be >= 1")));
    }
    let a = alpha.get();
    let integrand = |x: f64| ((1.0 + x) / 2.0).powf(p) * 0.5 * (g_alpha_raw(x, a) + g_alpha_raw(-x, a));
    let fine = GaussLegendre::new(256).integrate(-1.0, 1.0, integrand);
    let coarse = GaussLegendre::new(128).integrate(-1.0, 1.0, integrand);
    let (value, error) = if (fine - coarse).abs() <= POVZNER_REL_TOL * fine.abs() * 1e-2 {
        (fine, (fine - coarse).abs())
    } else {
        let r = adaptive(integrand, -1.0, 1.0, &[], AdaptiveOptions::rel(POVZNER_REL_TOL * 1e-2))?;
        (r.value, r.error)
    };
    Ok(PovznerCoeffs {
        alpha: a,
        p,
        gamma_alpha_p: value,
        gamma_p: gamma_p(p),
        error,
    })
}

/// Test functions accepted by [`sphere_average`].
#[derive(Clone, Copy)]
pub enum TestFunction<'a> {
    /// `ψ(v) = |v|^{2p}`.
    Power(f64),
    /// `ψ(v) = log f(|v|)` for a radial profile `f`.
    LogDensity(&'a dyn RadialProfile),
}

impl TestFunction<'_> {
    fn eval(&self, v: Velocity) -> Result<f64> {
        match self {
            TestFunction::Power(p) => Ok(v.norm_sq().powf(*p)),
            TestFunction::LogDensity(f) => f
                .log_density(v.norm())
                .ok_or_else(|| Error::input(format!("log-density undefined at |v| = {}", v.norm()))),
        }
    }
}

/// `A_α[ψ](v, w) = (1/4π) ∫ (ψ(v') + ψ(w') − ψ(v) − ψ(w)) dσ`.
pub fn sphere_average(
    v: Velocity,
    w: Velocity,
    alpha: Restitution,
    psi: TestFunction<'_>,
    rule: &SphereRule,
) -> Result<f64> {
    let gain = sphere_average_gain(v, w, alpha, psi, rule)?;
    Ok(gain - psi.eval(v)? - psi.eval(w)?)
}

/// Gain part `A⁺_α[ψ](v, w) = (1/4π) ∫ (ψ(v') + ψ(w')) dσ`.
pub fn sphere_average_gain(
    v: Velocity,
    w: Velocity,
    alpha: Restitution,
    psi: TestFunction<'_>,
    rule: &SphereRule,
) -> Result<f64> {
    let q = v - w;
    let Some(axis) = q.normalized() else {
        // v = w: every σ leaves the pair unchanged.
        return Ok(psi.eval(v)? + psi.eval(w)?);
    };
    let mut acc = 0.0;
    for (sigma, weight) in rule.oriented(axis) {
        let dv = exchange(v, w, sigma, alpha);
        acc += weight * (psi.eval(v + dv)? + psi.eval(w - dv)?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: f64) -> Restitution {
        Restitution::new(a).unwrap()
    }

    #[test]
    fn head_on_along_sigma_is_identity() {
        let v = Velocity::new(1.0, 0.0, 0.0);
        let w = Velocity::new(-1.0, 0.0, 0.0);
        for a in [0.1, 0.5, 1.0] {
            let out = post_collision(v, w, Velocity::new(1.0, 0.0, 0.0), r(a)).unwrap();
            assert_eq!(out.v_post, v);
            assert_eq!(out.w_post, w);
            assert_eq!(out.energy_change, 0.0);
        }
    }

    #[test]
    fn worked_example_alpha_half() {
        // Direct substitution: q = (2,0,0), |q|σ − q = (−2, 2, 0), (1+α)/4 = 3/8.
        let v = Velocity::new(1.0, 0.0, 0.0);
        let w = Velocity::new(-1.0, 0.0, 0.0);
        let s = Velocity::new(0.0, 1.0, 0.0);
        let out = post_collision(v, w, s, r(0.5)).unwrap();
        assert!((out.v_post - Velocity::new(0.25, 0.75, 0.0)).norm() < 1e-15);
        assert!((out.w_post - Velocity::new(-0.25, -0.75, 0.0)).norm() < 1e-15);
        assert!((out.energy_change + 0.75).abs() < 1e-15);
        // −(1−α²)/4 |q|² (1 − σ·q̂) = −(0.75/4)·4·1
        assert!((energy_loss_closed_form(v, w, s, r(0.5)) + 0.75).abs() < 1e-15);
        let vs = bath_post_collision(v, w, s, r(0.5)).unwrap();
        assert!((vs - Velocity::new(0.25, 0.75, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bath_elastic_along_q_is_identity() {
        let v = Velocity::new(0.3, -1.0, 2.0);
        let w = Velocity::new(-0.2, 0.4, 0.1);
        let s = (v - w).normalized().unwrap();
        let vs = bath_post_collision(v, w, s, Restitution::ELASTIC).unwrap();
        assert!((vs - v).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let v = Velocity::new(1.0, 0.0, 0.0);
        assert!(post_collision(v, -v, Velocity::new(0.0, 1.1, 0.0), r(0.5)).is_err());
        assert!(Restitution::new(0.0).is_err());
        assert!(Restitution::new(1.2).is_err());
        assert!(Restitution::new(f64::NAN).is_err());
        assert!(gamma_alpha_p(0.5, r(0.5)).is_err());
        assert!(g_alpha(1.5, r(0.5)).is_err());
    }

    #[test]
    fn g_alpha_values() {
        for x in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            assert!((g_alpha(x, Restitution::ELASTIC).unwrap() - 1.0).abs() < 1e-15);
        }
        // (√2)² / (1.5 √2)
        let expected = 2.0 / (1.5 * 2f64.sqrt());
        assert!((g_alpha(0.0, r(0.5)).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.942_809).abs() < 1e-6);
        let h1 = h_alpha(0.37, r(0.3)).unwrap();
        let h2 = h_alpha(-0.37, r(0.3)).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn elastic_povzner_constants() {
        for p in 1..=10 {
            let c = gamma_alpha_p(p as f64, Restitution::ELASTIC).unwrap();
            assert!((c.gamma_alpha_p - 2.0 / (p as f64 + 1.0)).abs() < 1e-12, "p={p}");
        }
        let c = gamma_alpha_p(3.0, Restitution::ELASTIC).unwrap();
        assert!((c.gamma_alpha_p - 0.5).abs() < 1e-13);
        assert_eq!(c.gamma_p, 1.0);
    }

    #[test]
    fn inelastic_constant_below_uniform_bound() {
        let c = gamma_alpha_p(4.0, r(0.5)).unwrap();
        assert!(c.gamma_alpha_p < c.gamma_p);
        assert!((c.gamma_p - 0.8).abs() < 1e-15);
    }

    #[test]
    fn elastic_energy_average_vanishes() {
        let rule = SphereRule::new(16, 16);
        let v = Velocity::new(0.3, -1.2, 0.7);
        let w = Velocity::new(-0.5, 0.1, 2.0);
        let a = sphere_average(v, w, Restitution::ELASTIC, TestFunction::Power(1.0), &rule).unwrap();
        assert!(a.abs() < 1e-13);
    }
}
