//! The thermal bath: host Maxwellian, collision frequency, the gain kernel of the
//! linear operator and the elastic steady state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Restitution;
use crate::quadrature::{adaptive, AdaptiveOptions, GaussLegendre, QuadResult};
use crate::special::{erf, erf_diff, gamma, maxwellian_norm};
use crate::velocity::Velocity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathParams {
    #[serde(default)]
    pub u0: Velocity,
    pub theta0: f64,
    pub e: Restitution,
}

impl BathParams {
    pub fn new(u0: Velocity, theta0: f64, e: f64) -> Result<Self> {
        let bath = BathParams {
            u0,
            theta0,
            e: Restitution::new(e)?,
        };
        bath.validate()?;
        Ok(bath)
    }

    /// Bath at rest.
    pub fn centered(theta0: f64, e: f64) -> Result<Self> {
        BathParams::new(Velocity::ZERO, theta0, e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 > 0.0 && self.theta0.is_finite()) {
            return Err(Error::input(format!("bath temperature {} must be positive", self.theta0)));
        }
        if !self.u0.is_finite() {
            return Err(Error::input("bath velocity must be finite"));
        }
        Restitution::new(self.e.get()).map(|_| ())
    }

    /// The host Maxwellian `M0` with unit mass.
    pub fn maxwellian(&self) -> MaxwellianParams {
        MaxwellianParams {
            mass: 1.0,
            u: self.u0,
            theta: self.theta0,
        }
    }

    /// `Θ# = (1+e)/(3−e) Θ0`.
    pub fn steady_temperature(&self) -> f64 {
        let e = self.e.get();
        (1.0 + e) / (3.0 - e) * self.theta0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxwellianParams {
    pub mass: f64,
    pub u: Velocity,
    pub theta: f64,
}

impl MaxwellianParams {
    pub fn new(mass: f64, u: Velocity, theta: f64) -> Result<Self> {
        let m = MaxwellianParams { mass, u, theta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::input(format!("Maxwellian mass {} must be positive", self.mass)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::input(format!("Maxwellian temperature {} must be positive", self.theta)));
        }
        if !self.u.is_finite() {
            return Err(Error::input("Maxwellian bulk velocity must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn density(&self, v: Velocity) -> f64 {
        self.mass * maxwellian_norm(self.theta) * (-(v - self.u).norm_sq() / (2.0 * self.theta)).exp()
    }

    /// Density as a function of the speed, for a centred Maxwellian.
    #[inline]
    pub fn radial_density(&self, r: f64) -> f64 {
        self.mass * maxwellian_norm(self.theta) * (-r * r / (2.0 * self.theta)).exp()
    }
}

impl crate::profile::RadialProfile for MaxwellianParams {
    fn density(&self, speed: f64) -> Option<f64> {
        Some(self.radial_density(speed))
    }

    fn log_density(&self, speed: f64) -> Option<f64> {
        Some(self.mass.ln() + maxwellian_norm(self.theta).ln() - speed * speed / (2.0 * self.theta))
    }
}

/// `mass (2πθ)^{-3/2} exp(−|v−u|²/(2θ))`.
pub fn maxwellian_density(params: &MaxwellianParams, v: Velocity) -> f64 {
    params.density(v)
}

/// `σ(v) = ∫ M0(w) |v − w| dw`, in closed form.
pub fn collision_frequency_sigma(bath: &BathParams, v: Velocity) -> f64 {
    sigma_at_speed(bath.theta0, (v - bath.u0).norm())
}

/// `σ` as a function of `a = |v − u0|` for bath temperature `theta0`.
pub fn sigma_at_speed(theta0: f64, a: f64) -> f64 {
    let s = theta0.sqrt();
    if a < 1e-8 * s {
        return (8.0 * theta0 / PI).sqrt();
    }
    let x = a / s;
    s * ((2.0 / PI).sqrt() * (-0.5 * x * x).exp() + (x + 1.0 / x) * erf(x / std::f64::consts::SQRT_2))
}

/// Empirical `σ0 = min σ(v)/(1+|v|)` over the given speeds.
pub fn fit_sigma0(bath: &BathParams, speeds: &[f64]) -> f64 {
    speeds
        .iter()
        .map(|&r| sigma_at_speed(bath.theta0, r) / (1.0 + r))
        .fold(f64::INFINITY, f64::min)
}

/// `∫_{-1}^{1} exp(−β (a + b y)²) dy` for `b ≥ 0`.
pub(crate) fn gaussian_line_integral(beta: f64, a: f64, b: f64) -> f64 {
    let sb = beta.sqrt();
    if sb * b < 1e-4 {
        // Taylor expansion about b = 0; the next term is O((√β b)^4).
        let f0 = (-beta * a * a).exp();
        return f0 * (2.0 + (4.0 * beta * beta * a * a - 2.0 * beta) * b * b / 3.0);
    }
    PI.sqrt() / (2.0 * sb * b) * erf_diff(sb * (a + b), sb * (a - b))
}

/// Parameters of the gain kernel `k(v, w)` of the linear bath operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub e: Restitution,
    pub theta0: f64,
    pub u0: Velocity,
    /// `2(1−e)/(1+e)`.
    pub mu: f64,
    /// `1/(8Θ0)`.
    pub beta0: f64,
    pub c0: f64,
}

const KERNEL_TOL: f64 = 1e-11;

impl KernelParams {
    /// Kernel with `C0 = 1`; use [`KernelParams::calibrate`] for the physical constant.
    pub fn unnormalized(bath: &BathParams) -> Result<Self> {
        bath.validate()?;
        let e = bath.e.get();
        Ok(KernelParams {
            e: bath.e,
            theta0: bath.theta0,
            u0: bath.u0,
            mu: 2.0 * (1.0 - e) / (1.0 + e),
            beta0: 1.0 / (8.0 * bath.theta0),
            c0: 1.0,
        })
    }

    /// Fixes `C0` by requiring `∫ k(v, 0) dv = σ(0)` (mass conservation of the linear operator
    /// at the reference point `w = u0`).
    pub fn calibrate(bath: &BathParams) -> Result<Self> {
        let raw = KernelParams::unnormalized(bath)?;
        let column = raw.column_integral(0.0)?;
        let sigma0 = sigma_at_speed(bath.theta0, 0.0);
        Ok(raw.with_c0(sigma0 / column.value))
    }

    pub fn with_c0(self, c0: f64) -> Self {
        KernelParams { c0, ..self }
    }

    /// `C0 = σ(0) β0 (2+μ)² / (2π)`, the value the calibration should reproduce.
    pub fn c0_closed_form(&self) -> f64 {
        sigma_at_speed(self.theta0, 0.0) * self.beta0 * (2.0 + self.mu).powi(2) / (2.0 * PI)
    }

    pub fn gamma0(&self) -> f64 {
        2.0 * self.beta0 * (1.0 + self.mu + self.mu * self.mu)
    }

    pub fn gamma1(&self) -> f64 {
        2.0 * self.beta0 * (3.0 + 3.0 * self.mu + self.mu * self.mu)
    }

    /// `A# = 4(1+μ)β0`, the inverse of twice the elastic steady temperature.
    pub fn a_sharp(&self) -> f64 {
        4.0 * (1.0 + self.mu) * self.beta0
    }

    /// `∫ k(v, w) dv` at `|w − u0| = w_speed`.
    pub fn column_integral(&self, w_speed: f64) -> Result<QuadResult> {
        let slope = 2.0 + self.mu;
        let ridge = 2.0 * w_speed / slope;
        let width = 1.0 / (self.beta0.sqrt() * slope);
        let b = 2.0 * w_speed;
        let inner = |rho: f64| rho * gaussian_line_integral(self.beta0, slope * rho, b);
        let r = adaptive(inner, 0.0, ridge + 40.0 * width, &[ridge], AdaptiveOptions::rel(KERNEL_TOL))?;
        let scale = 2.0 * PI * self.c0;
        Ok(QuadResult {
            value: scale * r.value,
            error: scale * r.error,
        })
    }

    /// `∫ k(v, w) dw` at `|v − u0| = v_speed`; `None` when it diverges (`e = 1`).
    pub fn row_integral(&self, v_speed: f64) -> Result<Option<QuadResult>> {
        if self.mu <= 0.0 {
            return Ok(None);
        }
        let ridge = 2.0 * v_speed / self.mu;
        let width = 1.0 / (self.beta0.sqrt() * self.mu);
        let b = 2.0 * v_speed;
        let inner = |rho: f64| rho * gaussian_line_integral(self.beta0, self.mu * rho, b);
        let r = adaptive(inner, 0.0, ridge + 40.0 * width, &[ridge], AdaptiveOptions::rel(KERNEL_TOL))?;
        let scale = 2.0 * PI * self.c0;
        Ok(Some(QuadResult {
            value: scale * r.value,
            error: scale * r.error,
        }))
    }

    /// Column and row identities against `σ` at the given speeds.
    pub fn calibration_report(&self, speeds: &[f64]) -> Result<CalibrationReport> {
        let mut column = Vec::with_capacity(speeds.len());
        let mut row = Vec::with_capacity(speeds.len());
        for &r in speeds {
            let sigma = sigma_at_speed(self.theta0, r);
            let c = self.column_integral(r)?;
            column.push(IdentityResidual {
                speed: r,
                sigma,
                integral: Some(c.value),
                relative_residual: Some((c.value - sigma).abs() / sigma),
            });
            let rw = self.row_integral(r)?;
            row.push(IdentityResidual {
                speed: r,
                sigma,
                integral: rw.map(|q| q.value),
                relative_residual: rw.map(|q| (q.value - sigma).abs() / sigma),
            });
        }
        Ok(CalibrationReport {
            e: self.e.get(),
            theta0: self.theta0,
            mu: self.mu,
            beta0: self.beta0,
            c0: self.c0,
            c0_closed_form: self.c0_closed_form(),
            reference_sigma: sigma_at_speed(self.theta0, 0.0),
            column,
            row,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub speed: f64,
    pub sigma: f64,
    /// `None` when the integral diverges.
    pub integral: Option<f64>,
    pub relative_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub e: f64,
    pub theta0: f64,
    pub mu: f64,
    pub beta0: f64,
    pub c0: f64,
    pub c0_closed_form: f64,
    pub reference_sigma: f64,
    /// `∫ k(v,w) dv` against `σ(w)`.
    pub column: Vec<IdentityResidual>,
    /// `∫ k(v,w) dw` against `σ(v)`; measured only.
    pub row: Vec<IdentityResidual>,
}

/// Gain kernel `k(v, w) = C0 |v−w|^{-1} exp{−β0((1+μ)|v−w| + (|v|²−|w|²)/|v−w|)²}`, evaluated
/// in the bath frame.
pub fn kernel_k(kp: &KernelParams, v: Velocity, w: Velocity) -> Result<f64> {
    let (v, w) = (v - kp.u0, w - kp.u0);
    let d = (v - w).norm();
    if d == 0.0 {
        return Err(Error::Singular);
    }
    let arg = (1.0 + kp.mu) * d + (v.norm_sq() - w.norm_sq()) / d;
    Ok(kp.c0 / d * (-kp.beta0 * arg * arg).exp())
}

/// The same kernel written as `C0 |v−w|^{-1} exp{−β0((2+μ)|v−w| + 2 (v−w)/|v−w| · w)²}`.
pub fn kernel_k_relative(kp: &KernelParams, v: Velocity, w: Velocity) -> Result<f64> {
    let (v, w) = (v - kp.u0, w - kp.u0);
    let q = v - w;
    let d = q.norm();
    if d == 0.0 {
        return Err(Error::Singular);
    }
    let arg = (2.0 + kp.mu) * d + 2.0 * q.dot(&w) / d;
    Ok(kp.c0 / d * (-kp.beta0 * arg * arg).exp())
}

/// Symmetrized kernel `G(v, w) = M^{-1/2}(v) k(v, w) M^{1/2}(w)` with `M` the elastic steady state.
pub fn kernel_g(kp: &KernelParams, v: Velocity, w: Velocity) -> Result<f64> {
    let k = kernel_k(kp, v, w)?;
    let a = kp.a_sharp();
    let (vr, wr) = (v - kp.u0, w - kp.u0);
    Ok(k * (0.5 * a * (vr.norm_sq() - wr.norm_sq())).exp())
}

/// Explicit lower bound `C0/(|v|+|w|) e^{−γ0|v|²} e^{−γ1|w|²}` for `k(w, v)`.
pub fn kernel_lower_bound(kp: &KernelParams, v: Velocity, w: Velocity) -> f64 {
    let (v, w) = (v - kp.u0, w - kp.u0);
    kp.c0 / (v.norm() + w.norm()) * (-kp.gamma0() * v.norm_sq() - kp.gamma1() * w.norm_sq()).exp()
}

/// `2π ∫_0^∞ ∫_{-1}^{1} f(ρ, y) dy dρ` for integrands concentrated near the ridge
/// `slope·ρ + 2|w| y = 0`, with `v = w + ρ u`, `u·ŵ = y`.
fn ridge_integral<F: Fn(f64, f64) -> f64>(
    w_speed: f64,
    slope: f64,
    width: f64,
    extent: f64,
    tol: f64,
    f: F,
) -> Result<QuadResult> {
    let ridge = 2.0 * w_speed / slope;
    let upper = ridge.max(extent) + 40.0 * width;
    let inner_opts = AdaptiveOptions::rel(tol * 1e-2);
    let inner_failure = std::cell::RefCell::new(None);
    let outer = |rho: f64| {
        let mut breaks = Vec::new();
        if w_speed > 0.0 {
            let y0 = -slope * rho / (2.0 * w_speed);
            if y0 > -1.0 && y0 < 1.0 {
                breaks.push(y0);
            }
        }
        match adaptive(|y| f(rho, y), -1.0, 1.0, &breaks, inner_opts) {
            Ok(r) => r.value,
            Err(e) => {
                inner_failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let r = adaptive(outer, 0.0, upper, &[ridge.min(upper)], AdaptiveOptions::rel(tol));
    if let Some(e) = inner_failure.into_inner() {
        return Err(e);
    }
    let r = r?;
    Ok(QuadResult {
        value: 2.0 * PI * r.value,
        error: 2.0 * PI * r.error,
    })
}

/// `H(w) = ∫ k(v, w) m^{-1}(v) dv` with `m(v) = exp(−a|v|^s)`.
pub fn h_weighted(kp: &KernelParams, w: Velocity, a: f64, s: f64) -> Result<QuadResult> {
    if !(a > 0.0) || !(s > 0.0 && s <= 1.0) {
        return Err(Error::input(format!("weight parameters (a, s) = ({a}, {s}) outside a > 0, s in (0, 1]")));
    }
    let wn = (w - kp.u0).norm();
    let slope = 2.0 + kp.mu;
    let beta = kp.beta0;
    let width = 1.0 / (beta.sqrt() * slope);
    let r = ridge_integral(wn, slope, width, 0.0, 1e-9, |rho, y| {
        let z = slope * rho + 2.0 * wn * y;
        let v2 = (rho * rho + wn * wn + 2.0 * rho * wn * y).max(0.0);
        rho * (-beta * z * z + a * v2.powf(0.5 * s)).exp()
    })?;
    Ok(QuadResult {
        value: kp.c0 * r.value,
        error: kp.c0 * r.error,
    })
}

/// `∫ |G(v, w)|^p (1+|v|)^{-q} dv`.
pub fn g_power_integral(kp: &KernelParams, w: Velocity, p: f64, q: f64) -> Result<QuadResult> {
    if !(p > 0.0 && p < 3.0) || !(q >= 0.0) {
        return Err(Error::input(format!("(p, q) = ({p}, {q}) outside 0 < p < 3, q >= 0")));
    }
    let wn = (w - kp.u0).norm();
    let slope = 2.0 + kp.mu;
    let beta = kp.beta0;
    let half_a = 0.5 * kp.a_sharp();
    let decay = p * beta * (2.0 + 2.0 * kp.mu + kp.mu * kp.mu);
    let width = 1.0 / decay.sqrt();
    let r = ridge_integral(wn, slope, width, 0.0, 1e-9, |rho, y| {
        let z = slope * rho + 2.0 * wn * y;
        let cross = rho * rho + 2.0 * rho * wn * y;
        let v = (cross + wn * wn).max(0.0).sqrt();
        rho.powf(2.0 - p) * (p * (-beta * z * z + half_a * cross)).exp() * (1.0 + v).powf(-q)
    })?;
    let c = kp.c0.powf(p);
    Ok(QuadResult {
        value: c * r.value,
        error: c * r.error,
    })
}

/// The elastic steady state: unit mass, bulk velocity `u0`, temperature `Θ#`.
pub fn elastic_steady_state(bath: &BathParams) -> MaxwellianParams {
    MaxwellianParams {
        mass: 1.0,
        u: bath.u0,
        theta: bath.steady_temperature(),
    }
}

/// `M_p = ∫ M0(w) |w|^{2p} dw`; closed form for a bath at rest.
pub fn bath_moment(bath: &BathParams, p: f64) -> Result<f64> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::input(format!("bath moment order {p} must be >= 0")));
    }
    let th = bath.theta0;
    if bath.u0.norm() == 0.0 {
        return Ok((2.0 * th).powf(p) * gamma(p + 1.5) / gamma(1.5));
    }
    // Shifted bath: w = u0 + x, integrate over |x| and the angle to u0.
    let u = bath.u0.norm();
    let gl = GaussLegendre::new(64);
    let norm = 4.0 * PI * maxwellian_norm(th);
    let radial = |r: f64| {
        let ang = 0.5 * gl.integrate(-1.0, 1.0, |y| (r * r + u * u + 2.0 * r * u * y).max(0.0).powf(p));
        norm * r * r * (-r * r / (2.0 * th)).exp() * ang
    };
    let upper = 40.0 * th.sqrt() + u;
    Ok(adaptive(radial, 0.0, upper, &[u.min(upper)], AdaptiveOptions::rel(1e-12))?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bath(theta0: f64, e: f64) -> BathParams {
        BathParams::centered(theta0, e).unwrap()
    }

    /// `2π ∫ r² dr ∫ dy g(r, y)` by plain product Gauss–Legendre, for test oracles.
    fn radial_angle_quadrature<F: Fn(f64, f64) -> f64>(upper: f64, f: F) -> f64 {
        let gl = GaussLegendre::new(200);
        let gy = GaussLegendre::new(96);
        let mut acc = 0.0;
        for (r, wr) in gl.mapped(0.0, upper) {
            let ang: f64 = gy.mapped(-1.0, 1.0).map(|(y, wy)| wy * f(r, y)).sum();
            acc += wr * r * r * ang;
        }
        2.0 * PI * acc
    }

    #[test]
    fn maxwellian_values() {
        let m = MaxwellianParams::new(1.0, Velocity::ZERO, 1.0).unwrap();
        assert!((m.density(Velocity::ZERO) - 0.063_493_635_934_240_97).abs() < 1e-15);
        let mass = radial_angle_quadrature(15.0, |r, _| m.radial_density(r));
        let energy = radial_angle_quadrature(15.0, |r, _| r * r * m.radial_density(r));
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((energy - 3.0).abs() < 1e-11);
        assert!(MaxwellianParams::new(0.0, Velocity::ZERO, 1.0).is_err());
    }

    #[test]
    fn sigma_matches_quadrature() {
        let b = bath(1.0, 0.5);
        assert!((collision_frequency_sigma(&b, Velocity::ZERO) - (8.0 / PI).sqrt()).abs() < 1e-14);
        let m0 = b.maxwellian();
        for a in [0.0, 0.3, 1.0, 2.5, 6.0] {
            // σ(v) = ∫ M0(w)|v−w| dw with w = v + x: |v − w| = r.
            let oracle = radial_angle_quadrature(12.0 + a, |r, y| {
                let w2 = r * r + a * a + 2.0 * r * a * y;
                r * m0.radial_density(w2.max(0.0).sqrt())
            });
            let s = sigma_at_speed(1.0, a);
            assert!((s - oracle).abs() / oracle < 1e-8, "a={a}: {s} vs {oracle}");
        }
        let far = collision_frequency_sigma(&b, Velocity::new(50.0, 0.0, 0.0));
        assert!((far / 50.0 - 1.0).abs() < 0.01);
        let speeds: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
        assert!(fit_sigma0(&b, &speeds) > 0.0);
    }

    #[test]
    fn shifted_bath_sigma_uses_relative_speed() {
        let b = BathParams::new(Velocity::new(1.0, 0.0, 0.0), 2.0, 0.7).unwrap();
        let s = collision_frequency_sigma(&b, Velocity::new(1.0, 0.0, 0.0));
        assert!((s - (16.0 / PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn steady_temperature_values() {
        assert_eq!(elastic_steady_state(&bath(1.0, 1.0)).theta, 1.0);
        assert!((elastic_steady_state(&bath(2.0, 0.5)).theta - 1.2).abs() < 1e-15);
        for e in [0.1, 0.5, 0.9, 1.0] {
            let b = bath(1.3, e);
            let kp = KernelParams::unnormalized(&b).unwrap();
            let th = b.steady_temperature();
            assert!(th <= b.theta0);
            assert!((kp.a_sharp() - 1.0 / (2.0 * th)).abs() < 1e-14);
            assert!((kp.a_sharp() - kp.gamma1() + kp.gamma0()).abs() < 1e-14);
        }
    }

    #[test]
    fn bath_moments() {
        let b = bath(1.0, 0.5);
        assert!((bath_moment(&b, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((bath_moment(&b, 1.0).unwrap() - 3.0).abs() < 1e-14);
        let m0 = b.maxwellian();
        let oracle = radial_angle_quadrature(16.0, |r, _| r.powf(5.0) * m0.radial_density(r));
        assert!((bath_moment(&b, 2.5).unwrap() - oracle).abs() / oracle < 1e-8);
        // Shifted bath: E|u0 + X|² = |u0|² + 3θ.
        let s = BathParams::new(Velocity::new(0.5, -1.0, 0.0), 1.0, 0.5).unwrap();
        assert!((bath_moment(&s, 1.0).unwrap() - 4.25).abs() < 1e-10);
        assert!(bath_moment(&b, -1.0).is_err());
    }

    #[test]
    fn kernel_forms_agree_and_detailed_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for e in [0.3, 0.5, 1.0] {
            let b = bath(1.0, e);
            let kp = KernelParams::calibrate(&b).unwrap();
            let m = elastic_steady_state(&b);
            for _ in 0..2000 {
                let v = Velocity::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                let w = Velocity::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                let k1 = kernel_k(&kp, v, w).unwrap();
                let k2 = kernel_k_relative(&kp, v, w).unwrap();
                if k1 > 1e-280 {
                    assert!((k1 - k2).abs() <= 1e-12 * k1);
                }
                let lhs = k1 * m.density(w);
                let rhs = kernel_k(&kp, w, v).unwrap() * m.density(v);
                if lhs > 1e-280 {
                    assert!((lhs - rhs).abs() <= 1e-12 * lhs);
                }
                let g1 = kernel_g(&kp, v, w).unwrap();
                let g2 = kernel_g(&kp, w, v).unwrap();
                assert!(g1 >= 0.0);
                if g1 > 1e-280 {
                    assert!((g1 - g2).abs() <= 1e-12 * g1);
                }
                assert!(kernel_k(&kp, w, v).unwrap() >= kernel_lower_bound(&kp, v, w) * (1.0 - 1e-12));
            }
        }
        let kp = KernelParams::calibrate(&bath(1.0, 0.5)).unwrap();
        assert!(matches!(kernel_k(&kp, Velocity::ZERO, Velocity::ZERO), Err(Error::Singular)));
    }

    #[test]
    fn calibration_matches_closed_form() {
        for e in [0.3, 0.5, 0.8, 1.0] {
            let kp = KernelParams::calibrate(&bath(1.0, e)).unwrap();
            assert!((kp.c0 - kp.c0_closed_form()).abs() < 1e-10 * kp.c0, "e={e}");
        }
    }

    #[test]
    fn column_integral_matches_sigma() {
        let b = bath(1.0, 0.5);
        let kp = KernelParams::calibrate(&b).unwrap();
        for r in [0.0, 0.5, 1.0, 3.0, 7.0, 10.0] {
            let c = kp.column_integral(r).unwrap().value;
            let s = sigma_at_speed(1.0, r);
            assert!((c - s).abs() / s < 1e-8, "r={r}: {c} vs {s}");
        }
        let rep = kp.calibration_report(&[0.0, 2.0]).unwrap();
        assert!(rep.row.iter().all(|r| r.integral.is_some()));
        let elastic = KernelParams::calibrate(&bath(1.0, 1.0)).unwrap();
        assert!(elastic.row_integral(1.0).unwrap().is_none());
    }

    #[test]
    fn column_integral_matches_3d_quadrature() {
        // Independent oracle: integrate k(v, w) over v in spherical shells around w.
        let kp = KernelParams::calibrate(&bath(1.0, 0.5)).unwrap();
        let w = Velocity::new(0.0, 0.0, 2.0);
        let rule = crate::quadrature::SphereRule::new(48, 48);
        let gl = GaussLegendre::new(160);
        let mut acc = 0.0;
        for (rho, wr) in gl.mapped(0.0, 12.0) {
            let shell = rule.average(Velocity::new(0.0, 0.0, 1.0), |u| kernel_k(&kp, w + u * rho, w).unwrap());
            acc += wr * 4.0 * PI * rho * rho * shell;
        }
        let c = kp.column_integral(2.0).unwrap().value;
        assert!((acc - c).abs() / c < 1e-6, "{acc} vs {c}");
    }

    #[test]
    fn gaussian_line_integral_branches() {
        let gl = GaussLegendre::new(200);
        for (beta, a, b) in [(0.125, 1.0, 1e-6), (0.125, 2.0, 3.0), (0.5, 9.0, 20.0), (0.125, -3.0, 0.5)] {
            let exact = gl.integrate(-1.0, 1.0, |y: f64| (-beta * (a + b * y) * (a + b * y)).exp());
            let got = gaussian_line_integral(beta, a, b);
            assert!((got - exact).abs() <= 1e-12 * exact.max(1e-300), "{beta} {a} {b}: {got} vs {exact}");
        }
    }

    #[test]
    fn h_weighted_is_finite() {
        let kp = KernelParams::calibrate(&bath(1.0, 0.5)).unwrap();
        let h0 = h_weighted(&kp, Velocity::ZERO, 0.1, 0.5).unwrap();
        assert!(h0.value > 0.0 && h0.value.is_finite());
        // a → 0 recovers the column integral.
        let hc = h_weighted(&kp, Velocity::new(1.0, 0.0, 0.0), 1e-12, 1.0).unwrap().value;
        let c = kp.column_integral(1.0).unwrap().value;
        assert!((hc - c).abs() / c < 1e-7);
        assert!(h_weighted(&kp, Velocity::ZERO, 0.1, 1.5).is_err());
    }

    #[test]
    fn g_power_integral_decays() {
        let kp = KernelParams::calibrate(&bath(1.0, 0.5)).unwrap();
        let vals: Vec<f64> = [1.0, 5.0, 10.0]
            .iter()
            .map(|&r| g_power_integral(&kp, Velocity::new(r, 0.0, 0.0), 2.0, 0.0).unwrap().value)
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }
}
