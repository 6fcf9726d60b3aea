//! Special functions used across the crate.
//!
//! Error function and Gamma come from `libm` (within a few ulp); `statrs` supplies the
//! incomplete Gamma function and the starting guess for the inverse error function.

use std::f64::consts::PI;

pub use libm::{erf, erfc, lgamma as ln_gamma, tgamma as gamma};
pub use statrs::function::gamma::gamma_ur;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Inverse error function, polished by Newton steps on `erf(x) = y`.
pub fn erf_inv(y: f64) -> f64 {
    assert!(y > -1.0 && y < 1.0, "erf_inv domain is (-1, 1)");
    let mut x = statrs::function::erf::erf_inv(y);
    for _ in 0..4 {
        let deriv = FRAC_2_SQRT_PI * (-x * x).exp();
        let step = (erf(x) - y) / deriv;
        x -= step;
        if step.abs() <= 1e-17 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// `erf(x) − erf(y)` without cancellation when both arguments sit in the same tail.
pub fn erf_diff(x: f64, y: f64) -> f64 {
    if x > 0.0 && y > 0.0 {
        erfc(y) - erfc(x)
    } else if x < 0.0 && y < 0.0 {
        erfc(-x) - erfc(-y)
    } else {
        erf(x) - erf(y)
    }
}

/// Generalized binomial coefficient C(p, k) = Γ(p+1) / (Γ(k+1) Γ(p−k+1)) for real `p ≥ k ≥ 0`.
pub fn binomial(p: f64, k: f64) -> f64 {
    debug_assert!(p - k > -1.0);
    (ln_gamma(p + 1.0) - ln_gamma(k + 1.0) - ln_gamma(p - k + 1.0)).exp()
}

/// CDF of the speed `|V|` when `V` is a centred 3D Maxwellian with temperature `theta`.
pub fn maxwell_speed_cdf(r: f64, theta: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let x = r / (2.0 * theta).sqrt();
    // erf(x) − (2/√π) x e^{−x²}; switch to the complement form in the tail.
    if x < 2.0 {
        erf(x) - FRAC_2_SQRT_PI * x * (-x * x).exp()
    } else {
        1.0 - maxwell_speed_sf(r, theta)
    }
}

/// Survival function `P(|V| > r)` of the Maxwellian speed, accurate in the far tail.
pub fn maxwell_speed_sf(r: f64, theta: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    let x = r / (2.0 * theta).sqrt();
    erfc(x) + FRAC_2_SQRT_PI * x * (-x * x).exp()
}

/// CDF of `|V|` for `V ~ N(u, θ I)` in 3D with `|u| = shift` (non-central chi distribution).
pub fn shifted_speed_cdf(r: f64, theta: f64, shift: f64) -> f64 {
    let s = theta.sqrt();
    if shift < 1e-6 * s {
        return maxwell_speed_cdf(r, theta);
    }
    if r <= 0.0 {
        return 0.0;
    }
    let phi = |x: f64| (-0.5 * x * x / theta).exp() / (2.0 * PI * theta).sqrt();
    let big_phi = |x: f64| 0.5 * erfc(-x / (std::f64::consts::SQRT_2 * s));
    (big_phi(r - shift) + big_phi(r + shift) - 1.0 + theta / shift * (phi(r + shift) - phi(r - shift))).clamp(0.0, 1.0)
}

/// `(2π θ)^{-3/2}`: the peak value of a unit-mass 3D Maxwellian.
#[inline]
pub fn maxwellian_norm(theta: f64) -> f64 {
    (2.0 * PI * theta).powf(-1.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_cdf_limits() {
        for r in [0.5, 1.0, 3.0] {
            let a = shifted_speed_cdf(r, 1.3, 1e-9);
            let b = shifted_speed_cdf(r, 1.3, 1e-4);
            assert!((a - b).abs() < 1e-7);
        }
        // Monte Carlo-free check: derivative matches the non-central density at one point.
        let (theta, u, r, h) = (0.7_f64, 1.2_f64, 1.5_f64, 1e-5);
        let d = (shifted_speed_cdf(r + h, theta, u) - shifted_speed_cdf(r - h, theta, u)) / (2.0 * h);
        let g = |x: f64| (-(x * x) / (2.0 * theta)).exp() / (2.0 * PI * theta).sqrt();
        let want = r / u * (g(r - u) - g(r + u));
        assert!((d - want).abs() < 1e-8);
        assert!((shifted_speed_cdf(40.0, theta, u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn erf_diff_in_tail() {
        // erfc(6) − erfc(7) ≈ 2.1519736712498913e-17 − 4.183825607779414e-23
        let d = erf_diff(7.0, 6.0);
        let want = 2.151_973_671_249_891_3e-17 - 4.183_825_607_779_414e-23;
        assert!((d - want).abs() < 1e-12 * want);
        assert!((erf_diff(0.5, -0.5) - 2.0 * erf(0.5)).abs() < 1e-16);
        assert_eq!(erf_diff(-7.0, -6.0), -erf_diff(7.0, 6.0));
    }

    #[test]
    fn erf_inv_half() {
        let x = erf_inv(0.5);
        assert!((x - 0.476_936_276_204_469_9).abs() < 1e-15);
        assert!((erf(x) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn binomial_matches_integers() {
        assert!((binomial(5.0, 2.0) - 10.0).abs() < 1e-12);
        assert!((binomial(4.0, 1.0) - 4.0).abs() < 1e-12);
        // C(2.5, 1) = 2.5
        assert!((binomial(2.5, 1.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn speed_cdf_and_sf_agree() {
        for r in [0.1, 0.5, 1.0, 2.0, 3.0, 4.5, 6.0] {
            let s = maxwell_speed_cdf(r, 1.3) + maxwell_speed_sf(r, 1.3);
            assert!((s - 1.0).abs() < 1e-14, "r={r} sum={s}");
        }
        // median of the chi(3) distribution is ≈ 1.5382
        assert!((maxwell_speed_cdf(1.538_172, 1.0) - 0.5).abs() < 1e-6);
    }
}
