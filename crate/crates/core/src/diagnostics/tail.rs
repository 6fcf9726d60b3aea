use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::ParticleEnsemble;
use crate::special::{gamma_ur, ln_gamma};

/// Fraction of the largest speeds used by the fit.
pub const TAIL_FRACTION: f64 = 0.05;
/// Smallest ensemble accepted by [`tail_order_fit`].
pub const MIN_SAMPLES: usize = 10_000;

const S_RANGE: (f64, f64) = (0.25, 6.0);

/// Fit of the speed tail to `ρ² exp(−r ρ^s)` above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub s: f64,
    pub r: f64,
    pub s_std_error: f64,
    pub n_tail: usize,
    pub threshold: f64,
    /// Kolmogorov–Smirnov distance between the tail sample and the fitted law.
    pub quality: f64,
    /// Slope of `log(−log S(ρ))` against `log ρ`, with `S` the empirical survival function.
    pub loglog_s: f64,
    /// The 95% interval on `s` is wider than ±0.3.
    pub wide_interval: bool,
}

/// `ln Γ(a, x)` for the upper incomplete gamma function.
fn ln_upper_gamma(a: f64, x: f64) -> f64 {
    let q = gamma_ur(a, x);
    if q > 1e-280 {
        ln_gamma(a) + q.ln()
    } else {
        (a - 1.0) * x.ln() - x + (1.0 + (a - 1.0) / x + (a - 1.0) * (a - 2.0) / (x * x)).ln()
    }
}

struct TailSample<'a> {
    speeds: &'a [f64],
    threshold: f64,
    mean_log: f64,
}

impl TailSample<'_> {
    fn mean_power(&self, s: f64) -> f64 {
        self.speeds.iter().map(|r| r.powf(s)).sum::<f64>() / self.speeds.len() as f64
    }

    /// `ln ∫_{ρ0}^∞ ρ² e^{−rρ^s} dρ`.
    fn ln_norm(&self, r: f64, s: f64) -> f64 {
        let a = 3.0 / s;
        -s.ln() - a * r.ln() + ln_upper_gamma(a, r * self.threshold.powf(s))
    }

    /// Truncated mean of `ρ^s` under rate `r`.
    fn model_mean_power(&self, r: f64, s: f64) -> f64 {
        let a = 3.0 / s;
        let x = r * self.threshold.powf(s);
        (a + (a * x.ln() - x - ln_upper_gamma(a, x)).exp()) / r
    }

    /// Maximum-likelihood rate for fixed `s`, from `E_r[ρ^s] = mean(ρ^s)`.
    fn rate(&self, s: f64) -> f64 {
        let target = self.mean_power(s);
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.model_mean_power(mid.exp(), s) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    /// Profile log-likelihood per sample.
    fn profile(&self, s: f64) -> (f64, f64) {
        let r = self.rate(s);
        (2.0 * self.mean_log - r * self.mean_power(s) - self.ln_norm(r, s), r)
    }

    fn cdf(&self, rho: f64, r: f64, s: f64) -> f64 {
        let a = 3.0 / s;
        let upper = ln_upper_gamma(a, r * rho.powf(s)) - ln_upper_gamma(a, r * self.threshold.powf(s));
        1.0 - upper.exp()
    }
}

/// Tail order by truncated maximum likelihood on the outer 5% of speeds.
pub fn tail_order_fit(ensemble: &ParticleEnsemble) -> Result<TailFit> {
    let n = ensemble.len();
    if n < MIN_SAMPLES {
        return Err(Error::input(format!("tail fit needs at least {MIN_SAMPLES} samples (got {n})")));
    }
    let mut speeds: Vec<f64> = ensemble.velocities.iter().map(|v| v.norm()).collect();
    speeds.sort_by(f64::total_cmp);
    let n_tail = (TAIL_FRACTION * n as f64).round() as usize;
    let threshold = speeds[n - n_tail - 1];
    let tail = &speeds[n - n_tail..];
    if !(threshold > 0.0) || tail[0] == tail[n_tail - 1] {
        return Err(Error::input("degenerate speed tail"));
    }
    let sample = TailSample {
        speeds: tail,
        threshold,
        mean_log: tail.iter().map(|r| r.ln()).sum::<f64>() / n_tail as f64,
    };

    // Coarse scan, then golden-section refinement around the best bracket.
    let grid: Vec<f64> = (0..=48)
        .map(|k| S_RANGE.0 * (S_RANGE.1 / S_RANGE.0).powf(k as f64 / 48.0))
        .collect();
    let best = (0..grid.len())
        .max_by(|&i, &j| sample.profile(grid[i]).0.total_cmp(&sample.profile(grid[j]).0))
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (sample.profile(c).0, sample.profile(d).0);
    while b - a > 1e-7 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = sample.profile(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = sample.profile(d).0;
        }
    }
    let s = 0.5 * (a + b);
    let (l0, r) = sample.profile(s);
    let h = 1e-3 * s;
    let curvature = (sample.profile(s + h).0 - 2.0 * l0 + sample.profile(s - h).0) / (h * h) * n_tail as f64;
    let s_std_error = if curvature < 0.0 { (-1.0 / curvature).sqrt() } else { f64::INFINITY };

    let quality = tail
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let f = sample.cdf(rho, r, s);
            (f - k as f64 / n_tail as f64).abs().max(((k + 1) as f64 / n_tail as f64 - f).abs())
        })
        .fold(0.0, f64::max);

    Ok(TailFit {
        s,
        r,
        s_std_error,
        n_tail,
        threshold,
        quality,
        loglog_s: loglog_slope(&speeds, n_tail),
        wide_interval: !(1.96 * s_std_error <= 0.3),
    })
}

/// Least-squares slope of `log(−log S)` against `log ρ` over the outer order statistics.
fn loglog_slope(sorted: &[f64], n_tail: usize) -> f64 {
    let n = sorted.len();
    let points: Vec<(f64, f64)> = (n - n_tail..n - 1)
        .map(|i| {
            let survival = (n - i - 1) as f64 / n as f64;
            (sorted[i].ln(), (-survival.ln()).ln())
        })
        .collect();
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Phase};
    use crate::simulator::InitialCondition;
    use crate::velocity::Velocity;
    use rand::Rng;

    #[test]
    fn gaussian_samples_have_order_two() {
        let ic = InitialCondition::Maxwellian { theta: 0.5, u: Velocity::ZERO };
        let ens = ParticleEnsemble::from_velocities(ic.sample(100_000, 21), 1.0);
        let fit = tail_order_fit(&ens).unwrap();
        assert!((fit.s - 2.0).abs() < 0.2, "{fit:?}");
        assert!((fit.r - 1.0).abs() < 0.3, "{fit:?}");
        assert!(fit.quality < 0.05, "{fit:?}");
        assert!(fit.loglog_s > 1.0 && fit.loglog_s < 3.0, "{fit:?}");
    }

    #[test]
    fn exponential_samples_have_order_one() {
        let mut rng = rng::stream(4, 0, Phase::Diagnostics, 0);
        let vs: Vec<Velocity> = (0..100_000)
            .map(|_| {
                let rho: f64 = (0..3).map(|_| -(1.0 - rng.random::<f64>()).ln()).sum();
                rng::unit_vector(&mut rng) * rho
            })
            .collect();
        let fit = tail_order_fit(&ParticleEnsemble::from_velocities(vs, 1.0)).unwrap();
        assert!((fit.s - 1.0).abs() < 0.2, "{fit:?}");
    }

    #[test]
    fn small_ensembles_are_rejected() {
        let ens = ParticleEnsemble::from_velocities(vec![Velocity::new(1.0, 0.0, 0.0); 100], 1.0);
        assert!(tail_order_fit(&ens).is_err());
    }

    #[test]
    fn upper_gamma_asymptotic_branch_is_continuous() {
        let a = 1.5;
        let x = 600.0;
        let direct = ln_gamma(a) + gamma_ur(a, x).ln();
        let asym = (a - 1.0) * f64::ln(x) - x + (1.0 + (a - 1.0) / x + (a - 1.0) * (a - 2.0) / (x * x)).ln();
        assert!((direct - asym).abs() < 1e-6, "{direct} {asym}");
    }
}
