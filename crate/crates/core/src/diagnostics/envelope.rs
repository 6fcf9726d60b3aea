use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::RadialProfile;

/// Maxwellian envelope `a0⁻¹ e^{−a0 r²} ≤ F(r) ≤ e^{−a r² + μ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub a0: f64,
    pub a: f64,
    pub mu: f64,
}

impl Envelope {
    pub fn lower(&self, r: f64) -> f64 {
        (-self.a0 * r * r).exp() / self.a0
    }

    pub fn upper(&self, r: f64) -> f64 {
        (-self.a * r * r + self.mu).exp()
    }

    /// Whether `lower ≤ F ≤ upper` at every sample, with relative slack `tol`.
    fn contains(&self, points: &[(f64, f64)], tol: f64) -> bool {
        points
            .iter()
            .all(|&(r, f)| self.lower(r) <= f * (1.0 + tol) && f <= self.upper(r) * (1.0 + tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEnvelope {
    pub envelope: Envelope,
    /// Largest radius at which the density was resolved.
    pub resolved_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// Envelope fitted to the pointwise minimum and maximum over all densities.
    pub common: Envelope,
    pub individual: Vec<DensityEnvelope>,
    /// Upper end of the common checked range.
    pub checked_max: f64,
    pub requested_max: f64,
    pub points: usize,
    /// Grid points beyond the common resolved range.
    pub excluded_points: usize,
    pub fits_all: bool,
}

/// Smallest feasible `a0` (the largest lower envelope). `a0⁻¹ e^{−a0 r²}` decreases in `a0`.
fn fit_lower(points: &[(f64, f64)]) -> f64 {
    let feasible = |a0: f64| points.iter().all(|&(r, f)| -a0.ln() - a0 * r * r <= f.ln());
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    while !feasible(hi) {
        hi *= 2.0;
    }
    if feasible(lo) {
        return lo;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Upper envelope of least mass: minimizes `μ(a) − (3/2) ln a`, convex in `ln a`.
fn fit_upper(points: &[(f64, f64)]) -> (f64, f64) {
    let mu = |a: f64| points.iter().map(|&(r, f)| f.ln() + a * r * r).fold(f64::NEG_INFINITY, f64::max);
    let cost = |t: f64| mu(t.exp()) - 1.5 * t;
    let (mut lo, mut hi) = (-12.0f64, 8.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if cost(m1) <= cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let a = (0.5 * (lo + hi)).exp();
    (a, mu(a))
}

fn fit(points: &[(f64, f64)]) -> Envelope {
    let (a, mu) = fit_upper(points);
    Envelope { a0: fit_lower(points), a, mu }
}

/// Fit Maxwellian envelopes on `[0, r_max]` to each density and one envelope common to all.
pub fn pointwise_bounds_check(profiles: &[&dyn RadialProfile], r_max: f64, n_points: usize) -> Result<EnvelopeReport> {
    if profiles.is_empty() || n_points < 2 || !(r_max > 0.0) {
        return Err(Error::input("envelope check needs densities, a positive range and two points"));
    }
    let grid: Vec<f64> = (0..n_points).map(|k| r_max * k as f64 / (n_points - 1) as f64).collect();
    let samples: Vec<Vec<(f64, f64)>> = profiles
        .iter()
        .map(|p| {
            grid.iter()
                .map_while(|&r| p.density(r).filter(|&f| f > 0.0).map(|f| (r, f)))
                .collect()
        })
        .collect();
    let common_len = samples.iter().map(Vec::len).min().unwrap_or(0);
    if common_len < 2 {
        return Err(Error::input("densities unresolved on the requested range"));
    }
    let individual = samples
        .iter()
        .map(|s| DensityEnvelope {
            envelope: fit(s),
            resolved_max: s[s.len() - 1].0,
        })
        .collect();
    let lows: Vec<(f64, f64)> = (0..common_len)
        .map(|k| (grid[k], samples.iter().map(|s| s[k].1).fold(f64::INFINITY, f64::min)))
        .collect();
    let highs: Vec<(f64, f64)> = (0..common_len)
        .map(|k| (grid[k], samples.iter().map(|s| s[k].1).fold(0.0, f64::max)))
        .collect();
    let (a, mu) = fit_upper(&highs);
    let common = Envelope { a0: fit_lower(&lows), a, mu };
    let fits_all = samples.iter().all(|s| common.contains(&s[..common_len], 1e-9))
        && [common.a0, common.a, common.mu].iter().all(|x| x.is_finite());
    Ok(EnvelopeReport {
        common,
        individual,
        checked_max: grid[common_len - 1],
        requested_max: r_max,
        points: common_len,
        excluded_points: n_points - common_len,
        fits_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::MaxwellianParams;
    use crate::velocity::Velocity;

    #[test]
    fn envelope_of_maxwellian_is_tight() {
        let m = MaxwellianParams::new(1.0, Velocity::ZERO, 0.8).unwrap();
        let rep = pointwise_bounds_check(&[&m], 5.0, 200).unwrap();
        assert!(rep.fits_all);
        assert!((rep.common.a - 1.0 / 1.6).abs() < 1e-6, "{rep:?}");
        assert!((rep.common.mu - m.radial_density(0.0).ln()).abs() < 1e-6);
        assert_eq!(rep.excluded_points, 0);
        // The lower envelope touches the density somewhere.
        let gap = (0..200)
            .map(|k| 5.0 * k as f64 / 199.0)
            .map(|r| m.radial_density(r).ln() - rep.common.lower(r).ln())
            .fold(f64::INFINITY, f64::min);
        assert!(gap.abs() < 1e-9, "{gap}");
    }

    #[test]
    fn common_envelope_covers_all() {
        let a = MaxwellianParams::new(1.0, Velocity::ZERO, 0.6).unwrap();
        let b = MaxwellianParams::new(1.0, Velocity::ZERO, 0.7).unwrap();
        let rep = pointwise_bounds_check(&[&a, &b], 4.0, 100).unwrap();
        assert!(rep.fits_all);
        assert_eq!(rep.individual.len(), 2);
        assert!(rep.common.a0 >= rep.individual[0].envelope.a0.min(rep.individual[1].envelope.a0));
    }

    #[test]
    fn unresolved_tail_is_excluded() {
        struct Cut;
        impl RadialProfile for Cut {
            fn density(&self, r: f64) -> Option<f64> {
                (r < 2.0).then(|| (-r * r).exp())
            }
        }
        let rep = pointwise_bounds_check(&[&Cut], 4.0, 101).unwrap();
        assert_eq!(rep.points, 50);
        assert_eq!(rep.excluded_points, 51);
        assert!(rep.checked_max < 2.0);
    }
}
