//! Measurements on particle ensembles and grid functions.

mod density;
mod entropy;
mod envelope;
mod norms;
mod tail;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::background::{bath_moment, BathParams};
use crate::error::{Error, Result};
use crate::kinematics::gamma_p;
use crate::simulator::ParticleEnsemble;
use crate::special::{binomial, ln_gamma};

pub use density::{RadialDensity, SmoothedDensity, MIN_SHELL_COUNT};
pub use entropy::{entropy_dissipation, entropy_dissipation_difference, EntropyDifference, EntropyEstimate, EntropyOptions};
pub use envelope::{pointwise_bounds_check, DensityEnvelope, Envelope, EnvelopeReport};
pub use norms::{
    distance_to, distance_to_maxwellian, l1_distance, moment_matched_maxwellian, weighted_norm, MaxwellDistance,
    NormSpace, WeightedNorm,
};
pub use tail::{tail_order_fit, TailFit};

/// Blocks used by the jackknife error estimates.
pub const JACKKNIFE_BLOCKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub p: f64,
    /// `m_p = ∫ f |v|^{2p} dv`.
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub entries: Vec<MomentEntry>,
    pub alpha: Option<f64>,
    pub time: f64,
    pub n: usize,
    pub mass: f64,
}

impl MomentTable {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn get(&self, p: f64) -> Option<&MomentEntry> {
        self.entries.iter().find(|e| (e.p - p).abs() < 1e-12)
    }

    pub fn value(&self, p: f64) -> Result<f64> {
        self.get(p)
            .map(|e| e.value)
            .ok_or_else(|| Error::input(format!("moment m_{p} missing from table")))
    }

    /// Triples `(p−d, p, p+d)` of consecutive entries violating `m_p² ≤ m_{p−d} m_{p+d}`
    /// by more than three standard errors.
    pub fn log_convexity_violations(&self) -> Vec<[f64; 3]> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| a.p.total_cmp(&b.p));
        sorted
            .windows(3)
            .filter(|w| ((w[1].p - w[0].p) - (w[2].p - w[1].p)).abs() < 1e-12)
            .filter(|w| {
                let gap = w[1].value * w[1].value - w[0].value * w[2].value;
                let se = (2.0 * w[1].value * w[1].std_error).hypot(w[0].std_error * w[2].value).hypot(w[0].value * w[2].std_error);
                gap > 3.0 * se + 1e-12 * w[1].value * w[1].value
            })
            .map(|w| [w[0].p, w[1].p, w[2].p])
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["p", "value", "std_error", "alpha", "time", "n"]).map_err(err)?;
        let alpha = self.alpha.map(|a| a.to_string()).unwrap_or_default();
        for e in &self.entries {
            w.write_record([
                e.p.to_string(),
                e.value.to_string(),
                e.std_error.to_string(),
                alpha.clone(),
                self.time.to_string(),
                self.n.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical moments `m_p` with block-jackknife standard errors.
pub fn moments(ensemble: &ParticleEnsemble, p_list: &[f64]) -> Result<MomentTable> {
    if let Some(p) = p_list.iter().find(|&&p| !(0.0..=8.0).contains(&p)) {
        return Err(Error::input(format!("moment order {p} outside [0, 8]")));
    }
    let n = ensemble.velocities.len();
    if n == 0 {
        return Err(Error::input("empty ensemble"));
    }
    let mass = ensemble.mass();
    let blocks = JACKKNIFE_BLOCKS.min(n);
    let bounds: Vec<usize> = (0..=blocks).map(|b| b * n / blocks).collect();
    let energies: Vec<f64> = ensemble.velocities.iter().map(|v| v.norm_sq()).collect();
    let entries = p_list
        .iter()
        .map(|&p| {
            let block_sums: Vec<f64> = bounds
                .windows(2)
                .map(|b| energies[b[0]..b[1]].iter().map(|&e| if p == 0.0 { 1.0 } else { e.powf(p) }).sum())
                .collect();
            let total: f64 = block_sums.iter().sum();
            let value = mass * total / n as f64;
            let loo: Vec<f64> = block_sums
                .iter()
                .zip(bounds.windows(2))
                .map(|(s, b)| mass * (total - s) / (n - (b[1] - b[0])) as f64)
                .collect();
            let mean = loo.iter().sum::<f64>() / blocks as f64;
            let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
            MomentEntry {
                p,
                value,
                std_error: var.sqrt(),
            }
        })
        .collect();
    Ok(MomentTable {
        entries,
        alpha: None,
        time: ensemble.time,
        n,
        mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenormalizedEntry {
    pub p: f64,
    /// `z_p = m_p / Γ(ap + b)`.
    pub z: f64,
    pub ln_z: f64,
    /// Standard error of `ln z_p`.
    pub ln_z_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormalizedMoments {
    pub a: f64,
    pub b: f64,
    pub entries: Vec<RenormalizedEntry>,
    /// Smallest `K ≥ 1` with `z_p ≤ K^p` for `0 < p ≤ fit_max_p`.
    pub k: f64,
    pub fit_max_p: f64,
}

impl RenormalizedMoments {
    /// Whether `z_p ≤ K^p` (within three standard errors of `ln z_p`) for all `p ≤ p_max`.
    pub fn geometric_through(&self, p_max: f64) -> bool {
        self.entries
            .iter()
            .filter(|e| e.p > 0.0 && e.p <= p_max + 1e-12)
            .all(|e| e.ln_z <= e.p * self.k.ln() + 3.0 * e.ln_z_error + 1e-12)
    }
}

/// Moment orders used to fit the geometric constant `K`.
pub const RENORMALIZED_FIT_MAX_P: f64 = 4.0;

/// Renormalized moments `z_p = m_p / Γ(ap + b)` evaluated in log space.
pub fn renormalized_moments(table: &MomentTable, a: f64, b: f64) -> Result<RenormalizedMoments> {
    if !(a >= 1.0) || !(b > 0.0 && b < 1.0) {
        return Err(Error::input(format!("renormalization needs a >= 1 and 0 < b < 1 (got {a}, {b})")));
    }
    let mut entries: Vec<RenormalizedEntry> = table
        .entries
        .iter()
        .filter(|e| e.value > 0.0)
        .map(|e| {
            let ln_z = e.value.ln() - ln_gamma(a * e.p + b);
            RenormalizedEntry {
                p: e.p,
                z: ln_z.exp(),
                ln_z,
                ln_z_error: e.std_error / e.value,
            }
        })
        .collect();
    entries.sort_by(|x, y| x.p.total_cmp(&y.p));
    let k = entries
        .iter()
        .filter(|e| e.p > 0.0 && e.p <= RENORMALIZED_FIT_MAX_P + 1e-12)
        .map(|e| (e.ln_z / e.p).exp())
        .fold(1.0, f64::max);
    Ok(RenormalizedMoments {
        a,
        b,
        entries,
        k,
        fit_max_p: RENORMALIZED_FIT_MAX_P,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentInequality {
    pub p: f64,
    pub gamma_p: f64,
    /// `3(1 − γ_p) m_p^{1 + 1/(2p)}`.
    pub lhs: f64,
    /// `γ_p (S_p + S̃_p + m_{1/2} M_p + M_{p+1/2})`.
    pub rhs: f64,
    pub slack: f64,
    /// First-order propagated standard error of the slack.
    pub slack_error: f64,
    /// `γ_p = 1`, so the left side vanishes identically.
    pub trivial: bool,
    pub holds: bool,
}

/// Check the stationary moment inequality at order `p` using the table's moments and the
/// bath moments `M_k`.
pub fn stationary_moment_inequality(table: &MomentTable, bath: &BathParams, p: f64) -> Result<MomentInequality> {
    if !(p >= 1.0) || (2.0 * p).fract() != 0.0 {
        return Err(Error::input(format!("order p = {p} must be a half-integer >= 1")));
    }
    let g = gamma_p(p);
    let kp = ((p + 1.0) / 2.0).floor() as usize;
    // Each term carries (value, ∂slack/∂m, se) for error propagation.
    let mut grads: Vec<(f64, f64)> = Vec::new();
    let m = |q: f64| -> Result<(f64, f64)> {
        let e = table.get(q).ok_or_else(|| Error::input(format!("moment m_{q} missing from table")))?;
        Ok((e.value, e.std_error))
    };
    let mut s = 0.0;
    let mut s_tilde = 0.0;
    for k in 1..=kp {
        let kf = k as f64;
        let c = binomial(p, kf);
        let (a1, e1) = m(kf + 0.5)?;
        let (a2, e2) = m(p - kf)?;
        let (a3, e3) = m(p - kf + 0.5)?;
        let (a4, e4) = m(kf)?;
        let bm_pk = bath_moment(bath, p - kf)?;
        let bm_k = bath_moment(bath, kf)?;
        s += c * (a1 * a2 + a3 * a4);
        s_tilde += c * (a1 * bm_pk + a3 * bm_k);
        grads.push((c * g * (a2 + bm_pk), e1));
        grads.push((c * g * a1, e2));
        grads.push((c * g * (a4 + bm_k), e3));
        grads.push((c * g * a3, e4));
    }
    let (m_half, e_half) = m(0.5)?;
    let (mp, ep) = m(p)?;
    let bm_p = bath_moment(bath, p)?;
    let rhs = g * (s + s_tilde + m_half * bm_p + bath_moment(bath, p + 0.5)?);
    grads.push((g * bm_p, e_half));
    let expo = 1.0 + 1.0 / (2.0 * p);
    let lhs = 3.0 * (1.0 - g) * mp.powf(expo);
    grads.push((-3.0 * (1.0 - g) * expo * mp.powf(expo - 1.0), ep));
    let slack = rhs - lhs;
    let slack_error = grads.iter().map(|(d, e)| (d * e).powi(2)).sum::<f64>().sqrt();
    Ok(MomentInequality {
        p,
        gamma_p: g,
        lhs,
        rhs,
        slack,
        slack_error,
        trivial: g >= 1.0,
        holds: slack > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::MaxwellianParams;
    use crate::special::gamma;
    use crate::velocity::Velocity;
    use crate::InitialCondition;

    fn maxwellian_ensemble(theta: f64, n: usize, seed: u64) -> ParticleEnsemble {
        let ic = InitialCondition::Maxwellian { theta, u: Velocity::ZERO };
        ParticleEnsemble::from_velocities(ic.sample(n, seed), 1.0)
    }

    /// Exact Maxwellian moments as a table with zero error.
    fn exact_table(theta: f64, ps: &[f64]) -> MomentTable {
        MomentTable {
            entries: ps
                .iter()
                .map(|&p| MomentEntry {
                    p,
                    value: (2.0 * theta).powf(p) * gamma(p + 1.5) / gamma(1.5),
                    std_error: 0.0,
                })
                .collect(),
            alpha: None,
            time: 0.0,
            n: 0,
            mass: 1.0,
        }
    }

    #[test]
    fn maxwellian_moments_within_errors() {
        let ens = maxwellian_ensemble(1.0, 200_000, 3);
        let t = moments(&ens, &[0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
        assert_eq!(t.value(0.0).unwrap(), 1.0);
        assert_eq!(t.get(0.0).unwrap().std_error, 0.0);
        let m1 = t.get(1.0).unwrap();
        assert!((m1.value - 3.0).abs() < 3.0 * m1.std_error, "{m1:?}");
        assert!(t.log_convexity_violations().is_empty());
        let m1sq = m1.value * m1.value;
        assert!(m1sq <= t.value(0.5).unwrap() * t.value(1.5).unwrap());
        assert!(moments(&ens, &[9.0]).is_err());
    }

    #[test]
    fn jackknife_error_scales_with_sample_size() {
        let small = moments(&maxwellian_ensemble(1.0, 50_000, 1), &[1.0]).unwrap();
        let large = moments(&maxwellian_ensemble(1.0, 200_000, 2), &[1.0]).unwrap();
        let ratio = small.entries[0].std_error / large.entries[0].std_error;
        assert!(ratio > 1.3 && ratio < 3.0, "{ratio}");
    }

    #[test]
    fn renormalized_gamma_moments_are_one() {
        let a = 1.0;
        let b = 0.5;
        let table = MomentTable {
            entries: (1..=12)
                .map(|k| {
                    let p = 0.5 * k as f64;
                    MomentEntry { p, value: gamma(a * p + b), std_error: 0.0 }
                })
                .collect(),
            alpha: None,
            time: 0.0,
            n: 0,
            mass: 1.0,
        };
        let z = renormalized_moments(&table, a, b).unwrap();
        assert!(z.entries.iter().all(|e| (e.z - 1.0).abs() < 1e-12));
        assert!((z.k - 1.0).abs() < 1e-12);
        assert!(z.geometric_through(6.0));
        assert!(renormalized_moments(&table, 0.5, 0.5).is_err());
        assert!(renormalized_moments(&table, 1.0, 1.0).is_err());
    }

    #[test]
    fn maxwellian_renormalized_moments_are_geometric() {
        let ps: Vec<f64> = (0..=12).map(|k| 0.5 * k as f64).collect();
        let z = renormalized_moments(&exact_table(0.6, &ps), 1.0, 0.5).unwrap();
        assert!(z.geometric_through(6.0));
    }

    #[test]
    fn moment_inequality_for_maxwellian() {
        let bath = BathParams::centered(1.0, 1.0).unwrap();
        let ps: Vec<f64> = (0..=16).map(|k| 0.5 * k as f64).collect();
        let table = exact_table(1.0, &ps);
        for p in [2.0, 3.0, 4.0, 5.0] {
            let r = stationary_moment_inequality(&table, &bath, p).unwrap();
            assert!(r.holds, "{r:?}");
            assert_eq!(r.trivial, p <= 3.0);
        }
        let short = exact_table(1.0, &[0.5, 1.0]);
        assert!(stationary_moment_inequality(&short, &bath, 2.0).is_err());
        let _ = MaxwellianParams::new(1.0, Velocity::ZERO, 1.0).unwrap();
    }
}
