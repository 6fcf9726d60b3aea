use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{exchange, Restitution};
use crate::profile::RadialProfile;
use crate::quadrature::SphereRule;
use crate::rng::{self, Phase};
use crate::velocity::Velocity;

const PAIRS_PER_STREAM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyOptions {
    /// Number of sampled `(v, w)` pairs.
    pub pairs: usize,
    pub sphere_polar: usize,
    pub sphere_azimuth: usize,
    pub seed: u64,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions {
            pairs: 20_000,
            sphere_polar: 16,
            sphere_azimuth: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub pairs_used: usize,
    /// Pairs dropped because a pre- or post-collision density was unresolved.
    pub pairs_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyDifference {
    pub alpha: EntropyEstimate,
    pub elastic: EntropyEstimate,
    /// `D_α − D_1` on common pairs and directions.
    pub difference: f64,
    pub difference_error: f64,
}

/// `Φ(x) = x − ln x − 1` from `ln x`.
fn phi(ln_x: f64) -> f64 {
    ln_x.exp_m1() - ln_x
}

/// `|q|` times the direction average of `Φ` for each restitution in `alphas`.
fn pair_integrand<const K: usize>(
    v: Velocity,
    w: Velocity,
    profile: &dyn RadialProfile,
    alphas: [Restitution; K],
    rule: &SphereRule,
) -> Option<[f64; K]> {
    let lv = profile.log_density(v.norm())?;
    let lw = profile.log_density(w.norm())?;
    let q = v - w;
    let mut out = [0.0; K];
    let Some(axis) = q.normalized() else {
        return Some(out);
    };
    let qn = q.norm();
    for (sigma, weight) in rule.oriented(axis) {
        for (o, &alpha) in out.iter_mut().zip(&alphas) {
            let dv = exchange(v, w, sigma, alpha);
            let ln_x = profile.log_density((v + dv).norm())? + profile.log_density((w - dv).norm())? - lv - lw;
            *o += weight * phi(ln_x);
        }
    }
    Some(out.map(|x| qn * x))
}

struct PairSums<const K: usize> {
    used: usize,
    excluded: usize,
    sum: [f64; K],
    sum_sq: [f64; K],
    /// Sum of squared differences between the first and last component.
    diff_sq: f64,
}

fn sample_pairs<const K: usize>(
    samples: &[Velocity],
    profile: &dyn RadialProfile,
    alphas: [Restitution; K],
    opts: &EntropyOptions,
) -> Result<PairSums<K>> {
    if samples.len() < 2 {
        return Err(Error::input("entropy dissipation needs at least two samples"));
    }
    if opts.pairs == 0 || opts.sphere_polar == 0 || opts.sphere_azimuth == 0 {
        return Err(Error::input("entropy options need pairs and sphere nodes"));
    }
    let rule = SphereRule::new(opts.sphere_polar, opts.sphere_azimuth);
    let n = samples.len();
    let streams = opts.pairs.div_ceil(PAIRS_PER_STREAM);
    let partial: Vec<PairSums<K>> = (0..streams)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(opts.seed, 0, Phase::Diagnostics, c as u64);
            let count = PAIRS_PER_STREAM.min(opts.pairs - c * PAIRS_PER_STREAM);
            let mut acc = PairSums { used: 0, excluded: 0, sum: [0.0; K], sum_sq: [0.0; K], diff_sq: 0.0 };
            for _ in 0..count {
                let i = r.random_range(0..n);
                let mut j = r.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                match pair_integrand(samples[i], samples[j], profile, alphas, &rule) {
                    Some(vals) => {
                        acc.used += 1;
                        for ((s, q), v) in acc.sum.iter_mut().zip(&mut acc.sum_sq).zip(vals) {
                            *s += v;
                            *q += v * v;
                        }
                        acc.diff_sq += (vals[0] - vals[K - 1]).powi(2);
                    }
                    None => acc.excluded += 1,
                }
            }
            acc
        })
        .collect();
    let mut total = PairSums { used: 0, excluded: 0, sum: [0.0; K], sum_sq: [0.0; K], diff_sq: 0.0 };
    for p in partial {
        total.used += p.used;
        total.excluded += p.excluded;
        for k in 0..K {
            total.sum[k] += p.sum[k];
            total.sum_sq[k] += p.sum_sq[k];
        }
        total.diff_sq += p.diff_sq;
    }
    if total.used < 2 {
        return Err(Error::input("density unresolved at every sampled pair"));
    }
    Ok(total)
}

fn mean_and_error(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let m = n as f64;
    let mean = sum / m;
    let var = ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
    (mean, (var / m).sqrt())
}

fn estimate<const K: usize>(sums: &PairSums<K>, k: usize, scale: f64) -> EntropyEstimate {
    let (mean, se) = mean_and_error(sums.sum[k], sums.sum_sq[k], sums.used);
    EntropyEstimate {
        value: scale * mean,
        std_error: scale * se,
        pairs_used: sums.used,
        pairs_excluded: sums.excluded,
    }
}

/// Monte Carlo estimate of `D_{H,α}(g)` with `(v, w)` drawn from `samples` of total mass `mass`
/// and log densities taken from `profile`.
pub fn entropy_dissipation(
    samples: &[Velocity],
    mass: f64,
    profile: &dyn RadialProfile,
    alpha: Restitution,
    opts: &EntropyOptions,
) -> Result<EntropyEstimate> {
    let sums = sample_pairs(samples, profile, [alpha], opts)?;
    Ok(estimate(&sums, 0, 0.5 * mass * mass))
}

/// `D_{H,α}(g) − D_{H,1}(g)` with common random numbers.
pub fn entropy_dissipation_difference(
    samples: &[Velocity],
    mass: f64,
    profile: &dyn RadialProfile,
    alpha: Restitution,
    opts: &EntropyOptions,
) -> Result<EntropyDifference> {
    let sums = sample_pairs(samples, profile, [alpha, Restitution::ELASTIC], opts)?;
    let scale = 0.5 * mass * mass;
    let m = sums.used as f64;
    let d_mean = (sums.sum[0] - sums.sum[1]) / m;
    let d_var = ((sums.diff_sq / m - d_mean * d_mean) * m / (m - 1.0)).max(0.0);
    Ok(EntropyDifference {
        alpha: estimate(&sums, 0, scale),
        elastic: estimate(&sums, 1, scale),
        difference: scale * d_mean,
        difference_error: scale * (d_var / m).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::MaxwellianParams;
    use crate::simulator::InitialCondition;

    fn samples(theta: f64) -> Vec<Velocity> {
        InitialCondition::Maxwellian { theta, u: Velocity::ZERO }.sample(20_000, 9)
    }

    #[test]
    fn elastic_maxwellian_has_no_dissipation() {
        let m = MaxwellianParams::new(1.0, Velocity::ZERO, 1.0).unwrap();
        let d = entropy_dissipation(&samples(1.0), 1.0, &m, Restitution::ELASTIC, &EntropyOptions::default()).unwrap();
        assert!(d.value.abs() < 1e-10, "{d:?}");
        assert_eq!(d.pairs_excluded, 0);
    }

    #[test]
    fn inelastic_dissipation_is_positive() {
        let m = MaxwellianParams::new(1.0, Velocity::ZERO, 1.0).unwrap();
        let opts = EntropyOptions { pairs: 4000, ..Default::default() };
        let a = Restitution::new(0.5).unwrap();
        let d = entropy_dissipation(&samples(1.0), 1.0, &m, a, &opts).unwrap();
        assert!(d.value > 3.0 * d.std_error, "{d:?}");
        let diff = entropy_dissipation_difference(&samples(1.0), 1.0, &m, a, &opts).unwrap();
        assert!((diff.alpha.value - d.value).abs() < 1e-12);
        assert!((diff.difference - d.value).abs() < 1e-10);
    }

    #[test]
    fn mismatched_profile_gives_positive_elastic_dissipation() {
        // Samples from one temperature, log density of a different shape.
        struct Exponential;
        impl RadialProfile for Exponential {
            fn density(&self, r: f64) -> Option<f64> {
                Some((-r).exp())
            }
        }
        let opts = EntropyOptions { pairs: 2000, ..Default::default() };
        let d = entropy_dissipation(&samples(1.0), 1.0, &Exponential, Restitution::ELASTIC, &opts).unwrap();
        assert!(d.value > 0.0 && d.value > 3.0 * d.std_error, "{d:?}");
    }

    #[test]
    fn result_is_independent_of_worker_count() {
        let m = MaxwellianParams::new(1.0, Velocity::ZERO, 1.0).unwrap();
        let opts = EntropyOptions { pairs: 3000, ..Default::default() };
        let a = Restitution::new(0.7).unwrap();
        let s = samples(1.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| entropy_dissipation(&s, 1.0, &m, a, &opts).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
