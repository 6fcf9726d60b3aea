use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::background::MaxwellianParams;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::simulator::ParticleEnsemble;
use crate::special::shifted_speed_cdf;

use super::density::{uniform_edges, RadialDensity};

/// Default weight `m⁻¹(v) = exp(a |v|^s)`.
pub const DEFAULT_WEIGHT_A: f64 = 0.1;
pub const DEFAULT_WEIGHT_S: f64 = 0.5;

/// Outer-node share of the norm above which the tail is flagged.
const TAIL_SHARE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormSpace {
    /// `L¹(m⁻¹)`.
    X,
    /// `L¹(⟨v⟩ m⁻¹)`.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorm {
    pub value: f64,
    /// The outermost node carries a non-negligible share, so the weight may outgrow the decay.
    pub divergent_tail: bool,
}

fn weight(r: f64, space: NormSpace, a: f64, s: f64) -> f64 {
    let bracket = match space {
        NormSpace::X => 1.0,
        NormSpace::Y => (1.0 + r * r).sqrt(),
    };
    bracket * (a * r.powf(s)).exp()
}

fn check_weight(a: f64, s: f64) -> Result<()> {
    if !(a > 0.0) || !(s > 0.0 && s <= 1.0) {
        return Err(Error::input(format!("weight needs a > 0 and 0 < s <= 1 (got {a}, {s})")));
    }
    Ok(())
}

/// `∫ |f| m⁻¹` (times `⟨v⟩` in `Y`).
pub fn weighted_norm(f: &GridFunction, space: NormSpace, a: f64, s: f64) -> Result<WeightedNorm> {
    check_weight(a, s)?;
    let terms: Vec<f64> = f
        .nodes
        .iter()
        .zip(&f.weights)
        .zip(&f.values)
        .map(|((&r, &w), &v)| w * v.abs() * weight(r, space, a, s))
        .collect();
    let value: f64 = terms.iter().sum();
    let last = terms.last().copied().unwrap_or(0.0);
    Ok(WeightedNorm {
        value,
        divergent_tail: value > 0.0 && last > TAIL_SHARE * value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxwellDistance {
    /// `‖F − M‖_{L¹}` from shell masses.
    pub d_l1: f64,
    /// Same with the `Y` weight at shell centres.
    pub d_y: f64,
    /// Expected `d_l1` of an exact sample from `M` of the same size.
    pub noise_floor: f64,
    pub noise_floor_y: f64,
    pub maxwellian: MaxwellianParams,
    pub shells: usize,
}

/// Maxwellian with the ensemble's mass, mean velocity and temperature.
pub fn moment_matched_maxwellian(ensemble: &ParticleEnsemble) -> Result<MaxwellianParams> {
    MaxwellianParams::new(ensemble.mass(), ensemble.mean_velocity(), ensemble.temperature())
}

pub fn distance_to_maxwellian(ensemble: &ParticleEnsemble) -> Result<MaxwellDistance> {
    distance_to(ensemble, &moment_matched_maxwellian(ensemble)?)
}

/// Distances between the ensemble's shell histogram and the exact shell masses of `m`.
pub fn distance_to(ensemble: &ParticleEnsemble, m: &MaxwellianParams) -> Result<MaxwellDistance> {
    m.validate()?;
    let hist = RadialDensity::from_ensemble(ensemble)?;
    let shift = m.u.norm();
    let cdf: Vec<f64> = hist.edges.iter().map(|&r| shifted_speed_cdf(r, m.theta, shift)).collect();
    let n = ensemble.len() as f64;
    let (mut d_l1, mut d_y, mut floor, mut floor_y) = (0.0, 0.0, 0.0, 0.0);
    for (c, (&count, centre)) in cdf.windows(2).zip(hist.counts.iter().zip(hist.centres())) {
        let p = c[1] - c[0];
        let diff = (ensemble.weight * count as f64 - m.mass * p).abs();
        let wy = weight(centre, NormSpace::Y, DEFAULT_WEIGHT_A, DEFAULT_WEIGHT_S);
        let sd = ensemble.weight * (2.0 * n * p * (1.0 - p) / PI).sqrt();
        d_l1 += diff;
        d_y += wy * diff;
        floor += sd;
        floor_y += wy * sd;
    }
    let r_last = hist.edges[hist.edges.len() - 1];
    let beyond = (m.mass * (1.0 - cdf[cdf.len() - 1]) - hist.overflow).abs();
    d_l1 += beyond;
    d_y += beyond * weight(r_last, NormSpace::Y, DEFAULT_WEIGHT_A, DEFAULT_WEIGHT_S);
    Ok(MaxwellDistance {
        d_l1,
        d_y,
        noise_floor: floor,
        noise_floor_y: floor_y,
        maxwellian: *m,
        shells: hist.counts.len(),
    })
}

/// `L¹` distance between the speed histograms of two ensembles on `shells` common shells.
pub fn l1_distance(a: &ParticleEnsemble, b: &ParticleEnsemble, shells: usize) -> Result<f64> {
    if shells == 0 {
        return Err(Error::input("l1 distance needs at least one shell"));
    }
    let max = a
        .velocities
        .iter()
        .chain(&b.velocities)
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let edges = uniform_edges(max * (1.0 + 1e-9) + f64::MIN_POSITIVE, shells);
    let ha = RadialDensity::with_edges(a, edges.clone())?;
    let hb = RadialDensity::with_edges(b, edges)?;
    Ok(ha
        .shell_masses()
        .iter()
        .zip(hb.shell_masses())
        .map(|(x, y)| (x - y).abs())
        .sum())
}
