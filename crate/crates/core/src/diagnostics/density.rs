use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{log_linear, GridFunction};
use crate::profile::RadialProfile;
use crate::simulator::ParticleEnsemble;

/// Shells with fewer samples are treated as unresolved.
pub const MIN_SHELL_COUNT: u64 = 10;

fn shell_volume(a: f64, b: f64) -> f64 {
    4.0 * PI / 3.0 * (b * b * b - a * a * a)
}

/// Shell histogram of the speed distribution, normalized as a density in `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialDensity {
    pub edges: Vec<f64>,
    /// Shell mass divided by shell volume.
    pub values: Vec<f64>,
    /// `value / √count`.
    pub errors: Vec<f64>,
    pub counts: Vec<u64>,
    /// Mass carried by one sample.
    pub weight: f64,
    /// Mass beyond the last edge.
    pub overflow: f64,
    #[serde(skip)]
    lookup_nodes: Vec<f64>,
    #[serde(skip)]
    lookup: Vec<f64>,
}

impl RadialDensity {
    /// `⌈√N⌉` equal-width shells from 0 to just past the largest speed.
    pub fn from_ensemble(ensemble: &ParticleEnsemble) -> Result<Self> {
        let speeds = speeds(ensemble);
        let max = speeds.iter().copied().fold(0.0, f64::max);
        let shells = (speeds.len() as f64).sqrt().ceil().max(1.0) as usize;
        let edges = uniform_edges(max * (1.0 + 1e-9) + f64::MIN_POSITIVE, shells);
        RadialDensity::from_speeds(&speeds, ensemble.weight, edges)
    }

    pub fn with_edges(ensemble: &ParticleEnsemble, edges: Vec<f64>) -> Result<Self> {
        RadialDensity::from_speeds(&speeds(ensemble), ensemble.weight, edges)
    }

    pub fn from_speeds(speeds: &[f64], weight: f64, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("shell edges must start at 0 and increase strictly"));
        }
        if speeds.is_empty() {
            return Err(Error::input("no samples to bin"));
        }
        let shells = edges.len() - 1;
        let mut counts = vec![0u64; shells];
        let mut outside = 0u64;
        for &r in speeds {
            let j = edges.partition_point(|&e| e <= r);
            if j == 0 || j > shells {
                outside += 1;
            } else {
                counts[j - 1] += 1;
            }
        }
        let (values, errors) = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, e)| {
                let v = weight * c as f64 / shell_volume(e[0], e[1]);
                (v, if c > 0 { v / (c as f64).sqrt() } else { 0.0 })
            })
            .unzip();
        let mut density = RadialDensity {
            edges,
            values,
            errors,
            counts,
            weight,
            overflow: weight * outside as f64,
            lookup_nodes: Vec::new(),
            lookup: Vec::new(),
        };
        density.lookup_nodes = density.centres();
        density.lookup = density.lookup_values();
        Ok(density)
    }

    pub fn centres(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Mass in each shell.
    pub fn shell_masses(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| self.weight * c as f64).collect()
    }

    /// Binned mass plus overflow.
    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.edges.windows(2))
            .map(|(v, e)| v * shell_volume(e[0], e[1]))
            .sum::<f64>()
            + self.overflow
    }

    /// Innermost shell after which every shell up to the fullest one is resolved.
    fn first_resolved(&self) -> Option<usize> {
        let peak = (0..self.counts.len()).max_by_key(|&k| (self.counts[k], std::cmp::Reverse(k)))?;
        if self.counts[peak] < MIN_SHELL_COUNT {
            return None;
        }
        Some(
            (0..peak)
                .rev()
                .find(|&k| self.counts[k] < MIN_SHELL_COUNT)
                .map_or(0, |k| k + 1),
        )
    }

    /// Centre of the last shell in the resolved run that contains the fullest shell.
    pub fn resolved_max(&self) -> f64 {
        let Some(k0) = self.first_resolved() else {
            return 0.0;
        };
        let peak = (k0..self.counts.len()).max_by_key(|&k| (self.counts[k], std::cmp::Reverse(k))).unwrap_or(k0);
        let k = peak + self.counts[peak..].iter().take_while(|&&c| c >= MIN_SHELL_COUNT).count();
        0.5 * (self.edges[k - 1] + self.edges[k])
    }

    /// Shell centres as nodes with shell volumes as weights.
    pub fn to_grid_function(&self) -> GridFunction {
        let nodes = self.centres();
        let weights = self.edges.windows(2).map(|e| shell_volume(e[0], e[1])).collect();
        GridFunction {
            nodes,
            weights,
            values: self.values.clone(),
        }
    }

    /// Values used for lookups: unresolved shells set to zero, except that shells inside the
    /// innermost resolved one take the average over the ball they span together with it.
    fn lookup_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .values
            .iter()
            .zip(&self.counts)
            .map(|(&v, &c)| if c >= MIN_SHELL_COUNT { v } else { 0.0 })
            .collect();
        if let Some(k0) = self.first_resolved() {
            let inner: u64 = self.counts[..=k0].iter().sum();
            let ball = self.weight * inner as f64 / shell_volume(0.0, self.edges[k0 + 1]);
            out[..=k0].iter_mut().for_each(|v| *v = ball);
        }
        out
    }
}

impl RadialProfile for RadialDensity {
    /// Log-linear interpolation between shell centres; `None` next to unresolved shells.
    fn density(&self, speed: f64) -> Option<f64> {
        self.log_density(speed).map(f64::exp)
    }

    fn log_density(&self, speed: f64) -> Option<f64> {
        log_linear(&self.lookup_nodes, &self.lookup, speed)
    }
}

/// Fine bins used to pre-aggregate speeds before kernel smoothing.
const FINE_BINS: usize = 4096;

/// Gaussian kernel density estimate of the velocity density, averaged over directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothedDensity {
    pub bandwidth: f64,
    /// Centres and masses of the fine speed bins.
    bin_speeds: Vec<f64>,
    bin_masses: Vec<f64>,
    /// Speed beyond which fewer than `MIN_SHELL_COUNT` samples remain.
    pub resolved_max: f64,
}

impl SmoothedDensity {
    /// Bandwidth `h = σ (4 / (5N))^{1/7}` with `σ²` the per-component variance.
    pub fn from_ensemble(ensemble: &ParticleEnsemble) -> Result<Self> {
        let n = ensemble.len();
        if n < 2 {
            return Err(Error::input("kernel density needs at least two samples"));
        }
        let h = ensemble.temperature().sqrt() * (4.0 / (5.0 * n as f64)).powf(1.0 / 7.0);
        SmoothedDensity::with_bandwidth(ensemble, h)
    }

    pub fn with_bandwidth(ensemble: &ParticleEnsemble, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::input(format!("bandwidth must be positive (got {bandwidth})")));
        }
        let mut speeds = speeds(ensemble);
        if speeds.is_empty() {
            return Err(Error::input("no samples to smooth"));
        }
        speeds.sort_by(f64::total_cmp);
        let max = speeds[speeds.len() - 1] * (1.0 + 1e-9) + f64::MIN_POSITIVE;
        let dr = max / FINE_BINS as f64;
        let mut bin_masses = vec![0.0; FINE_BINS];
        for &r in &speeds {
            bin_masses[((r / dr) as usize).min(FINE_BINS - 1)] += ensemble.weight;
        }
        let bin_speeds = (0..FINE_BINS).map(|k| (k as f64 + 0.5) * dr).collect();
        let tail = (MIN_SHELL_COUNT as usize).min(speeds.len());
        Ok(SmoothedDensity {
            bandwidth,
            bin_speeds,
            bin_masses,
            resolved_max: speeds[speeds.len() - tail],
        })
    }

    /// Estimate at speed `r`, without range checks.
    pub fn evaluate(&self, r: f64) -> f64 {
        let h = self.bandwidth;
        let norm = (2.0 * PI * h * h).powf(-1.5);
        self.bin_speeds
            .iter()
            .zip(&self.bin_masses)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&rho, &m)| m * angular_kernel(r, rho, h))
            .sum::<f64>()
            * norm
    }
}

/// Direction average of `exp(−|x − y|²/2h²)` over `|x| = r`, `|y| = ρ`.
fn angular_kernel(r: f64, rho: f64, h: f64) -> f64 {
    let x = r * rho / (h * h);
    let d = r - rho;
    let base = (-d * d / (2.0 * h * h)).exp();
    if x < 1e-8 {
        (-(r * r + rho * rho) / (2.0 * h * h)).exp()
    } else {
        base * -(-2.0 * x).exp_m1() / (2.0 * x)
    }
}

impl RadialProfile for SmoothedDensity {
    /// `None` beyond the resolved range.
    fn density(&self, speed: f64) -> Option<f64> {
        (speed >= 0.0 && speed <= self.resolved_max)
            .then(|| self.evaluate(speed))
            .filter(|&v| v > 0.0)
    }
}

fn speeds(ensemble: &ParticleEnsemble) -> Vec<f64> {
    ensemble.velocities.iter().map(|v| v.norm()).collect()
}

pub(crate) fn uniform_edges(max: f64, shells: usize) -> Vec<f64> {
    (0..=shells).map(|k| max * k as f64 / shells as f64).collect()
}
