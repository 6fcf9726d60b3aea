//! Stochastic particle integration of `∂t f = Q_α(f, f) + L(f)`.
//!
//! One time step is a Lie splitting: a Nanbu–Babovsky sweep over a random perfect
//! matching for the quadratic operator, then an independent bath trial per particle.
//! Both parts use majorant rejection, and every random draw comes from a stream addressed
//! by `(seed, step, phase, chunk)` so results do not depend on the worker count.

mod init;
pub mod snapshot;

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::BathParams;
use crate::diagnostics::{moments, MomentTable};
use crate::error::{Error, Result};
use crate::kinematics::{exchange, Restitution};
use crate::rng::{self, Phase};
use crate::velocity::Velocity;

pub use init::InitialCondition;
pub use snapshot::{Snapshot, SnapshotHeader};

/// Particles (or particle pairs) per random stream.
pub const CHUNK: usize = 4096;
/// Snapshots in the steady-state detection window.
pub const WINDOW: usize = 20;
/// Trailing snapshots concatenated into the returned steady ensemble.
pub const AVERAGED_SNAPSHOTS: usize = 10;

/// Upper bound on the per-step collision probability of a candidate.
const MAX_STEP_PROBABILITY: f64 = 0.5;

fn default_mass() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_dt() -> f64 {
    0.01
}

fn default_t_end() -> f64 {
    200.0
}

fn default_snapshot_interval() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimConfig {
    pub alpha: Restitution,
    pub bath: BathParams,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Collision majorant; `None` selects `12 √max(Θ0, T_init)`.
    #[serde(default, rename = "vMaxMajorant")]
    pub v_max: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Relative drift tolerance; `None` selects three standard errors of the drift.
    #[serde(default)]
    pub steady_tolerance: Option<f64>,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: f64,
    pub initial: InitialCondition,
    /// Switches for the two collision operators.
    #[serde(default = "yes")]
    pub quadratic: bool,
    #[serde(default = "yes")]
    pub bath_coupling: bool,
}

impl SimConfig {
    /// Defaults used throughout: unit mass, `dt = 0.01`, snapshots every `0.5`.
    pub fn new(alpha: f64, bath: BathParams, n: usize, seed: u64) -> Result<Self> {
        let config = SimConfig {
            alpha: Restitution::new(alpha)?,
            bath,
            n,
            mass: 1.0,
            dt: default_dt(),
            v_max: None,
            seed,
            t_end: default_t_end(),
            steady_tolerance: None,
            snapshot_interval: default_snapshot_interval(),
            initial: InitialCondition::Maxwellian {
                theta: bath.theta0,
                u: bath.u0,
            },
            quadratic: true,
            bath_coupling: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.bath.validate()?;
        self.initial.validate()?;
        Restitution::new(self.alpha.get())?;
        if self.n < 2 {
            return Err(Error::input(format!("N = {} must be at least 2", self.n)));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.mass) || !positive(self.dt) || !positive(self.snapshot_interval) || !(self.t_end >= 0.0) {
            return Err(Error::input("mass, dt and snapshot interval must be positive and t_end non-negative"));
        }
        if let Some(v) = self.v_max {
            if !positive(v) {
                return Err(Error::input(format!("majorant {v} must be positive")));
            }
        }
        if let Some(t) = self.steady_tolerance {
            if !positive(t) {
                return Err(Error::input(format!("steady tolerance {t} must be positive")));
            }
        }
        Ok(())
    }

    pub fn initial_majorant(&self) -> f64 {
        self.v_max
            .unwrap_or_else(|| 12.0 * self.bath.theta0.max(self.initial.temperature()).sqrt())
    }

    /// Steps between snapshots.
    pub fn snapshot_steps(&self) -> u64 {
        ((self.snapshot_interval / self.dt).round() as u64).max(1)
    }

    /// Number of steps needed to reach `t`.
    pub fn steps_until(&self, t: f64) -> u64 {
        (t / self.dt - 1e-9).ceil().max(0.0) as u64
    }
}

/// `N` equally weighted velocity samples of `f(t, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub velocities: Vec<Velocity>,
    /// Mass carried by each particle, `mass / N`.
    pub weight: f64,
    pub time: f64,
    /// Steps taken; with `seed` this addresses the next random streams.
    pub step: u64,
    pub seed: u64,
    pub v_max: f64,
}

impl ParticleEnsemble {
    pub fn from_velocities(velocities: Vec<Velocity>, mass: f64) -> Self {
        let weight = mass / velocities.len().max(1) as f64;
        ParticleEnsemble {
            velocities,
            weight,
            time: 0.0,
            step: 0,
            seed: 0,
            v_max: 0.0,
        }
    }

    pub fn initial(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        Ok(ParticleEnsemble {
            velocities: config.initial.sample(config.n, config.seed),
            weight: config.mass / config.n as f64,
            time: 0.0,
            step: 0,
            seed: config.seed,
            v_max: config.initial_majorant(),
        })
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weight * self.velocities.len() as f64
    }

    pub fn mean_velocity(&self) -> Velocity {
        let n = self.velocities.len() as f64;
        self.velocities.iter().fold(Velocity::ZERO, |a, &v| a + v) * (1.0 / n)
    }

    /// `(m_1/mass − |u|²)/3`.
    pub fn temperature(&self) -> f64 {
        let n = self.velocities.len() as f64;
        let e = self.velocities.iter().map(Velocity::norm_sq).sum::<f64>() / n;
        (e - self.mean_velocity().norm_sq()) / 3.0
    }
}

/// Counters and measured quantities of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub pairs: u64,
    pub quadratic_candidates: u64,
    pub quadratic_collisions: u64,
    pub bath_candidates: u64,
    pub bath_collisions: u64,
    /// Change of `∫ f |v|²` produced by the quadratic part.
    pub quadratic_energy_change: f64,
    /// Mean of `|v − w|³` over the matched pairs before collision.
    pub pair_q3_mean: f64,
    pub max_relative_speed: f64,
    pub majorant_doubled: bool,
}

#[derive(Default)]
struct ChunkStats {
    pairs: u64,
    candidates: u64,
    collisions: u64,
    energy: f64,
    q3: f64,
    max_q: f64,
}

/// Probability that a given unordered pair is matched by a random perfect matching.
fn pair_selection_probability(n: usize) -> f64 {
    let nf = n as f64;
    (n / 2) as f64 / (0.5 * nf * (nf - 1.0))
}

/// Advance the ensemble by one time step.
pub fn step(ensemble: &mut ParticleEnsemble, config: &SimConfig) -> Result<StepStats> {
    let n = ensemble.velocities.len();
    if n < 2 {
        return Err(Error::input("ensemble needs at least two particles"));
    }
    let v_max = ensemble.v_max;
    let mass = ensemble.mass();
    // Each unordered pair collides at rate weight·|q|; the bath (mass equal to the gas)
    // at rate mass·|v − w| per particle.
    let pair_rate = ensemble.weight / pair_selection_probability(n);
    let p_quad = if config.quadratic { config.dt * pair_rate * v_max } else { 0.0 };
    let p_bath = if config.bath_coupling { config.dt * mass * v_max } else { 0.0 };
    let probability = p_quad.max(p_bath);
    if probability >= MAX_STEP_PROBABILITY {
        return Err(Error::TimeStep { probability });
    }
    let seed = ensemble.seed;
    let k = ensemble.step;
    let mut stats = StepStats::default();

    if config.quadratic {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, k, Phase::Pairing, 0));
        let mut buf: Vec<Velocity> = order.iter().map(|&i| ensemble.velocities[i]).collect();
        let paired = 2 * (n / 2);
        let alpha = config.alpha;
        let chunks: Vec<ChunkStats> = buf[..paired]
            .par_chunks_mut(2 * CHUNK)
            .enumerate()
            .map(|(c, block)| {
                let mut r = rng::stream(seed, k, Phase::Quadratic, c as u64);
                let mut s = ChunkStats::default();
                for pair in block.chunks_exact_mut(2) {
                    let (v, w) = (pair[0], pair[1]);
                    let q = (v - w).norm();
                    s.pairs += 1;
                    s.q3 += q * q * q;
                    s.max_q = s.max_q.max(q);
                    if r.random::<f64>() >= p_quad {
                        continue;
                    }
                    s.candidates += 1;
                    if r.random::<f64>() * v_max >= q {
                        continue;
                    }
                    s.collisions += 1;
                    let sigma = rng::unit_vector(&mut r);
                    let dv = exchange(v, w, sigma, alpha);
                    let (vp, wp) = (v + dv, w - dv);
                    s.energy += vp.norm_sq() + wp.norm_sq() - v.norm_sq() - w.norm_sq();
                    pair[0] = vp;
                    pair[1] = wp;
                }
                s
            })
            .collect();
        let mut q3 = 0.0;
        for s in &chunks {
            stats.pairs += s.pairs;
            stats.quadratic_candidates += s.candidates;
            stats.quadratic_collisions += s.collisions;
            stats.quadratic_energy_change += s.energy;
            q3 += s.q3;
            stats.max_relative_speed = stats.max_relative_speed.max(s.max_q);
        }
        stats.quadratic_energy_change *= ensemble.weight;
        stats.pair_q3_mean = q3 / stats.pairs as f64;
        ensemble.velocities = buf;
    }

    if config.bath_coupling {
        let bath = config.bath;
        let e = bath.e;
        let s0 = bath.theta0.sqrt();
        let chunks: Vec<ChunkStats> = ensemble
            .velocities
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, block)| {
                let mut r = rng::stream(seed, k, Phase::Bath, c as u64);
                let mut s = ChunkStats::default();
                for v in block.iter_mut() {
                    if r.random::<f64>() >= p_bath {
                        continue;
                    }
                    s.candidates += 1;
                    let w = bath.u0 + rng::normal3(&mut r) * s0;
                    let q = (*v - w).norm();
                    s.max_q = s.max_q.max(q);
                    if r.random::<f64>() * v_max >= q {
                        continue;
                    }
                    s.collisions += 1;
                    let sigma = rng::unit_vector(&mut r);
                    *v += exchange(*v, w, sigma, e);
                }
                s
            })
            .collect();
        for s in &chunks {
            stats.bath_candidates += s.candidates;
            stats.bath_collisions += s.collisions;
            stats.max_relative_speed = stats.max_relative_speed.max(s.max_q);
        }
    }

    if stats.max_relative_speed > v_max {
        let mut doubled = v_max;
        while doubled < stats.max_relative_speed {
            doubled *= 2.0;
        }
        log::warn!(
            "step {k}: relative speed {:.3} exceeded majorant {v_max:.3}; majorant raised to {doubled:.3}",
            stats.max_relative_speed
        );
        ensemble.v_max = doubled;
        stats.majorant_doubled = true;
    }
    ensemble.step += 1;
    ensemble.time = ensemble.step as f64 * config.dt;
    Ok(stats)
}

/// Power moments `m_0 … m_4` of one snapshot with relative standard errors of `m_1`, `m_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotStats {
    pub time: f64,
    pub step: u64,
    pub moments: [f64; 5],
    pub rel_error_m1: f64,
    pub rel_error_m2: f64,
    pub mean_velocity: Velocity,
}

impl SnapshotStats {
    pub fn of(ensemble: &ParticleEnsemble) -> Self {
        let n = ensemble.velocities.len() as f64;
        let mut sums = [0.0; 5];
        let mut sq = [0.0; 2];
        for v in &ensemble.velocities {
            let e = v.norm_sq();
            let mut pw = 1.0;
            for s in sums.iter_mut() {
                *s += pw;
                pw *= e;
            }
            sq[0] += e * e;
            sq[1] += e * e * e * e;
        }
        let rel = |mean: f64, mean_sq: f64| ((mean_sq - mean * mean).max(0.0) / n).sqrt() / mean;
        let rel_error_m1 = rel(sums[1] / n, sq[0] / n);
        let rel_error_m2 = rel(sums[2] / n, sq[1] / n);
        SnapshotStats {
            time: ensemble.time,
            step: ensemble.step,
            moments: sums.map(|s| s * ensemble.weight),
            rel_error_m1,
            rel_error_m2,
            mean_velocity: ensemble.mean_velocity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub time: f64,
    pub moments: [f64; 5],
    pub drift_m1: Option<f64>,
    pub drift_m2: Option<f64>,
    pub tolerance_m1: Option<f64>,
    pub tolerance_m2: Option<f64>,
    /// Accepted / candidate collisions since the previous record.
    pub acceptance_quadratic: f64,
    pub acceptance_bath: f64,
    pub v_max: f64,
}

/// Write the convergence log as CSV.
pub fn write_convergence_csv<W: Write>(log: &[ConvergenceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time",
        "m0",
        "m1",
        "m2",
        "m3",
        "m4",
        "drift_m1",
        "drift_m2",
        "tolerance_m1",
        "tolerance_m2",
        "acceptance_quadratic",
        "acceptance_bath",
        "v_max",
    ])
    .map_err(csv_error)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in log {
        let mut row = vec![r.time.to_string()];
        row.extend(r.moments.iter().map(|m| m.to_string()));
        row.extend([
            opt(r.drift_m1),
            opt(r.drift_m2),
            opt(r.tolerance_m1),
            opt(r.tolerance_m2),
            r.acceptance_quadratic.to_string(),
            r.acceptance_bath.to_string(),
            r.v_max.to_string(),
        ]);
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Steady state `F_α` extracted from a converged run.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Concatenation of the trailing snapshots (weight `mass / (N·K)`).
    pub ensemble: ParticleEnsemble,
    pub moment_table: MomentTable,
    pub convergence_log: Vec<ConvergenceRecord>,
    /// The live ensemble at detection time, for continuing the run.
    pub final_state: ParticleEnsemble,
    /// The trailing snapshots, oldest first.
    pub window: Vec<Vec<Velocity>>,
    pub converged_at: f64,
}

impl SteadyState {
    /// The averaged window split into its older and newer halves.
    pub fn halves(&self) -> (ParticleEnsemble, ParticleEnsemble) {
        let mass = self.final_state.mass();
        let mid = self.window.len() / 2;
        let join = |s: &[Vec<Velocity>]| ParticleEnsemble::from_velocities(s.concat(), mass);
        (join(&self.window[..mid]), join(&self.window[mid..]))
    }

    pub fn temperature(&self) -> f64 {
        self.ensemble.temperature()
    }
}

/// Relative drift between the two halves of a window of snapshot means.
fn half_drift(values: &[f64]) -> f64 {
    let mid = values.len() / 2;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (a, b) = (mean(&values[..mid]), mean(&values[mid..]));
    (b - a).abs() / mean(values).abs()
}

/// Stateful driver: stepping, snapshots and steady-state detection.
pub struct Simulation {
    config: SimConfig,
    ensemble: ParticleEnsemble,
    stats: VecDeque<SnapshotStats>,
    tail: VecDeque<Vec<Velocity>>,
    log: Vec<ConvergenceRecord>,
    counters: [u64; 4],
}

/// Called at every snapshot with the live ensemble.
pub type Observer<'a> = dyn FnMut(&ParticleEnsemble, &SnapshotStats) -> Result<()> + 'a;

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let ensemble = ParticleEnsemble::initial(&config)?;
        Ok(Simulation::with_ensemble(config, ensemble))
    }

    /// Continue from a snapshot; refuses when the header disagrees with `config`.
    pub fn resume(snapshot: Snapshot, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let diff = snapshot.mismatches(&config);
        if !diff.is_empty() {
            return Err(Error::SnapshotMismatch(diff));
        }
        Ok(Simulation::with_ensemble(config, snapshot.into_ensemble()))
    }

    fn with_ensemble(config: SimConfig, ensemble: ParticleEnsemble) -> Self {
        Simulation {
            config,
            ensemble,
            stats: VecDeque::with_capacity(WINDOW + 1),
            tail: VecDeque::with_capacity(AVERAGED_SNAPSHOTS + 1),
            log: Vec::new(),
            counters: [0; 4],
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    pub fn into_ensemble(self) -> ParticleEnsemble {
        self.ensemble
    }

    pub fn convergence_log(&self) -> &[ConvergenceRecord] {
        &self.log
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(&self.ensemble, &self.config)
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let s = step(&mut self.ensemble, &self.config)?;
        self.counters[0] += s.quadratic_candidates;
        self.counters[1] += s.quadratic_collisions;
        self.counters[2] += s.bath_candidates;
        self.counters[3] += s.bath_collisions;
        Ok(s)
    }

    fn at_snapshot(&self) -> bool {
        self.ensemble.step.is_multiple_of(self.config.snapshot_steps())
    }

    /// Record a snapshot and return `(drift_m1, drift_m2, tol_m1, tol_m2)` once the window is full.
    fn record(&mut self) -> Option<(f64, f64, f64, f64)> {
        let s = SnapshotStats::of(&self.ensemble);
        self.stats.push_back(s);
        if self.stats.len() > WINDOW {
            self.stats.pop_front();
        }
        self.tail.push_back(self.ensemble.velocities.clone());
        if self.tail.len() > AVERAGED_SNAPSHOTS {
            self.tail.pop_front();
        }
        let drift = (self.stats.len() == WINDOW).then(|| {
            let m1: Vec<f64> = self.stats.iter().map(|s| s.moments[1]).collect();
            let m2: Vec<f64> = self.stats.iter().map(|s| s.moments[2]).collect();
            let se1 = self.stats.iter().map(|s| s.rel_error_m1).sum::<f64>() / WINDOW as f64;
            let se2 = self.stats.iter().map(|s| s.rel_error_m2).sum::<f64>() / WINDOW as f64;
            let (t1, t2) = match self.config.steady_tolerance {
                Some(t) => (t, t),
                None => (3.0 * std::f64::consts::SQRT_2 * se1, 3.0 * std::f64::consts::SQRT_2 * se2),
            };
            (half_drift(&m1), half_drift(&m2), t1, t2)
        });
        let rate = |acc: u64, cand: u64| if cand == 0 { 0.0 } else { acc as f64 / cand as f64 };
        self.log.push(ConvergenceRecord {
            time: s.time,
            moments: s.moments,
            drift_m1: drift.map(|d| d.0),
            drift_m2: drift.map(|d| d.1),
            tolerance_m1: drift.map(|d| d.2),
            tolerance_m2: drift.map(|d| d.3),
            acceptance_quadratic: rate(self.counters[1], self.counters[0]),
            acceptance_bath: rate(self.counters[3], self.counters[2]),
            v_max: self.ensemble.v_max,
        });
        self.counters = [0; 4];
        drift
    }

    /// March to `t` (no steady-state detection), calling `observer` at snapshot steps.
    pub fn run_until(&mut self, t: f64, observer: &mut Observer<'_>) -> Result<()> {
        let target = self.config.steps_until(t);
        while self.ensemble.step < target {
            self.step()?;
            if self.at_snapshot() {
                let s = SnapshotStats::of(&self.ensemble);
                observer(&self.ensemble, &s)?;
            }
        }
        Ok(())
    }

    /// March until the `(m_1, m_2)` drift over the trailing window falls below tolerance.
    pub fn run_to_steady(&mut self, observer: &mut Observer<'_>) -> Result<SteadyState> {
        let target = self.config.steps_until(self.config.t_end);
        let mut last = (f64::INFINITY, f64::INFINITY, 0.0, 0.0);
        if self.at_snapshot() && self.stats.is_empty() {
            self.record();
        }
        while self.ensemble.step < target {
            self.step()?;
            if !self.at_snapshot() {
                continue;
            }
            let drift = self.record();
            let s = *self.stats.back().expect("snapshot just recorded");
            observer(&self.ensemble, &s)?;
            if let Some(d) = drift {
                last = d;
                if d.0 <= d.2 && d.1 <= d.3 {
                    return self.steady_state();
                }
            }
        }
        Err(Error::NotConverged {
            t_end: self.config.t_end,
            drift_m1: last.0,
            drift_m2: last.1,
            tol_m1: last.2,
            tol_m2: last.3,
        })
    }

    fn steady_state(&self) -> Result<SteadyState> {
        let window: Vec<Vec<Velocity>> = self.tail.iter().cloned().collect();
        let mut ensemble = ParticleEnsemble::from_velocities(window.concat(), self.ensemble.mass());
        ensemble.time = self.ensemble.time;
        ensemble.step = self.ensemble.step;
        ensemble.seed = self.ensemble.seed;
        ensemble.v_max = self.ensemble.v_max;
        let ps: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
        let moment_table = moments(&ensemble, &ps)?.with_alpha(self.config.alpha.get());
        Ok(SteadyState {
            ensemble,
            moment_table,
            convergence_log: self.log.clone(),
            final_state: self.ensemble.clone(),
            window,
            converged_at: self.ensemble.time,
        })
    }
}

/// Run a fresh simulation to its steady state.
pub fn run_to_steady(config: &SimConfig) -> Result<SteadyState> {
    Simulation::new(*config)?.run_to_steady(&mut |_, _| Ok(()))
}

/// Moment tables at every snapshot from `t = 0` to `t_end`.
pub fn moment_trajectory(config: &SimConfig, p_list: &[f64]) -> Result<Vec<MomentTable>> {
    if let Some(p) = p_list.iter().find(|&&p| !(0.0..=8.0).contains(&p)) {
        return Err(Error::input(format!("moment order {p} outside [0, 8]")));
    }
    let mut sim = Simulation::new(*config)?;
    let alpha = config.alpha.get();
    let mut out = vec![moments(sim.ensemble(), p_list)?.with_alpha(alpha)];
    let mut failure = None;
    sim.run_until(config.t_end, &mut |ens, _| {
        match moments(ens, p_list) {
            Ok(t) => out.push(t.with_alpha(alpha)),
            Err(e) => failure = Some(e),
        }
        Ok(())
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Run `f` on a pool of `workers` threads (`None`: the global pool).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::input(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
