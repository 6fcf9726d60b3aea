use std::fmt;
use std::path::{Path, PathBuf};

use granular_core::{InitialCondition, SimConfig, Velocity};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Simulate,
    SweepAlpha,
    Uniqueness,
    Spectral,
    VerifyKernel,
    VerifyMoments,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scenario::Simulate => "simulate",
            Scenario::SweepAlpha => "sweep-alpha",
            Scenario::Uniqueness => "uniqueness",
            Scenario::Spectral => "spectral",
            Scenario::VerifyKernel => "verify-kernel",
            Scenario::VerifyMoments => "verify-moments",
        };
        f.write_str(name)
    }
}

fn default_detailed_balance_pairs() -> usize {
    10_000
}
fn default_normalization_max_speed() -> f64 {
    10.0
}
fn default_normalization_points() -> usize {
    41
}
fn default_h_speeds() -> Vec<f64> {
    (0..=30).map(|k| 5.0 + 0.5 * k as f64).collect()
}
fn default_h_e_list() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn default_weight_a() -> f64 {
    0.1
}
fn default_weight_s() -> f64 {
    0.5
}
fn default_povzner_pairs() -> usize {
    1000
}
fn default_povzner_alphas() -> Vec<f64> {
    vec![0.3, 0.7, 0.99]
}
fn default_povzner_orders() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}
fn default_energy_alphas() -> Vec<f64> {
    vec![0.5, 0.9]
}
fn default_energy_n() -> usize {
    20_000
}
fn default_energy_steps() -> usize {
    2000
}
fn default_entropy_pairs() -> usize {
    20_000
}
fn default_envelope_points() -> usize {
    200
}
fn default_envelope_radius() -> f64 {
    5.0
}
fn default_tail_tolerance() -> f64 {
    0.3
}
fn default_moment_max_order() -> f64 {
    6.0
}
fn default_determinism_steps() -> u64 {
    40
}
fn default_determinism_workers() -> usize {
    4
}
fn default_inequality_orders() -> Vec<f64> {
    vec![2.0, 3.0, 4.0, 5.0]
}

/// Parameters of the individual checks; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CheckSettings {
    #[serde(default = "default_detailed_balance_pairs")]
    pub detailed_balance_pairs: usize,
    /// Column identity checked on `|w| ∈ [0, normalizationMaxSpeed]`.
    #[serde(default = "default_normalization_max_speed")]
    pub normalization_max_speed: f64,
    #[serde(default = "default_normalization_points")]
    pub normalization_points: usize,
    /// Speeds at which `H(w) m(w) / (1 + |w|^{1−s})` is evaluated.
    #[serde(default = "default_h_speeds")]
    pub h_speeds: Vec<f64>,
    #[serde(default = "default_h_e_list")]
    pub h_e_list: Vec<f64>,
    #[serde(default = "default_weight_a")]
    pub weight_a: f64,
    #[serde(default = "default_weight_s")]
    pub weight_s: f64,
    #[serde(default = "default_povzner_pairs")]
    pub povzner_pairs: usize,
    #[serde(default = "default_povzner_alphas")]
    pub povzner_alphas: Vec<f64>,
    #[serde(default = "default_povzner_orders")]
    pub povzner_orders: Vec<f64>,
    #[serde(default = "default_energy_alphas")]
    pub energy_alphas: Vec<f64>,
    #[serde(default = "default_energy_n")]
    pub energy_n: usize,
    #[serde(default = "default_energy_steps")]
    pub energy_steps: usize,
    #[serde(default = "default_entropy_pairs")]
    pub entropy_pairs: usize,
    #[serde(default = "default_envelope_points")]
    pub envelope_points: usize,
    /// Envelope range in units of `√Θ0`.
    #[serde(default = "default_envelope_radius")]
    pub envelope_radius: f64,
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    /// Largest `p` of the renormalized-moment check.
    #[serde(default = "default_moment_max_order")]
    pub moment_max_order: f64,
    #[serde(default = "default_inequality_orders")]
    pub inequality_orders: Vec<f64>,
    #[serde(default = "default_determinism_steps")]
    pub determinism_steps: u64,
    #[serde(default = "default_determinism_workers")]
    pub determinism_workers: usize,
}

impl Default for CheckSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all check settings have defaults")
    }
}

/// One experiment: a scenario, the base simulation and scenario lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    pub simulation: SimConfig,
    #[serde(default)]
    pub alpha_list: Vec<f64>,
    #[serde(default)]
    pub initial_condition_list: Vec<InitialCondition>,
    /// Bath restitution coefficients of the spectral scenario.
    #[serde(default)]
    pub e_list: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub checks: CheckSettings,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, simulation: SimConfig) -> Self {
        ExperimentConfig {
            scenario: Some(scenario),
            simulation,
            alpha_list: Vec::new(),
            initial_condition_list: Vec::new(),
            e_list: Vec::new(),
            output_dir: None,
            checks: CheckSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        ExperimentConfig::from_json(&text)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario.unwrap_or(Scenario::Simulate)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Apply overrides, fill scenario defaults and validate.
    pub fn materialize(mut self, overrides: &Overrides) -> Result<Self> {
        match (self.scenario, overrides.scenario) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::config(format!("config is for scenario {a}, command line asks for {b}")))
            }
            (_, Some(b)) => self.scenario = Some(b),
            _ => {}
        }
        if self.scenario.is_none() {
            return Err(CliError::config("no scenario given"));
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = Some(dir.clone());
        }
        self.output_dir = Some(self.output_dir());
        if let Some(seed) = overrides.seed {
            self.simulation.seed = seed;
        }
        let sim = &mut self.simulation;
        sim.v_max = Some(sim.initial_majorant());
        let theta0 = sim.bath.theta0;
        let alpha = sim.alpha.get();
        let e = sim.bath.e.get();
        match self.scenario() {
            Scenario::SweepAlpha if self.alpha_list.is_empty() => self.alpha_list = vec![0.8, 0.9, 0.95, 0.99],
            Scenario::Uniqueness => {
                if self.alpha_list.is_empty() {
                    self.alpha_list = vec![alpha];
                }
                if self.initial_condition_list.is_empty() {
                    self.initial_condition_list = default_initial_conditions(theta0);
                }
            }
            Scenario::Spectral if self.e_list.is_empty() => self.e_list = vec![0.3, 0.5, 0.8, 1.0],
            Scenario::VerifyKernel if self.e_list.is_empty() => self.e_list = vec![e],
            _ => {}
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation
            .validate()
            .map_err(|e| CliError::config(format!("simulation: {e}")))?;
        let unit = |name: &str, xs: &[f64], lo_open: bool| -> Result<()> {
            for &x in xs {
                let ok = if lo_open { x > 0.0 && x <= 1.0 } else { (0.0..=1.0).contains(&x) };
                if !ok {
                    return Err(CliError::config(format!("{name} entry {x} outside the allowed range")));
                }
            }
            Ok(())
        };
        unit("alphaList", &self.alpha_list, true)?;
        unit("eList", &self.e_list, false)?;
        let c = &self.checks;
        unit("checks.povznerAlphas", &c.povzner_alphas, true)?;
        unit("checks.energyAlphas", &c.energy_alphas, true)?;
        unit("checks.hEList", &c.h_e_list, false)?;
        for ic in &self.initial_condition_list {
            ic.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::config(msg)) };
        match self.scenario() {
            Scenario::SweepAlpha => need(self.alpha_list.len() >= 2, "sweep-alpha needs at least two alphaList entries")?,
            Scenario::Uniqueness => {
                need(!self.alpha_list.is_empty(), "uniqueness needs alphaList")?;
                need(self.initial_condition_list.len() >= 2, "uniqueness needs two or more initial conditions")?;
            }
            Scenario::Spectral | Scenario::VerifyKernel => need(!self.e_list.is_empty(), "eList is empty")?,
            Scenario::Simulate | Scenario::VerifyMoments => {}
        }
        need(c.detailed_balance_pairs > 0 && c.povzner_pairs > 0 && c.entropy_pairs > 0, "check sample sizes must be positive")?;
        need(c.normalization_points >= 2 && c.normalization_max_speed > 0.0, "normalization range is empty")?;
        need(c.h_speeds.len() >= 3, "checks.hSpeeds needs at least three speeds")?;
        need(c.energy_n >= 2 && c.energy_steps >= 2, "energy check needs N >= 2 and two steps")?;
        need(c.envelope_points >= 2 && c.envelope_radius > 0.0, "envelope range is empty")?;
        need(c.povzner_orders.iter().all(|&p| p >= 1.0), "Povzner orders must be >= 1")?;
        need(c.determinism_steps >= 2 && c.determinism_workers >= 1, "determinism check needs two steps and a worker")?;
        need(c.moment_max_order > 0.0 && c.moment_max_order <= 8.0, "checks.momentMaxOrder must lie in (0, 8]")?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Hot and cold Maxwellians and a two-stream state, all centred at the origin.
pub fn default_initial_conditions(theta0: f64) -> Vec<InitialCondition> {
    vec![
        InitialCondition::Maxwellian { theta: 2.0 * theta0, u: Velocity::ZERO },
        InitialCondition::Maxwellian { theta: 0.1 * theta0, u: Velocity::ZERO },
        InitialCondition::Bimodal {
            theta1: 0.2 * theta0,
            theta2: 0.2 * theta0,
            separation: 3.0 * theta0.sqrt(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scenario": "sweep-alpha",
        "simulation": {
            "alpha": 0.9,
            "bath": { "theta0": 1.0, "e": 0.5 },
            "N": 1000,
            "initial": { "kind": "maxwellian", "theta": 1.0 }
        }
    }"#;

    #[test]
    fn defaults_are_materialized() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap().materialize(&Overrides::default()).unwrap();
        assert_eq!(c.alpha_list, vec![0.8, 0.9, 0.95, 0.99]);
        assert_eq!(c.simulation.dt, 0.01);
        assert_eq!(c.simulation.v_max, Some(12.0));
        assert_eq!(c.output_dir, Some(PathBuf::from("out")));
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"vMaxMajorant\":12.0") && text.contains("\"N\":1000"));
        let again = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn unknown_fields_and_bad_alpha_are_rejected() {
        let bad = MINIMAL.replace("\"N\"", "\"n_particles\"");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.alpha_list = vec![0.5, 1.2];
        let err = c.materialize(&Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            scenario: Some(Scenario::SweepAlpha),
            output_dir: Some(PathBuf::from("elsewhere")),
            seed: Some(99),
        };
        let c = ExperimentConfig::from_json(MINIMAL).unwrap().materialize(&o).unwrap();
        assert_eq!(c.simulation.seed, 99);
        assert_eq!(c.output_dir(), PathBuf::from("elsewhere"));
        let clash = Overrides { scenario: Some(Scenario::Spectral), ..Default::default() };
        assert!(ExperimentConfig::from_json(MINIMAL).unwrap().materialize(&clash).is_err());
    }

    #[test]
    fn uniqueness_gets_three_initial_conditions() {
        let text = MINIMAL.replace("sweep-alpha", "uniqueness");
        let c = ExperimentConfig::from_json(&text).unwrap().materialize(&Overrides::default()).unwrap();
        assert_eq!(c.initial_condition_list.len(), 3);
        assert_eq!(c.alpha_list, vec![0.9]);
    }
}
