use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Phase};
use crate::velocity::Velocity;

use super::CHUNK;

/// Initial velocity distributions. All have unit-free parameters in velocity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    Maxwellian {
        theta: f64,
        #[serde(default)]
        u: Velocity,
    },
    /// Equal mixture of Maxwellians with temperatures `theta1`, `theta2`, centred at
    /// `∓separation/2` along the x axis.
    Bimodal { theta1: f64, theta2: f64, separation: f64 },
    UniformBall { radius: f64 },
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialCondition::Maxwellian { theta, u } => theta > 0.0 && theta.is_finite() && u.is_finite(),
            InitialCondition::Bimodal { theta1, theta2, separation } => {
                theta1 > 0.0 && theta2 > 0.0 && theta1.is_finite() && theta2.is_finite() && separation.is_finite()
            }
            InitialCondition::UniformBall { radius } => radius > 0.0 && radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid initial condition {self:?}")))
        }
    }

    /// Temperature `E|V − EV|²/3` of the distribution.
    pub fn temperature(&self) -> f64 {
        match *self {
            InitialCondition::Maxwellian { theta, .. } => theta,
            InitialCondition::Bimodal { theta1, theta2, separation } => {
                0.5 * (theta1 + theta2) + separation * separation / 12.0
            }
            InitialCondition::UniformBall { radius } => radius * radius / 5.0,
        }
    }

    fn sample_one<R: Rng>(&self, index: usize, n: usize, rng: &mut R) -> Velocity {
        match *self {
            InitialCondition::Maxwellian { theta, u } => u + rng::normal3(rng) * theta.sqrt(),
            InitialCondition::Bimodal { theta1, theta2, separation } => {
                let half = Velocity::new(0.5 * separation, 0.0, 0.0);
                if index < n / 2 {
                    rng::normal3(rng) * theta1.sqrt() - half
                } else {
                    rng::normal3(rng) * theta2.sqrt() + half
                }
            }
            InitialCondition::UniformBall { radius } => {
                let r = radius * rng.random::<f64>().cbrt();
                rng::unit_vector(rng) * r
            }
        }
    }

    /// `n` samples drawn from the streams `(seed, 0, Init, chunk)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Velocity> {
        let mut out = vec![Velocity::ZERO; n];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, block)| {
            let mut r = rng::stream(seed, 0, Phase::Init, c as u64);
            for (k, v) in block.iter_mut().enumerate() {
                *v = self.sample_one(c * CHUNK + k, n, &mut r);
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temperature_of(vs: &[Velocity]) -> f64 {
        let n = vs.len() as f64;
        let mean = vs.iter().fold(Velocity::ZERO, |a, &v| a + v) * (1.0 / n);
        vs.iter().map(|v| (*v - mean).norm_sq()).sum::<f64>() / (3.0 * n)
    }

    #[test]
    fn sampled_temperatures_match() {
        let ics = [
            InitialCondition::Maxwellian { theta: 2.0, u: Velocity::new(1.0, 0.0, 0.0) },
            InitialCondition::Bimodal { theta1: 0.5, theta2: 1.5, separation: 4.0 },
            InitialCondition::UniformBall { radius: 3.0 },
        ];
        for ic in ics {
            let vs = ic.sample(200_000, 11);
            let t = temperature_of(&vs);
            assert!((t / ic.temperature() - 1.0).abs() < 0.02, "{ic:?}: {t}");
        }
    }

    #[test]
    fn serde_tags() {
        let ic: InitialCondition = serde_json::from_str(r#"{"kind":"uniform-ball","radius":2.0}"#).unwrap();
        assert_eq!(ic, InitialCondition::UniformBall { radius: 2.0 });
        let ic: InitialCondition = serde_json::from_str(r#"{"kind":"maxwellian","theta":1.0}"#).unwrap();
        assert_eq!(ic, InitialCondition::Maxwellian { theta: 1.0, u: Velocity::ZERO });
        assert!(InitialCondition::UniformBall { radius: -1.0 }.validate().is_err());
    }
}
