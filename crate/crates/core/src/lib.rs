//! Kinetic simulation and numerical analysis of a granular gas driven by a Maxwellian
//! thermal bath.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinematics`]: binary collision laws and Povzner constants,
//! - [`background`]: bath Maxwellian, collision frequency and the linear gain kernel,
//! - [`simulator`]: stochastic particle integration and steady-state extraction,
//! - [`spectral`]: radial discretization of the linear and linearized operators,
//! - [`diagnostics`]: moments, tails, entropy dissipation, norms and envelopes.

// Guards written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kinematics;
pub mod profile;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod spectral;
pub mod special;
pub mod velocity;

pub use background::{BathParams, KernelParams, MaxwellianParams};
pub use diagnostics::{MomentTable, RadialDensity, TailFit};
pub use error::{Error, Result};
pub use grid::{GridFunction, SpeedGrid};
pub use kinematics::{CollisionOutcome, PovznerCoeffs, Restitution};
pub use profile::RadialProfile;
pub use simulator::{InitialCondition, ParticleEnsemble, SimConfig, Simulation, SteadyState};
pub use velocity::Velocity;
