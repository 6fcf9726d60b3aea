//! Numerical checks, one per acceptance criterion.

use std::path::Path;

use granular_core::background::{elastic_steady_state, h_weighted, kernel_k};
use granular_core::diagnostics::{
    distance_to, entropy_dissipation_difference, l1_distance, moments, pointwise_bounds_check, renormalized_moments,
    tail_order_fit, EntropyOptions, SmoothedDensity,
};
use granular_core::kinematics::{gamma_alpha_p, sphere_average_gain, TestFunction};
use granular_core::quadrature::SphereRule;
use granular_core::simulator::{self, Snapshot};
use granular_core::spectral::{
    default_grid, discretize_l, discretize_linearized, gap_lower_bound, gap_refinement, solve_mean_zero, spectral_gap,
    OperatorKind, SpectrumReport, RESIDUAL_TOL,
};
use granular_core::{
    BathParams, InitialCondition, KernelParams, ParticleEnsemble, RadialDensity, RadialProfile, Restitution, SimConfig,
    Simulation, SteadyState, Velocity,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::CheckSettings;
use crate::error::{CliError, Context, Result};
use crate::stats::{linear_fit, mean_and_error, spearman};

/// Criterion identifiers and short names.
pub const CRITERIA: [(u8, &str); 14] = [
    (1, "elastic steady temperature"),
    (2, "detailed balance of the bath kernel"),
    (3, "bath kernel normalization"),
    (4, "spectral gap bound of L"),
    (5, "energy dissipation identity"),
    (6, "Povzner inequalities"),
    (7, "weighted kernel integral bound"),
    (8, "elastic-limit convergence"),
    (9, "uniqueness of the steady state"),
    (10, "Gaussian tails"),
    (11, "pointwise Maxwellian envelope"),
    (12, "linearized operator inversion"),
    (13, "entropy-dissipation continuity"),
    (14, "determinism"),
];

pub fn criterion_name(id: u8) -> &'static str {
    CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown")
}

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    /// Measured value against threshold, in one line.
    pub summary: String,
    pub details: Value,
}

impl Check {
    pub fn new(criterion: u8, passed: bool, summary: impl Into<String>, details: Value) -> Self {
        Check {
            criterion,
            name: criterion_name(criterion).to_string(),
            passed,
            summary: summary.into(),
            details,
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(criterion: u8, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Check::new(criterion, false, reason.clone(), json!({ "error": reason }))
    }
}

fn bath(theta0: f64, u0: Velocity, e: f64) -> Result<BathParams> {
    BathParams::new(u0, theta0, e).context(|| format!("bath with e = {e}"))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Criterion 1: steady temperature of the elastic gas equals `Θ#`.
pub fn elastic_temperature(steady: &SteadyState, bath: &BathParams) -> Check {
    let target = bath.steady_temperature();
    let t = steady.temperature();
    let rel = (t / target - 1.0).abs();
    Check::new(
        1,
        rel <= 0.02,
        format!("T = {t:.5}, Θ# = {target:.5}, relative deviation {rel:.2e} (limit 2e-2)"),
        json!({ "temperature": t, "target": target, "relativeDeviation": rel, "tolerance": 0.02,
                "convergedAt": steady.converged_at }),
    )
}

/// Criterion 2: `k(v,w) M(w) = k(w,v) M(v)` on random pairs.
pub fn detailed_balance(theta0: f64, u0: Velocity, e_list: &[f64], pairs: usize, seed: u64) -> Result<Check> {
    let mut per_e = Vec::new();
    let mut worst = 0.0f64;
    for &e in e_list {
        let b = bath(theta0, u0, e)?;
        let kp = KernelParams::calibrate(&b).context(|| format!("calibrating e = {e}"))?;
        let m = elastic_steady_state(&b);
        // Sample wider than the bath to probe the tails.
        let ic = InitialCondition::Maxwellian { theta: 2.0 * theta0, u: u0 };
        let vs = ic.sample(pairs, seed);
        let ws = ic.sample(pairs, seed.wrapping_add(1));
        let (mut max_defect, mut skipped) = (0.0f64, 0usize);
        for (&v, &w) in vs.iter().zip(&ws) {
            let a = kernel_k(&kp, v, w).context(|| "kernel".into())? * m.density(w);
            let c = kernel_k(&kp, w, v).context(|| "kernel".into())? * m.density(v);
            let scale = a.max(c);
            if scale < 1e-290 {
                skipped += 1;
                continue;
            }
            max_defect = max_defect.max((a - c).abs() / scale);
        }
        worst = worst.max(max_defect);
        per_e.push(json!({ "e": e, "maxRelativeDefect": max_defect, "pairs": pairs, "underflowSkipped": skipped }));
    }
    Ok(Check::new(
        2,
        worst < 1e-10,
        format!("max relative defect {worst:.2e} over {pairs} pairs per e (limit 1e-10)"),
        json!({ "perE": per_e, "tolerance": 1e-10 }),
    ))
}

/// Criterion 3: `∫ k(v,w) dv = σ(w)` after calibration.
pub fn kernel_normalization(theta0: f64, u0: Velocity, e_list: &[f64], max_speed: f64, points: usize) -> Result<Check> {
    let speeds = linspace(0.0, max_speed, points);
    let mut reports = Vec::new();
    let mut worst = 0.0f64;
    for &e in e_list {
        let kp = KernelParams::calibrate(&bath(theta0, u0, e)?).context(|| format!("calibrating e = {e}"))?;
        let rep = kp.calibration_report(&speeds).context(|| format!("column identity at e = {e}"))?;
        let max = rep.column.iter().filter_map(|c| c.relative_residual).fold(0.0, f64::max);
        worst = worst.max(max);
        reports.push(json!({ "e": e, "maxColumnResidual": max, "calibration": rep }));
    }
    Ok(Check::new(
        3,
        worst <= 1e-5,
        format!("max column residual {worst:.2e} on |w| <= {max_speed} (limit 1e-5)"),
        json!({ "perE": reports, "tolerance": 1e-5 }),
    ))
}

/// Criterion 4: the gap of `L` exceeds the explicit bound and is grid-stable.
pub fn spectral_gap_bound(theta0: f64, e_list: &[f64]) -> Result<(Check, Vec<SpectrumReport>)> {
    let mut rows = Vec::new();
    let mut spectra = Vec::new();
    let mut ok = true;
    for &e in e_list {
        let b = bath(theta0, Velocity::ZERO, e)?;
        let ctx = || format!("operator L at e = {e}");
        let op = discretize_l(&default_grid(&b).context(ctx)?, &b).context(ctx)?;
        let gap = spectral_gap(&op).context(ctx)?;
        let refinement = gap_refinement(OperatorKind::LinearL, &b).context(ctx)?;
        let bound = gap_lower_bound(&b);
        let pass = gap.gap >= bound && refinement.relative_change < 0.01;
        ok &= pass;
        rows.push(json!({ "e": e, "gap": gap.gap, "bound": bound, "refinement": refinement, "passed": pass }));
        spectra.push(SpectrumReport::new(&op, &gap));
    }
    let min_ratio = rows
        .iter()
        .map(|r| r["gap"].as_f64().unwrap_or(0.0) / r["bound"].as_f64().unwrap_or(1.0))
        .fold(f64::INFINITY, f64::min);
    let max_change = rows
        .iter()
        .map(|r| r["refinement"]["relativeChange"].as_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Ok((
        Check::new(
            4,
            ok,
            format!("min gap/bound {min_ratio:.3} (limit 1), max grid-doubling change {max_change:.2e} (limit 1e-2)"),
            json!({ "perE": rows }),
        ),
        spectra,
    ))
}

/// Criterion 12: `𝓛₁ M ≈ 0`, mean-zero solves and round trips.
pub fn linearized_inversion(theta0: f64, e_list: &[f64]) -> Result<(Check, Vec<SpectrumReport>)> {
    let mut rows = Vec::new();
    let mut spectra = Vec::new();
    let mut ok = true;
    for &e in e_list {
        let b = bath(theta0, Velocity::ZERO, e)?;
        let ctx = || format!("operator 𝓛₁ at e = {e}");
        let op = discretize_linearized(&default_grid(&b).context(ctx)?, &b).context(ctx)?;
        let m = &op.maxwellian;
        let f: Vec<f64> = op
            .grid
            .nodes
            .iter()
            .map(|&r| m.radial_density(r) * ((1.3 * r).sin() + 0.5 * (0.7 * r * r).cos()))
            .collect();
        let g = op.apply(&f).context(ctx)?;
        let h = solve_mean_zero(&op, &g).context(ctx)?;
        let ah = op.apply(&h).context(ctx)?;
        let diff: Vec<f64> = ah.iter().zip(&g).map(|(a, b)| a - b).collect();
        let solve_residual = op.norm(&diff) / op.norm(&g);
        // f without its null component, in the scaled space.
        let n = &op.null_vector;
        let x: Vec<f64> = f.iter().zip(&op.scale).map(|(f, d)| f * d).collect();
        let c: f64 = x.iter().zip(n.iter()).map(|(x, n)| x * n).sum();
        let expected: Vec<f64> = x.iter().zip(n.iter()).zip(&op.scale).map(|((x, n), d)| (x - c * n) / d).collect();
        let err: Vec<f64> = h.iter().zip(&expected).map(|(a, b)| a - b).collect();
        let round_trip = op.norm(&err) / op.norm(&expected);
        let residual = op.calibration.residual;
        let pass = residual <= RESIDUAL_TOL && solve_residual <= 1e-8 && round_trip <= 1e-8;
        ok &= pass;
        let gap = spectral_gap(&op).context(ctx)?;
        rows.push(json!({
            "e": e, "nullResidual": residual, "solveResidual": solve_residual, "roundTripError": round_trip,
            "gap": gap.gap, "calibration": op.calibration, "passed": pass,
        }));
        spectra.push(SpectrumReport::new(&op, &gap));
    }
    let worst = |key: &str| rows.iter().map(|r| r[key].as_f64().unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    Ok((
        Check::new(
            12,
            ok,
            format!(
                "null residual {:.2e} (limit 1e-5), solve residual {:.2e} (limit 1e-8), round trip {:.2e} (limit 1e-8)",
                worst("nullResidual"),
                worst("solveResidual"),
                worst("roundTripError")
            ),
            json!({ "perE": rows }),
        ),
        spectra,
    ))
}

/// Criterion 5: per-step energy change of the quadratic part against the weak-form prediction.
pub fn energy_dissipation(base: &SimConfig, settings: &CheckSettings) -> Result<Check> {
    let mut rows = Vec::new();
    let mut ok = true;
    for &alpha in &settings.energy_alphas {
        let mut cfg = *base;
        cfg.alpha = Restitution::new(alpha).context(|| "alpha".into())?;
        cfg.n = settings.energy_n;
        cfg.v_max = None;
        let mut ens = ParticleEnsemble::initial(&cfg).context(|| "energy check ensemble".into())?;
        let n = ens.len() as f64;
        let factor = -cfg.dt * (1.0 - alpha * alpha) / 8.0 * ens.weight * ens.weight * n * (n - 1.0);
        let mut diffs = Vec::with_capacity(settings.energy_steps);
        let (mut observed, mut predicted) = (0.0, 0.0);
        for _ in 0..settings.energy_steps {
            let s = simulator::step(&mut ens, &cfg).context(|| "energy check step".into())?;
            let pred = factor * s.pair_q3_mean;
            observed += s.quadratic_energy_change;
            predicted += pred;
            diffs.push(s.quadratic_energy_change - pred);
        }
        let (mean, se) = mean_and_error(&diffs);
        let z = if se > 0.0 { mean / se } else { f64::INFINITY * mean.abs() };
        let pass = z.abs() <= 3.0;
        ok &= pass;
        rows.push(json!({
            "alpha": alpha, "steps": settings.energy_steps, "n": cfg.n,
            "observedTotal": observed, "predictedTotal": predicted, "ratio": observed / predicted,
            "meanDifference": mean, "stdError": se, "zScore": z, "passed": pass,
        }));
    }
    let zmax = rows.iter().map(|r| r["zScore"].as_f64().unwrap_or(f64::INFINITY).abs()).fold(0.0, f64::max);
    Ok(Check::new(
        5,
        ok,
        format!("largest |observed − predicted| = {zmax:.2}σ (limit 3σ)"),
        json!({ "perAlpha": rows }),
    ))
}

/// Criterion 6: pointwise Povzner bounds and the constants `γ_{α,p}`.
pub fn povzner(settings: &CheckSettings, seed: u64) -> Result<Check> {
    let rule = SphereRule::new(16, 16);
    let ic = InitialCondition::Maxwellian { theta: 1.0, u: Velocity::ZERO };
    let vs = ic.sample(settings.povzner_pairs, seed);
    let ws = ic.sample(settings.povzner_pairs, seed.wrapping_add(1));
    let mut rows = Vec::new();
    let mut ok = true;
    for &p in &settings.povzner_orders {
        let elastic = gamma_alpha_p(p, Restitution::ELASTIC).context(|| format!("γ at p = {p}"))?;
        let elastic_error = (elastic.gamma_alpha_p - 2.0 / (p + 1.0)).abs();
        let elastic_ok = elastic_error <= 1e-8;
        ok &= elastic_ok;
        rows.push(json!({ "alpha": 1.0, "p": p, "gamma": elastic.gamma_alpha_p, "exact": 2.0 / (p + 1.0),
                          "error": elastic_error, "passed": elastic_ok }));
        for &alpha in &settings.povzner_alphas {
            let a = Restitution::new(alpha).context(|| "alpha".into())?;
            let coeffs = gamma_alpha_p(p, a).context(|| format!("γ at p = {p}, α = {alpha}"))?;
            let gamma = coeffs.gamma_alpha_p;
            let mut worst = 0.0f64;
            for (&v, &w) in vs.iter().zip(&ws) {
                let lhs = sphere_average_gain(v, w, a, TestFunction::Power(p), &rule).context(|| "sphere average".into())?;
                let rhs = (v.norm_sq() + w.norm_sq()).powf(p);
                worst = worst.max(lhs / rhs);
            }
            let pointwise = worst <= gamma * (1.0 + 1e-10);
            // γ_{α,1} = 1 for every α, so the strict bound is meaningful only for p > 1.
            let strict = if alpha < 1.0 && p > 1.0 {
                gamma < coeffs.gamma_p
            } else {
                (gamma - coeffs.gamma_p).abs() <= 1e-10 || gamma < coeffs.gamma_p
            };
            let pass = pointwise && strict;
            ok &= pass;
            rows.push(json!({
                "alpha": alpha, "p": p, "gamma": gamma, "gammaP": coeffs.gamma_p,
                "maxRatio": worst, "pointwise": pointwise, "strict": strict, "passed": pass,
            }));
        }
    }
    Ok(Check::new(
        6,
        ok,
        format!(
            "{} pairs, p ∈ {:?}, α ∈ {:?}: {}",
            settings.povzner_pairs,
            settings.povzner_orders,
            settings.povzner_alphas,
            if ok { "all bounds hold" } else { "a bound fails" }
        ),
        json!({ "rows": rows }),
    ))
}

/// Criterion 7: no growth of `H(w) m(w) / (1 + |w|^{1−s})` on the tested speeds.
pub fn weighted_integral_bound(theta0: f64, settings: &CheckSettings) -> Result<Check> {
    let (a, s) = (settings.weight_a, settings.weight_s);
    let mut rows = Vec::new();
    let mut ok = true;
    for &e in &settings.h_e_list {
        let kp = KernelParams::calibrate(&bath(theta0, Velocity::ZERO, e)?).context(|| format!("calibrating e = {e}"))?;
        let mut ratios = Vec::with_capacity(settings.h_speeds.len());
        for &w in &settings.h_speeds {
            let h = h_weighted(&kp, Velocity::new(w, 0.0, 0.0), a, s).context(|| format!("H at |w| = {w}"))?;
            ratios.push(h.value * (-a * w.powf(s)).exp() / (1.0 + w.powf(1.0 - s)));
        }
        let rho = spearman(&settings.h_speeds, &ratios);
        let pass = rho < 0.5;
        ok &= pass;
        rows.push(json!({ "e": e, "spearman": rho, "speeds": settings.h_speeds, "ratios": ratios, "passed": pass }));
    }
    let rho_max = rows.iter().map(|r| r["spearman"].as_f64().unwrap_or(1.0)).fold(f64::NEG_INFINITY, f64::max);
    Ok(Check::new(
        7,
        ok,
        format!("largest Spearman ρ {rho_max:.3} (limit 0.5)"),
        json!({ "a": a, "s": s, "perE": rows }),
    ))
}

/// Self-distance of a run: `L¹` between the older and newer halves of its steady window.
pub fn noise_floor(steady: &SteadyState, shells: usize) -> Result<f64> {
    let (a, b) = steady.halves();
    l1_distance(&a, &b, shells).context(|| "noise floor".into())
}

/// Shell count used for distances between steady ensembles.
pub fn shell_count(steady: &SteadyState) -> usize {
    (steady.ensemble.len() as f64).sqrt().ceil() as usize
}

/// Criterion 8: `‖F_α − M‖₁` decreases along the sweep and ends at the noise floor.
pub fn elastic_limit(runs: &[(f64, &SteadyState)], bath: &BathParams) -> Result<Check> {
    let m = elastic_steady_state(bath);
    let mut rows = Vec::new();
    let mut dists = Vec::new();
    let mut floors = Vec::new();
    for &(alpha, s) in runs {
        let d = distance_to(&s.ensemble, &m).context(|| format!("distance at α = {alpha}"))?;
        let floor = noise_floor(s, d.shells)?;
        rows.push(json!({ "alpha": alpha, "distance": d.d_l1, "distanceY": d.d_y, "noiseFloor": floor,
                          "binomialFloor": d.noise_floor, "shells": d.shells }));
        dists.push(d.d_l1);
        floors.push(floor);
    }
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let last = dists.last().copied().unwrap_or(f64::NAN);
    let floor = floors.last().copied().unwrap_or(f64::NAN);
    let at_floor = last < 3.0 * floor;
    Ok(Check::new(
        8,
        decreasing && at_floor,
        format!(
            "distances {:?} {}; last {last:.4} vs 3 × floor {:.4}",
            dists.iter().map(|d| (d * 1e4).round() / 1e4).collect::<Vec<_>>(),
            if decreasing { "strictly decreasing" } else { "not strictly decreasing" },
            3.0 * floor
        ),
        json!({ "runs": rows, "strictlyDecreasing": decreasing, "lastBelowThreeFloors": at_floor }),
    ))
}

/// Pairwise steady-state distances for one `α` against three times the noise floor.
pub fn singleton(states: &[&SteadyState]) -> Result<(bool, Value)> {
    let shells = shell_count(states[0]);
    let floor = noise_floor(states[0], shells)?;
    let mut pairs = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = l1_distance(&states[i].ensemble, &states[j].ensemble, shells).context(|| "pairwise distance".into())?;
            worst = worst.max(d);
            pairs.push(json!({ "i": i, "j": j, "distance": d }));
        }
    }
    let pass = worst < 3.0 * floor;
    Ok((pass, json!({ "noiseFloor": floor, "shells": shells, "maxDistance": worst, "pairs": pairs, "passed": pass })))
}

/// Criterion 10: tail order near 2 and geometric renormalized moments.
pub fn gaussian_tail(alpha: f64, steady: &SteadyState, settings: &CheckSettings) -> Result<Check> {
    let fit = tail_order_fit(&steady.ensemble).context(|| "tail fit".into())?;
    let ps: Vec<f64> = (0..=(2.0 * settings.moment_max_order).round() as usize).map(|k| 0.5 * k as f64).collect();
    let table = moments(&steady.ensemble, &ps).context(|| "moments".into())?;
    let renorm = renormalized_moments(&table, 1.0, 0.5).context(|| "renormalized moments".into())?;
    let geometric = renorm.geometric_through(settings.moment_max_order);
    let tail_ok = (fit.s - 2.0).abs() <= settings.tail_tolerance;
    Ok(Check::new(
        10,
        tail_ok && geometric,
        format!(
            "α = {alpha}: s = {:.3} ± {:.3} (target 2 ± {}), z_p <= K^p through p = {} with K = {:.3}: {}",
            fit.s,
            fit.s_std_error,
            settings.tail_tolerance,
            settings.moment_max_order,
            renorm.k,
            geometric
        ),
        json!({ "alpha": alpha, "tail": fit, "renormalized": renorm, "tailWithinTolerance": tail_ok,
                "geometric": geometric }),
    ))
}

/// Criterion 11: one Maxwellian envelope for every steady state of the sweep.
pub fn envelope(runs: &[(f64, &SteadyState)], theta0: f64, settings: &CheckSettings) -> Result<Check> {
    let densities: Vec<SmoothedDensity> = runs
        .iter()
        .map(|(_, s)| SmoothedDensity::from_ensemble(&s.ensemble))
        .collect::<granular_core::Result<_>>()
        .context(|| "smoothed densities".into())?;
    let profiles: Vec<&dyn RadialProfile> = densities.iter().map(|d| d as &dyn RadialProfile).collect();
    let r_max = settings.envelope_radius * theta0.sqrt();
    let rep = pointwise_bounds_check(&profiles, r_max, settings.envelope_points).context(|| "envelope".into())?;
    Ok(Check::new(
        11,
        rep.fits_all,
        format!(
            "common envelope a0 = {:.4}, a = {:.4}, μ = {:.4} fits all on |v| <= {:.3} ({} of {} points resolved)",
            rep.common.a0,
            rep.common.a,
            rep.common.mu,
            rep.checked_max,
            rep.points,
            settings.envelope_points
        ),
        json!({ "alphas": runs.iter().map(|r| r.0).collect::<Vec<_>>(), "report": rep }),
    ))
}

/// Criterion 13: `|D_{H,α}(F_α) − D_{H,1}(F_α)|` scales like `(1−α)`.
pub fn entropy_continuity(runs: &[(f64, &SteadyState)], settings: &CheckSettings, seed: u64) -> Result<Check> {
    let opts = EntropyOptions {
        pairs: settings.entropy_pairs,
        seed,
        ..EntropyOptions::default()
    };
    let mut rows = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(alpha, s) in runs.iter().filter(|r| r.0 < 1.0) {
        let profile = RadialDensity::from_ensemble(&s.ensemble).context(|| "histogram".into())?;
        let a = Restitution::new(alpha).context(|| "alpha".into())?;
        let d = entropy_dissipation_difference(&s.ensemble.velocities, s.ensemble.mass(), &profile, a, &opts)
            .context(|| format!("entropy dissipation at α = {alpha}"))?;
        if d.difference != 0.0 {
            xs.push((1.0 - alpha).ln());
            ys.push(d.difference.abs().ln());
        }
        rows.push(json!({ "alpha": alpha, "difference": d }));
    }
    if xs.len() < 2 {
        return Ok(Check::new(13, false, "fewer than two α < 1 with a nonzero difference", json!({ "runs": rows })));
    }
    let (_, slope, se) = linear_fit(&xs, &ys);
    Ok(Check::new(
        13,
        (slope - 1.0).abs() <= 0.3,
        format!("fitted exponent {slope:.3} ± {se:.3} (target 1.0 ± 0.3)"),
        json!({ "exponent": slope, "exponentStdError": se, "runs": rows }),
    ))
}

/// Criterion 14: reruns with other worker counts and split runs reproduce the ensemble bitwise.
pub fn determinism(base: &SimConfig, settings: &CheckSettings, scratch: &Path) -> Result<Check> {
    let steps = settings.determinism_steps;
    let t_end = steps as f64 * base.dt;
    let t_half = (steps / 2) as f64 * base.dt;
    let run = |workers: usize| -> Result<ParticleEnsemble> {
        simulator::with_workers(Some(workers), || -> granular_core::Result<ParticleEnsemble> {
            let mut sim = Simulation::new(*base)?;
            sim.run_until(t_end, &mut |_, _| Ok(()))?;
            Ok(sim.into_ensemble())
        })
        .and_then(|r| r)
        .context(|| format!("determinism run with {workers} workers"))
    };
    let single = run(1)?;
    let many = run(settings.determinism_workers)?;
    std::fs::create_dir_all(scratch).map_err(|e| CliError::output(scratch, e))?;
    let path = scratch.join("determinism-split.gben");
    let split = (|| -> granular_core::Result<ParticleEnsemble> {
        let mut first = Simulation::new(*base)?;
        first.run_until(t_half, &mut |_, _| Ok(()))?;
        first.snapshot().save(&path)?;
        let mut second = Simulation::resume(Snapshot::load(&path)?, *base)?;
        second.run_until(t_end, &mut |_, _| Ok(()))?;
        Ok(second.into_ensemble())
    })()
    .context(|| "split run".into())?;
    let same = |a: &ParticleEnsemble, b: &ParticleEnsemble| {
        a.step == b.step
            && a.v_max.to_bits() == b.v_max.to_bits()
            && a.velocities.len() == b.velocities.len()
            && a.velocities
                .iter()
                .zip(&b.velocities)
                .all(|(x, y)| x.0.iter().zip(&y.0).all(|(p, q)| p.to_bits() == q.to_bits()))
    };
    let workers_ok = same(&single, &many);
    let split_ok = same(&single, &split);
    Ok(Check::new(
        14,
        workers_ok && split_ok,
        format!(
            "{steps} steps, N = {}: 1 vs {} workers {}, split at step {} {}",
            base.n,
            settings.determinism_workers,
            if workers_ok { "identical" } else { "differ" },
            steps / 2,
            if split_ok { "identical" } else { "differs" }
        ),
        json!({ "steps": steps, "workers": settings.determinism_workers, "workerInvariant": workers_ok,
                "splitEqualsUnsplit": split_ok, "splitSnapshot": path }),
    ))
}
