use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use granular_core::background::elastic_steady_state;
use granular_core::diagnostics::{distance_to, moments, stationary_moment_inequality, MomentTable};
use granular_core::simulator::{self, Snapshot};
use granular_core::{Error as CoreError, InitialCondition, RadialDensity, Restitution, SimConfig, Simulation, SteadyState};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::checks::{self, Check};
use crate::config::{ExperimentConfig, Scenario};
use crate::error::{CliError, Context, Result};
use crate::report::{Artifacts, ExperimentReport, Provenance};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Size of the worker pool; `None` uses all cores.
    pub workers: Option<usize>,
    /// Continue the `simulate` scenario from this snapshot.
    pub resume: Option<PathBuf>,
}

/// One simulation of a scenario.
struct Run {
    label: String,
    config: SimConfig,
    outcome: std::result::Result<SteadyState, String>,
}

impl Run {
    fn steady(&self) -> Option<&SteadyState> {
        self.outcome.as_ref().ok()
    }
}

/// Moment orders stored for every steady state.
fn moment_orders() -> Vec<f64> {
    (0..=16).map(|k| 0.5 * k as f64).collect()
}

fn simulate(label: String, config: SimConfig) -> Result<Run> {
    let outcome = match simulator::run_to_steady(&config) {
        Ok(s) => Ok(s),
        Err(e @ CoreError::NotConverged { .. }) => Err(e.to_string()),
        Err(e) => return Err(e).context(|| format!("run {label}")),
    };
    Ok(Run { label, config, outcome })
}

/// Diagnostics of one run for the report; also returns its full moment table.
fn summarize(run: &Run, inequality_orders: &[f64]) -> Result<(Value, Option<MomentTable>)> {
    let c = &run.config;
    let base = json!({
        "label": run.label, "alpha": c.alpha.get(), "seed": c.seed, "n": c.n, "initialCondition": c.initial,
    });
    let Some(s) = run.steady() else {
        let mut v = base;
        v["converged"] = json!(false);
        v["error"] = json!(run.outcome.as_ref().err());
        return Ok((v, None));
    };
    let table = moments(&s.ensemble, &moment_orders())
        .context(|| format!("moments of {}", run.label))?
        .with_alpha(c.alpha.get());
    let inequality: Vec<Value> = inequality_orders
        .iter()
        .map(|&p| match stationary_moment_inequality(&table, &c.bath, p) {
            Ok(r) => json!(r),
            Err(e) => json!({ "p": p, "error": e.to_string() }),
        })
        .collect();
    let distance = distance_to(&s.ensemble, &elastic_steady_state(&c.bath)).context(|| "distance".into())?;
    let mut v = base;
    v["converged"] = json!(true);
    v["convergedAt"] = json!(s.converged_at);
    v["steps"] = json!(s.final_state.step);
    v["majorant"] = json!(s.final_state.v_max);
    v["samples"] = json!(s.ensemble.len());
    v["temperature"] = json!(s.temperature());
    v["elasticTemperature"] = json!(c.bath.steady_temperature());
    v["meanVelocity"] = json!(s.ensemble.mean_velocity());
    v["distanceToElasticMaxwellian"] = json!(distance);
    v["logConvexityViolations"] = json!(table.log_convexity_violations());
    v["stationaryInequality"] = json!(inequality);
    v["moments"] = json!(table);
    Ok((v, Some(table)))
}

/// Write per-run artifacts and collect summaries.
fn write_runs(runs: &[Run], config: &ExperimentConfig, out: &mut Artifacts) -> Result<Vec<Value>> {
    let mut summaries = Vec::new();
    let mut tables = Vec::new();
    let mut densities = Vec::new();
    for run in runs {
        let (summary, table) = summarize(run, &config.checks.inequality_orders)?;
        summaries.push(summary);
        if let Some(s) = run.steady() {
            out.write_convergence(&run.label, &s.convergence_log)?;
            let path = out.path(&format!("snapshots/{}-final.gben", run.label));
            Snapshot::capture(&s.final_state, &run.config)
                .save(&path)
                .map_err(|e| CliError::output(&path, std::io::Error::other(e)))?;
            out.record(path);
            densities.push((run.label.clone(), RadialDensity::from_ensemble(&s.ensemble).context(|| "histogram".into())?));
        }
        if let Some(t) = table {
            tables.push((run.label.clone(), t));
        }
    }
    out.write_moments(&tables.iter().map(|(l, t)| (l.clone(), t)).collect::<Vec<_>>())?;
    out.write_densities(&densities.iter().map(|(l, d)| (l.clone(), d)).collect::<Vec<_>>())?;
    Ok(summaries)
}

fn with_alpha(base: &SimConfig, alpha: f64) -> Result<SimConfig> {
    let mut c = *base;
    c.alpha = Restitution::new(alpha).map_err(|e| CliError::config(e.to_string()))?;
    Ok(c)
}

fn label_alpha(alpha: f64) -> String {
    format!("alpha-{alpha}")
}

fn not_converged(runs: &[Run]) -> Vec<String> {
    runs.iter().filter(|r| r.steady().is_none()).map(|r| r.label.clone()).collect()
}

/// Result of a scenario before the report is assembled.
struct Outcome {
    runs: Vec<Value>,
    checks: Vec<Check>,
    non_converged: Vec<String>,
}

fn run_simulate(config: &ExperimentConfig, options: &RunOptions, out: &mut Artifacts) -> Result<Outcome> {
    let cfg = config.simulation;
    let mut sim = match &options.resume {
        Some(path) => {
            let snap = Snapshot::load(path).context(|| format!("loading {}", path.display()))?;
            Simulation::resume(snap, cfg).context(|| format!("resuming from {}", path.display()))?
        }
        None => Simulation::new(cfg).context(|| "initial ensemble".into())?,
    };
    let dir = out.path("snapshots");
    let mut saved = Vec::new();
    let result = sim.run_to_steady(&mut |ens, _| {
        let path = dir.join(format!("step-{:08}.gben", ens.step));
        Snapshot::capture(ens, &cfg).save(&path)?;
        saved.push(path);
        Ok(())
    });
    for p in saved {
        out.record(p);
    }
    let outcome = match result {
        Ok(s) => Ok(s),
        Err(e @ CoreError::NotConverged { .. }) => Err(e.to_string()),
        Err(e) => return Err(e).context(|| "simulation".into()),
    };
    let runs = vec![Run { label: "run".into(), config: cfg, outcome }];
    let summaries = write_runs(&runs, config, out)?;
    let mut checks = Vec::new();
    if cfg.alpha.get() == 1.0 {
        checks.push(match runs[0].steady() {
            Some(s) => checks::elastic_temperature(s, &cfg.bath),
            None => Check::failed(1, "run did not converge"),
        });
    }
    checks.push(checks::determinism(&cfg, &config.checks, &out.path("snapshots"))?);
    out.record(out.path("snapshots/determinism-split.gben"));
    Ok(Outcome { runs: summaries, checks, non_converged: not_converged(&runs) })
}

fn run_sweep(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome> {
    let mut alphas = config.alpha_list.clone();
    alphas.sort_by(f64::total_cmp);
    let configs: Vec<(String, SimConfig)> = alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut c = with_alpha(&config.simulation, a)?;
            c.seed = config.simulation.seed.wrapping_add(i as u64);
            Ok((label_alpha(a), c))
        })
        .collect::<Result<_>>()?;
    let runs: Vec<Run> = configs.into_par_iter().map(|(l, c)| simulate(l, c)).collect::<Result<_>>()?;
    let summaries = write_runs(&runs, config, out)?;
    let converged: Vec<(f64, &SteadyState)> = runs.iter().filter_map(|r| r.steady().map(|s| (r.config.alpha.get(), s))).collect();
    let all = converged.len() == runs.len();
    let missing = |id: u8| Check::failed(id, format!("runs did not converge: {:?}", not_converged(&runs)));
    let mut checks = Vec::new();
    checks.push(if all { checks::elastic_limit(&converged, &config.simulation.bath)? } else { missing(8) });
    checks.push(match converged.first() {
        Some(&(a, s)) if all => checks::gaussian_tail(a, s, &config.checks)?,
        _ => missing(10),
    });
    checks.push(if all { checks::envelope(&converged, config.simulation.bath.theta0, &config.checks)? } else { missing(11) });
    checks.push(if all {
        checks::entropy_continuity(&converged, &config.checks, config.simulation.seed)?
    } else {
        missing(13)
    });
    Ok(Outcome { runs: summaries, checks, non_converged: not_converged(&runs) })
}

fn run_uniqueness(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome> {
    let mut jobs: Vec<(String, SimConfig)> = Vec::new();
    for &a in &config.alpha_list {
        for (i, ic) in config.initial_condition_list.iter().enumerate() {
            let mut c = with_alpha(&config.simulation, a)?;
            c.initial = *ic;
            c.v_max = Some(SimConfig { v_max: None, ..c }.initial_majorant());
            c.seed = config.simulation.seed.wrapping_add(jobs.len() as u64);
            jobs.push((format!("{}-ic{i}-{}", label_alpha(a), ic_name(ic)), c));
        }
    }
    let runs: Vec<Run> = jobs.into_par_iter().map(|(l, c)| simulate(l, c)).collect::<Result<_>>()?;
    let summaries = write_runs(&runs, config, out)?;
    let per_ic = config.initial_condition_list.len();
    let mut rows = Vec::new();
    let mut all_pass = true;
    let mut smallest_passing: Option<f64> = None;
    for (k, &a) in config.alpha_list.iter().enumerate() {
        let group = &runs[k * per_ic..(k + 1) * per_ic];
        let states: Vec<&SteadyState> = group.iter().filter_map(Run::steady).collect();
        if states.len() < group.len() {
            all_pass = false;
            rows.push(json!({ "alpha": a, "passed": false, "error": "a run did not converge" }));
            continue;
        }
        let (pass, detail) = checks::singleton(&states)?;
        all_pass &= pass;
        if pass {
            smallest_passing = Some(smallest_passing.map_or(a, |s: f64| s.min(a)));
        }
        let mut detail = detail;
        detail["alpha"] = json!(a);
        rows.push(detail);
    }
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "α = {}: max pairwise {:.4} vs 3 × floor {:.4}",
                r["alpha"],
                r["maxDistance"].as_f64().unwrap_or(f64::NAN),
                3.0 * r["noiseFloor"].as_f64().unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let check = Check::new(
        9,
        all_pass,
        summary,
        json!({ "perAlpha": rows, "smallestPassingAlpha": smallest_passing, "initialConditions": config.initial_condition_list }),
    );
    Ok(Outcome { runs: summaries, checks: vec![check], non_converged: not_converged(&runs) })
}

fn ic_name(ic: &InitialCondition) -> &'static str {
    match ic {
        InitialCondition::Maxwellian { .. } => "maxwellian",
        InitialCondition::Bimodal { .. } => "bimodal",
        InitialCondition::UniformBall { .. } => "uniform-ball",
    }
}

fn run_spectral(config: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome> {
    let theta0 = config.simulation.bath.theta0;
    let (gap_check, mut spectra) = checks::spectral_gap_bound(theta0, &config.e_list)?;
    let (lin_check, lin_spectra) = checks::linearized_inversion(theta0, &config.e_list)?;
    spectra.extend(lin_spectra);
    out.write_json("spectrum.json", &spectra)?;
    Ok(Outcome { runs: Vec::new(), checks: vec![gap_check, lin_check], non_converged: Vec::new() })
}

fn run_verify_kernel(config: &ExperimentConfig) -> Result<Outcome> {
    let b = &config.simulation.bath;
    let c = &config.checks;
    let checks = vec![
        checks::detailed_balance(b.theta0, b.u0, &config.e_list, c.detailed_balance_pairs, config.simulation.seed)?,
        checks::kernel_normalization(b.theta0, b.u0, &config.e_list, c.normalization_max_speed, c.normalization_points)?,
        checks::weighted_integral_bound(b.theta0, c)?,
    ];
    Ok(Outcome { runs: Vec::new(), checks, non_converged: Vec::new() })
}

fn run_verify_moments(config: &ExperimentConfig) -> Result<Outcome> {
    let checks = vec![
        checks::energy_dissipation(&config.simulation, &config.checks)?,
        checks::povzner(&config.checks, config.simulation.seed)?,
    ];
    Ok(Outcome { runs: Vec::new(), checks, non_converged: Vec::new() })
}

/// Execute a materialized experiment, write its artifacts and `report.json`.
pub fn run(config: ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    if options.resume.is_some() && config.scenario() != Scenario::Simulate {
        return Err(CliError::config("--resume applies to the simulate scenario only"));
    }
    let start = Instant::now();
    let dir = config.output_dir();
    let mut out = Artifacts::create(&dir)?;
    let scenario = config.scenario();
    let outcome = simulator::with_workers(options.workers, || match scenario {
        Scenario::Simulate => run_simulate(&config, options, &mut out),
        Scenario::SweepAlpha => run_sweep(&config, &mut out),
        Scenario::Uniqueness => run_uniqueness(&config, &mut out),
        Scenario::Spectral => run_spectral(&config, &mut out),
        Scenario::VerifyKernel => run_verify_kernel(&config),
        Scenario::VerifyMoments => run_verify_moments(&config),
    })
    .context(|| "worker pool".into())??;
    let mut table = BTreeMap::new();
    for c in outcome.checks {
        if table.insert(c.criterion, c).is_some() {
            unreachable!("each scenario emits a criterion at most once");
        }
    }
    let report_path = out.path("report.json");
    out.record(report_path);
    let mut report = ExperimentReport {
        scenario,
        provenance: Provenance::new(&config, options.workers),
        config,
        runs: outcome.runs,
        passed: table.values().all(|c| c.passed),
        checks: table,
        non_converged: outcome.non_converged,
        artifacts: out.written().to_vec(),
        wall_clock_seconds: 0.0,
    };
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_report(&report, &dir)?;
    Ok(report)
}

fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::output(&path, e.into()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))
}
