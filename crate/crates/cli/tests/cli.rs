//! Command-line behaviour: exit codes, artifacts, resume and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_granular-bath"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn small(scenario: &str, alpha: f64, n: usize, t_end: f64) -> String {
    format!(
        r#"{{
            "scenario": "{scenario}",
            "simulation": {{
                "alpha": {alpha},
                "bath": {{ "theta0": 1.0, "e": 0.5 }},
                "N": {n},
                "seed": 5,
                "tEnd": {t_end},
                "initial": {{ "kind": "maxwellian", "theta": 1.0 }}
            }},
            "checks": {{ "energyN": 2000, "energySteps": 200, "povznerPairs": 100, "determinismSteps": 10 }}
        }}"#
    )
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn malformed_or_missing_config_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", &small("simulate", 1.0, 100, 1.0).replace("\"N\"", "\"count\""));
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["simulate", "--config", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let alpha = write_config(dir.path(), "alpha.json", &small("simulate", 1.5, 100, 1.0));
    assert_eq!(code(&run(&["simulate", "--config", alpha.to_str().unwrap()])), 4);
}

#[test]
fn unwritable_output_exits_with_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small("verify-moments", 0.9, 100, 1.0));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = run(&["verify-moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn short_horizon_exits_with_3_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small("simulate", 1.0, 2000, 1.0));
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out);
    assert_eq!(r["nonConverged"][0], "run");
    assert_eq!(r["checks"]["1"]["passed"], false);
    assert_eq!(r["checks"]["14"]["passed"], true);
}

#[test]
fn simulate_writes_artifacts_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small("simulate", 1.0, 20_000, 100.0));
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["scenario"], "simulate");
    assert_eq!(r["config"]["simulation"]["vMaxMajorant"], 12.0);
    assert_eq!(r["provenance"]["seed"], 5);
    assert_eq!(r["provenance"]["configHash"].as_str().unwrap().len(), 64);
    assert!(r["checks"]["1"]["details"]["temperature"].as_f64().unwrap() > 0.5);
    let moments = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    assert!(moments.starts_with("run,alpha,time,n,p,value,std_error"));
    let density = std::fs::read_to_string(out.join("density.csv")).unwrap();
    assert!(density.starts_with("run,radius,value,error"));
    let first = out.join("snapshots/step-00000050.gben");
    assert!(first.exists());

    // Resuming with another alpha is refused with the differing field named.
    let other = write_config(dir.path(), "other.json", &small("simulate", 0.9, 20_000, 100.0));
    let o = run(&["simulate", "--config", other.to_str().unwrap(), "--resume", first.to_str().unwrap(),
                  "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));

    // Resuming with the same config reaches the same later snapshots.
    let out2 = dir.path().join("resumed");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--resume", first.to_str().unwrap(),
                  "--out", out2.to_str().unwrap()]);
    assert!(matches!(code(&o), 0 | 2));
    let name = "snapshots/step-00000100.gben";
    assert_eq!(std::fs::read(out.join(name)).unwrap(), std::fs::read(out2.join(name)).unwrap());
}

#[test]
fn reports_reproduce_except_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small("verify-moments", 0.9, 100, 1.0));
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wallClockSeconds");
        v.as_object_mut().unwrap().remove("artifacts");
        v["config"].as_object_mut().unwrap().remove("outputDir");
        v
    };
    let mut reports = Vec::new();
    for (k, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let o = run(&["verify-moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
                      "--workers", workers]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        let mut r = strip(report(&out));
        r["provenance"].as_object_mut().unwrap().remove("workers");
        r["provenance"].as_object_mut().unwrap().remove("configHash");
        r["provenance"].as_object_mut().unwrap().remove("describe");
        reports.push(r);
    }
    assert_eq!(reports[0], reports[1]);
    let out = dir.path().join("seeded");
    run(&["verify-moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(report(&out)["provenance"]["seed"], 11);
}
