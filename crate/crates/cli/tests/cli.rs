use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn finlap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finlap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn eigen(v: &Value) -> Vec<(f64, u64)> {
    v["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["value"].as_f64().unwrap(),
                c["multiplicity"].as_u64().unwrap(),
            )
        })
        .collect()
}

#[test]
fn torus_closed_form_table() {
    let out = finlap(&[
        "spectrum", "--metric", "kz-torus", "--eps", "0.6", "--pmax", "2", "--qmax", "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let e = eigen(&json(&out));
    assert_eq!(e[0], (0.0, 1));
    assert!((e[1].0 - 22.4590).abs() < 1e-3 && e[1].1 == 2, "{e:?}");
    assert!((e[2].0 - 28.0735).abs() < 1e-3 && e[2].1 == 2, "{e:?}");
    assert_eq!(e.iter().map(|c| c.1).sum::<u64>(), 25);
}

#[test]
fn flat_torus_table() {
    let e = eigen(&json(&finlap(&[
        "spectrum", "--metric", "kz-torus", "--eps", "0", "--pmax", "1", "--qmax", "1",
    ])));
    let want = [(0.0, 1), (4.0 * PI * PI, 4), (8.0 * PI * PI, 4)];
    assert_eq!(e.len(), 3);
    for (got, w) in e.iter().zip(want) {
        assert!((got.0 - w.0).abs() < 1e-9 && got.1 == w.1, "{e:?}");
    }
}

#[test]
fn sphere_first_eigenvalue() {
    let v = json(&finlap(&[
        "spectrum",
        "--metric",
        "kz-sphere",
        "--eps",
        "0.3",
        "--lmax",
        "10",
        "--k",
        "5",
    ]));
    let l1 = v["coefficients"]["first_nonzero"].as_f64().unwrap();
    assert!((l1 - 1.82).abs() < 1e-8, "{l1}");
    assert_eq!(
        v["meta"]["solver"]["basis"]
            .as_str()
            .map(|s| s.contains("10")),
        Some(true)
    );
}

#[test]
fn verify_suites_report_and_exit() {
    let out = finlap(&["verify", "--suite", "legendre"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let report = v["report"].as_array().unwrap();
    assert!(!report.is_empty());
    assert!(report.iter().all(|c| c["status"] == "pass"));

    let out = finlap(&[
        "verify",
        "--suite",
        "conformal",
        "--metric",
        "kz-torus",
        "--eps",
        "0.3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let c = &json(&out)["report"][0];
    assert!(c["defect"].as_f64().unwrap() <= 1e-5);
    assert_eq!(c["tolerance"].as_f64(), Some(1e-5));
}

#[test]
fn holmes_thompson_density_for_torus_metric() {
    let out = finlap(&[
        "verify",
        "--suite",
        "holmes-thompson",
        "--metric",
        "kz-torus",
        "--eps",
        "0.6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&finlap(&["volume", "--metric", "kz-torus", "--eps", "0.6"]));
    let rho = v["coefficients"]["density_at_point"].as_f64().unwrap();
    assert!((rho - 1.953125).abs() < 1e-5, "{rho}");
    assert!((v["coefficients"]["volume"].as_f64().unwrap() - 1.953125).abs() < 1e-5);
}

#[test]
fn failing_check_exits_one_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("pert.json");
    let out = finlap(&[
        "verify",
        "--suite",
        "perturbation",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(v["report"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["status"] == "fail"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL perturbation."));
}

#[test]
fn config_errors_exit_two() {
    for args in [
        vec!["verify", "--suite", "nope"],
        vec!["spectrum"],
        vec!["symbol", "--metric", "no-such-metric"],
        vec!["symbol", "--metric", "kz-torus", "--eps", "1.5"],
        vec!["spectrum", "--metric", "kz-sphere"],
        vec!["--config", "/nonexistent/run.toml"],
        vec!["spectrum", "--metric", "kz-torus", "--csv"],
        vec!["spectrum", "--grid", "many"],
    ] {
        let out = finlap(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stderr.is_empty());
    }
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn identical_config_gives_identical_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "task = \"spectrum\"\n\n[metric]\nkind = \"randers\"\ntheta = [\"0.3*sin(2*pi*y)\", 0.1]\n\n[resolution]\ngrid_n = 24\nk = 6\n",
    )
    .unwrap();
    let p = dir.path().join("out.json");
    let run = || {
        let out = finlap(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            p.to_str().unwrap(),
            "--csv",
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            fs::read_to_string(&p).unwrap(),
            fs::read(p.with_extension("csv")).unwrap(),
        )
    };
    let (a, a_csv) = run();
    let (b, b_csv) = run();
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
    assert_eq!(a_csv, b_csv);
    let v: Value = serde_json::from_str(&a).unwrap();
    for key in [
        "config_echo",
        "eigenvalues",
        "coefficients",
        "report",
        "meta",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["config_echo"]["resolution"]["grid_n"], 24);
    let ts = v["meta"]["timestamp"].as_str().unwrap();
    assert!(
        ts.len() == 20 && ts.ends_with('Z') && &ts[10..11] == "T",
        "{ts}"
    );
    assert!(String::from_utf8(a_csv)
        .unwrap()
        .starts_with("value,multiplicity\n"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"task":"spectrum","metric":{"kind":"kz-sphere","eps":0.1},"resolution":{"lmax":10,"k":4}}"#)
        .unwrap();
    let v = json(&finlap(&[
        "--config",
        cfg.to_str().unwrap(),
        "--eps",
        "0.5",
    ]));
    assert!((v["coefficients"]["first_nonzero"].as_f64().unwrap() - 1.5).abs() < 1e-8);
    assert_eq!(v["config_echo"]["metric"]["eps"], 0.5);
}

#[test]
fn geodesic_writes_trajectory_without_leftovers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("geo.json");
    let out = finlap(&[
        "geodesic",
        "--metric",
        "kz-torus",
        "--eps",
        "0.6",
        "--direction",
        "0",
        "--time",
        "0.5",
        "--out",
        p.to_str().unwrap(),
        "--csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    // unit speed along d/dx is 1 / F(e1) = 1 / 0.625
    let u = v["coefficients"]["final"][0].as_f64().unwrap();
    assert!(
        (u - (0.25f64 + 0.5 / 0.625).rem_euclid(1.0)).abs() < 1e-6,
        "{u}"
    );
    let csv = fs::read_to_string(p.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 502);
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 2, "{names:?}");
    assert!(Path::new(&p).exists());
}
