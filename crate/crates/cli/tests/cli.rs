use std::path::Path;
use std::process::Command;

fn kompsep(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kompsep"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn csv_column(path: &Path, col: usize) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().to_string())
        .collect()
}

#[test]
fn derivs_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = kompsep(&["derivs", "--spectrum", "bremsstrahlung", "--M", "2", "--output", out]);
    assert_eq!(code, 0, "{err}");
    let exact = csv_column(&dir.path().join("derivs/derivatives.csv"), 2);
    assert_eq!(exact, ["1", "-6", "132"]);

    let (code, _, _) = kompsep(&["derivs", "--spectrum", "bremsstrahlung", "--M", "0", "--output", out]);
    assert_eq!(code, 0);
    let vals = csv_column(&dir.path().join("derivs/derivatives.csv"), 1);
    assert_eq!(vals, ["1.00000e0"]);

    let (code, _, _) = kompsep(&["derivs", "--spectrum", "monoenergetic", "--M", "24", "--output", out]);
    assert_eq!(code, 0);
    let vals = csv_column(&dir.path().join("derivs/derivatives.csv"), 1);
    assert_eq!(vals.len(), 25);
    assert_eq!(vals[1], "2.00000e0");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("derivs/derivatives.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["entries"][2]["numerator"], "-12");
}

#[test]
fn cf_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, err) = kompsep(&[
        "cf", "--spectrum", "monoenergetic", "--taylor-N", "4,8,12", "--y-max", "0.3", "--output", out,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("selected N = 24"));
    let c = csv_column(&dir.path().join("cf/coefficients.csv"), 2);
    assert_eq!(&c[..3], ["1", "-2", "5"]);
    let curves = std::fs::read_to_string(dir.path().join("cf/taylor_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 3 * 201);
    // Φ₁₂ has left the [1, 2] band by y = 0.3.
    let last12: f64 = curves
        .lines()
        .filter(|l| l.ends_with(",12"))
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(!(1.0..2.0).contains(&last12), "{last12}");
    let defects: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cf/defects.json")).unwrap()).unwrap();
    for n in [18, 20, 22, 24] {
        assert_eq!(defects["reports"][n]["report"]["defects"].as_array().unwrap().len(), 0, "N={n}");
    }
}

#[test]
fn validation_errors_exit_1() {
    let (code, _, err) = kompsep(&["derivs", "--y-max=-2"]);
    assert_eq!(code, 1);
    assert!(err.contains("y_max"));
    let (code, _, err) = kompsep(&["derivs", "--set", "colour=blue"]);
    assert_eq!(code, 1);
    assert!(err.contains("colour"));
    let (code, _, _) = kompsep(&["solve", "--theta", "constant:0"]);
    assert_eq!(code, 1);
}

#[test]
fn numerical_errors_exit_2() {
    // Ψ₁ = 1/(1 − 2y) has a pole inside [0, 2].
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = kompsep(&["solve", "--theta", "cf:1", "--set", "cells=40", "--output", out]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn negative_control_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = kompsep(&[
        "verify", "--spectrum", "bremsstrahlung", "--theta", "constant:1", "--set", "cells=200", "--set",
        "order=4", "--output", out,
    ]);
    assert_eq!(code, 3, "{err}");
    let report = std::fs::read_to_string(dir.path().join("verify/verification.csv")).unwrap();
    assert_eq!(report.lines().count(), 22);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _, err) = kompsep(&[
            "solve", "--set", "cells=80", "--set", "order=8", "--set", "snapshots=3", "--y-max", "0.5", "--output",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        let (code, _, err) = kompsep(&[
            "cf", "--set", "order=8", "--y-max", "0.5", "--output", d.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["solve/snapshot_000.csv", "solve/snapshot_002.csv", "solve/trace.csv", "cf/continued_fraction.json", "cf/cf_curves.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("solve/manifest.json")).unwrap()).unwrap();
    assert!(manifest["created"].as_str().unwrap().starts_with("unix:"));
    assert_eq!(manifest["grid"]["cells"], 80);
}
