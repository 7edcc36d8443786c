use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fockshift(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fockshift"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], out: &Path) -> Value {
    let o = fockshift(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("results.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn same_seed_gives_identical_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["single-shot", "--seed", "11"], &a);
    run_ok(&["--threads", "1", "single-shot", "--seed", "11"], &b);
    for name in ["results.json", "single_shot.csv", "single_shot.svg"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = dir.path().join("c");
    run_ok(&["single-shot", "--seed", "12"], &c);
    assert_ne!(std::fs::read(a.join("results.json")).unwrap(), std::fs::read(c.join("results.json")).unwrap());
}

#[test]
fn perfect_detection_grid_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["single-shot", "--perfect-detection"], dir.path());
    let cells = r["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 36);
    for c in cells {
        let want = if c["n_prepare"] == c["n_measure"] { 1.0 } else { 0.0 };
        assert_eq!(f(&c["estimate"]), want, "{c}");
    }
}

#[test]
fn noisy_diagonal_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["single-shot"], dir.path());
    // ((1 + λ_d) e^{−λ_d})³ for λ_d = 0.05 and a one-count threshold.
    let closed = (1.05f64 * (-0.05f64).exp()).powi(3);
    assert!((f(&r["closed_form_diagonal"]) - closed).abs() < 1e-12);
    let diag: Vec<f64> =
        r["cells"].as_array().unwrap().iter().filter(|c| c["n_prepare"] == c["n_measure"]).map(|c| f(&c["estimate"])).collect();
    let mean = diag.iter().sum::<f64>() / diag.len() as f64;
    let sigma = (closed * (1.0 - closed) / (500.0 * diag.len() as f64)).sqrt();
    assert!((mean - closed).abs() < 3.0 * sigma, "mean {mean} vs {closed} (sigma {sigma})");
}

#[test]
fn offset_calibration_recovers_the_injected_shift() {
    let dir = tempfile::tempdir().unwrap();
    let ideal = run_ok(&["calibrate", "offset", "--preset", "single_shot", "--residual-hz", "7.5"], &dir.path().join("i"));
    assert!((f(&ideal["delta_off_hz"]) - 7.5).abs() < 1e-6, "{ideal}");

    // The sideband engine adds its own vacuum phase; the injected part still shifts Δ_off one to one.
    let zero = run_ok(&["calibrate", "offset", "--residual-hz", "0"], &dir.path().join("z"));
    let shifted = run_ok(&["calibrate", "offset", "--residual-hz", "7.5"], &dir.path().join("s"));
    let diff = f(&shifted["delta_off_hz"]) - f(&zero["delta_off_hz"]);
    assert!((diff - 7.5).abs() < 1.0, "shift {diff}");
}

#[test]
fn fit_on_bundled_ecs_traces() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["fit"], &dir.path().join("all"));
    assert_eq!(r["fit"]["degenerate"], false);
    assert!(f(&r["parity"]["value"]) > 0.9);
    assert!((f(&r["truth_coverage"]) - 0.9935).abs() < 1e-3);
    assert!(f(&r["max_population_error"]) < 0.05);

    let single = run_ok(&["fit", "--ratios", "1"], &dir.path().join("one"));
    assert_eq!(single["fit"]["degenerate"], true);
    assert!(!single["fit"]["degenerate_groups"].as_array().unwrap().is_empty());
}

#[test]
fn noiseless_even_cat_has_unit_parity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cat.toml");
    std::fs::write(
        &cfg,
        r#"schema_version = 1
name = "even_cat"

[trap]
fock_dims = [16]
modes = [{ frequency_hz = 940e3, eta = 0.10 }]

[drive]
detuning = { kind = "single_mode", mode = 0, delta_hz = 110e3 }

[state]
kind = "cat"
alpha = 1.5
parity = "even"

[protocol]
kind = "ramsey"
fit_n_max = 8
"#,
    )
    .unwrap();
    let r = run_ok(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    let p = f(&r["fit"]["parity"]["value"]);
    assert!((p - 1.0).abs() < 1e-2, "parity {p}");
}

#[test]
fn parity_filter_without_dephasing_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["filter", "--preset", "single_shot", "--sector", "odd"], &dir.path().join("f"));
    // The preset prepares vacuum, which has no odd component.
    assert_eq!(f(&r["pass_probability"]), 0.0);
    let even = run_ok(&["filter", "--preset", "single_shot", "--sector", "even"], &dir.path().join("g"));
    assert!((f(&even["pass_probability"]) - 1.0).abs() < 1e-12);
}

#[test]
fn csv_results_are_flattened() {
    let dir = tempfile::tempdir().unwrap();
    let o = fockshift(&["--format", "csv", "calibrate", "tpi"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.contains("\nt_pi_s,"));
    for name in ["tpi_scan.csv", "tpi_scan.svg", "config.toml", "run.log"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn every_preset_runs() {
    let dir = tempfile::tempdir().unwrap();
    let list = Command::new(env!("CARGO_BIN_EXE_fockshift")).arg("presets").output().unwrap();
    let names = String::from_utf8(list.stdout).unwrap();
    assert_eq!(names.lines().count(), 8);
    for name in names.lines() {
        run_ok(&["run", "--preset", name], &dir.path().join(name));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fockshift(&["run", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(fockshift(&["run", "--preset", "nope"], dir.path()).status.code(), Some(3));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\n[trap]\nmodes = []\nfock_dims = []\nextra = 1\n[protocol]\nkind = \"ramsey\"\n").unwrap();
    let o = fockshift(&["run", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trap.extra"));

    let wrong = dir.path().join("v2.toml");
    std::fs::write(&wrong, "schema_version = 2\n[trap]\nmodes = [{ frequency_hz = 1e6, eta = 0.1 }]\nfock_dims = [4]\n[protocol]\nkind = \"ramsey\"\n").unwrap();
    assert_eq!(fockshift(&["run", "--config", wrong.to_str().unwrap()], dir.path()).status.code(), Some(3));
}
