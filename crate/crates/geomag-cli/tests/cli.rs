use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn geomag(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geomag"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> serde_json::Map<String, serde_json::Value> {
    let text = fs::read_to_string(dir.join("summary.json")).unwrap();
    match serde_json::from_str(&text).unwrap() {
        serde_json::Value::Object(m) => m,
        v => panic!("summary is not an object: {v}"),
    }
}

#[test]
fn empty_config_is_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = geomag(&["slab", "--mode", "scan", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing key"), "{}", stderr(&o));
}

#[test]
fn unknown_key_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "beta = 1\nphi = 1\n\nbogus = 2\n");
    let o = geomag(&["potentials", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("unknown key `bogus`") && e.contains(":4"), "{e}");
}

#[test]
fn bad_usage_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = geomag(&["slab", "--mode", "sideways"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let cfg = write_config(dir.path(), "beta = -1\nphi = 1\n");
    let o = geomag(&["potentials", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn slab_scan_writes_transmission_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("slab_scan.conf");
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(geomag(&["slab", "--mode", "scan", "--config", cfg], &a)
        .status
        .success());
    assert!(geomag(
        &["slab", "--mode", "scan", "--config", cfg, "--threads", "1"],
        &b
    )
    .status
    .success());
    let ta = fs::read(a.join("transmission.csv")).unwrap();
    assert_eq!(ta, fs::read(b.join("transmission.csv")).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,t_bo,t_coupled"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 100);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r[1]) && (0.0..=1.0).contains(&r[2]));
    }
    // 17 significant digits
    let first = text.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(
        first
            .split('e')
            .next()
            .unwrap()
            .replace(['-', '.'], "")
            .len(),
        17
    );
}

#[test]
fn flux_report_passes_in_closed_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("flux_closed.conf");
    let o = geomag(&["flux", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(dir.path());
    assert_eq!(s["pass.gauge_invariance"], serde_json::Value::Bool(true));
    assert_eq!(s["input.delta"], "4");
    assert!(dir.path().join("flux.csv").exists());
}

#[test]
fn impossible_tolerance_is_acceptance_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ferroslab.conf");
    let o = geomag(
        &[
            "ferroslab",
            "--config",
            cfg.to_str().unwrap(),
            "--tolerance",
            "1e-300",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // tolerance is rejected where no check uses it
    let cfg = configs().join("slab_potentials.conf");
    let o = geomag(
        &[
            "potentials",
            "--config",
            cfg.to_str().unwrap(),
            "--tolerance",
            "1e-3",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn wraparound_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "k = 12\ndelta = 200\nphi = 6\ngrid = 64\nextent = 5\ndt = 1e-3\nsteps = 2000\nstop_at_guard = false\n",
    );
    let o = geomag(&["tdse", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("tdse"), "{}", stderr(&o));
}

#[test]
fn tdse_deflection_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("tdse_deflection_1.conf");
    let o = geomag(&["tdse", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let tan = summary(dir.path())["tan_theta"].as_f64().unwrap();
    assert!((tan - 0.587).abs() <= 0.05, "tan theta {tan}");
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("tau,xi_mean,eta_mean,pop_f,pop_g,norm")
    );
}

#[test]
fn accept_subset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "only = 2, 4, 12\n");
    let o = geomag(&["accept", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("acceptance.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    let cfg = write_config(dir.path(), "only = 13\n");
    assert_eq!(
        geomag(&["accept", "--config", &cfg], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn every_shipped_config_parses_for_its_command() {
    // the quick ones are run end to end; the propagation configs are
    // covered by the deflection test above
    let quick = [
        ("potentials", "slab_potentials.conf", None),
        ("scatter1d", "scatter1d.conf", None),
        ("slab", "slab_bo.conf", Some("bo")),
        ("slab", "slab_coupled.conf", Some("coupled")),
        ("flux", "flux_open.conf", None),
        ("current-field", "current_field.conf", None),
        ("holonomy", "holonomy_ab.conf", None),
        ("holonomy", "holonomy_model1d.conf", None),
        ("internal", "internal.conf", None),
    ];
    for (cmd, file, mode) in quick {
        let dir = tempfile::tempdir().unwrap();
        let cfg = configs().join(file);
        let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
        if let Some(m) = mode {
            args.extend(["--mode", m]);
        }
        let o = geomag(&args, dir.path());
        assert!(o.status.success(), "{file}: {}", stderr(&o));
    }
}
