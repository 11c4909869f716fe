use std::path::Path;
use std::process::{Command, Output};

fn nvmpr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmpr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sweep_json_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "mode = \"sweep\"\n[sweep]\nb_points = 21\nf_points = 33\n",
    );
    let a = nvmpr(
        &["sweep", "--config", &cfg, "--out", "a.json", "--threads", "1"],
        dir.path(),
    );
    let b = nvmpr(
        &["sweep", "--config", &cfg, "--out", "b.json", "--threads", "4"],
        dir.path(),
    );
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    let ja = std::fs::read(dir.path().join("a.json")).unwrap();
    let jb = std::fs::read(dir.path().join("b.json")).unwrap();
    assert!(!ja.is_empty());
    assert_eq!(ja, jb);
}

#[test]
fn csv_sweep_writes_flags_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "mode = \"sweep\"\n[model]\nomega_b_mhz = 600.0\n[sweep]\nb_points = 5\nf_points = 7\nderivative = true\n[output]\nformat = \"csv\"\npath = \"grid.csv\"\n",
    );
    let out = nvmpr(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let sidecar = std::fs::read_to_string(dir.path().join("grid.csv.flags.json")).unwrap();
    assert!(sidecar.contains("derivative_per_mhz"));
}

#[test]
fn defaults_without_config_go_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvmpr(&["atlas", "--format", "csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("k,l,numerator,denominator,f_mhz"));
    let out = nvmpr(&["transitions"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 151);
}

#[test]
fn invalid_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "mode = \"sweep\"\n\n[model]\ngamma_2_mhz = 0.0\n",
    );
    let out = nvmpr(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("gamma_2_mhz"), "{err}");

    let out = nvmpr(&["sweep", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(dir.path(), "atlas.toml", "mode = \"atlas\"\n");
    let out = nvmpr(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(dir.path(), "unknown.toml", "mode = \"sweep\"\n[sweep]\nbpoints = 3\n");
    let out = nvmpr(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unconverged_ode_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "o.toml",
        "mode = \"ode-check\"\n[ode_check]\nl = [1]\neta_min = 0.5\neta_max = 1.0\neta_points = 2\nmax_periods = 3\n",
    );
    let out = nvmpr(&["ode-check", "--config", &cfg, "--out", "o.json"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // the partial report is still written
    assert!(dir.path().join("o.json").exists());
}

#[test]
fn coupling_reads_field_map_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let map = nvmpr::coupling::synthetic_spiral_field_map(&Default::default(), [8, 8, 6]).unwrap();
    std::fs::create_dir(dir.path().join("maps")).unwrap();
    map.write(&dir.path().join("maps/spiral.txt")).unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "mode = \"coupling\"\n[coupling]\nfield_map = \"maps/spiral.txt\"\nrefine = false\n",
    );
    let out = nvmpr(&["coupling", "--config", &cfg], Path::new("/"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["g_rad_s"].as_f64().unwrap() > 0.0);

    let cfg = write(
        dir.path(),
        "c2.toml",
        "mode = \"coupling\"\n[coupling]\nfield_map = \"nope.txt\"\n",
    );
    assert_eq!(
        nvmpr(&["coupling", "--config", &cfg], dir.path()).status.code(),
        Some(2)
    );
}
