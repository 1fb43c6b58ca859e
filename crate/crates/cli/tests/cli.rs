use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlstefan"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("STEFAN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn stationary_simulation_keeps_mass_and_zero_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("stationary.json");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,mass,linf,l1_gamma,supp_plus_count,supp_minus_count"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r[1] == rows[0][1] && r[3] == "0"));
    let series = std::fs::read_to_string(dir.path().join("series/mass.csv")).unwrap();
    assert!(series.starts_with("t,value\n0,"));
}

#[test]
fn bop_on_one_signed_data_agrees_across_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("one_signed_bump.json");
    let out = run(&["bop", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = read_json(&dir.path().join("bop.json"));
    assert!(summary["w_inf_gap_l1"].as_f64().unwrap() <= 1e-6);
    let time = read_json(&dir.path().join("bop_time.json"));
    assert_eq!(time["method"], "time-integration");
    assert_eq!(time["w_inf_file"], "w_inf_time.json");
    assert!(dir.path().join("w_inf_time.json").exists());
    let kernel = read_json(&dir.path().join("kernel.json"));
    assert_eq!(kernel["profile"], "poly-bump");
}

#[test]
fn decompose_far_bumps_has_no_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("far_bumps.json");
    let out = run(&["decompose", "--config", cfg.to_str().unwrap(), "--t-end", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("decomposition_gap.csv")).unwrap();
    let worst = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst <= 1e-10);
}

#[test]
fn interacting_phases_fail_decompose_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("touching.json");
    std::fs::write(
        &cfg,
        r#"{"name":"touching","grid":{"dim":1,"spacing":0.1,"half_width":12.0},
            "kernel":{"profile":"tent","radius":1.0},
            "initial":{"kind":"segments","segments":[
                {"lo":-2.0,"hi":0.0,"value":3.0},{"lo":0.1,"hi":2.0,"value":-3.0}]},
            "solver":{"dt":0.1,"t_end":1.0}}"#,
    )
    .unwrap();
    let out = run(&["decompose", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL phases_separated"));
}

#[test]
fn criterion_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("phase_loss.json");
    let out = run(&["criterion", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.path().join("criterion.json"));
    assert_eq!(report["criterion_holds"], true);
    assert_eq!(report["bound_respected"], true);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn checks_suite_passes_on_random_2d_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("random_2d.json");
    let out = run(&["checks", "--config", cfg.to_str().unwrap(), "--threads", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for name in ["conservation", "linf_bound", "support_growth", "retention", "subcaloric"] {
        let report = read_json(&dir.path().join(format!("checks/{name}.json")));
        assert_eq!(report["pass"], true, "{name}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenario("random_2d.json");
    for dir in [&a, &b] {
        let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--t-end", "2"], dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() >= 6);
    assert_eq!(ta, tb);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["simulate", "--config", "/nonexistent/scenario.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let cfg = scenario("stationary.json");
    let bad_dt = run(&["simulate", "--config", cfg.to_str().unwrap(), "--dt", "0.9"], dir.path());
    assert_eq!(bad_dt.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_dt.stderr).contains("solver.dt"));
    let negative = run(&["project", "--config", scenario("far_bumps.json").to_str().unwrap()], dir.path());
    assert_eq!(negative.status.code(), Some(2));
}

#[test]
fn effective_config_reflects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("stationary.json");
    let out = run(
        &["simulate", "--config", cfg.to_str().unwrap(), "--dt", "0.05", "--t-end", "1", "--dump-effective-config"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let eff = read_json(&dir.path().join("effective_config.json"));
    assert_eq!(eff["solver"]["dt"], 0.05);
    assert_eq!(eff["solver"]["t_end"], 1.0);
    assert_eq!(eff["name"], "stationary");
}

#[test]
fn out_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("stationary.json");
    let status = Command::new(env!("CARGO_BIN_EXE_nlstefan"))
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--t-end", "1"])
        .env("STEFAN_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("diagnostics.csv").exists());
}

#[test]
fn retention_is_skipped_for_interacting_phases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("close.json");
    std::fs::write(
        &cfg,
        r#"{"name":"close","grid":{"dim":1,"spacing":0.1,"half_width":12.0},
            "kernel":{"profile":"tent","radius":1.0},
            "initial":{"kind":"segments","segments":[
                {"lo":-1.5,"hi":-0.5,"value":3.0},{"lo":0.5,"hi":1.5,"value":-3.0}]},
            "solver":{"dt":0.1,"t_end":2.0}}"#,
    )
    .unwrap();
    let out = run(&["checks", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("SKIP retention"), "{stdout}");
    assert!(!dir.path().join("out/checks/retention.json").exists());
    let summary = read_json(&dir.path().join("out/checks.json"));
    assert_eq!(summary[3]["skipped"], true);
}
