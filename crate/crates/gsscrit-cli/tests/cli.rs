//! End-to-end tests of the binary: exit codes, artifact formats,
//! determinism, and the negative configuration matrix.

use std::path::Path;
use std::process::{Command, Output};

fn gsscrit(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsscrit"))
        .args(args)
        .env("GSSCRIT_OUT", out_dir)
        .output()
        .expect("binary runs")
}

fn json_artifact(dir: &Path, prefix: &str) -> serde_json::Value {
    let path = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            p.file_name().unwrap().to_string_lossy().starts_with(prefix)
                && p.extension().is_some_and(|x| x == "json")
        })
        .unwrap_or_else(|| panic!("no {prefix}*.json in {dir:?}"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn classify_degenerate_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(
        &["classify", "--model", "nlkg", "--p", "3", "--dim", "1", "--omega", "0.70711"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_artifact(dir.path(), "classify-");
    assert_eq!(v["result"]["verdict"], "unstable");
    assert_eq!(v["result"]["rule"]["name"], "DerivativeUnstable");
    assert_eq!(v["result"]["rule"]["n"], 3);
    assert_eq!(v["config"]["omega"], 0.70711);
}

#[test]
fn dcurve_csv_format_and_quintic_has_no_critical_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(
        &["dcurve", "--p", "5", "--samples", "5", "--grid-n", "512"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv_path = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let csv = std::fs::read_to_string(csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "omega,Q,d,d1_fd,d1_Q,d2,d3");
    assert_eq!(lines.count(), 5);
    assert!(!csv.contains('\r'), "LF line endings only");
    let v = json_artifact(dir.path(), "dcurve-");
    assert_eq!(v["result"]["critical_points"].as_array().unwrap().len(), 0);
}

#[test]
fn identical_config_gives_identical_artifacts() {
    let read_pair = |dir: &Path| {
        let mut json = None;
        let mut csv = None;
        for e in std::fs::read_dir(dir).unwrap().filter_map(|e| e.ok()) {
            let p = e.path();
            let content = std::fs::read(&p).unwrap();
            match p.extension().and_then(|x| x.to_str()) {
                Some("json") => json = Some((p.file_name().unwrap().to_owned(), content)),
                Some("csv") => csv = Some((p.file_name().unwrap().to_owned(), content)),
                _ => {}
            }
        }
        (json.unwrap(), csv.unwrap())
    };
    let args =
        ["dcurve", "--samples", "3", "--grid-n", "512", "--omega-min", "0.3", "--omega-max", "0.6"];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(gsscrit(&args, a.path()).status.success());
    assert!(gsscrit(&args, b.path()).status.success());
    assert_eq!(read_pair(a.path()), read_pair(b.path()));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "model=nlkg\np=3\nomega=0.3\ngrid_n=512\n").unwrap();
    let out = gsscrit(
        &["profile", "--config", cfg_path.to_str().unwrap(), "--omega", "0.9"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_artifact(dir.path(), "profile-");
    assert_eq!(v["config"]["omega"], 0.9);
    assert_eq!(v["config"]["grid_n"], 512);
    assert_eq!(v["result"]["pass"], true);
}

#[test]
fn env_var_overrides_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(
        &["profile", "--omega", "0.5", "--grid-n", "512", "--out", "should/not/be/used"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(json_artifact(dir.path(), "profile-").is_object());
    assert!(!Path::new("should/not/be/used").exists());
}

#[test]
fn unknown_flag_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(&["classify", "--bogus", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(&["explode"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "omegaa=0.5\n").unwrap();
    let out = gsscrit(&["classify", "--config", cfg_path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computational_failure_exits_one() {
    // both powers defocusing: valid configuration, no ground state
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(
        &[
            "profile", "--model", "dpnls", "--a1=-1", "--a2=-1", "--omega", "0.5",
            "--grid-n", "512",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn negative_config_matrix() {
    let cases: [&[&str]; 20] = [
        &["--model", "nope"],
        &["--p", "0.5"],
        &["--p", "3", "--dim", "0"],
        &["--p", "5", "--dim", "3"],
        &["--omega", "1.5"],
        &["--omega=-2"],
        &["--model", "dpnls", "--omega=-0.5"],
        &["--model", "dpnls", "--p1", "7", "--p2", "3", "--omega", "0.5"],
        &["--model", "dpnls", "--p1", "0.5", "--omega", "0.5"],
        &["--omega-min", "0.8", "--omega-max", "0.2"],
        &["--omega-min", "1.2"],
        &["--samples", "1"],
        &["--grid-n", "4"],
        &["--grid-r=-5"],
        &["--tol", "0"],
        &["--tol=-1e-9"],
        &["--dt", "0"],
        &["--t-final=-1"],
        &["--dt", "10", "--t-final", "1"],
        &["--output-every", "0"],
    ];
    let dir = tempfile::tempdir().unwrap();
    for (i, extra) in cases.iter().enumerate() {
        let mut args = vec!["classify"];
        args.extend_from_slice(extra);
        let out = gsscrit(&args, dir.path());
        assert_eq!(
            out.status.code(),
            Some(2),
            "case {i} {extra:?}: stderr {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn spectrum_reports_single_negative_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(&["spectrum", "--omega", "0.5", "--grid-n", "1024"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_artifact(dir.path(), "spectrum-");
    assert_eq!(v["result"]["report"]["n_negative"], 1);
    assert!(v["result"]["sb_residual"].as_f64().unwrap() < 1e-4);
}

#[test]
fn evolve_writes_modulation_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsscrit(
        &[
            "evolve", "--omega", "0.9", "--delta", "0.01", "--t-final", "5", "--dt", "0.01",
            "--grid-n", "1024", "--output-every", "100",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv_path = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let csv = std::fs::read_to_string(csv_path).unwrap();
    assert!(csv.starts_with("t,theta,Lambda,alpha,norm_w,A,P,distance\n"));
    let v = json_artifact(dir.path(), "evolve-");
    assert_eq!(v["result"]["exit_time"], serde_json::Value::Null);
    assert_eq!(v["result"]["blowup"], false);
}
