//! End-to-end behaviour of the `qheom` binary.

use std::path::Path;
use std::process::{Command, Output};

const SHORT: &str = r#"mode = "trajectory"

[heom]
level = 1

[pulse]
energy = 5.0
tau_ns = 5.0

[run]
t_final_ns = 2.0
output_interval_ns = 0.5
"#;

const TRAJECTORY_HEADER: &str = "t_ns,pop_g,pop_Dm,pop_Dp,pop_B,pop_De,pop_Bem,pop_Bep,abs_coh_DmDp,abs_coh_BemBep,pop_Q3,flux_res,flux_loss,P_res,P_loss";

fn qheom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qheom"))
        .args(args)
        .env("QHEOM_THREADS", "1")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qheom(&args)
}

#[test]
fn trajectory_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", &format!("{SHORT}\n[output]\nreports = true\n"));
    let out = tmp.path().join("out");
    let res = run_into(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    for name in ["trajectory.csv", "run.json", "config.toml", "eigen.json", "bath.json"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
    let times: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(times, ["0.0", "0.5", "1.0", "1.5", "2.0"]);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["mode"], "trajectory");
}

#[test]
fn reruns_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT);
    let out = tmp.path().join("out");
    let names = ["trajectory.csv", "config.toml", "run.json"];
    assert_eq!(run_into(&cfg, &out, &[]).status.code(), Some(0));
    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    assert_eq!(run_into(&cfg, &out, &[]).status.code(), Some(0));
    for (name, bytes) in names.iter().zip(&first) {
        assert_eq!(&std::fs::read(out.join(name)).unwrap(), bytes, "{name}");
    }
}

#[test]
fn echo_is_a_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT);
    let first = qheom(&["echo", &cfg]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let echoed = write(tmp.path(), "echo.toml", &String::from_utf8(first.stdout.clone()).unwrap());
    let second = qheom(&["echo", &echoed]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn overrides_and_mode_flag_replace_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT);
    let res = qheom(&["echo", &cfg, "--override", "heom.level=3", "--override", "bath.temperature_k=77"]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("level = 3"), "{text}");
    assert!(text.contains("temperature_k = 77.0"), "{text}");

    let res = qheom(&["echo", &cfg, "--mode", "field_free"]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("mode = \"field_free\""), "{text}");
}

#[test]
fn missing_file_is_a_config_error() {
    let res = qheom(&["run", "/nonexistent/run.toml"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).starts_with("error:"));
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "typo.toml", "mode = \"trajectory\"\n\n[heom]\nlevle = 3\n");
    let res = qheom(&["echo", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr(&res);
    assert!(err.contains("typo.toml") && err.contains("4"), "{err}");
    assert!(err.contains("levle"), "{err}");
}

#[test]
fn asymmetric_coupling_names_the_offending_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[network]\ncoupling_ghz = [[0.0, 0.1, 0.05], [0.2, 0.0, 0.05], [0.05, 0.05, 0.0]]\n";
    let cfg = write(tmp.path(), "asym.toml", text);
    let res = qheom(&["echo", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr(&res);
    assert!(err.contains("asym.toml:2"), "{err}");
    assert!(err.contains("coupling_ghz[0][1] = 0.1 differs from coupling_ghz[1][0] = 0.2"), "{err}");
}

#[test]
fn bad_override_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT);
    for item in ["heom.level=-1", "heom.level", "nosuch.key=1"] {
        let res = qheom(&["echo", &cfg, "--override", item]);
        assert_eq!(res.status.code(), Some(2), "{item}: {}", stderr(&res));
    }
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let res = Command::new(env!("CARGO_BIN_EXE_qheom"))
        .args(["run", "/nonexistent/run.toml"])
        .env("QHEOM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("QHEOM_THREADS"));
}

#[test]
fn step_underflow_is_an_integration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SHORT}\n[integrator]\nrel_tol = 1e-14\nabs_tol = 1e-30\nmin_step_fraction = 0.05\n");
    let cfg = write(tmp.path(), "stiff.toml", &text);
    let out = tmp.path().join("out");
    let res = run_into(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(3), "{}", stderr(&res));
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert!(meta["status"].as_str().unwrap().starts_with("failed"));
}

#[test]
fn unwritable_output_is_an_output_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", SHORT);
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let res = run_into(&cfg, &blocker.join("out"), &[]);
    assert_eq!(res.status.code(), Some(4), "{}", stderr(&res));
}

#[test]
fn scan_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "mode = \"scan\"\n[bath]\nenabled = false\n[heom]\nlevel = 0\n[run]\nt_final_ns = 10.0\n[scan]\nenergies = [1.0, 5.0]\ntaus_ns = [5.0]\n";
    let cfg = write(tmp.path(), "scan.toml", text);
    let out = tmp.path().join("out");
    let res = run_into(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let csv = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "E_1e8Ha,tau_ns,R,P_res,P_loss,status");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1.0,5.0,") && lines[1].ends_with(",ok"), "{}", lines[1]);
    assert!(lines[2].starts_with("5.0,5.0,") && lines[2].ends_with(",ok"), "{}", lines[2]);
}

#[test]
fn convergence_reports_deltas_between_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{}\n[convergence]\nlevels = [0, 1]\n", SHORT.replace("\"trajectory\"", "\"convergence\""));
    let cfg = write(tmp.path(), "conv.toml", &text);
    let out = tmp.path().join("out");
    let res = run_into(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][..3], ["level", "n_matsubara", "n_ado"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "0");
    assert_eq!(rows[2][0], "1");
    assert!(rows[1][6].is_empty(), "first row has no predecessor");
    assert!(!rows[2][6].is_empty(), "second row compares with the first");
}

#[test]
fn resumed_run_continues_the_straight_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let straight_cfg = write(tmp.path(), "full.toml", &SHORT.replace("t_final_ns = 2.0", "t_final_ns = 4.0"));
    let straight = tmp.path().join("straight");
    assert_eq!(run_into(&straight_cfg, &straight, &[]).status.code(), Some(0));

    let first_cfg = write(tmp.path(), "half.toml", &format!("{SHORT}\n[output]\ncheckpoint_interval_ns = 1.0\n"));
    let first = tmp.path().join("first");
    assert_eq!(run_into(&first_cfg, &first, &[]).status.code(), Some(0));
    let cp = first.join("checkpoint.json");
    let second = tmp.path().join("second");
    let res = run_into(&straight_cfg, &second, &["--resume", cp.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));

    let full = std::fs::read_to_string(straight.join("trajectory.csv")).unwrap();
    let tail = std::fs::read_to_string(second.join("trajectory.csv")).unwrap();
    let tail_rows: Vec<&str> = tail.lines().skip(1).collect();
    assert!(!tail_rows.is_empty());
    let full_rows: Vec<&str> = full.lines().skip(1).collect();
    assert!(full_rows.ends_with(&tail_rows), "resumed rows differ from the straight run");
    assert_eq!(tail_rows.last().unwrap().split(',').next(), Some("4.0"));
}

#[test]
fn resume_rejects_a_different_hierarchy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "half.toml", &format!("{SHORT}\n[output]\ncheckpoint_interval_ns = 1.0\n"));
    let first = tmp.path().join("first");
    assert_eq!(run_into(&cfg, &first, &[]).status.code(), Some(0));
    let cp = first.join("checkpoint.json");
    let res = run_into(&cfg, &tmp.path().join("second"), &["--override", "heom.level=2", "--resume", cp.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
}
