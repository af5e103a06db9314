//! End-to-end runs of the `harqopt` binary.

use std::path::Path;
use std::process::{Command, Output};

use harqopt::output::read_csv;

fn harqopt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harqopt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HARQOPT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let t = read_csv(path).unwrap();
    let c = t.column(name).unwrap();
    t.rows.into_iter().map(|r| r[c].clone()).collect()
}

#[test]
fn non_square_a_exits_two_naming_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "bad.json", r#"{"system": {"A": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]}}"#);
    let o = harqopt(&["solve", "--config", &cfg], &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.A"));
}

#[test]
fn unknown_field_and_missing_file_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "typo.json", r#"{"evl": {}}"#);
    assert_eq!(harqopt(&["solve", "--config", &cfg], d.path()).status.code(), Some(2));
    assert_eq!(
        harqopt(&["solve", "--config", "/nonexistent.json"], d.path()).status.code(),
        Some(2)
    );
    assert_eq!(harqopt(&["reproduce", "fig1"], d.path()).status.code(), Some(2));
}

#[test]
fn arq_policy_is_all_fresh() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "arq.json", r#"{"scheme": {"kind": "arq"}}"#);
    let out = d.path().join("out");
    assert!(harqopt(&["solve", "--config", &cfg], &out).status.success());
    let actions = column(&out.join("policy.csv"), "action");
    assert!(!actions.is_empty());
    assert!(actions.iter().all(|a| a == "fresh"));
    assert!(out.join("run.json").exists() && out.join("model.tsv").exists());
}

#[test]
fn unit_tau_and_standard_ir_give_identical_policy_files() {
    let d = tempfile::tempdir().unwrap();
    let a = write_config(d.path(), "a.json", r#"{"scheme": {"kind": "ir", "tau": 1.0}}"#);
    let b = write_config(d.path(), "b.json", r#"{"scheme": {"kind": "std_ir"}}"#);
    assert!(harqopt(&["solve", "--config", &a], &d.path().join("a")).status.success());
    assert!(harqopt(&["solve", "--config", &b], &d.path().join("b")).status.success());
    let pa = std::fs::read(d.path().join("a/policy.csv")).unwrap();
    let pb = std::fs::read(d.path().join("b/policy.csv")).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn evaluate_is_deterministic_and_headed() {
    let d = tempfile::tempdir().unwrap();
    let args = ["evaluate", "--seed", "4", "--trials", "50", "--slots", "80"];
    assert!(harqopt(&args, &d.path().join("x")).status.success());
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "2"]);
    assert!(harqopt(&threaded, &d.path().join("y")).status.success());
    for f in ["trace.csv", "histogram.csv", "summary.csv", "run.json"] {
        let x = std::fs::read(d.path().join("x").join(f)).unwrap();
        let y = std::fs::read(d.path().join("y").join(f)).unwrap();
        if f.ends_with(".csv") {
            assert_eq!(x, y, "{f}");
            assert!(x.starts_with(b"# schema=harqopt."));
        }
    }
    assert_eq!(column(&d.path().join("x/trace.csv"), "slot").len(), 80);
}

#[test]
fn one_bit_payload_has_zero_variation() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "b1.json", r#"{"link": {"b": 1}, "eval": {"trials": 20, "slots": 50}}"#);
    let out = d.path().join("out");
    assert!(harqopt(&["evaluate", "--config", &cfg], &out).status.success());
    assert_eq!(column(&out.join("summary.csv"), "sigma2_mse"), vec!["0"]);
}

#[test]
fn evaluate_reads_a_solved_policy_file() {
    let d = tempfile::tempdir().unwrap();
    let solved = d.path().join("solved");
    assert!(harqopt(&["solve"], &solved).status.success());
    let json = format!(
        r#"{{"policy_file": {:?}, "eval": {{"trials": 20, "slots": 40}}}}"#,
        solved.join("policy.csv")
    );
    let cfg = write_config(d.path(), "eval.json", &json);
    let out = d.path().join("eval");
    let o = harqopt(&["evaluate", "--config", &cfg], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.csv").exists());
}

/// The fig2 preset against its StdCC twin: the simulated trace means order
/// the same way as the analytic gains.
#[test]
fn fig2_preset_trace_means_follow_the_analytic_gains() {
    let d = tempfile::tempdir().unwrap();
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/fig2.json");
    let text = std::fs::read_to_string(&preset).unwrap();
    let std_cc = text.replace(r#""kind": "sn_cc", "alpha": 0.1"#, r#""kind": "std_cc""#);
    assert_ne!(text, std_cc);
    let cfg = write_config(d.path(), "std.json", &std_cc);
    let p = preset.to_string_lossy().into_owned();
    assert!(harqopt(&["evaluate", "--config", &p], &d.path().join("sn")).status.success());
    assert!(harqopt(&["evaluate", "--config", &cfg], &d.path().join("std")).status.success());
    let mean = |dir: &str| -> f64 {
        let v = column(&d.path().join(dir).join("trace.csv"), "mean_mse");
        v.iter().map(|x| x.parse::<f64>().unwrap()).sum::<f64>() / v.len() as f64
    };
    let analytic = |dir: &str| -> f64 {
        column(&d.path().join(dir).join("summary.csv"), "mu_analytic")[0].parse().unwrap()
    };
    let (sn, std) = (mean("sn"), mean("std"));
    assert_eq!(sn < std, analytic("sn") < analytic("std"), "SN {sn} vs StdCC {std}");
    assert!((sn - analytic("sn")).abs() / analytic("sn") < 0.05);
}

#[test]
fn singleton_grid_gives_one_row_and_verifies() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "p.json",
        r#"{"eval": {"trials": 40, "slots": 100}, "pareto": {"family": "ir", "grid": [0.5]}}"#,
    );
    let out = d.path().join("out");
    assert!(harqopt(&["pareto", "--config", &cfg], &out).status.success());
    let front = out.join("front.csv");
    assert_eq!(column(&front, "label").len(), 1);
    assert!(out.join("policies/point_0.csv").exists());
    let o = harqopt(&["verify", front.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn verify_flags_a_tampered_front() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "p.json",
        r#"{"scheme": {"kind": "std_ir", "cost": {"mode": "scaled_exponential", "rho_sq": 4.4}},
            "eval": {"trials": 60, "slots": 200},
            "pareto": {"family": "ir", "grid": [0.2, 0.5, 1.0], "theta": 1e12}}"#,
    );
    let out = d.path().join("out");
    assert!(harqopt(&["pareto", "--config", &cfg], &out).status.success());
    let front = out.join("front.csv");
    let text = std::fs::read_to_string(&front).unwrap();
    assert!(text.contains(",false\n"), "expected a dominated point:\n{text}");
    let tampered: String = text.replace(",false\n", ",true\n");
    std::fs::write(&front, tampered).unwrap();
    let o = harqopt(&["verify", front.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("dominated by"));
}

#[test]
fn empty_feasible_set_is_a_status_row() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "p.json",
        r#"{"eval": {"trials": 20, "slots": 50}, "pareto": {"family": "ir", "grid": [0.5, 1.0], "theta": -1.0}}"#,
    );
    let out = d.path().join("out");
    assert_eq!(harqopt(&["pareto", "--config", &cfg], &out).status.code(), Some(0));
    assert_eq!(column(&out.join("scan_status.csv"), "status"), vec!["empty_feasible_set"]);
}

#[test]
fn output_dir_defaults_to_the_environment_variable() {
    let d = tempfile::tempdir().unwrap();
    let target = d.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_harqopt"))
        .args(["solve"])
        .env("HARQOPT_OUT_DIR", &target)
        .current_dir(d.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("policy.csv").exists());
}

#[test]
fn reproduce_reports_assertions_and_reruns_identically() {
    let d = tempfile::tempdir().unwrap();
    let args = ["reproduce", "fig6", "--trials", "100", "--slots", "200"];
    let o = harqopt(&args, &d.path().join("a"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    // the emitted config reproduces the run
    let cfg = d.path().join("a/fig6/config.json");
    let o = harqopt(&["reproduce", "fig6", "--config", cfg.to_str().unwrap()], &d.path().join("b"));
    assert_eq!(o.status.code(), Some(0));
    for f in ["histogram.csv", "summary.csv", "assertions.csv"] {
        assert_eq!(
            std::fs::read(d.path().join("a/fig6").join(f)).unwrap(),
            std::fs::read(d.path().join("b/fig6").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn failing_figure_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let o = harqopt(&["reproduce", "fig7", "--trials", "100", "--slots", "200"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let a = column(&d.path().join("fig7/assertions.csv"), "passed");
    assert!(a.contains(&"false".to_string()));
}
