use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_toy(out: &Path) -> Vec<String> {
    [
        "toy",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "11",
        "--override",
        "replicates=2",
        "--override",
        "dims=2",
        "--override",
        "outer_steps=3",
        "--override",
        "particles=20",
        "--override",
        "samples=20",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    agd(&refs)
}

#[test]
fn toy_writes_csvs_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&small_toy(dir.path()));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("toy_power_a0.5_d2.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "replicate,t,renyi_bound,log_likelihood_estimate,wall_ms"
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    let meta = fs::read_to_string(dir.path().join("meta.txt")).unwrap();
    assert!(meta.contains("master_seed = 11"));
    assert!(meta.contains("config_hash = "));
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&small_toy(a.path())).status.success());
    assert!(run(&small_toy(b.path())).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 10);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        if name == "meta.txt" {
            let strip = |v: &[u8]| {
                String::from_utf8_lossy(v)
                    .lines()
                    .filter(|l| !l.starts_with("output_dir"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(&x), strip(&y));
        } else {
            assert_eq!(x, y, "{name:?} differs");
        }
    }
}

#[test]
fn method_and_alpha_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small_toy(dir.path());
    args.extend(["--method", "power", "--alpha", "0.25"].map(String::from));
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("toy_power_a0.25_d2.csv").exists());
    assert!(!dir.path().join("toy_mirror_a1_d2.csv").exists());
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "experiment = toy\n# comment\neta0 = 0.3\nreplicates = 4\n",
    )
    .unwrap();
    let out = agd(&[
        "validate-config",
        "--config",
        cfg.to_str().unwrap(),
        "--eta0",
        "0.2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("eta0 = 0.2"));
    assert!(text.contains("replicates = 4"));
    assert!(text.contains("# hash = "));
}

#[test]
fn config_errors_exit_with_one() {
    let out = agd(&["toy", "--override", "nope=1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = agd(&[
        "validate-config",
        "--override",
        "kappa=0.1",
        "--method",
        "power:0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
    let out = agd(&[
        "blr",
        "--override",
        "dataset_path=/nonexistent/covtype.libsvm",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = agd(&["toy", "--config", "/nonexistent.cfg"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small_toy(dir.path());
    args.extend(
        [
            "--method",
            "power:0.5",
            "--warn-only",
            "--override",
            "kappa=10",
        ]
        .map(String::from),
    );
    let out = run(&args);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("toy_power_a0.5_d2.csv").exists());
}

#[test]
fn oracle_reports_each_property() {
    let dir = tempfile::tempdir().unwrap();
    let out = agd(&[
        "oracle",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "oracle_instances=3",
    ]);
    let report = fs::read_to_string(dir.path().join("oracle_report.tsv")).unwrap();
    assert_eq!(
        report.lines().next().unwrap(),
        "name\tinstances\tworst\ttolerance\tverdict"
    );
    assert!(report.lines().count() >= 7);
    assert!(report.contains("admissibility_injected"));
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2);
    assert_eq!(code == 0, !report.contains("\tfail"));
}

#[test]
fn blr_runs_on_a_libsvm_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("small.libsvm");
    let mut text = String::new();
    for i in 0..120 {
        let x = (i % 12) as f64 / 6.0 - 1.0;
        let y = ((i * 7) % 11) as f64 / 5.0 - 1.0;
        let label = if x + 0.5 * y > 0.0 { 2 } else { 1 };
        text.push_str(&format!("{label} 1:{x} 2:{y}\n"));
    }
    fs::write(&data, text).unwrap();
    let out = agd(&[
        "blr",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        &format!("dataset_path={}", data.display()),
        "--override",
        "outer_steps=4",
        "--override",
        "replicates=2",
        "--override",
        "minibatch=30",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for label in ["power_a0.5", "ais_a0.5"] {
        let csv = fs::read_to_string(dir.path().join(format!("blr_{label}.csv"))).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "replicate,t,accuracy,predictive_log_likelihood,wall_ms"
        );
        assert_eq!(csv.lines().count(), 1 + 2 * 5);
    }
}
