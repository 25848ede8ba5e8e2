use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn condor(args: &[&str], out: &Path, config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_condor"));
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--output-dir")
        .arg(out)
        .args(args)
        .env_remove("CONDOR_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("condor.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay").join(name)
}

#[test]
fn minimal_simulate_writes_manifest_and_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nh = 0.1\n\n[grid]\nn_paths = 10\nn_steps = 5\n");
    let o = condor(&["simulate"], tmp.path(), Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("n_paths=10") && stdout.contains("n_steps=5"));
    let ds = tmp.path().join("dataset");
    for f in ["manifest.toml", "s.csv", "v.csv"] {
        assert!(ds.join(f).is_file(), "{f}");
    }
    let s = std::fs::read_to_string(ds.join("s.csv")).unwrap();
    assert_eq!(s.lines().next().unwrap(), "path_id,t0,t1,t2,t3,t4,t5");
    assert_eq!(s.lines().count(), 11);
}

#[test]
fn missing_hurst_exits_2_and_names_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nkappa = 0.1\n");
    let o = condor(&["simulate"], tmp.path(), Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.h"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = condor(&["simulate", "--no-such-flag"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let o = Command::new(env!("CARGO_BIN_EXE_condor")).arg("--help").output().unwrap();
    assert!(o.status.success());
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--config",
        "--profile",
        "--workers",
        "--n-paths",
        "--n-inner",
        "--repeats",
        "--seed",
        "--output-dir",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
    for sub in ["simulate", "price", "metrics", "sweep", "theorem-check", "replay", "report"] {
        assert!(help.contains(sub), "{sub}");
    }
}

#[test]
fn malformed_theorem_bounds_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nh = 0.1\n\n[theorem]\nk_low = 1.04\nk_high = 0.96\n");
    let o = condor(&["theorem-check"], tmp.path(), Some(&cfg));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn injected_supermartingale_reports_tau_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = condor(&["theorem-check", "--inject-supermartingale"], tmp.path(), None);
    assert!(o.status.success());
    let report = std::fs::read_to_string(tmp.path().join("theorem_check.txt")).unwrap();
    assert!(report.lines().any(|l| l == "tau = 0"));
}

#[test]
fn replay_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let chains = tmp.path().join("chains");
    std::fs::create_dir(&chains).unwrap();
    let o = condor(&["replay", "--chains", chains.to_str().unwrap()], &tmp.path().join("out"), None);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).to_lowercase().contains("empty"), "{}", stderr(&o));
}

#[test]
fn replay_crash_fixture_has_49_points_per_portfolio() {
    let tmp = tempfile::tempdir().unwrap();
    let o = condor(&["replay", "--chains", fixture("crash").to_str().unwrap()], tmp.path(), None);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("replay_pnl.csv")).unwrap();
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for line in csv.lines().skip(1) {
        *counts.entry(line.split(',').nth(1).unwrap().to_string()).or_default() += 1;
    }
    assert_eq!(counts.len(), 3);
    assert!(counts.values().all(|&n| n == 49), "{counts:?}");
    assert!(tmp.path().join("replay_figure.csv").is_file());
}

#[test]
fn replay_bull_fixture_writes_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "[model]\nh = 0.1\n\n[replay]\nchains_dir = \"{}\"\nportfolios = [{{ x = 0.02, xhat = 0.04, xbar = 0.0 }}, {{ x = 0.06, xhat = 0.04, xbar = 0.0 }}]\n",
            fixture("bull").display().to_string().replace('\\', "/")
        ),
    );
    let o = condor(&["replay"], &tmp.path().join("out"), Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/replay_pnl.csv")).unwrap();
    assert!(csv.contains("x0.02_xhat0.04_xbar+0.00") && csv.contains("x0.06_xhat0.04_xbar+0.00"));
}

#[test]
fn asymmetry_sweep_emits_three_row_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[model]\nh = 0.1\n\n[grid]\nn_paths = 12\n\n[pricing]\nn_inner = 100\n\n[sweep]\naxis = \"asymmetry\"\nvalues = [-0.1, 0.0, 0.1]\nrepeats = 1\n",
    );
    let o = condor(&["sweep", "--axis", "asymmetry"], tmp.path(), Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("asymmetry_metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "xbar,phi_T,phi_tau,tau,theta_T,theta_tau,phi_T_M,phi_tau_M,eta_T_r,eta_tau_r,eta_T_l,eta_tau_l"
    );
    assert_eq!(lines.count(), 3);
    for f in ["asymmetry_metrics.md", "asymmetry_figure.csv", "asymmetry_mean.svg"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn price_without_dataset_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = condor(&["price"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
}
