//! End-to-end tests of the `dcopt` binary: exit codes, deterministic output
//! bytes, sweeps, verification, and plotting.

use std::path::Path;
use std::process::{Command, Output};

fn dcopt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcopt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const CONFIG: &str = r#"
method = "dashco"
t = 60
n = 4
d = 3
record_every = 10
master_seed = 9

[problem]
family = "hetero_quadratic"
span = [0.0, 5.0]

[oracle]
sigma = 0.1

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.5

[schedule]
derivation = "manual"
alpha = 0.05
beta1 = 0.5
gamma_x = 0.4
gamma_g = 0.4
"#;

#[test]
fn run_is_deterministic_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let out1 = dcopt(&["run", "exp.toml", "--out", "a.csv"], dir.path());
    assert!(out1.status.success(), "{}", String::from_utf8_lossy(&out1.stderr));
    let out2 = dcopt(&["run", "exp.toml", "--out", "b.csv"], dir.path());
    assert!(out2.status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b, "byte-identical CSVs expected");
    assert!(a.starts_with(b"t,consensus_error,stationarity,objective,comm_bytes_cum,wallclock_ns\n"));
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    assert!(dcopt(&["run", "exp.toml", "--out", "a.csv"], dir.path()).status.success());
    assert!(dcopt(&["run", "exp.toml", "--out", "b.csv", "--seed", "77"], dir.path())
        .status
        .success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_parse_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "method = \"dashco\"\nbogus = 1\n").unwrap();
    let out = dcopt(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn infeasible_schedule_exits_three() {
    // A theorem2_case_i derivation with an empty beta2 interval.
    let config = CONFIG.replace(
        r#"derivation = "manual"
alpha = 0.05
beta1 = 0.5
gamma_x = 0.4
gamma_g = 0.4"#,
        r#"derivation = "theorem2_case_i"
theta = 1.4716
omega = 1.0
b_inf = 1.0
l = 1.0"#,
    );
    let config = config
        .replace("method = \"dashco\"", "method = \"damsco\"")
        .replace("t = 60", "t = 100");
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), &config).unwrap();
    let out = dcopt(&["run", "exp.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn divergent_run_exits_four() {
    let config = CONFIG.replace("alpha = 0.05", "alpha = 1e300");
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), &config).unwrap();
    let out = dcopt(&["run", "exp.toml"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_rounds_writes_header_only() {
    let config = CONFIG.replace("t = 60", "t = 0");
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), &config).unwrap();
    let out = dcopt(&["run", "exp.toml", "--out", "empty.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
    assert_eq!(
        text,
        "t,consensus_error,stationarity,objective,comm_bytes_cum,wallclock_ns\n"
    );
}

#[test]
fn verify_passes_on_default_pipeline_config() {
    // Ring n = 5 with top-k(0.3) and a theorem-1 schedule.
    let config = r#"
method = "damsco"
t = 100
n = 5
d = 10
record_every = 10
master_seed = 4

[problem]
family = "hetero_quadratic"
span = [0.0, 10.0]

[oracle]
sigma = 0.1

[topology]
kind = "ring"

[compressor]
kind = "top_k"
ratio = 0.3

[schedule]
derivation = "theorem1"
b_inf = 1.0
delta = 0.01
"#;
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    let out = dcopt(&["verify", "exp.toml"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout:\n{stdout}");
    assert!(stdout.contains("PASS mixing matrix invariants"));
    assert!(stdout.contains("PASS compression contraction"));
    assert!(stdout.contains("PASS smoothness probe"));
    assert!(stdout.contains("PASS oracle unbiasedness"));
    assert!(stdout.contains("PASS oracle variance"));
    assert!(stdout.contains("PASS schedule inequality chain"));
    assert!(stdout.contains("binding constraint"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn sweep_produces_per_leg_csvs_for_speedup_comparison() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let out = dcopt(
        &["sweep", "exp.toml", "--vary", "n=4,16", "--out", "leg.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for n in [4, 16] {
        let path = dir.path().join(format!("leg_n={n}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        let records = dcopt::metrics::from_csv(&text).unwrap();
        assert!(!records.is_empty());
    }
    // The two legs feed the speedup comparison directly.
    let a = dcopt::metrics::from_csv(
        &std::fs::read_to_string(dir.path().join("leg_n=4.csv")).unwrap(),
    )
    .unwrap();
    let b = dcopt::metrics::from_csv(
        &std::fs::read_to_string(dir.path().join("leg_n=16.csv")).unwrap(),
    )
    .unwrap();
    let report = dcopt::metrics::speedup_report(&[(4, &a[..]), (16, &b[..])]).unwrap();
    assert!(report.ratio.is_finite());
}

#[test]
fn plot_renders_svg_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    assert!(dcopt(&["run", "exp.toml", "--out", "run.csv"], dir.path()).status.success());
    let out = dcopt(&["plot", "run.csv", "--out", "run.svg"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(dir.path().join("run.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("<polyline"));
}
