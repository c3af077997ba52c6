//! End-to-end tests of the pridda binary: exit codes, report fields, CSV
//! shapes, determinism, and the shipped example configurations.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pridda")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("failed to spawn pridda")
}

fn parse_kv(stdout: &[u8]) -> HashMap<String, String> {
    String::from_utf8_lossy(stdout)
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn kv_f64(map: &HashMap<String, String>, key: &str) -> f64 {
    map.get(key).unwrap_or_else(|| panic!("missing key {key}")).parse().unwrap()
}

#[test]
fn calibrate_report_golden_values() {
    let out = run_cli(&[
        "calibrate",
        "--epsilon", "1.0",
        "--delta0", "0.01",
        "--iota", "0.1",
        "--lipschitz", "1.0",
        "--q", "100",
        "--horizon", "1000",
    ]);
    assert!(out.status.success());
    let kv = parse_kv(&out.stdout);
    assert!((kv_f64(&kv, "sigma_squared") - 0.16954615572953717).abs() < 1e-12);
    assert!((kv_f64(&kv, "sigma") - 0.41175982772671884).abs() < 1e-12);
    assert!((kv_f64(&kv, "per_step_epsilon") - 0.15811388300841897).abs() < 1e-12);
    assert!(kv_f64(&kv, "achieved_epsilon") <= 1.0);
    assert!(kv_f64(&kv, "achieved_delta") <= 1.0);
    assert_eq!(kv["min_horizon"], "125");
}

#[test]
fn calibrate_defaults_to_minimum_horizon() {
    let out = run_cli(&[
        "calibrate", "--epsilon", "1.0", "--delta0", "0.01", "--iota", "0.1", "--q", "50",
    ]);
    assert!(out.status.success());
    let kv = parse_kv(&out.stdout);
    assert_eq!(kv["min_horizon"], "125");
    assert_eq!(kv["horizon"], "125");
}

#[test]
fn calibrate_rejects_infeasible_inputs_with_exit_2() {
    let short = run_cli(&[
        "calibrate", "--epsilon", "1.0", "--delta0", "0.01", "--iota", "0.1", "--q", "50",
        "--horizon", "124",
    ]);
    assert_eq!(short.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&short.stderr).contains("125"));

    let big_eps = run_cli(&[
        "calibrate", "--epsilon", "2.0", "--delta0", "0.01", "--iota", "0.1", "--q", "50",
    ]);
    assert_eq!(big_eps.status.code(), Some(2));
}

fn reference_then_run(config: &Path, dir: &Path, extra_run_args: &[&str]) {
    let reference = run_cli(&[
        "reference",
        "--config", config.to_str().unwrap(),
        "--out", dir.to_str().unwrap(),
        "--iterations", "2000",
    ]);
    assert!(
        reference.status.success(),
        "reference failed: {}",
        String::from_utf8_lossy(&reference.stderr)
    );
    let mut args = vec![
        "run",
        "--config", config.to_str().unwrap(),
        "--out", dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra_run_args);
    let run = run_cli(&args);
    assert!(run.status.success(), "run failed: {}", String::from_utf8_lossy(&run.stderr));
}

fn assert_trace_shape(path: &Path, expected_rows: usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,subopt_ergodic_mean_node,consensus_err,eps_hat,thm2_envelope,lemma4_envelope"
    );
    assert_eq!(lines.count(), expected_rows);
    assert!(!text.contains('\r'));
}

#[test]
fn l1_example_config_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("l1_synthetic.toml");
    reference_then_run(&config, dir.path(), &[]);
    // horizon 2000 / stride 20 = 100 rows per seed.
    assert_trace_shape(&dir.path().join("trace_seed_1.csv"), 100);
    assert_trace_shape(&dir.path().join("trace_seed_2.csv"), 100);
    assert!(dir.path().join("aggregate.csv").exists());
    assert!(dir.path().join("run_meta.txt").exists());
}

#[test]
fn l2_example_config_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("l2_synthetic.toml");
    reference_then_run(&config, dir.path(), &["--trace-stride", "100"]);
    assert_trace_shape(&dir.path().join("trace_seed_1.csv"), 20);
}

#[test]
fn libsvm_example_config_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("libsvm_example.toml");
    reference_then_run(&config, dir.path(), &[]);
    assert_trace_shape(&dir.path().join("trace_seed_3.csv"), 50);
}

#[test]
fn eps_hat_column_is_nondecreasing_and_within_budget() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("l2_synthetic.toml");
    reference_then_run(&config, dir.path(), &["--seed", "1"]);
    let text = fs::read_to_string(dir.path().join("trace_seed_1.csv")).unwrap();
    let eps: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(eps.windows(2).all(|w| w[1] >= w[0]));
    assert!(*eps.last().unwrap() <= 1.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let config = configs_dir().join("l1_synthetic.toml");
    let d1 = TempDir::new().unwrap();
    let d2 = TempDir::new().unwrap();
    reference_then_run(&config, d1.path(), &["--seeds", "1,2"]);
    reference_then_run(&config, d2.path(), &["--seeds", "1,2"]);
    for name in ["trace_seed_1.csv", "trace_seed_2.csv", "aggregate.csv", "reference.kv"] {
        let a = fs::read(d1.path().join(name)).unwrap();
        let b = fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical invocations");
    }
}

#[test]
fn thread_cap_does_not_change_output() {
    let config = configs_dir().join("l1_synthetic.toml");
    let d1 = TempDir::new().unwrap();
    let d2 = TempDir::new().unwrap();
    reference_then_run(&config, d1.path(), &[]);
    let reference = run_cli(&[
        "reference",
        "--config", config.to_str().unwrap(),
        "--out", d2.path().to_str().unwrap(),
        "--iterations", "2000",
    ]);
    assert!(reference.status.success());
    let run = Command::new(bin())
        .args([
            "run",
            "--config", config.to_str().unwrap(),
            "--out", d2.path().to_str().unwrap(),
        ])
        .env("PRIDDA_THREADS", "1")
        .output()
        .unwrap();
    assert!(run.status.success());
    let a = fs::read(d1.path().join("aggregate.csv")).unwrap();
    let b = fs::read(d2.path().join("aggregate.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn aggregate_means_match_per_seed_traces() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("l2_synthetic.toml");
    reference_then_run(&config, dir.path(), &["--seeds", "5,9"]);
    let col = |path: PathBuf, idx: usize| -> Vec<f64> {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
            .collect()
    };
    let s5 = col(dir.path().join("trace_seed_5.csv"), 1);
    let s9 = col(dir.path().join("trace_seed_9.csv"), 1);
    let mean = col(dir.path().join("aggregate.csv"), 1);
    for ((a, b), m) in s5.iter().zip(&s9).zip(&mean) {
        let expect = (a + b) / 2.0;
        assert_eq!(expect.to_bits(), m.to_bits(), "aggregate mean is not the exact average");
    }
}

#[test]
fn sweep_epsilon_emits_matched_comparisons() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("sweep_epsilon.toml");
    let reference = run_cli(&[
        "reference",
        "--config", config.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--iterations", "5000",
    ]);
    assert!(reference.status.success());
    let sweep = run_cli(&[
        "sweep",
        "--config", config.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--seeds", "1,2,3",
    ]);
    assert!(sweep.status.success(), "{}", String::from_utf8_lossy(&sweep.stderr));
    let text = fs::read_to_string(dir.path().join("sweep_epsilon.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "axis,value,seed,final_subopt");
    // 2 values x 3 seeds.
    assert_eq!(lines.count(), 6);
}

#[test]
fn sweep_with_one_value_matches_run() {
    let dir = TempDir::new().unwrap();
    let base = fs::read_to_string(configs_dir().join("sweep_k.toml")).unwrap();
    let single = base.replace("values = [1.0, 2.0]", "values = [1.0]");
    let config_path = dir.path().join("single.toml");
    fs::write(&config_path, single).unwrap();

    let reference = run_cli(&[
        "reference",
        "--config", config_path.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--iterations", "5000",
    ]);
    assert!(reference.status.success());
    let sweep = run_cli(&[
        "sweep",
        "--config", config_path.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--seeds", "4",
    ]);
    assert!(sweep.status.success());
    let run = run_cli(&[
        "run",
        "--config", config_path.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--seeds", "4",
    ]);
    assert!(run.status.success());

    let sweep_text = fs::read_to_string(dir.path().join("sweep_k_edges.csv")).unwrap();
    let sweep_final: f64 =
        sweep_text.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    let trace_text = fs::read_to_string(dir.path().join("trace_seed_4.csv")).unwrap();
    let run_final: f64 =
        trace_text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(sweep_final.to_bits(), run_final.to_bits());
}

#[test]
fn missing_reference_gives_exit_2() {
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("l1_synthetic.toml");
    let run = run_cli(&[
        "run",
        "--config", config.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn malformed_config_gives_exit_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[problem]\nsource = \"synthetic\"\nunknown_key = 3\n").unwrap();
    let run = run_cli(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn empty_sweep_trace_gives_exit_3() {
    // trace_stride beyond the horizon records no rows; the sweep cannot form
    // final-suboptimality pairs and fails at runtime.
    let dir = TempDir::new().unwrap();
    let config = configs_dir().join("sweep_k.toml");
    let reference = run_cli(&[
        "reference",
        "--config", config.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--iterations", "2000",
    ]);
    assert!(reference.status.success());
    let sweep = run_cli(&[
        "sweep",
        "--config", config.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--seeds", "1",
        "--trace-stride", "999999",
    ]);
    assert_eq!(sweep.status.code(), Some(3));
}
