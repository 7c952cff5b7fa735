use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn emq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emq"))
        .args(args)
        .env("EMQ_OUTPUT_DIR", dir)
        .output()
        .expect("emq runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// CSV rows after the schema line and the column header.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let schema = lines.next().unwrap();
    assert!(schema.starts_with("# schema=emq.") && schema.contains("version=1"), "{schema}");
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn body(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n")
}

#[test]
fn attack_with_zero_trials_writes_an_empty_report() {
    let dir = TempDir::new().unwrap();
    let out = emq(dir.path(), &["attack", "--trials", "0"]);
    assert_eq!(code(&out), 0);
    assert!(rows(&dir.path().join("attack_summary.csv")).is_empty());
    assert_eq!(fs::read_to_string(dir.path().join("attack_trials.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn attack_rejects_n_beyond_the_simulator() {
    let dir = TempDir::new().unwrap();
    let out = emq(dir.path(), &["attack", "--n", "12", "--trials", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulator cap"));
}

#[test]
fn attack_recovers_keys_at_n6() {
    let dir = TempDir::new().unwrap();
    let out = emq(dir.path(), &["attack", "--n", "6", "--m", "10", "--trials", "200", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    let r = &rows(&dir.path().join("attack_summary.csv"))[0];
    assert!(r[4].parse::<f64>().unwrap() >= 0.90, "{r:?}");
    assert_eq!(r[7], "1.000000");
    let lines = fs::read_to_string(dir.path().join("attack_trials.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 201);
    let first: serde_json::Value = serde_json::from_str(lines.lines().nth(1).unwrap()).unwrap();
    assert_eq!(first["seed"], 1);
    assert_eq!(first["queries_used"], 10);
}

#[test]
fn too_few_queries_is_a_bound_failure() {
    let dir = TempDir::new().unwrap();
    // one sample never pins down a 6-bit key
    let out = emq(dir.path(), &["attack", "--m", "1", "--trials", "10"]);
    assert_eq!(code(&out), 1);
    assert_eq!(rows(&dir.path().join("attack_summary.csv"))[0][8], "FAIL");
}

#[test]
fn outputs_are_deterministic_across_runs_and_job_counts() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(code(&emq(a.path(), &["--jobs", "1", "attack", "--trials", "12", "--seed", "7"])), 0);
    assert_eq!(code(&emq(b.path(), &["attack", "--trials", "12", "--seed", "7", "--jobs", "4"])), 0);
    for f in ["attack_trials.jsonl", "attack_summary.csv"] {
        assert_eq!(body(&a.path().join(f)), body(&b.path().join(f)), "{f}");
    }
    let c = TempDir::new().unwrap();
    assert_eq!(code(&emq(c.path(), &["attack", "--trials", "12", "--seed", "8"])), 0);
    assert_ne!(body(&a.path().join("attack_trials.jsonl")), body(&c.path().join("attack_trials.jsonl")));
}

#[test]
fn subgroup_table_matches_enumeration() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&emq(dir.path(), &["subgroups", "--p", "2,3", "--n-max", "4"])), 0);
    let table = rows(&dir.path().join("subgroups.csv"));
    let find = |p: &str, n: &str, k: &str| table.iter().find(|r| r[0] == p && r[1] == n && r[2] == k).unwrap().clone();
    assert_eq!(find("2", "3", "1")[3..], ["7", "7", "MATCH"]);
    assert_eq!(find("2", "4", "2")[3..], ["35", "35", "MATCH"]);
    assert_eq!(find("3", "4", "0")[3..], ["1", "1", "MATCH"]);
    assert!(table.iter().all(|r| r[5] == "MATCH"));
}

#[test]
fn subgroup_counts_above_the_cap_are_skipped() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&emq(dir.path(), &["subgroups", "--p", "2", "--n-max", "4", "--count-cap", "10"])), 0);
    let table = rows(&dir.path().join("subgroups.csv"));
    let r = table.iter().find(|r| r[1] == "4" && r[2] == "2").unwrap();
    assert_eq!(r[4..], ["", "SKIPPED"]);
}

#[test]
fn bound_table_and_plot_script() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&emq(dir.path(), &["bound", "--epsilon", "1/3", "--n-max", "128", "--gnuplot-script"])), 0);
    let table = rows(&dir.path().join("bound.csv"));
    let b64: f64 = table.iter().find(|r| r[0] == "64").unwrap()[1].parse().unwrap();
    assert!((b64 - 16.35).abs() < 1e-2);
    assert_eq!(table[0][2], "half_n");
    let summary = &rows(&dir.path().join("bound_summary.csv"))[0];
    assert_eq!(summary[2], "1");
    let ratio: f64 = summary[4].parse().unwrap();
    assert!((1.9..=2.1).contains(&ratio));
    assert!(fs::read_to_string(dir.path().join("bound.gp")).unwrap().contains("bound.csv"));
}

#[test]
fn bound_near_half_gap_clamps_to_zero_and_rejects_out_of_range() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&emq(dir.path(), &["bound", "--epsilon", "0.4999999999999999", "--n-max", "8"])), 0);
    let table = rows(&dir.path().join("bound.csv"));
    assert_eq!(table.last().unwrap()[1], "0.000000");
    assert_eq!(code(&emq(dir.path(), &["bound", "--epsilon", "0.5"])), 2);
    assert_eq!(code(&emq(dir.path(), &["bound", "--n-step", "0"])), 2);
}

#[test]
fn reduce_matches_distributions() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&emq(dir.path(), &["reduce", "--circuits", "20"])), 0);
    let summary = &rows(&dir.path().join("reduce_summary.csv"))[0];
    assert_eq!(summary[0], "20");
    assert!(summary[1].parse::<f64>().unwrap() <= 1e-9);
    assert_eq!(summary[3], "true");
    let text = fs::read_to_string(dir.path().join("reduce_circuits.jsonl")).unwrap();
    for line in text.lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["queries_compiled"], 2 * v["queries_original"].as_u64().unwrap());
        if v["t"] == 0 {
            assert_eq!(v["tv_distance"], 0.0);
        }
    }
}

#[test]
fn qdegree_small_ambient() {
    let dir = TempDir::new().unwrap();
    let out = emq(dir.path(), &["qdegree", "--n", "2", "--blocks", "4", "--corpus", "0"]);
    assert_eq!(code(&out), 0);
    let table = rows(&dir.path().join("qdegree.csv"));
    assert_eq!(table[0][..3], ["distinguisher_degree", "2", "2"]);
    assert_eq!(table[1][..3], ["empty_degree", "0", "0"]);
    assert_eq!(rows(&dir.path().join("qdegree_points.csv")).len(), 3);
}

#[test]
fn qdegree_exit_code_tracks_the_checks() {
    let dir = TempDir::new().unwrap();
    let out = emq(dir.path(), &["qdegree", "--corpus", "10", "--seed", "3"]);
    let table = rows(&dir.path().join("qdegree.csv"));
    let failed = table.iter().any(|r| r[3] == "FAIL");
    assert_eq!(code(&out), if failed { 1 } else { 0 });
    assert!(table.iter().any(|r| r[0] == "corpus_exact_matches" && r[1] == "10" && r[3] == "PASS"));
    let lines: Vec<serde_json::Value> = fs::read_to_string(dir.path().join("qdegree.jsonl"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["report"]["corpus_size"], 10);
}

#[test]
fn config_file_supplies_flags_and_the_command_line_wins() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# attack settings\ntrials = 0\nmin_success = 0.5\n").unwrap();
    let out = emq(dir.path(), &["--config", conf.to_str().unwrap(), "attack"]);
    assert_eq!(code(&out), 0);
    assert!(rows(&dir.path().join("attack_summary.csv")).is_empty());

    let out = emq(dir.path(), &["--config", conf.to_str().unwrap(), "attack", "--trials", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(rows(&dir.path().join("attack_summary.csv"))[0][2], "2");

    fs::write(&conf, "no_such_flag = 1\n").unwrap();
    assert_eq!(code(&emq(dir.path(), &["--config", conf.to_str().unwrap(), "bound"])), 2);
    fs::write(&conf, "garbage\n").unwrap();
    assert_eq!(code(&emq(dir.path(), &["--config", conf.to_str().unwrap(), "bound"])), 2);
    assert_eq!(code(&emq(dir.path(), &["--config", "/nonexistent/file", "bound"])), 2);
}

#[test]
fn out_dir_flag_overrides_the_environment() {
    let (env_dir, flag_dir) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let out = emq(env_dir.path(), &["bound", "--n-max", "4", "--out-dir", flag_dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(flag_dir.path().join("bound.csv").exists());
    assert!(!env_dir.path().join("bound.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&emq(dir.path(), &["bogus"])), 2);
    assert_eq!(code(&emq(dir.path(), &["attack", "--trials", "minus"])), 2);
    assert_eq!(code(&emq(dir.path(), &["--help"])), 0);
}
