use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use streamq::envs::{write_instance, LowRankMdp};
use streamq::record::{parse_csv, Manifest, CSV_HEADER};

fn streamq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen_small(dir: &Path) {
    ok(&streamq(&["gen", "-S", "2", "-A", "2", "-H", "2", "--seed", "0", "--value-cap", "0.3", "--out", "inst.txt"], dir));
}

#[test]
fn generated_lowrank_instance_passes_structure_check() {
    let dir = tempfile::tempdir().unwrap();
    ok(&streamq(&["gen", "-S", "6", "-A", "3", "-H", "4", "-d", "4", "--seed", "1", "--out", "lr.txt"], dir.path()));
    let out = streamq(&["verify", "structure", "--instance", "lr.txt"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("structure ok"));
}

#[test]
fn run_s4q_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let args = |o: &'static str| ["run-s4q", "--instance", "inst.txt", "--episodes", "1000", "--seed", "1", "--c-bonus", "0.1", "--lambda", "1", "--out", o];
    ok(&streamq(&args("a"), dir.path()));
    ok(&streamq(&args("b"), dir.path()));
    let a = fs::read(dir.path().join("a/run.csv")).unwrap();
    let b = fs::read(dir.path().join("b/run.csv")).unwrap();
    assert_eq!(a, b);

    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(parse_csv(&text).unwrap().len(), 1000);
    let m = Manifest::from_json(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m.seed, Some(1));
    assert_eq!(m.config_hash, m.config.hash());
    assert_eq!(m.config_hash.len(), 64);
    assert!(dir.path().join("a/summary.txt").exists());
    assert!(dir.path().join("a/phases.json").exists());
}

#[test]
fn config_file_and_flags_share_one_hash() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    fs::write(
        dir.path().join("cfg.toml"),
        "instance = \"inst.txt\"\nepisodes = 300\nseed = 4\nlambda = 1.0\nc_bonus = 0.1\n",
    )
    .unwrap();
    ok(&streamq(&["run-s4q", "--config", "cfg.toml", "--out", "via-cfg"], dir.path()));
    ok(&streamq(
        &["run-s4q", "--instance", "inst.txt", "--episodes", "300", "--seed", "4", "--lambda", "1", "--c-bonus", "0.1", "--out", "via-flags"],
        dir.path(),
    ));
    let read = |d: &str| Manifest::from_json(&fs::read_to_string(dir.path().join(d).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(read("via-cfg").config_hash, read("via-flags").config_hash);
    assert_eq!(
        fs::read(dir.path().join("via-cfg/run.csv")).unwrap(),
        fs::read(dir.path().join("via-flags/run.csv")).unwrap()
    );
}

#[test]
fn unreadable_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = streamq(&["run-s4q", "--instance", "missing.txt", "--episodes", "10", "--seed", "1", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("bad.txt"), "format streamq-instance 1\nhorizon banana\n").unwrap();
    let out = streamq(&["run-s3q", "--instance", "bad.txt", "--episodes", "10", "--seed", "1", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn seed_is_mandatory_for_runs() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let out = streamq(&["run-s4q", "--instance", "inst.txt", "--episodes", "10", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn structure_violation_exits_3() {
    // Valid tables, but V* reaches 1.8 over two steps.
    let dir = tempfile::tempdir().unwrap();
    let r = vec![vec![0.9, 0.9]];
    let p = vec![vec![vec![1.0], vec![1.0]]];
    let mdp = LowRankMdp::tabular(&[r.clone(), r], &[p.clone(), p], vec![1.0]).unwrap();
    fs::write(dir.path().join("big.txt"), write_instance(&mdp)).unwrap();
    let out = streamq(&["verify", "structure", "--instance", "big.txt"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("v_star_max"));
}

#[test]
fn baseline_on_divergence_instance_flags_divergence() {
    let dir = tempfile::tempdir().unwrap();
    ok(&streamq(&["gen", "--divergence", "--out", "div.txt"], dir.path()));
    ok(&streamq(&["run-baseline", "--instance", "div.txt", "--episodes", "5000", "--seed", "0", "--out", "b"], dir.path()));
    let m = Manifest::from_json(&fs::read_to_string(dir.path().join("b/manifest.json")).unwrap()).unwrap();
    let step = m.summary.first_divergence_step.expect("divergence flagged");
    assert!(step <= 100_000);
    let rows = parse_csv(&fs::read_to_string(dir.path().join("b/run.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.source == streamq::record::Source::Baseline));
    let summary = fs::read_to_string(dir.path().join("b/summary.txt")).unwrap();
    assert!(summary.contains("first_divergence_step"));
}

#[test]
fn run_s3q_writes_diagnostics_and_sample_log() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    ok(&streamq(
        &["run-s3q", "--instance", "inst.txt", "--episodes", "256", "--seed", "2", "--log-samples", "--out", "s"],
        dir.path(),
    ));
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s/diagnostics.json")).unwrap()).unwrap();
    assert!(diag["max_committed_norm"].as_f64().unwrap() <= 1.0);
    assert!(diag["bracket_min_constant"].as_f64().unwrap().is_finite());
    let log = streamq::record::parse_sample_log(&fs::read_to_string(dir.path().join("s/samples.jsonl")).unwrap()).unwrap();
    assert!(!log.is_empty());
    let m = Manifest::from_json(&fs::read_to_string(dir.path().join("s/manifest.json")).unwrap()).unwrap();
    assert!(m.artifacts.contains(&"diagnostics.json".to_string()));
}

#[test]
fn report_aggregates_and_refuses() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    for (o, seed) in [("r1", "1"), ("r2", "1"), ("r3", "2")] {
        ok(&streamq(
            &["run-s4q", "--instance", "inst.txt", "--episodes", "400", "--seed", seed, "--c-bonus", "0.1", "--lambda", "1", "--out", o],
            dir.path(),
        ));
    }
    ok(&streamq(&["report", "--out", "same", "r1", "r2"], dir.path()));
    let regret = fs::read_to_string(dir.path().join("same/regret.csv")).unwrap();
    assert_eq!(regret.lines().next().unwrap(), "episode,mean_cum_regret,stderr_cum_regret");
    for line in regret.lines().skip(1) {
        assert_eq!(line.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    for f in ["per_run.csv", "memory.csv", "report.json"] {
        assert!(dir.path().join("same").join(f).exists());
    }
    ok(&streamq(&["report", "--out", "mixed", "r1", "r3"], dir.path()));

    ok(&streamq(&["gen", "-S", "2", "-A", "2", "-H", "2", "--seed", "9", "--value-cap", "0.3", "--out", "other.txt"], dir.path()));
    ok(&streamq(
        &["run-s4q", "--instance", "other.txt", "--episodes", "400", "--seed", "1", "--c-bonus", "0.1", "--lambda", "1", "--out", "x"],
        dir.path(),
    ));
    let out = streamq(&["report", "--out", "bad", "r1", "x"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing"));

    let out = streamq(&["report", "--out", "empty"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn verify_runs_and_lemmas_pass() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    ok(&streamq(&["verify", "s3q", "--instance", "inst.txt", "--episodes", "200", "--seed", "3"], dir.path()));
    ok(&streamq(
        &["verify", "s4q", "--instance", "inst.txt", "--episodes", "500", "--seed", "3", "--c-bonus", "0.1", "--lambda", "1"],
        dir.path(),
    ));
    ok(&streamq(&["verify", "lemmas", "--seed", "5"], dir.path()));
}
