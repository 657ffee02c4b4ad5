//! End-to-end tests of the `memprobe` binary: ingest → attack → eval →
//! report on the oracle backend, plus flag plumbing and failure gating.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memprobe::prompts::DEFENSE_PARAGRAPH;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_memprobe"))
}

fn corpus_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpora/synthetic_locomo.jsonl")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_ingest(out_dir: &Path) {
    let out = bin()
        .args([
            "ingest",
            "--corpus",
            corpus_path().to_str().unwrap(),
            "--dataset",
            "locomo",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_ok(&out, "ingest");
}

fn write_config(path: &Path, split_dir: &Path, run_dir: &Path, extra: &str) {
    let config = format!(
        r#"{{
  "split_dir": "{}",
  "agent": {{"backend": "oracle", "defense": false, "top_l": 5}},
  "generator": {{"kind": "template"}},
  "judge": {{"kind": "rubric_table"}},
  "attack": {{"attack": "mrmmia", "mode": "blackbox", "k": 5, "seed": 42, "rationale": true}},
  "eval": {{"repeats": 2, "failure_budget": 0.05}},
  "parallelism": 4,
  "out": "{}"{}
}}"#,
        split_dir.display(),
        run_dir.display(),
        extra
    );
    std::fs::write(path, config).unwrap();
}

#[test]
fn ingest_is_deterministic_and_matches_golden_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("split_a");
    let b = dir.path().join("split_b");
    run_ingest(&a);
    run_ingest(&b);
    let manifest_a = std::fs::read(a.join("manifest.json")).unwrap();
    let manifest_b = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(manifest_a, manifest_b);
    let manifest: serde_json::Value = serde_json::from_slice(&manifest_a).unwrap();
    assert_eq!(manifest["users"], 10);
    assert_eq!(manifest["units"], 120);
    assert_eq!(manifest["members"], 48);
    assert_eq!(manifest["nonmembers"], 72);
}

#[test]
fn perltqa_shaped_corpus_reports_140_users() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("split");
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpora/synthetic_perltqa.jsonl");
    let out = bin()
        .args([
            "ingest",
            "--corpus",
            corpus.to_str().unwrap(),
            "--dataset",
            "perltqa",
            "--cap-members",
            "20",
            "--cap-nonmembers",
            "20",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_ok(&out, "ingest");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["users"], 140);
}

#[test]
fn pipeline_produces_a_perfect_oracle_report() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    let run = dir.path().join("run");
    run_ingest(&split);
    let config = dir.path().join("config.json");
    write_config(&config, &split, &run, "");
    let out = bin()
        .args(["attack", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_ok(&out, "attack");
    for f in ["config.json", "scores.jsonl", "budget_summary.json", "results_run0.jsonl"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let out = bin()
        .args(["eval", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert_ok(&out, "eval");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "ok");
    assert_eq!(report["runs"], 2);
    assert_eq!(report["metrics"]["auc"]["mean"], 1.0);
    for metric in ["auc", "pr_auc", "tpr@0.1%", "tpr@1%", "tpr@10%", "acc@1%"] {
        assert!(report["metrics"][metric]["mean"].is_number(), "missing {metric}");
    }
    assert!(run.join("roc_run0.csv").exists());
    assert!(run.join("roc_loglog_run0.csv").exists());

    // Re-running eval from the stored scores is idempotent.
    let before = std::fs::read(run.join("report.json")).unwrap();
    let out = bin()
        .args(["eval", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert_ok(&out, "second eval");
    let after = std::fs::read(run.join("report.json")).unwrap();
    assert_eq!(before, after);

    // Report rendering mentions every metric.
    let out = bin()
        .args(["report", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert_ok(&out, "report");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("attack=mrmmia"));
    assert!(text.contains("auc"));
}

#[test]
fn identical_seeds_give_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    run_ingest(&split);
    let mut outputs = Vec::new();
    for name in ["run_a", "run_b"] {
        let run = dir.path().join(name);
        let config = dir.path().join(format!("{name}.json"));
        write_config(&config, &split, &run, "");
        let out = bin()
            .args(["attack", "--config", config.to_str().unwrap()])
            .output()
            .unwrap();
        assert_ok(&out, "attack");
        let out = bin()
            .args(["eval", "--run", run.to_str().unwrap()])
            .output()
            .unwrap();
        assert_ok(&out, "eval");
        outputs.push(run);
    }
    for f in ["report.json", "scores.jsonl", "roc_run0.csv", "results_run1.jsonl"] {
        let a = std::fs::read(outputs[0].join(f)).unwrap();
        let b = std::fs::read(outputs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs across identically seeded runs");
    }
}

#[test]
fn defense_flag_lands_byte_exactly_in_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    let run = dir.path().join("run");
    run_ingest(&split);
    let config = dir.path().join("config.json");
    write_config(&config, &split, &run, "");
    let out = bin()
        .args([
            "attack",
            "--config",
            config.to_str().unwrap(),
            "--defense",
            "on",
            "--repeats",
            "1",
        ])
        .output()
        .unwrap();
    assert_ok(&out, "attack with defense");
    let prompt = std::fs::read_to_string(run.join("agent_system_prompt.txt")).unwrap();
    assert!(prompt.contains(DEFENSE_PARAGRAPH));
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["agent"]["defense"], true);
}

#[test]
fn rationale_off_changes_member_scores_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    let run = dir.path().join("run");
    run_ingest(&split);
    let config = dir.path().join("config.json");
    write_config(&config, &split, &run, "");
    let out = bin()
        .args([
            "attack",
            "--config",
            config.to_str().unwrap(),
            "--rationale",
            "off",
            "--repeats",
            "1",
        ])
        .output()
        .unwrap();
    assert_ok(&out, "attack with rationale off");
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["attack"]["rationale"], false);
    // Without the follow-up clause, recall answers carry no source, so
    // member scores cap at the partial tier instead of 1.0.
    let scores = std::fs::read_to_string(run.join("scores.jsonl")).unwrap();
    for line in scores.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let s = row["score"].as_f64().unwrap();
        assert!(s <= 0.34, "score {s} exceeds the no-rationale cap");
    }
}

#[test]
fn capability_errors_breach_the_failure_budget_and_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    let run = dir.path().join("run");
    run_ingest(&split);
    let config = dir.path().join("config.json");
    write_config(&config, &split, &run, "");
    // Log-probability baselines refuse blackbox mode; every candidate
    // fails, breaching the 5% budget.
    let out = bin()
        .args([
            "attack",
            "--config",
            config.to_str().unwrap(),
            "--attack",
            "loss",
            "--repeats",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success(), "expected nonzero exit on budget breach");
    let results = std::fs::read_to_string(run.join("results_run0.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(results.lines().next().unwrap()).unwrap();
    assert!(first["error"].as_str().unwrap().contains("graybox"));
}

#[test]
fn sigint_drains_gracefully_with_a_truncated_marker() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    let run = dir.path().join("run");
    run_ingest(&split);
    let config = dir.path().join("config.json");
    write_config(&config, &split, &run, "");
    // Enough repetitions that the run is still going when the signal
    // lands.
    let mut child = bin()
        .args([
            "attack",
            "--config",
            config.to_str().unwrap(),
            "--repeats",
            "500",
        ])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(600));
    unsafe {
        libc::kill(child.id() as i32, libc::SIGINT);
    }
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(130), "expected the truncation exit code");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("budget_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["truncated"], true);
    assert!(
        summary["runs_completed"].as_u64().unwrap() < 500,
        "run was not actually interrupted"
    );
    // Partial results for completed runs are on disk.
    assert!(run.join("results_run0.jsonl").exists());
    assert!(run.join("scores.jsonl").exists());
}

#[test]
fn weights_flag_scales_scores() {
    let dir = tempfile::tempdir().unwrap();
    let split = dir.path().join("split");
    run_ingest(&split);
    let run_base = dir.path().join("base");
    let run_scaled = dir.path().join("scaled");
    for (run, weights) in [(&run_base, None), (&run_scaled, Some("2.0,2.0,2.0"))] {
        let config = dir.path().join(format!(
            "{}.json",
            run.file_name().unwrap().to_str().unwrap()
        ));
        write_config(&config, &split, run, "");
        let mut args = vec![
            "attack".to_string(),
            "--config".into(),
            config.to_str().unwrap().into(),
            "--repeats".into(),
            "1".into(),
        ];
        if let Some(w) = weights {
            args.push("--weights".into());
            args.push(w.into());
        }
        let out = bin().args(&args).output().unwrap();
        assert_ok(&out, "attack");
    }
    let parse = |p: &Path| -> Vec<(String, f64)> {
        std::fs::read_to_string(p.join("scores.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (
                    v["candidate_id"].as_str().unwrap().to_string(),
                    v["score"].as_f64().unwrap(),
                )
            })
            .collect()
    };
    let base = parse(&run_base);
    let scaled = parse(&run_scaled);
    assert_eq!(base.len(), scaled.len());
    for ((id_a, a), (id_b, b)) in base.iter().zip(&scaled) {
        assert_eq!(id_a, id_b);
        assert!((b - 2.0 * a).abs() < 1e-9, "{id_a}: {b} != 2*{a}");
    }
}
