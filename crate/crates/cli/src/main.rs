//! Command-line runner: `ingest` builds membership splits, `attack` runs
//! a configured attack over the candidates, `eval` turns stored scores
//! into a metric report, and `report` pretty-prints one.

mod config;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::RunConfig;
use memprobe::eval::{
    self, derived_seed, DatasetKind, EvalReport, ExperimentConfig, MetricSummary, PerUserCap,
    Provenance, RunStatus, SplitSpec,
};
use memprobe::model::{CandidateStatement, MemoryUnit, Split};
use memprobe::prompts::PROMPT_VERSION;
use memprobe::scoring::Weights;

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_sig: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

#[derive(Parser)]
#[command(
    name = "memprobe",
    version,
    about = "Membership inference probing for chat-agent memory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a memory-unit corpus into injection and candidate files.
    Ingest(IngestArgs),
    /// Run the configured attack over the candidate set.
    Attack(AttackArgs),
    /// Compute the metric report from a finished attack run.
    Eval(EvalArgs),
    /// Pretty-print a report.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus JSONL: one unit per line with id, user_id, content, group.
    #[arg(long)]
    corpus: PathBuf,
    /// Dataset label: perltqa, locomo, msc, or synthetic.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Per-user cap on member evaluation candidates.
    #[arg(long)]
    cap_members: Option<usize>,
    /// Per-user cap on non-member evaluation candidates.
    #[arg(long)]
    cap_nonmembers: Option<usize>,
    #[arg(long, default_value = "group_id")]
    group_field: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured attack (mrmmia, mrmmia_s, naive_probe,
    /// ia, loss, mink, reference).
    #[arg(long)]
    attack: Option<String>,
    /// Override the access mode (blackbox, graybox, whitebox).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// on|off: toggle rationale follow-up questions.
    #[arg(long)]
    rationale: Option<String>,
    /// on|off: toggle the system-prompt defense.
    #[arg(long)]
    defense: Option<String>,
    /// Comma-separated w_r,w_p,w_m.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Attack run directory (holds scores.jsonl and config.json).
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory or report.json path.
    #[arg(long)]
    run: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    unsafe {
        libc::signal(
            libc::SIGINT,
            on_sigint as extern "C" fn(libc::c_int) as *const () as libc::sighandler_t,
        );
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn parse_on_off(flag: &str, value: &str) -> Result<bool> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => bail!("--{flag} expects on|off, got {other}"),
    }
}

fn parse_dataset(name: &str) -> Result<DatasetKind> {
    Ok(match name {
        "perltqa" => DatasetKind::Perltqa,
        "locomo" => DatasetKind::Locomo,
        "msc" => DatasetKind::Msc,
        "synthetic" => DatasetKind::Synthetic,
        other => bail!("unknown dataset {other}"),
    })
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let per_user_cap = match (args.cap_members, args.cap_nonmembers) {
        (None, None) => None,
        (m, n) => Some(PerUserCap {
            members: m.unwrap_or(usize::MAX),
            nonmembers: n.unwrap_or(usize::MAX),
        }),
    };
    let spec = SplitSpec {
        dataset: parse_dataset(&args.dataset)?,
        seed: args.seed,
        split_ratio: args.ratio,
        per_user_cap,
        group_field: args.group_field,
    };
    let out = eval::ingest(&args.corpus, &spec)?;
    std::fs::create_dir_all(&args.out)?;
    write_jsonl(&args.out.join("injection.jsonl"), &out.injection)?;
    write_jsonl(&args.out.join("candidates.jsonl"), &out.candidates)?;
    std::fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&out.manifest)?,
    )?;
    log::info!(
        "ingested {} units from {} users: {} members injected, {}+{} candidates",
        out.manifest.units,
        out.manifest.users,
        out.manifest.members,
        out.manifest.candidate_members,
        out.manifest.candidate_nonmembers
    );
    println!("{}", args.out.join("manifest.json").display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    run: usize,
    candidate_id: String,
    score: f64,
    truth: Split,
}

#[derive(Serialize, Deserialize)]
struct BudgetSummary {
    agent_calls: usize,
    judge_calls: usize,
    /// Off-scale judge outputs snapped to the fixed scale.
    judge_snap_events: u64,
    runs_completed: usize,
    runs_requested: usize,
    failures: Vec<usize>,
    candidates: usize,
    truncated: bool,
    failure_budget: f64,
    seeds: Vec<u64>,
    dataset: String,
}

fn apply_overrides(cfg: &mut RunConfig, args: &AttackArgs) -> Result<()> {
    if let Some(name) = &args.attack {
        cfg.attack.attack = serde_json::from_value(serde_json::Value::String(name.clone()))
            .with_context(|| format!("unknown attack {name}"))?;
    }
    if let Some(mode) = &args.mode {
        cfg.attack.mode = serde_json::from_value(serde_json::Value::String(mode.clone()))
            .with_context(|| format!("unknown mode {mode}"))?;
    }
    if let Some(k) = args.k {
        cfg.attack.k = k;
    }
    if let Some(r) = &args.rationale {
        cfg.attack.rationale = parse_on_off("rationale", r)?;
    }
    if let Some(d) = &args.defense {
        cfg.agent.defense = parse_on_off("defense", d)?;
    }
    if let Some(w) = &args.weights {
        let parts: Vec<f64> = w
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("--weights expects wr,wp,wm, got {w}"))?;
        if parts.len() != 3 {
            bail!("--weights expects exactly three values");
        }
        cfg.attack.weights = Weights {
            w_r: parts[0],
            w_p: parts[1],
            w_m: parts[2],
        };
    }
    if let Some(r) = args.repeats {
        cfg.eval.repeats = r;
    }
    if let Some(s) = args.seed {
        cfg.attack.seed = s;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    Ok(())
}

fn dataset_label(cfg: &RunConfig) -> String {
    cfg.dataset
        .as_ref()
        .map(|d| d.spec.dataset.to_string())
        .unwrap_or_else(|| "custom".to_string())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    apply_overrides(&mut cfg, &args)?;
    cfg.validate()?;
    let out_dir = cfg
        .out
        .clone()
        .ok_or_else(|| anyhow::anyhow!("no output directory (set `out` or pass --out)"))?;
    std::fs::create_dir_all(&out_dir)?;

    // Resolve the split: a pre-ingested directory or an inline corpus.
    let (injection, candidates) = if let Some(dir) = &cfg.split_dir {
        (
            read_jsonl::<MemoryUnit>(&dir.join("injection.jsonl"))?,
            read_jsonl::<CandidateStatement>(&dir.join("candidates.jsonl"))?,
        )
    } else if let Some(ds) = &cfg.dataset {
        let out = eval::ingest(&ds.corpus, &ds.spec)?;
        (out.injection, out.candidates)
    } else {
        bail!("config needs either split_dir or dataset");
    };
    if candidates.is_empty() {
        bail!("no evaluation candidates");
    }

    // Provenance first: the exact config and the agent prompt in effect.
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&cfg)?,
    )?;
    {
        let probe_components = cfg.build_components(&injection, cfg.attack.seed)?;
        std::fs::write(
            out_dir.join("agent_system_prompt.txt"),
            probe_components.agent.system_prompt(),
        )?;
    }

    let repeats = cfg.eval.repeats.max(1);
    let mut score_rows: Vec<String> = Vec::new();
    let mut failures = Vec::new();
    let mut seeds = Vec::new();
    let mut agent_calls = 0usize;
    let mut judge_calls = 0usize;
    let mut judge_snap_events = 0u64;
    let mut runs_completed = 0usize;
    let truth_by_id: BTreeMap<&str, Split> = candidates
        .iter()
        .map(|c| (c.id.as_str(), c.truth))
        .collect();

    for run in 0..repeats {
        if STOP.load(Ordering::SeqCst) {
            break;
        }
        let seed = derived_seed(cfg.attack.seed, run);
        seeds.push(seed);
        let components = cfg.build_components(&injection, seed)?;
        let run_cfg = memprobe::attacks::AttackConfig { seed, ..cfg.attack };
        log::info!(
            "run {run}: {} ({}) over {} candidates",
            run_cfg.attack,
            run_cfg.mode,
            candidates.len()
        );
        let results = eval::run_once_with_stop(
            &components,
            &run_cfg,
            &candidates,
            cfg.parallelism,
            Some(&STOP),
        )?;
        let failed = results.iter().filter(|r| r.error.is_some()).count();
        for r in &results {
            agent_calls += r.agent_calls;
            judge_calls += r.judge_calls;
            if let (Some(s), Some(truth)) = (r.score, truth_by_id.get(r.candidate_id.as_str())) {
                score_rows.push(serde_json::to_string(&ScoreRow {
                    run,
                    candidate_id: r.candidate_id.clone(),
                    score: s,
                    truth: *truth,
                })?);
            }
        }
        failures.push(failed);
        judge_snap_events += components.response_judge.snap_events()
            + components.memory_judge.snap_events();
        write_jsonl(&out_dir.join(format!("results_run{run}.jsonl")), &results)?;
        if !STOP.load(Ordering::SeqCst) {
            runs_completed += 1;
        }
        log::info!("run {run}: {failed} candidate failures");
    }

    let truncated = STOP.load(Ordering::SeqCst);
    std::fs::write(out_dir.join("scores.jsonl"), score_rows.join("\n") + "\n")?;
    let summary = BudgetSummary {
        agent_calls,
        judge_calls,
        judge_snap_events,
        runs_completed,
        runs_requested: repeats,
        failures: failures.clone(),
        candidates: candidates.len(),
        truncated,
        failure_budget: cfg.eval.failure_budget,
        seeds,
        dataset: dataset_label(&cfg),
    };
    std::fs::write(
        out_dir.join("budget_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    println!("{}", out_dir.display());

    if truncated {
        log::warn!("interrupted: partial results written with truncated marker");
        std::process::exit(130);
    }
    let budget_breached = failures
        .iter()
        .any(|f| (*f as f64) > cfg.eval.failure_budget * candidates.len() as f64);
    if budget_breached {
        bail!("candidate failure budget exceeded; see results_run*.jsonl");
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dir = &args.run;
    let cfg = RunConfig::load(&dir.join("config.json"))?;
    let summary: BudgetSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.join("budget_summary.json"))?)
            .context("reading budget_summary.json")?;
    let rows: Vec<ScoreRow> = read_jsonl(&dir.join("scores.jsonl"))?;
    if rows.is_empty() {
        bail!("no scores recorded");
    }
    let runs = rows.iter().map(|r| r.run).max().unwrap() + 1;
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in 0..runs {
        let scores: Vec<(f64, bool)> = rows
            .iter()
            .filter(|r| r.run == run)
            .map(|r| (r.score, r.truth == Split::Member))
            .collect();
        let bundle = eval::metric_bundle(&scores)?;
        for (name, value) in bundle {
            per_metric.entry(name.to_string()).or_default().push(value);
        }
        let points = eval::roc_curve(&scores)?;
        eval::write_roc_csv(&points, &dir.join(format!("roc_run{run}.csv")))?;
        eval::write_roc_loglog_csv(&points, &dir.join(format!("roc_loglog_run{run}.csv")))?;
    }
    let metrics: BTreeMap<String, MetricSummary> = per_metric
        .into_iter()
        .map(|(name, values)| (name, eval::summarize(&values)))
        .collect();
    let status = if summary
        .failures
        .iter()
        .any(|f| (*f as f64) > summary.failure_budget * summary.candidates as f64)
        || summary.truncated
    {
        RunStatus::Failed
    } else {
        RunStatus::Ok
    };
    let report = EvalReport {
        attack: cfg.attack.attack,
        mode: cfg.attack.mode,
        dataset: summary.dataset.clone(),
        runs,
        metrics,
        roc_csv: Some("roc_run0.csv".into()),
        roc_loglog_csv: Some("roc_loglog_run0.csv".into()),
        scores_path: Some("scores.jsonl".into()),
        status,
        failures: summary.failures.clone(),
        provenance: Provenance {
            config: ExperimentConfig {
                attack: cfg.attack,
                dataset: summary.dataset.clone(),
                repeats: summary.runs_requested,
                failure_budget: summary.failure_budget,
                parallelism: cfg.parallelism,
                out_dir: None,
            },
            seeds: summary.seeds.clone(),
            prompt_version: PROMPT_VERSION.to_string(),
            build_id: eval::build_id(),
        },
    };
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!("{}", dir.join("report.json").display());
    if status == RunStatus::Failed {
        bail!("run marked failed (failure budget breached or truncated)");
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let path = if args.run.is_dir() {
        args.run.join("report.json")
    } else {
        args.run.clone()
    };
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    println!(
        "attack={} mode={} dataset={} runs={} status={}",
        report.attack,
        report.mode,
        report.dataset,
        report.runs,
        match report.status {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        }
    );
    println!("{:<10} {:>10} {:>10}", "metric", "mean", "std");
    for (name, m) in &report.metrics {
        println!("{:<10} {:>10.4} {:>10.4}", name, m.mean, m.std);
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file =
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(row);
    }
    Ok(out)
}
