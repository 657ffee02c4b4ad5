//! Repeated-run experiment driver: run the configured attack over all
//! candidates R times with derived seeds, compute the metric bundle per
//! run, and report mean ± sample std with raw score and curve exports.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::metrics::{self, LabeledScore};
use super::EvalError;
use crate::attacks::{self, AttackConfig, AttackContext, CandidateResult};
use crate::model::{redact_for_attack, CandidateStatement, Split};
use crate::prompts::PROMPT_VERSION;

/// Build id recorded in provenance; overridable at build time.
pub fn build_id() -> String {
    option_env!("MEMPROBE_BUILD_ID")
        .map(str::to_string)
        .unwrap_or_else(|| format!("memprobe-{}", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub attack: AttackConfig,
    pub dataset: String,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Fraction of per-candidate failures tolerated before the run is
    /// marked failed.
    #[serde(default = "default_failure_budget")]
    pub failure_budget: f64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_repeats() -> usize {
    3
}

fn default_failure_budget() -> f64 {
    0.05
}

fn default_parallelism() -> usize {
    4
}

impl ExperimentConfig {
    pub fn new(attack: AttackConfig, dataset: impl Into<String>) -> Self {
        Self {
            attack,
            dataset: dataset.into(),
            repeats: default_repeats(),
            failure_budget: default_failure_budget(),
            parallelism: default_parallelism(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub prompt_version: String,
    pub build_id: String,
}

/// Per-attack metric bundle with mean ± std across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attack: crate::attacks::AttackKind,
    pub mode: crate::model::AccessMode,
    pub dataset: String,
    pub runs: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub roc_csv: Option<String>,
    pub roc_loglog_csv: Option<String>,
    pub scores_path: Option<String>,
    pub status: RunStatus,
    /// Per-run candidate failure counts.
    pub failures: Vec<usize>,
    pub provenance: Provenance,
}

/// Everything one repetition needs; a fresh set is built per run so
/// repetitions are isolated.
pub struct RunComponents {
    pub agent: crate::agent::AgentBackend,
    pub generator: Box<dyn crate::probegen::ProbeSource>,
    pub response_judge: Box<dyn crate::scoring::ResponseJudge>,
    pub memory_judge: Box<dyn crate::scoring::MemoryJudge>,
    pub paraphraser: Option<crate::probegen::Paraphraser>,
}

pub type ComponentFactory<'a> = dyn Fn(u64) -> Result<RunComponents, EvalError> + Sync + 'a;

pub const METRIC_NAMES: [&str; 6] = [
    "auc",
    "pr_auc",
    "tpr@0.1%",
    "tpr@1%",
    "tpr@10%",
    "acc@1%",
];

/// The six-metric bundle every report carries.
pub fn metric_bundle(scores: &[LabeledScore]) -> Result<BTreeMap<&'static str, f64>, EvalError> {
    let mut out = BTreeMap::new();
    out.insert("auc", metrics::auc(scores)?);
    out.insert("pr_auc", metrics::pr_auc(scores)?);
    out.insert("tpr@0.1%", metrics::tpr_at_fpr(scores, 0.001)?);
    out.insert("tpr@1%", metrics::tpr_at_fpr(scores, 0.01)?);
    out.insert("tpr@10%", metrics::tpr_at_fpr(scores, 0.10)?);
    out.insert("acc@1%", metrics::acc_at_fpr1(scores)?);
    Ok(out)
}

/// Mean and sample standard deviation (n − 1); a single run reports 0.
pub fn summarize(values: &[f64]) -> MetricSummary {
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    MetricSummary {
        mean,
        std: sample_std(values, mean),
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let var = values
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (values.len() - 1) as f64;
    var.sqrt()
}

/// The seed for repetition `r` of a base-seeded experiment.
pub fn derived_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    run: usize,
    candidate_id: &'a str,
    score: f64,
    truth: Split,
}

/// Run one repetition over all candidates and return the result records
/// in candidate order.
pub fn run_once(
    components: &RunComponents,
    cfg: &AttackConfig,
    candidates: &[CandidateStatement],
    parallelism: usize,
) -> Result<Vec<CandidateResult>, EvalError> {
    run_once_with_stop(components, cfg, candidates, parallelism, None)
}

/// Like [`run_once`], but drains gracefully: candidates not yet started
/// when `stop` flips are skipped, leaving only completed records.
pub fn run_once_with_stop(
    components: &RunComponents,
    cfg: &AttackConfig,
    candidates: &[CandidateStatement],
    parallelism: usize,
    stop: Option<&std::sync::atomic::AtomicBool>,
) -> Result<Vec<CandidateResult>, EvalError> {
    let ctx = AttackContext {
        agent: &components.agent,
        generator: components.generator.as_ref(),
        response_judge: components.response_judge.as_ref(),
        memory_judge: components.memory_judge.as_ref(),
        paraphraser: components.paraphraser.as_ref(),
    };
    let views: Vec<_> = candidates.iter().map(redact_for_attack).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Component(e.to_string()))?;
    let results: Vec<CandidateResult> = pool.install(|| {
        use rayon::prelude::*;
        views
            .par_iter()
            .filter_map(|x| {
                if let Some(flag) = stop {
                    if flag.load(std::sync::atomic::Ordering::SeqCst) {
                        return None;
                    }
                }
                Some(attacks::run_candidate(&ctx, x, cfg))
            })
            .collect()
    });
    Ok(results)
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    factory: &ComponentFactory<'_>,
    candidates: &[CandidateStatement],
) -> Result<EvalReport, EvalError> {
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        // Full config lands in the output directory before anything runs.
        std::fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(cfg).map_err(|e| EvalError::Component(e.to_string()))?,
        )?;
    }
    let truth_by_id: BTreeMap<&str, Split> = candidates
        .iter()
        .map(|c| (c.id.as_str(), c.truth))
        .collect();

    let mut seeds = Vec::new();
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut status = RunStatus::Ok;
    let mut score_rows: Vec<String> = Vec::new();
    let mut run0_scores: Vec<LabeledScore> = Vec::new();

    for run in 0..cfg.repeats.max(1) {
        let seed = derived_seed(cfg.attack.seed, run);
        seeds.push(seed);
        let components = factory(seed)?;
        let run_cfg = AttackConfig {
            seed,
            ..cfg.attack
        };
        let results = run_once(&components, &run_cfg, candidates, cfg.parallelism)?;

        let failed = results.iter().filter(|r| r.error.is_some()).count();
        failures.push(failed);
        if (failed as f64) > cfg.failure_budget * results.len() as f64 {
            status = RunStatus::Failed;
            log::warn!(
                "run {run}: {failed}/{} candidate failures exceed the budget",
                results.len()
            );
        }

        let scores: Vec<LabeledScore> = results
            .iter()
            .filter_map(|r| {
                let s = r.score?;
                let truth = truth_by_id.get(r.candidate_id.as_str())?;
                Some((s, *truth == Split::Member))
            })
            .collect();
        for (r, _) in results.iter().zip(0..) {
            if let (Some(s), Some(truth)) = (r.score, truth_by_id.get(r.candidate_id.as_str())) {
                let row = ScoreRow {
                    run,
                    candidate_id: &r.candidate_id,
                    score: s,
                    truth: *truth,
                };
                score_rows.push(serde_json::to_string(&row).expect("score row serializes"));
            }
        }
        if run == 0 {
            run0_scores = scores.clone();
        }
        let bundle = metric_bundle(&scores)?;
        for (name, value) in bundle {
            per_metric.entry(name.to_string()).or_default().push(value);
        }

        if let Some(dir) = &cfg.out_dir {
            write_results_jsonl(&dir.join(format!("results_run{run}.jsonl")), &results)?;
            let points = metrics::roc_curve(&scores)?;
            metrics::write_roc_csv(&points, &dir.join(format!("roc_run{run}.csv")))?;
            metrics::write_roc_loglog_csv(
                &points,
                &dir.join(format!("roc_loglog_run{run}.csv")),
            )?;
        }
    }

    let metrics_summary: BTreeMap<String, MetricSummary> = per_metric
        .into_iter()
        .map(|(name, values)| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = sample_std(&values, mean);
            (name, MetricSummary { mean, std })
        })
        .collect();

    let (roc_csv, roc_loglog_csv, scores_path) = if let Some(dir) = &cfg.out_dir {
        let scores_file = dir.join("scores.jsonl");
        std::fs::write(&scores_file, score_rows.join("\n") + "\n")?;
        let _ = &run0_scores;
        (
            Some("roc_run0.csv".to_string()),
            Some("roc_loglog_run0.csv".to_string()),
            Some("scores.jsonl".to_string()),
        )
    } else {
        (None, None, None)
    };

    let report = EvalReport {
        attack: cfg.attack.attack,
        mode: cfg.attack.mode,
        dataset: cfg.dataset.clone(),
        runs: cfg.repeats.max(1),
        metrics: metrics_summary,
        roc_csv,
        roc_loglog_csv,
        scores_path,
        status,
        failures,
        provenance: Provenance {
            config: ExperimentConfig {
                out_dir: None,
                ..cfg.clone()
            },
            seeds,
            prompt_version: PROMPT_VERSION.to_string(),
            build_id: build_id(),
        },
    };
    if let Some(dir) = &cfg.out_dir {
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report)
                .map_err(|e| EvalError::Component(e.to_string()))?,
        )?;
    }
    Ok(report)
}

fn write_results_jsonl(path: &Path, results: &[CandidateResult]) -> Result<(), EvalError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in results {
        serde_json::to_writer(&mut w, r).map_err(|e| EvalError::Component(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentBackend, OracleBehavior};
    use crate::attacks::AttackKind;
    use crate::memstore::{HashedNgramEmbedder, MemoryStore, MemoryStoreConfig};
    use crate::model::AccessMode;
    use crate::probegen::TemplateGenerator;
    use crate::scoring::RubricTableJudge;
    use crate::synthetic::separation_corpus;
    use std::sync::Arc;

    fn factory(seed: u64) -> Result<RunComponents, EvalError> {
        let corpus = separation_corpus();
        let store = MemoryStore::new(
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        );
        for u in corpus.units {
            store.insert(u).map_err(|e| EvalError::Component(e.to_string()))?;
        }
        Ok(RunComponents {
            agent: AgentBackend::oracle(
                OracleBehavior {
                    rng_seed: seed,
                    ..OracleBehavior::default()
                },
                Arc::new(store),
            ),
            generator: Box::new(TemplateGenerator),
            response_judge: Box::new(RubricTableJudge),
            memory_judge: Box::new(RubricTableJudge),
            paraphraser: None,
        })
    }

    #[test]
    fn single_run_reports_zero_std_and_all_metrics() {
        let corpus = separation_corpus();
        let cfg = ExperimentConfig {
            repeats: 1,
            parallelism: 2,
            ..ExperimentConfig::new(
                AttackConfig::new(AttackKind::Mrmmia, AccessMode::Blackbox),
                "synthetic",
            )
        };
        let report = run_experiment(&cfg, &factory, &corpus.candidates).unwrap();
        assert_eq!(report.runs, 1);
        assert_eq!(report.status, RunStatus::Ok);
        for name in METRIC_NAMES {
            let m = report.metrics.get(name).expect(name);
            assert_eq!(m.std, 0.0);
        }
        assert_eq!(report.metrics["auc"].mean, 1.0);
    }

    #[test]
    fn repeated_oracle_runs_are_byte_identical() {
        let corpus = separation_corpus();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let base = ExperimentConfig {
            repeats: 2,
            parallelism: 3,
            ..ExperimentConfig::new(
                AttackConfig::new(AttackKind::Mrmmia, AccessMode::Whitebox),
                "synthetic",
            )
        };
        let cfg_a = ExperimentConfig {
            out_dir: Some(dir_a.path().to_path_buf()),
            ..base.clone()
        };
        let cfg_b = ExperimentConfig {
            out_dir: Some(dir_b.path().to_path_buf()),
            ..base
        };
        run_experiment(&cfg_a, &factory, &corpus.candidates).unwrap();
        run_experiment(&cfg_b, &factory, &corpus.candidates).unwrap();
        for name in [
            "report.json",
            "scores.jsonl",
            "roc_run0.csv",
            "roc_loglog_run0.csv",
            "results_run0.jsonl",
            "results_run1.jsonl",
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn config_is_serialized_before_the_run() {
        let corpus = separation_corpus();
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            repeats: 1,
            out_dir: Some(dir.path().to_path_buf()),
            ..ExperimentConfig::new(
                AttackConfig::new(AttackKind::NaiveProbe, AccessMode::Blackbox),
                "synthetic",
            )
        };
        run_experiment(&cfg, &factory, &corpus.candidates).unwrap();
        let saved: ExperimentConfig = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("config.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(saved.attack.attack, AttackKind::NaiveProbe);
    }
}
