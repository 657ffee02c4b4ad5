//! Attack orchestrators: the multi-recall attack end to end, its
//! paraphrase-candidate variant, and the five baselines. Each maps one
//! candidate to an attack score under a given access setting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentBackend, AgentError, AskOutcome, AskRequest};
use crate::model::{AccessMode, AttackCandidateView, AttackScore, ProbeSignals, RecallProbe};
use crate::probegen::{GenError, Paraphraser, ProbeSource};
use crate::prompts;
use crate::scoring::{self, MemoryJudge, ResponseJudge, ScoreError, Weights};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Mrmmia,
    MrmmiaS,
    NaiveProbe,
    Ia,
    Loss,
    Mink,
    Reference,
}

impl AttackKind {
    /// The log-probability baselines only make sense in gray-box mode.
    pub fn requires_graybox(self) -> bool {
        matches!(self, AttackKind::Loss | AttackKind::Mink | AttackKind::Reference)
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttackKind::Mrmmia => "mrmmia",
            AttackKind::MrmmiaS => "mrmmia_s",
            AttackKind::NaiveProbe => "naive_probe",
            AttackKind::Ia => "ia",
            AttackKind::Loss => "loss",
            AttackKind::Mink => "mink",
            AttackKind::Reference => "reference",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub attack: AttackKind,
    pub mode: AccessMode,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub weights: Weights,
    /// Fraction of lowest-probability tokens averaged by the min-k
    /// baseline.
    #[serde(default = "default_mink_fraction")]
    pub mink_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Toggle for the rationale follow-up ablation.
    #[serde(default = "default_true")]
    pub rationale: bool,
}

fn default_k() -> usize {
    5
}

fn default_mink_fraction() -> f64 {
    0.20
}

fn default_true() -> bool {
    true
}

impl AttackConfig {
    pub fn new(attack: AttackKind, mode: AccessMode) -> Self {
        Self {
            attack,
            mode,
            k: default_k(),
            weights: Weights::default(),
            mink_fraction: default_mink_fraction(),
            gamma: None,
            seed: 0,
            rationale: true,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if self.k == 0 {
            return Err(AttackError::Config("k must be at least 1".into()));
        }
        if self.attack.requires_graybox() && self.mode != AccessMode::Graybox {
            return Err(AttackError::Config(format!(
                "{} requires graybox mode, got {}",
                self.attack, self.mode
            )));
        }
        if !(0.0..=1.0).contains(&self.mink_fraction) || self.mink_fraction == 0.0 {
            return Err(AttackError::Config(format!(
                "mink_fraction must be in (0, 1], got {}",
                self.mink_fraction
            )));
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// Everything an attack needs besides the candidate: the target agent,
/// the judges, the probe generator, and (for the paraphrase variant) a
/// paraphraser.
pub struct AttackContext<'a> {
    pub agent: &'a AgentBackend,
    pub generator: &'a dyn ProbeSource,
    pub response_judge: &'a dyn ResponseJudge,
    pub memory_judge: &'a dyn MemoryJudge,
    pub paraphraser: Option<&'a Paraphraser>,
}

/// Agent/judge call accounting. Judge calls are counted per judging
/// operation: one response judgment per probe, and one memory judgment
/// per probe (covering however many retrieved units it scans).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallBudget {
    pub agent_calls: usize,
    pub judge_calls: usize,
}

/// Per-candidate result record, one JSONL line per candidate in batch
/// output. `error` keeps failed candidates visible without aborting the
/// batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateResult {
    pub candidate_id: String,
    pub attack: AttackKind,
    pub mode: AccessMode,
    pub score: Option<f64>,
    pub verdict: Option<bool>,
    pub per_probe: Vec<ProbeSignals>,
    pub agent_calls: usize,
    pub judge_calls: usize,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrased_from: Option<String>,
}

/// Run the configured attack on one candidate, recording failure instead
/// of propagating it so the batch can continue.
pub fn run_candidate(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    cfg: &AttackConfig,
) -> CandidateResult {
    let mut budget = CallBudget::default();
    let mut paraphrased_from = None;
    let outcome = run_inner(ctx, x, cfg, &mut budget, &mut paraphrased_from);
    match outcome {
        Ok(score) => CandidateResult {
            candidate_id: x.id.clone(),
            attack: cfg.attack,
            mode: cfg.mode,
            score: Some(score.score),
            verdict: score.verdict,
            per_probe: score.per_probe,
            agent_calls: budget.agent_calls,
            judge_calls: budget.judge_calls,
            error: None,
            paraphrased_from,
        },
        Err(e) => CandidateResult {
            candidate_id: x.id.clone(),
            attack: cfg.attack,
            mode: cfg.mode,
            score: None,
            verdict: None,
            per_probe: Vec::new(),
            agent_calls: budget.agent_calls,
            judge_calls: budget.judge_calls,
            error: Some(e.to_string()),
            paraphrased_from,
        },
    }
}

fn run_inner(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    cfg: &AttackConfig,
    budget: &mut CallBudget,
    paraphrased_from: &mut Option<String>,
) -> Result<AttackScore, AttackError> {
    cfg.validate()?;
    match cfg.attack {
        AttackKind::Mrmmia => run_mrmmia(ctx, x, cfg, budget),
        AttackKind::MrmmiaS => {
            let paraphraser = ctx
                .paraphraser
                .ok_or_else(|| AttackError::Config("mrmmia_s requires a paraphraser".into()))?;
            let derived = paraphraser.paraphrase_view(x)?;
            *paraphrased_from = Some(x.id.clone());
            // Probes and judge comparisons use the paraphrased statement;
            // the result stays keyed to the original candidate id so
            // evaluation joins against the original label.
            let mut score = run_mrmmia(ctx, &derived, cfg, budget)?;
            score.candidate_id = x.id.clone();
            Ok(score)
        }
        AttackKind::NaiveProbe => {
            let plan = ctx.generator.naive_plan(x)?;
            probe_score_aggregate(ctx, x, &plan.probes, cfg, budget)
        }
        AttackKind::Ia => {
            let plan = ctx.generator.judgment_plan(x, cfg.k)?;
            probe_score_aggregate(ctx, x, &plan.probes, cfg, budget)
        }
        AttackKind::Loss => run_loss(ctx, x, cfg, budget),
        AttackKind::Mink => run_mink(ctx, x, cfg, budget),
        AttackKind::Reference => run_reference(ctx, x, cfg, budget),
    }
}

fn run_mrmmia(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    cfg: &AttackConfig,
    budget: &mut CallBudget,
) -> Result<AttackScore, AttackError> {
    let plan = ctx.generator.recall_plan(x, cfg.k, cfg.rationale)?;
    probe_score_aggregate(ctx, x, &plan.probes, cfg, budget)
}

/// Issue one agent call per probe, requesting exactly the signals the
/// access mode permits.
pub fn collect_observations(
    agent: &AgentBackend,
    x: &AttackCandidateView,
    probes: &[RecallProbe],
    mode: AccessMode,
    budget: &mut CallBudget,
) -> Result<Vec<AskOutcome>, AttackError> {
    let mut outcomes = Vec::with_capacity(probes.len());
    for probe in probes {
        let outcome = agent.ask(AskRequest {
            user_id: &x.user_id,
            query: &probe.question,
            probe_index: probe.index,
            want_logprobs: mode.wants_logprobs(),
            want_retrieval: mode.wants_retrieval(),
        })?;
        budget.agent_calls += 1;
        outcomes.push(outcome);
    }
    // Reassemble by probe index so completion order can never matter.
    outcomes.sort_by_key(|o| o.observation.probe_index);
    Ok(outcomes)
}

/// Judge cached observations under the given mode. This is the replay
/// path: the same observations can be re-scored under a weaker mode
/// without new agent calls.
pub fn score_observations(
    ctx: &AttackContext<'_>,
    candidate_content: &str,
    probes: &[RecallProbe],
    outcomes: &[AskOutcome],
    mode: AccessMode,
    budget: &mut CallBudget,
) -> Result<Vec<ProbeSignals>, AttackError> {
    let mut signals = Vec::with_capacity(probes.len());
    for (probe, outcome) in probes.iter().zip(outcomes) {
        let verdict = ctx.response_judge.judge_response(
            candidate_content,
            probe,
            &outcome.observation.response_text,
        )?;
        budget.judge_calls += 1;
        let memory_term = if mode.wants_retrieval() {
            let retrieved: Vec<String> = outcome
                .observation
                .retrieved
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .map(|r| r.content.clone())
                .collect();
            let term =
                scoring::score_memory(candidate_content, probe, &retrieved, ctx.memory_judge)?;
            if !retrieved.is_empty() {
                budget.judge_calls += 1;
            }
            Some(term)
        } else {
            None
        };
        signals.push(ProbeSignals {
            response_score: verdict.score,
            logprob_term: if mode.wants_logprobs() {
                outcome.observation.mean_logprob
            } else {
                None
            },
            memory_term,
        });
    }
    Ok(signals)
}

fn probe_score_aggregate(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    probes: &[RecallProbe],
    cfg: &AttackConfig,
    budget: &mut CallBudget,
) -> Result<AttackScore, AttackError> {
    let outcomes = collect_observations(ctx.agent, x, probes, cfg.mode, budget)?;
    let signals = score_observations(ctx, &x.content, probes, &outcomes, cfg.mode, budget)?;
    Ok(scoring::build_attack_score(
        &x.id,
        signals,
        &cfg.weights,
        cfg.mode,
        cfg.gamma,
    )?)
}

fn elicit(
    ctx: &AttackContext<'_>,
    agent: &AgentBackend,
    x: &AttackCandidateView,
    budget: &mut CallBudget,
) -> Result<AskOutcome, AttackError> {
    let _ = ctx;
    let prompt = prompts::fill(prompts::ELICITATION_TEMPLATE, &[("content", &x.content)]);
    let outcome = agent.ask(AskRequest {
        user_id: &x.user_id,
        query: &prompt,
        probe_index: 0,
        want_logprobs: true,
        want_retrieval: false,
    })?;
    budget.agent_calls += 1;
    Ok(outcome)
}

fn logprob_score(candidate_id: &str, score: f64, gamma: Option<f64>) -> AttackScore {
    AttackScore {
        candidate_id: candidate_id.to_string(),
        score,
        per_probe: vec![ProbeSignals {
            response_score: 0.0,
            logprob_term: Some(score),
            memory_term: None,
        }],
        verdict: gamma.map(|g| scoring::decide(score, g)),
    }
}

fn run_loss(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    cfg: &AttackConfig,
    budget: &mut CallBudget,
) -> Result<AttackScore, AttackError> {
    let outcome = elicit(ctx, ctx.agent, x, budget)?;
    let score = outcome
        .observation
        .mean_logprob
        .ok_or_else(|| AttackError::Config("agent supplied no mean logprob".into()))?;
    Ok(logprob_score(&x.id, score, cfg.gamma))
}

/// Mean of the lowest `ceil(fraction * T)` token log-probabilities.
pub fn mink_score(token_logprobs: &[f64], fraction: f64) -> f64 {
    let t = token_logprobs.len();
    if t == 0 {
        return f64::NEG_INFINITY;
    }
    let m = ((fraction * t as f64).ceil() as usize).clamp(1, t);
    let mut sorted = token_logprobs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[..m].iter().sum::<f64>() / m as f64
}

fn run_mink(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    cfg: &AttackConfig,
    budget: &mut CallBudget,
) -> Result<AttackScore, AttackError> {
    let outcome = elicit(ctx, ctx.agent, x, budget)?;
    let tokens = outcome
        .token_logprobs
        .as_deref()
        .ok_or_else(|| AttackError::Config("agent supplied no per-token logprobs".into()))?;
    let score = mink_score(tokens, cfg.mink_fraction);
    Ok(logprob_score(&x.id, score, cfg.gamma))
}

fn run_reference(
    ctx: &AttackContext<'_>,
    x: &AttackCandidateView,
    cfg: &AttackConfig,
    budget: &mut CallBudget,
) -> Result<AttackScore, AttackError> {
    let target = elicit(ctx, ctx.agent, x, budget)?;
    let reference_agent = ctx.agent.make_reference()?;
    let reference = elicit(ctx, &reference_agent, x, budget)?;
    let target_lp = target
        .observation
        .mean_logprob
        .ok_or_else(|| AttackError::Config("agent supplied no mean logprob".into()))?;
    let reference_lp = reference
        .observation
        .mean_logprob
        .ok_or_else(|| AttackError::Config("reference agent supplied no mean logprob".into()))?;
    Ok(logprob_score(&x.id, target_lp - reference_lp, cfg.gamma))
}
