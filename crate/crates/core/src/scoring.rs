//! Per-probe signal extraction (response judge, log-probability term,
//! memory judge) and the weighted mean aggregation into a membership
//! score.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatClient, ChatMessage};
use crate::memstore::fnv1a;
use crate::model::{
    AccessMode, AttackScore, EquivalenceScorer, ProbeKind, ProbeSignals, RecallProbe, JUDGE_SCALE,
};
use crate::prompts;
use crate::text;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("judge reply unparseable after retries: {raw}")]
    Unparseable { raw: String },
    #[error("judge call failed: {0}")]
    Judge(String),
    #[error("probe {probe_index} is missing the {signal} signal required by {mode} mode")]
    MissingSignal {
        probe_index: usize,
        signal: &'static str,
        mode: AccessMode,
    },
    #[error("cannot aggregate an empty probe set")]
    EmptySignals,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// Verdict on the fixed four-value scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub score: f64,
    pub raw_judge_output: String,
}

/// Aggregation weights for the response, log-probability, and memory
/// terms. All default to 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_r: f64,
    pub w_p: f64,
    pub w_m: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_r: 1.0,
            w_p: 1.0,
            w_m: 1.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.w_r <= 0.0 || self.w_r.is_nan() {
            return Err(ScoreError::InvalidWeights(format!(
                "w_r must be positive, got {}",
                self.w_r
            )));
        }
        if self.w_p < 0.0 || self.w_m < 0.0 {
            return Err(ScoreError::InvalidWeights(
                "w_p and w_m must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Scores an agent response against the candidate statement.
pub trait ResponseJudge: Send + Sync {
    fn judge_response(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        response: &str,
    ) -> Result<JudgeVerdict, ScoreError>;

    /// How many off-scale outputs were snapped so far.
    fn snap_events(&self) -> u64 {
        0
    }
}

/// Scores one retrieved memory unit against the candidate statement.
pub trait MemoryJudge: Send + Sync {
    fn judge_memory(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        memory: &str,
    ) -> Result<JudgeVerdict, ScoreError>;

    fn snap_events(&self) -> u64 {
        0
    }
}

/// Snap a judge output to the nearest scale point; ties snap down.
/// Returns the snapped value and whether snapping moved it.
pub fn snap_to_scale(v: f64) -> (f64, bool) {
    let mut best = JUDGE_SCALE[0];
    let mut best_d = f64::INFINITY;
    for &p in &JUDGE_SCALE {
        let d = (v - p).abs();
        if d < best_d {
            best = p;
            best_d = d;
        }
    }
    (best, best_d > 1e-9)
}

// ---------------------------------------------------------------------
// Deterministic rubric-table judge
// ---------------------------------------------------------------------

/// Deterministic stand-in for the LLM judges. It applies the same key
/// gate / reason gate decision structure as the rubric prompts, driven by
/// lexical checks, so oracle-backend runs are fully reproducible.
#[derive(Debug, Default, Clone)]
pub struct RubricTableJudge;

/// Content-word Jaccard at or above this counts as a near match (0.67).
const NEAR_MATCH_JACCARD: f64 = 0.6;
/// Minimum shared content words for the 0.33 related tier.
const RELATED_SHARED_WORDS: usize = 2;

const HEDGE_MARKERS: [&str; 9] = [
    "likely",
    "not certain",
    "not sure",
    "inferring",
    "i think",
    "i believe",
    "possibly",
    "perhaps",
    "might",
];

fn response_is_refusal(response: &str) -> bool {
    text::contains_ci(response, "no information")
}

fn is_hedged(response: &str) -> bool {
    let lower = response.to_lowercase();
    HEDGE_MARKERS.iter().any(|m| lower.contains(m))
}

/// Best source tier over the quoted spans in a response: 1.0 when a span
/// equals the candidate after whitespace normalization, 0.67 when a span
/// is a near paraphrase, 0.33 otherwise (source missing or loose).
fn source_tier(candidate: &str, response: &str) -> f64 {
    let wanted = crate::model::normalize_whitespace(candidate);
    let cand_words = text::content_word_set(candidate);
    let mut best: f64 = 0.33;
    for span in text::quoted_spans(response) {
        if crate::model::normalize_whitespace(&span) == wanted {
            return 1.0;
        }
        if text::jaccard(&text::content_word_set(&span), &cand_words) >= NEAR_MATCH_JACCARD {
            best = best.max(0.67);
        }
    }
    best
}

impl ResponseJudge for RubricTableJudge {
    fn judge_response(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        response: &str,
    ) -> Result<JudgeVerdict, ScoreError> {
        let score = if response_is_refusal(response) {
            0.0
        } else if probe.kind == ProbeKind::Judgment {
            match text::tokenize(response).first().map(String::as_str) {
                Some("yes") => {
                    let tier = source_tier(candidate, response);
                    if is_hedged(response) {
                        tier.min(0.33)
                    } else {
                        tier
                    }
                }
                Some("possibly") | Some("perhaps") | Some("maybe") => 0.33,
                _ => 0.0,
            }
        } else if !text::contains_ci(response, &probe.key_value) {
            // Key gate: missing or different value.
            0.0
        } else {
            let tier = source_tier(candidate, response);
            if is_hedged(response) {
                // Reason gate: uncertain or inferred.
                tier.min(0.33)
            } else {
                tier
            }
        };
        Ok(JudgeVerdict {
            score,
            raw_judge_output: format!("{{\"score\": {score}}}"),
        })
    }
}

impl MemoryJudge for RubricTableJudge {
    fn judge_memory(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        memory: &str,
    ) -> Result<JudgeVerdict, ScoreError> {
        let score = memory_tier(candidate, &probe.key_value, memory);
        Ok(JudgeVerdict {
            score,
            raw_judge_output: format!("{{\"score\": {score}}}"),
        })
    }
}

fn memory_tier(candidate: &str, key_value: &str, memory: &str) -> f64 {
    if crate::model::normalize_whitespace(memory) == crate::model::normalize_whitespace(candidate) {
        return 1.0;
    }
    let cand = text::content_word_set(candidate);
    let mem = text::content_word_set(memory);
    if text::jaccard(&mem, &cand) >= NEAR_MATCH_JACCARD {
        return 0.67;
    }
    let shared = cand.intersection(&mem).count();
    if shared >= RELATED_SHARED_WORDS || (!key_value.is_empty() && text::contains_ci(memory, key_value))
    {
        return 0.33;
    }
    0.0
}

impl EquivalenceScorer for RubricTableJudge {
    fn equivalence(&self, candidate: &str, unit: &str) -> Result<f64, String> {
        Ok(memory_tier(candidate, "", unit))
    }
}

// ---------------------------------------------------------------------
// LLM judge
// ---------------------------------------------------------------------

/// Judge backed by a chat endpoint using the scoring rubric prompts.
/// Replies must be the exact JSON shape `{"score": <v>}`; off-scale
/// values are snapped to the nearest scale point and counted.
pub struct LlmJudge {
    client: Arc<ChatClient>,
    retries: u32,
    snaps: AtomicU64,
}

impl LlmJudge {
    pub fn new(client: Arc<ChatClient>) -> Self {
        Self {
            client,
            retries: 3,
            snaps: AtomicU64::new(0),
        }
    }

    fn ask_for_score(&self, prompt: String) -> Result<(f64, String), ScoreError> {
        let mut last_raw = String::new();
        for _ in 0..self.retries {
            let reply = self
                .client
                .chat(&[ChatMessage::user(prompt.clone())], false)
                .map_err(|e| ScoreError::Judge(e.to_string()))?;
            last_raw = reply.content;
            if let Some(v) = parse_score_json(&last_raw) {
                let (snapped, moved) = snap_to_scale(v);
                if moved {
                    self.snaps.fetch_add(1, Ordering::Relaxed);
                    log::warn!("judge returned off-scale score {v}, snapped to {snapped}");
                }
                return Ok((snapped, last_raw));
            }
        }
        Err(ScoreError::Unparseable { raw: last_raw })
    }
}

/// Pull `{"score": v}` out of a judge reply, tolerating surrounding text.
fn parse_score_json(raw: &str) -> Option<f64> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    #[derive(Deserialize)]
    struct ScoreShape {
        score: f64,
    }
    serde_json::from_str::<ScoreShape>(&raw[start..=end])
        .ok()
        .map(|s| s.score)
}

impl ResponseJudge for LlmJudge {
    fn judge_response(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        response: &str,
    ) -> Result<JudgeVerdict, ScoreError> {
        let kind = format!("{:?}", probe.kind);
        let prompt = prompts::fill(
            prompts::RESPONSE_SCORING_PROMPT,
            &[
                ("probe_type", kind.as_str()),
                ("topic", &probe.topic),
                ("key_value", &probe.key_value),
                ("candidate_statement", candidate),
                ("question", &probe.question),
                ("response", response),
            ],
        );
        let (score, raw) = self.ask_for_score(prompt)?;
        Ok(JudgeVerdict {
            score,
            raw_judge_output: raw,
        })
    }

    fn snap_events(&self) -> u64 {
        self.snaps.load(Ordering::Relaxed)
    }
}

impl MemoryJudge for LlmJudge {
    fn judge_memory(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        memory: &str,
    ) -> Result<JudgeVerdict, ScoreError> {
        let prompt = prompts::fill(
            prompts::MEMORY_SCORING_PROMPT,
            &[
                ("candidate_statement", candidate),
                ("question", &probe.question),
                ("memory_content", memory),
            ],
        );
        let (score, raw) = self.ask_for_score(prompt)?;
        Ok(JudgeVerdict {
            score,
            raw_judge_output: raw,
        })
    }

    fn snap_events(&self) -> u64 {
        self.snaps.load(Ordering::Relaxed)
    }
}

// ---------------------------------------------------------------------
// Seeded tier-flip noise wrapper
// ---------------------------------------------------------------------

/// Wraps a judge and, with probability `flip_rate`, moves the verdict one
/// tier up or down. The flip decision is a pure function of (seed,
/// candidate, probe index, text), so concurrent runs stay reproducible.
pub struct NoisyJudge<J> {
    inner: J,
    flip_rate: f64,
    seed: u64,
}

impl<J> NoisyJudge<J> {
    pub fn new(inner: J, flip_rate: f64, seed: u64) -> Self {
        Self {
            inner,
            flip_rate,
            seed,
        }
    }

    fn flip(&self, score: f64, candidate: &str, probe_index: usize, text_in: &str) -> f64 {
        let key = format!("{}|{candidate}|{probe_index}|{text_in}", self.seed);
        let h = fnv1a(key.as_bytes());
        let r = (h >> 11) as f64 / (1u64 << 53) as f64;
        if r >= self.flip_rate {
            return score;
        }
        let idx = JUDGE_SCALE
            .iter()
            .position(|p| (p - score).abs() < 1e-9)
            .unwrap_or(0);
        let up = h & 1 == 1;
        let new_idx = if up {
            (idx + 1).min(JUDGE_SCALE.len() - 1)
        } else {
            idx.saturating_sub(1)
        };
        JUDGE_SCALE[new_idx]
    }
}

impl<J: ResponseJudge> ResponseJudge for NoisyJudge<J> {
    fn judge_response(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        response: &str,
    ) -> Result<JudgeVerdict, ScoreError> {
        let mut v = self.inner.judge_response(candidate, probe, response)?;
        v.score = self.flip(v.score, candidate, probe.index, response);
        Ok(v)
    }

    fn snap_events(&self) -> u64 {
        self.inner.snap_events()
    }
}

impl<J: MemoryJudge> MemoryJudge for NoisyJudge<J> {
    fn judge_memory(
        &self,
        candidate: &str,
        probe: &RecallProbe,
        memory: &str,
    ) -> Result<JudgeVerdict, ScoreError> {
        let mut v = self.inner.judge_memory(candidate, probe, memory)?;
        v.score = self.flip(v.score, candidate, probe.index, memory);
        Ok(v)
    }

    fn snap_events(&self) -> u64 {
        self.inner.snap_events()
    }
}

// ---------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------

/// Max memory-judge score over the retrieved units; empty list scores 0.
pub fn score_memory(
    candidate: &str,
    probe: &RecallProbe,
    retrieved: &[String],
    judge: &dyn MemoryJudge,
) -> Result<f64, ScoreError> {
    let mut best = 0.0f64;
    for unit in retrieved {
        let v = judge.judge_memory(candidate, probe, unit)?;
        best = best.max(v.score);
    }
    Ok(best)
}

/// Mean over probes of the weighted sum of the signals the access mode
/// permits. Probes missing a required signal are a contract error.
pub fn aggregate(
    signals: &[ProbeSignals],
    weights: &Weights,
    mode: AccessMode,
) -> Result<f64, ScoreError> {
    weights.validate()?;
    if signals.is_empty() {
        return Err(ScoreError::EmptySignals);
    }
    let mut total = 0.0;
    for (i, sig) in signals.iter().enumerate() {
        let mut s_i = weights.w_r * sig.response_score;
        if mode.wants_logprobs() {
            let lp = sig.logprob_term.ok_or(ScoreError::MissingSignal {
                probe_index: i,
                signal: "logprob",
                mode,
            })?;
            s_i += weights.w_p * lp;
        }
        if mode.wants_retrieval() {
            let mt = sig.memory_term.ok_or(ScoreError::MissingSignal {
                probe_index: i,
                signal: "memory",
                mode,
            })?;
            s_i += weights.w_m * mt;
        }
        total += s_i;
    }
    Ok(total / signals.len() as f64)
}

/// Aggregate and wrap into an [`AttackScore`], applying the decision
/// threshold when one is configured.
pub fn build_attack_score(
    candidate_id: &str,
    signals: Vec<ProbeSignals>,
    weights: &Weights,
    mode: AccessMode,
    gamma: Option<f64>,
) -> Result<AttackScore, ScoreError> {
    let score = aggregate(&signals, weights, mode)?;
    Ok(AttackScore {
        candidate_id: candidate_id.to_string(),
        score,
        per_probe: signals,
        verdict: gamma.map(|g| decide(score, g)),
    })
}

/// Threshold decision; the boundary is inclusive.
pub fn decide(score: f64, gamma: f64) -> bool {
    score >= gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probe(kind: ProbeKind, key_value: &str) -> RecallProbe {
        RecallProbe {
            topic: "item".into(),
            key_value: key_value.into(),
            question: "What did Alice buy at Target? How do you know that?".into(),
            kind,
            index: 0,
        }
    }

    const CAND: &str = "Alice bought a blue backpack at Target.";

    #[test]
    fn full_match_scores_one() {
        let j = RubricTableJudge;
        let resp = format!("{CAND} I know this because my memory states: \"{CAND}\"");
        let v = j
            .judge_response(CAND, &probe(ProbeKind::RecallWithRationale, "blue backpack"), &resp)
            .unwrap();
        assert_eq!(v.score, 1.0);
    }

    #[test]
    fn inferential_hedge_scores_partial() {
        let j = RubricTableJudge;
        let resp = "It is likely that Alice bought a blue backpack, based on related information I remember: \"Alice often shops for school supplies.\" I am not certain.";
        let v = j
            .judge_response(CAND, &probe(ProbeKind::RecallWithRationale, "blue backpack"), resp)
            .unwrap();
        assert_eq!(v.score, 0.33);
    }

    #[test]
    fn refusal_scores_zero() {
        let j = RubricTableJudge;
        let v = j
            .judge_response(
                CAND,
                &probe(ProbeKind::RecallWithRationale, "blue backpack"),
                "I have no information about that.",
            )
            .unwrap();
        assert_eq!(v.score, 0.0);
    }

    #[test]
    fn missing_key_value_fails_the_key_gate() {
        let j = RubricTableJudge;
        let resp = "Alice bought a red scooter, as far as I can tell from my notes.";
        let v = j
            .judge_response(CAND, &probe(ProbeKind::RecallWithRationale, "blue backpack"), resp)
            .unwrap();
        assert_eq!(v.score, 0.0);
    }

    #[test]
    fn paraphrased_source_is_a_near_match() {
        let j = RubricTableJudge;
        let resp = "blue backpack — I know this because my memory states: \"At Target, Alice purchased a blue backpack.\"";
        let v = j
            .judge_response(CAND, &probe(ProbeKind::RecallWithRationale, "blue backpack"), resp)
            .unwrap();
        assert_eq!(v.score, 0.67);
    }

    #[test]
    fn memory_judge_tiers() {
        let j = RubricTableJudge;
        let p = probe(ProbeKind::RecallWithRationale, "blue backpack");
        let exact = j.judge_memory(CAND, &p, CAND).unwrap();
        assert_eq!(exact.score, 1.0);
        let near = j
            .judge_memory(CAND, &p, "At Target, Alice purchased a blue backpack.")
            .unwrap();
        assert_eq!(near.score, 0.67);
        let loose = j
            .judge_memory(CAND, &p, "Alice visited Target with her brother last week.")
            .unwrap();
        assert_eq!(loose.score, 0.33);
        let unrelated = j
            .judge_memory(CAND, &p, "Derek planted a maple sapling in the yard.")
            .unwrap();
        assert_eq!(unrelated.score, 0.0);
    }

    #[test]
    fn score_memory_takes_the_max_and_empty_is_zero() {
        let j = RubricTableJudge;
        let p = probe(ProbeKind::RecallWithRationale, "blue backpack");
        assert_eq!(score_memory(CAND, &p, &[], &j).unwrap(), 0.0);
        let retrieved = vec![
            "Alice visited Target with her brother last week.".to_string(), // 0.33
            "At Target, Alice purchased a blue backpack.".to_string(),      // 0.67
        ];
        let best = score_memory(CAND, &p, &retrieved, &j).unwrap();
        assert_eq!(best, 0.67);
    }

    #[test]
    fn judgment_tiers() {
        let j = RubricTableJudge;
        let p = probe(ProbeKind::Judgment, "yes");
        let yes = format!("Yes. My memory states: \"{CAND}\"");
        assert_eq!(j.judge_response(CAND, &p, &yes).unwrap().score, 1.0);
        let uncertain = "Possibly. Related memories suggest: \"Alice shops at Target.\" — but I am not certain.";
        assert_eq!(j.judge_response(CAND, &p, uncertain).unwrap().score, 0.33);
        let no = "No, I have no information about that.";
        assert_eq!(j.judge_response(CAND, &p, no).unwrap().score, 0.0);
    }

    #[test]
    fn aggregate_matches_the_worked_arithmetic() {
        let w = Weights::default();
        // Black-box identity.
        let sig = vec![ProbeSignals {
            response_score: 1.0,
            logprob_term: None,
            memory_term: None,
        }];
        assert!((aggregate(&sig, &w, AccessMode::Blackbox).unwrap() - 1.0).abs() < 1e-12);

        // Gray-box: ((1.0 - 0.2) + (0.67 - 0.9)) / 2 = 0.285.
        let sig = vec![
            ProbeSignals {
                response_score: 1.0,
                logprob_term: Some(-0.2),
                memory_term: Some(1.0),
            },
            ProbeSignals {
                response_score: 0.67,
                logprob_term: Some(-0.9),
                memory_term: Some(0.0),
            },
        ];
        let gray = aggregate(&sig, &w, AccessMode::Graybox).unwrap();
        assert!((gray - 0.285).abs() < 1e-9);

        // White-box adds (1.0 + 0.0) / 2.
        let white = aggregate(&sig, &w, AccessMode::Whitebox).unwrap();
        assert!((white - 0.785).abs() < 1e-9);
    }

    #[test]
    fn missing_signal_names_the_probe() {
        let sig = vec![
            ProbeSignals {
                response_score: 1.0,
                logprob_term: Some(-0.2),
                memory_term: None,
            },
            ProbeSignals {
                response_score: 0.33,
                logprob_term: None,
                memory_term: None,
            },
        ];
        match aggregate(&sig, &Weights::default(), AccessMode::Graybox) {
            Err(ScoreError::MissingSignal { probe_index, signal, .. }) => {
                assert_eq!(probe_index, 1);
                assert_eq!(signal, "logprob");
            }
            other => panic!("expected missing-signal error, got {other:?}"),
        }
    }

    #[test]
    fn decide_boundary_is_inclusive() {
        assert!(decide(0.5, 0.5));
        assert!(!decide(0.49, 0.5));
        assert!(decide(-123.0, f64::NEG_INFINITY));
    }

    #[test]
    fn snapping_prefers_the_nearest_point() {
        assert_eq!(snap_to_scale(0.34), (0.33, true));
        assert_eq!(snap_to_scale(0.9), (1.0, true));
        assert_eq!(snap_to_scale(0.67), (0.67, false));
        assert_eq!(snap_to_scale(-0.2), (0.0, true));
    }

    #[test]
    fn parse_score_tolerates_wrapping_text() {
        assert_eq!(parse_score_json("{\"score\": 0.67}"), Some(0.67));
        assert_eq!(parse_score_json("```json\n{\"score\": 1.0}\n```"), Some(1.0));
        assert_eq!(parse_score_json("no json here"), None);
    }

    #[test]
    fn noisy_judge_is_deterministic_per_seed() {
        let j1 = NoisyJudge::new(RubricTableJudge, 0.5, 7);
        let j2 = NoisyJudge::new(RubricTableJudge, 0.5, 7);
        let p = probe(ProbeKind::RecallWithRationale, "blue backpack");
        let resp = format!("{CAND} I know this because my memory states: \"{CAND}\"");
        for _ in 0..3 {
            let a = j1.judge_response(CAND, &p, &resp).unwrap().score;
            let b = j2.judge_response(CAND, &p, &resp).unwrap().score;
            assert_eq!(a, b);
        }
    }

    fn arb_signals() -> impl Strategy<Value = Vec<ProbeSignals>> {
        prop::collection::vec(
            (0usize..4, -3.0f64..0.0, 0usize..4).prop_map(|(r, lp, m)| ProbeSignals {
                response_score: JUDGE_SCALE[r],
                logprob_term: Some(lp),
                memory_term: Some(JUDGE_SCALE[m]),
            }),
            1..10,
        )
    }

    proptest! {
        #[test]
        fn aggregation_is_permutation_invariant(sig in arb_signals(), seed in 0u64..1000) {
            let w = Weights::default();
            let base = aggregate(&sig, &w, AccessMode::Whitebox).unwrap();
            let mut shuffled = sig.clone();
            // Cheap deterministic shuffle.
            let n = shuffled.len();
            for i in 0..n {
                let j = (seed as usize + i * 7) % n;
                shuffled.swap(i, j);
            }
            let permuted = aggregate(&shuffled, &w, AccessMode::Whitebox).unwrap();
            prop_assert!((base - permuted).abs() < 1e-9);
        }

        #[test]
        fn mode_composition_is_monotone(sig in arb_signals()) {
            let w = Weights::default();
            let black = aggregate(&sig, &w, AccessMode::Blackbox).unwrap();
            let gray = aggregate(&sig, &w, AccessMode::Graybox).unwrap();
            let white = aggregate(&sig, &w, AccessMode::Whitebox).unwrap();
            // Memory terms are nonnegative, logprobs nonpositive.
            prop_assert!(white >= gray - 1e-12);
            prop_assert!(gray <= black + 1e-12);
        }

        #[test]
        fn aggregation_is_linear_in_uniform_weight_scaling(
            sig in arb_signals(),
            k in 0.25f64..4.0,
        ) {
            let w = Weights::default();
            let scaled = Weights { w_r: k, w_p: k, w_m: k };
            let a = aggregate(&sig, &w, AccessMode::Whitebox).unwrap();
            let b = aggregate(&sig, &scaled, AccessMode::Whitebox).unwrap();
            prop_assert!((b - k * a).abs() < 1e-9);
        }
    }
}
