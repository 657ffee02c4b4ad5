//! Shared domain types: memory units, candidates, probes, observations,
//! attack scores, and the membership rules that define ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four-value judge scale used by every rubric judge in the crate.
pub const JUDGE_SCALE: [f64; 4] = [0.0, 0.33, 0.67, 1.0];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("semantic membership rule requires a configured equivalence judge")]
    MissingEquivalenceJudge,
    #[error("equivalence judge failed: {0}")]
    EquivalenceJudge(String),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Which side of the membership split a unit or candidate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Member,
    #[serde(rename = "nonmember")]
    NonMember,
}

/// One stored, user-scoped memory statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUnit {
    pub id: String,
    pub user_id: String,
    pub content: String,
    pub split: Split,
    /// Event/session grouping; the atomic unit of split assignment.
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

impl MemoryUnit {
    /// L2-norm deviation tolerated before an embedding is rejected.
    pub const NORM_TOLERANCE: f32 = 1e-6;

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.content.trim().is_empty() {
            return Err(ModelError::Invalid {
                field: "content",
                reason: "memory unit content must be non-empty".into(),
            });
        }
        if let Some(v) = &self.embedding {
            let norm = l2_norm(v);
            if (norm - 1.0).abs() > Self::NORM_TOLERANCE {
                return Err(ModelError::Invalid {
                    field: "embedding",
                    reason: format!("expected unit L2 norm, got {norm}"),
                });
            }
        }
        Ok(())
    }
}

pub fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt() as f32
}

/// A statement whose membership is being tested. The `truth` label exists
/// for evaluation bookkeeping only; attacks operate on
/// [`AttackCandidateView`], which does not carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStatement {
    pub id: String,
    pub user_id: String,
    pub content: String,
    pub truth: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrased_from: Option<String>,
}

/// The candidate as attacks are allowed to see it: no truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCandidateView {
    pub id: String,
    pub user_id: String,
    pub content: String,
}

/// Project a candidate down to the attack-facing view.
pub fn redact_for_attack(x: &CandidateStatement) -> AttackCandidateView {
    AttackCandidateView {
        id: x.id.clone(),
        user_id: x.user_id.clone(),
        content: x.content.clone(),
    }
}

/// What the attacker gets to observe per probe.
///
/// Black-box: response text only. Gray-box: plus token log-probabilities.
/// White-box: plus the memory units the agent retrieved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Blackbox,
    Graybox,
    Whitebox,
}

impl AccessMode {
    pub fn wants_logprobs(self) -> bool {
        matches!(self, AccessMode::Graybox | AccessMode::Whitebox)
    }

    pub fn wants_retrieval(self) -> bool {
        matches!(self, AccessMode::Whitebox)
    }
}

impl std::fmt::Display for AccessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AccessMode::Blackbox => "blackbox",
            AccessMode::Graybox => "graybox",
            AccessMode::Whitebox => "whitebox",
        };
        f.write_str(s)
    }
}

/// The flavor of a generated probe question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Direct recall question plus a source/reason follow-up clause.
    RecallWithRationale,
    /// Direct recall question without the follow-up (ablation).
    RecallPlain,
    /// Yes/no question about one facet of the candidate.
    Judgment,
    /// The single "How do you know about {topic}?" probe.
    Naive,
}

/// One generated attack query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallProbe {
    /// The atomic slot being queried (person, item, location, ...).
    pub topic: String,
    /// Expected concise answer if the candidate is stored.
    pub key_value: String,
    pub question: String,
    pub kind: ProbeKind,
    /// Position within the probe plan, in `[0, K)`.
    pub index: usize,
}

/// One retrieved memory unit as exposed in white-box observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedMemory {
    /// 1-based retrieval rank.
    pub rank: usize,
    pub content: String,
}

/// The agent's answer to one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeObservation {
    pub probe_index: usize,
    pub response_text: String,
    /// Mean per-token natural-log probability of the response tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved: Option<Vec<RetrievedMemory>>,
}

/// Per-probe signal breakdown behind an [`AttackScore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSignals {
    /// Response-judge verdict on the four-value scale.
    pub response_score: f64,
    /// Raw mean log-probability, when the access mode supplies one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob_term: Option<f64>,
    /// Max memory-judge verdict over retrieved units, white-box only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_term: Option<f64>,
}

/// Aggregated membership score for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub candidate_id: String,
    pub score: f64,
    pub per_probe: Vec<ProbeSignals>,
    /// `score >= gamma` when a decision threshold is configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
}

/// How membership of a candidate in a store is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MembershipRule {
    /// String equality after trimming and collapsing internal whitespace.
    /// Case and punctuation are preserved.
    Exact,
    /// Some stored unit is judged semantically equivalent at or above the
    /// threshold on the four-value judge scale.
    SemanticEquivalence {
        /// Defaults to 0.67 ("same concrete information" tier).
        equivalence_threshold: f64,
    },
}

impl MembershipRule {
    pub const DEFAULT_EQUIVALENCE_THRESHOLD: f64 = 0.67;

    pub fn semantic() -> Self {
        MembershipRule::SemanticEquivalence {
            equivalence_threshold: Self::DEFAULT_EQUIVALENCE_THRESHOLD,
        }
    }
}

/// Scores how close a stored unit is to a candidate, on the judge scale.
/// Implemented by the scoring module's memory judges.
pub trait EquivalenceScorer {
    fn equivalence(&self, candidate: &str, unit: &str) -> Result<f64, String>;
}

/// Trim and collapse internal whitespace runs to a single space.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Decide whether `x` is a member of `units` under `rule`.
///
/// The semantic rule needs an equivalence judge; calling it without one is
/// a configuration error.
pub fn check_membership(
    x: &CandidateStatement,
    units: &[MemoryUnit],
    rule: MembershipRule,
    judge: Option<&dyn EquivalenceScorer>,
) -> Result<bool, ModelError> {
    match rule {
        MembershipRule::Exact => {
            let wanted = normalize_whitespace(&x.content);
            Ok(units
                .iter()
                .any(|m| normalize_whitespace(&m.content) == wanted))
        }
        MembershipRule::SemanticEquivalence {
            equivalence_threshold,
        } => {
            let judge = judge.ok_or(ModelError::MissingEquivalenceJudge)?;
            for m in units {
                let s = judge
                    .equivalence(&x.content, &m.content)
                    .map_err(ModelError::EquivalenceJudge)?;
                if s >= equivalence_threshold {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}
