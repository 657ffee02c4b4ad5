//! Deterministic simulated target agent. Its recall / inference / hedge
//! behavior is a fixed decision table over lexical overlap with the
//! retrieved memories, so end-to-end attack tests have exact expected
//! outcomes without a model server.

use serde::{Deserialize, Serialize};

use crate::memstore::{fnv1a, MemoryStore, ScoredUnit, StoreError};
use crate::text;

/// Fixed mean log-probability the oracle reports per branch. These are
/// harness constants giving gray-box tests a monotone signal; recall is
/// most confident, hedging least.
pub const RECALL_LOGPROB: f64 = -0.2;
pub const INFERRED_LOGPROB: f64 = -0.9;
pub const HEDGE_LOGPROB: f64 = -1.5;

/// Best-overlap floor for answering by cross-memory inference.
const INFERENCE_FLOOR: f64 = 0.5;
/// Units at or above this overlap get quoted in inference answers.
const QUOTE_FLOOR: f64 = 0.3;
const MAX_QUOTES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleStyle {
    /// Quote the supporting memory verbatim.
    CitesSource,
    /// Answer with uncertainty markers.
    Hedges,
}

/// Per-branch rationale style: how recall answers and inference answers
/// justify themselves when the question asks for a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleFidelity {
    pub recall: RationaleStyle,
    pub inference: RationaleStyle,
}

impl Default for RationaleFidelity {
    fn default() -> Self {
        Self {
            recall: RationaleStyle::CitesSource,
            inference: RationaleStyle::Hedges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleBehavior {
    /// Lexical overlap (question content words found in one unit) needed
    /// to answer by direct recall.
    pub answer_overlap_threshold: f64,
    /// Probability that an inference-capable probe is answered as if it
    /// were a confident recall (the conflation failure mode).
    pub inference_rate: f64,
    pub rationale_fidelity: RationaleFidelity,
    pub rng_seed: u64,
}

impl Default for OracleBehavior {
    fn default() -> Self {
        Self {
            answer_overlap_threshold: 1.0,
            inference_rate: 0.0,
            rationale_fidelity: RationaleFidelity::default(),
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Recall,
    Inference,
    Hedge,
}

pub struct OracleReply {
    pub text: String,
    pub logprob: f64,
    pub branch: Branch,
    pub retrieved: Vec<ScoredUnit>,
}

/// Uniform draw in [0, 1) that depends only on (seed, user, query), so
/// concurrent and repeated runs agree.
fn hash01(seed: u64, user_id: &str, query: &str) -> f64 {
    let h = fnv1a(format!("{seed}|{user_id}|{query}").as_bytes());
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn respond(
    behavior: &OracleBehavior,
    store: &MemoryStore,
    user_id: &str,
    query: &str,
    top_l: usize,
) -> Result<OracleReply, StoreError> {
    let retrieved = store.retrieve(user_id, query, top_l)?;
    let ctx = text::content_word_set(&text::strip_rationale(query));
    let yes_no = text::is_yes_no_question(query);
    let rationale_asked = text::has_rationale_marker(query);

    // Overlap of the question's content words with each retrieved unit.
    let overlaps: Vec<f64> = retrieved
        .iter()
        .map(|s| text::overlap_fraction(&ctx, &text::content_word_set(&s.unit.content)))
        .collect();
    let best = overlaps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.partial_cmp(b)
                .unwrap()
                .then_with(|| ib.cmp(ia)) // earlier retrieval rank wins ties
        })
        .map(|(i, o)| (i, *o));

    let (branch, text_out) = match best {
        Some((i, o)) if !ctx.is_empty() && o >= behavior.answer_overlap_threshold => {
            let unit = retrieved[i].unit.content.clone();
            let t = recall_text(&unit, yes_no, rationale_asked, behavior.rationale_fidelity.recall);
            (Branch::Recall, t)
        }
        Some((_, o)) if !ctx.is_empty() && o >= INFERENCE_FLOOR => {
            // Quote everything contextually related, best first.
            let mut quoted: Vec<(f64, usize)> = overlaps
                .iter()
                .enumerate()
                .filter(|(_, o)| **o >= QUOTE_FLOOR)
                .map(|(i, o)| (*o, i))
                .collect();
            quoted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let sources: Vec<&str> = quoted
                .iter()
                .take(MAX_QUOTES)
                .map(|(_, i)| retrieved[*i].unit.content.as_str())
                .collect();
            let conflate = hash01(behavior.rng_seed, user_id, query) < behavior.inference_rate;
            let t = if conflate {
                recall_text(sources[0], yes_no, rationale_asked, RationaleStyle::CitesSource)
            } else {
                inference_text(
                    &sources,
                    yes_no,
                    rationale_asked,
                    behavior.rationale_fidelity.inference,
                )
            };
            (Branch::Inference, t)
        }
        _ => {
            let t = if yes_no {
                "No, I have no information about that.".to_string()
            } else {
                "I have no information about that.".to_string()
            };
            (Branch::Hedge, t)
        }
    };

    let logprob = match branch {
        Branch::Recall => RECALL_LOGPROB,
        Branch::Inference => INFERRED_LOGPROB,
        Branch::Hedge => HEDGE_LOGPROB,
    };
    Ok(OracleReply {
        text: text_out,
        logprob,
        branch,
        retrieved,
    })
}

fn recall_text(unit: &str, yes_no: bool, rationale_asked: bool, style: RationaleStyle) -> String {
    if yes_no {
        return match style {
            RationaleStyle::CitesSource => format!("Yes. My memory states: \"{unit}\""),
            RationaleStyle::Hedges => {
                "Yes, I believe so, but I am not sure where I learned this.".to_string()
            }
        };
    }
    if !rationale_asked {
        return unit.to_string();
    }
    match style {
        RationaleStyle::CitesSource => {
            format!("{unit} I know this because my memory states: \"{unit}\"")
        }
        RationaleStyle::Hedges => format!("{unit} I am not sure where I learned this, though."),
    }
}

fn inference_text(
    sources: &[&str],
    yes_no: bool,
    rationale_asked: bool,
    style: RationaleStyle,
) -> String {
    let quoted: String = sources
        .iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(" ");
    if yes_no {
        return format!("Possibly. Related memories suggest: {quoted} — but I am not certain.");
    }
    if !rationale_asked {
        // Asked only for the fact: state a confident fusion of the
        // related memories, with no sourcing to give the game away.
        return sources.join(" ");
    }
    match style {
        RationaleStyle::Hedges => format!(
            "It is likely, based on related information I remember: {quoted} I am not certain; I am inferring this from those related memories."
        ),
        RationaleStyle::CitesSource => {
            format!("Based on my memories: {quoted} — this follows directly from what I have stored.")
        }
    }
}

/// Synthetic per-token logprobs: every whitespace token of the response
/// carries the branch value, so the mean equals the branch value exactly.
pub fn token_logprobs(text_out: &str, logprob: f64) -> Vec<f64> {
    let n = text_out.split_whitespace().count().max(1);
    vec![logprob; n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memstore::{HashedNgramEmbedder, MemoryStoreConfig};
    use std::sync::Arc;

    fn store_with(contents: &[&str]) -> MemoryStore {
        let s = MemoryStore::new(
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        );
        for c in contents {
            s.write("u1", c).unwrap();
        }
        s
    }

    const MEMBER: &str = "Alice bought a blue backpack at Target.";

    #[test]
    fn member_probe_recalls_with_verbatim_citation() {
        let store = store_with(&[MEMBER, "Bob adopted a gray kitten in May."]);
        let reply = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "Where did Alice buy the backpack? What memory tells you this?",
            5,
        )
        .unwrap();
        assert_eq!(reply.branch, Branch::Recall);
        assert!(reply.text.contains("blue backpack"));
        assert!(reply.text.contains(&format!("\"{MEMBER}\"")));
        assert_eq!(reply.logprob, RECALL_LOGPROB);
    }

    #[test]
    fn empty_store_hedges_with_the_lowest_logprob() {
        let store = store_with(&[]);
        let reply = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "Where did Alice buy the backpack? What memory tells you this?",
            5,
        )
        .unwrap();
        assert_eq!(reply.branch, Branch::Hedge);
        assert!(reply.text.contains("no information"));
        assert!(reply.logprob < RECALL_LOGPROB);
        assert_eq!(reply.logprob, HEDGE_LOGPROB);
    }

    #[test]
    fn unrelated_probe_hedges() {
        let store = store_with(&[MEMBER]);
        let reply = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "Where did Zoe plant the maple sapling? How do you know that?",
            5,
        )
        .unwrap();
        assert_eq!(reply.branch, Branch::Hedge);
    }

    #[test]
    fn partial_overlap_answers_by_inference_with_hedged_quotes() {
        // Neither unit fully covers the question; together they do.
        let store = store_with(&[
            "Frank was shopping at Walmart on June 5 with a friend.",
            "Frank paid for a red scooter on June 5 at the checkout.",
        ]);
        let reply = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "What did Frank buy at Walmart on June 5? How do you know that?",
            5,
        )
        .unwrap();
        assert_eq!(reply.branch, Branch::Inference);
        assert!(reply.text.contains("red scooter"), "{}", reply.text);
        assert!(reply.text.contains("not certain"));
        assert_eq!(reply.logprob, INFERRED_LOGPROB);
    }

    #[test]
    fn rationale_free_questions_get_unsourced_answers() {
        let store = store_with(&[MEMBER]);
        let reply = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "Where did Alice buy the backpack?",
            5,
        )
        .unwrap();
        assert_eq!(reply.branch, Branch::Recall);
        assert_eq!(reply.text, MEMBER);
    }

    #[test]
    fn yes_no_questions_get_yes_no_answers() {
        let store = store_with(&[MEMBER]);
        let yes = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "Did Alice buy a blue backpack?",
            5,
        )
        .unwrap();
        assert!(yes.text.starts_with("Yes."));
        let no = respond(
            &OracleBehavior::default(),
            &store,
            "u1",
            "Did Zoe plant a maple sapling?",
            5,
        )
        .unwrap();
        assert!(no.text.starts_with("No"));
    }

    #[test]
    fn conflation_is_seed_deterministic() {
        let store = store_with(&[
            "Frank was shopping at Walmart on June 5 with a friend.",
            "Frank paid for a red scooter on June 5 at the checkout.",
        ]);
        let behavior = OracleBehavior {
            inference_rate: 0.5,
            rng_seed: 41,
            ..OracleBehavior::default()
        };
        let q = "What did Frank buy at Walmart on June 5? How do you know that?";
        let a = respond(&behavior, &store, "u1", q, 5).unwrap();
        let b = respond(&behavior, &store, "u1", q, 5).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.logprob, INFERRED_LOGPROB);
    }

    #[test]
    fn token_logprobs_mean_is_exact() {
        let toks = token_logprobs("three word reply", -0.9);
        assert_eq!(toks.len(), 3);
        let mean = toks.iter().sum::<f64>() / toks.len() as f64;
        assert_eq!(mean, -0.9);
    }
}
