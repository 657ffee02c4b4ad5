//! Membership inference probing for chat-agent memory stores.
//!
//! The crate decides whether a candidate statement is stored in a chat
//! agent's user-scoped memory by probing the agent and scoring what comes
//! back. It ships:
//!
//! - a vector memory store with a deterministic hashed n-gram embedder
//!   ([`memstore`]),
//! - three target-agent backends (a fully deterministic oracle for
//!   testing, a built-in memory-augmented LLM agent, and a remote
//!   pass-through) speaking one probe interface ([`agent`]),
//! - recall/judgment/naive probe generators, template- and LLM-backed
//!   ([`probegen`]),
//! - rubric judges and the weighted per-probe score aggregation
//!   ([`scoring`]),
//! - the multi-recall attack plus five baselines ([`attacks`]),
//! - split ingestion, ROC/PR metrics with low-FPR operating points, and a
//!   repeated-run experiment driver ([`eval`]).

pub mod agent;
pub mod attacks;
pub mod eval;
pub mod llm;
pub mod memstore;
pub mod model;
pub mod probegen;
pub mod prompts;
pub mod scoring;
pub mod synthetic;
pub mod text;

pub use agent::{AgentBackend, AgentError, AskOutcome, AskRequest, OracleBehavior};
pub use attacks::{AttackConfig, AttackContext, AttackError, AttackKind, CandidateResult};
pub use eval::{EvalError, EvalReport, RocPoint, SplitSpec};
pub use memstore::{
    EmbedderConfig, HashedNgramEmbedder, MemoryStore, MemoryStoreConfig, StoreError,
};
pub use model::{
    AccessMode, AttackCandidateView, AttackScore, CandidateStatement, MemoryUnit, MembershipRule,
    ProbeKind, ProbeObservation, RecallProbe, Split,
};
pub use scoring::{JudgeVerdict, MemoryJudge, ResponseJudge, ScoreError, Weights};
