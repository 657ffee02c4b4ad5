//! The target chat agent: answers a query conditioned on retrieved
//! memories, under three backends: deterministic oracle, built-in
//! LLM-backed agent, and remote pass-through.

mod oracle;

pub use oracle::{
    Branch, OracleBehavior, OracleReply, RationaleFidelity, RationaleStyle, HEDGE_LOGPROB,
    INFERRED_LOGPROB, RECALL_LOGPROB,
};

use std::sync::Arc;

use thiserror::Error;

use crate::llm::{ChatClient, ChatMessage, LlmEndpoint, LlmError, RequestGate, RetryPolicy};
use crate::memstore::{HashedNgramEmbedder, MemoryStore, MemoryStoreConfig, StoreError};
use crate::model::{ProbeObservation, RetrievedMemory};
use crate::prompts::{DEFAULT_AGENT_SYSTEM_PROMPT, DEFENSE_PARAGRAPH};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("query must be non-empty")]
    EmptyQuery,
    #[error("backend cannot satisfy the request: {0}")]
    Capability(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

enum BackendKind {
    Oracle(OracleBehavior),
    BuiltinLlm { client: Arc<ChatClient> },
    Remote { client: Arc<ChatClient> },
}

/// One probe request to the agent. Observations carry the probe index so
/// completion order never affects downstream aggregation.
#[derive(Debug, Clone, Copy)]
pub struct AskRequest<'a> {
    pub user_id: &'a str,
    pub query: &'a str,
    pub probe_index: usize,
    pub want_logprobs: bool,
    pub want_retrieval: bool,
}

/// An observation plus the raw per-token log-probabilities some attacks
/// need (the observation itself only carries the mean).
#[derive(Debug, Clone)]
pub struct AskOutcome {
    pub observation: ProbeObservation,
    pub token_logprobs: Option<Vec<f64>>,
}

/// The target agent: a memory store plus one of three answer backends.
pub struct AgentBackend {
    kind: BackendKind,
    system_prompt: String,
    defense_enabled: bool,
    store: Arc<MemoryStore>,
}

impl AgentBackend {
    /// Deterministic test oracle over the given store. The oracle is
    /// prompt-insensitive by construction: the system prompt (and hence
    /// the defense paragraph) never changes its decision table.
    pub fn oracle(behavior: OracleBehavior, store: Arc<MemoryStore>) -> Self {
        Self {
            kind: BackendKind::Oracle(behavior),
            system_prompt: DEFAULT_AGENT_SYSTEM_PROMPT.to_string(),
            defense_enabled: false,
            store,
        }
    }

    /// Built-in memory-augmented agent: local store, LLM answers.
    pub fn builtin_llm(
        endpoint: LlmEndpoint,
        store: Arc<MemoryStore>,
        gate: Arc<RequestGate>,
    ) -> Self {
        Self {
            kind: BackendKind::BuiltinLlm {
                client: Arc::new(ChatClient::new(endpoint, RetryPolicy::default(), gate)),
            },
            system_prompt: DEFAULT_AGENT_SYSTEM_PROMPT.to_string(),
            defense_enabled: false,
            store,
        }
    }

    /// Pass-through to a remote agent that owns its own memory.
    pub fn remote(endpoint: LlmEndpoint, gate: Arc<RequestGate>) -> Self {
        let store = MemoryStore::new(
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        );
        Self {
            kind: BackendKind::Remote {
                client: Arc::new(ChatClient::new(endpoint, RetryPolicy::default(), gate)),
            },
            system_prompt: String::new(),
            defense_enabled: false,
            store: Arc::new(store),
        }
    }

    pub fn with_system_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.system_prompt = prompt.into();
        self
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub fn defense_enabled(&self) -> bool {
        self.defense_enabled
    }

    pub fn store(&self) -> &Arc<MemoryStore> {
        &self.store
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self.kind, BackendKind::Oracle(_))
    }

    /// Append the defense paragraph to the system prompt, exactly once.
    pub fn enable_defense(&mut self) {
        if self.defense_enabled || self.system_prompt.contains(DEFENSE_PARAGRAPH) {
            self.defense_enabled = true;
            return;
        }
        if self.system_prompt.is_empty() {
            self.system_prompt = DEFENSE_PARAGRAPH.to_string();
        } else {
            self.system_prompt = format!("{}\n\n{}", self.system_prompt, DEFENSE_PARAGRAPH);
        }
        self.defense_enabled = true;
    }

    /// Clone of this agent with an empty memory store and identical
    /// configuration: the "no target memory" comparison agent.
    pub fn make_reference(&self) -> Result<AgentBackend, AgentError> {
        let kind = match &self.kind {
            BackendKind::Oracle(b) => BackendKind::Oracle(*b),
            BackendKind::BuiltinLlm { client } => BackendKind::BuiltinLlm {
                client: Arc::clone(client),
            },
            BackendKind::Remote { .. } => {
                return Err(AgentError::Capability(
                    "a remote agent's memory cannot be emptied to build a reference agent".into(),
                ))
            }
        };
        Ok(AgentBackend {
            kind,
            system_prompt: self.system_prompt.clone(),
            defense_enabled: self.defense_enabled,
            store: Arc::new(self.store.empty_clone()),
        })
    }

    /// The full serialized prompt the agent conditions on for a query:
    /// system prompt, then the retrieved-memories block, then the query.
    pub fn assemble_prompt(&self, user_id: &str, query: &str) -> Result<String, AgentError> {
        let memories = self.memories_block(user_id, query)?;
        Ok(format!("{}\n\n{}\n\n{}", self.system_prompt, memories, query))
    }

    fn memories_block(&self, user_id: &str, query: &str) -> Result<String, AgentError> {
        let retrieved = match self.kind {
            BackendKind::Remote { .. } => Vec::new(),
            _ => self.store.retrieve_default(user_id, query)?,
        };
        let mut block = String::from("Relevant memories:");
        if retrieved.is_empty() {
            block.push_str("\n(none)");
        } else {
            for s in &retrieved {
                block.push('\n');
                block.push_str(&s.unit.content);
            }
        }
        Ok(block)
    }

    /// Answer one probe. Retrieval happens against the user's store, the
    /// response is produced by the backend, and the observation carries
    /// exactly the signals the caller asked for.
    pub fn ask(&self, req: AskRequest<'_>) -> Result<AskOutcome, AgentError> {
        if req.query.trim().is_empty() {
            return Err(AgentError::EmptyQuery);
        }
        match &self.kind {
            BackendKind::Oracle(behavior) => {
                let reply = oracle::respond(
                    behavior,
                    &self.store,
                    req.user_id,
                    req.query,
                    self.store.config().top_l,
                )?;
                let token_logprobs = req
                    .want_logprobs
                    .then(|| oracle::token_logprobs(&reply.text, reply.logprob));
                let retrieved = req.want_retrieval.then(|| {
                    reply
                        .retrieved
                        .iter()
                        .enumerate()
                        .map(|(i, s)| RetrievedMemory {
                            rank: i + 1,
                            content: s.unit.content.clone(),
                        })
                        .collect()
                });
                Ok(AskOutcome {
                    observation: ProbeObservation {
                        probe_index: req.probe_index,
                        response_text: reply.text,
                        mean_logprob: req.want_logprobs.then_some(reply.logprob),
                        retrieved,
                    },
                    token_logprobs,
                })
            }
            BackendKind::BuiltinLlm { client } => {
                let scored = self.store.retrieve_default(req.user_id, req.query)?;
                let system = format!(
                    "{}\n\n{}",
                    self.system_prompt,
                    self.memories_block(req.user_id, req.query)?
                );
                let messages = vec![ChatMessage::system(system), ChatMessage::user(req.query)];
                let reply = client.chat(&messages, req.want_logprobs).map_err(map_llm_err)?;
                let mean = reply.mean_logprob();
                if req.want_logprobs && mean.is_none() {
                    return Err(AgentError::Capability(
                        "endpoint supplied no token logprobs".into(),
                    ));
                }
                let retrieved = req.want_retrieval.then(|| {
                    scored
                        .iter()
                        .enumerate()
                        .map(|(i, s)| RetrievedMemory {
                            rank: i + 1,
                            content: s.unit.content.clone(),
                        })
                        .collect()
                });
                Ok(AskOutcome {
                    observation: ProbeObservation {
                        probe_index: req.probe_index,
                        response_text: reply.content.clone(),
                        mean_logprob: if req.want_logprobs { mean } else { None },
                        retrieved,
                    },
                    token_logprobs: if req.want_logprobs {
                        reply.token_logprobs
                    } else {
                        None
                    },
                })
            }
            BackendKind::Remote { client } => {
                if req.want_retrieval {
                    return Err(AgentError::Capability(
                        "remote agents do not expose retrieved memories".into(),
                    ));
                }
                let mut messages = Vec::new();
                if !self.system_prompt.is_empty() {
                    messages.push(ChatMessage::system(self.system_prompt.clone()));
                }
                messages.push(ChatMessage::user(req.query));
                let reply = client.chat(&messages, req.want_logprobs).map_err(map_llm_err)?;
                let mean = reply.mean_logprob();
                if req.want_logprobs && mean.is_none() {
                    return Err(AgentError::Capability(
                        "endpoint supplied no token logprobs".into(),
                    ));
                }
                Ok(AskOutcome {
                    observation: ProbeObservation {
                        probe_index: req.probe_index,
                        response_text: reply.content.clone(),
                        mean_logprob: if req.want_logprobs { mean } else { None },
                        retrieved: None,
                    },
                    token_logprobs: if req.want_logprobs {
                        reply.token_logprobs
                    } else {
                        None
                    },
                })
            }
        }
    }
}

fn map_llm_err(e: LlmError) -> AgentError {
    match e {
        LlmError::MissingLogprobs => {
            AgentError::Capability("endpoint supplied no token logprobs".into())
        }
        other => AgentError::Llm(other),
    }
}
