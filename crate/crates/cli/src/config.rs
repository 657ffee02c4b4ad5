//! Run configuration: one JSON file describing dataset, agent backend,
//! judges, attack, and evaluation settings. The file is copied into the
//! output directory before a run starts, so credentials never live here,
//! only the names of environment variables that hold them.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use memprobe::agent::{AgentBackend, OracleBehavior};
use memprobe::attacks::AttackConfig;
use memprobe::eval::{RunComponents, SplitSpec};
use memprobe::llm::{ChatClient, LlmEndpoint, RequestGate, RetryPolicy};
use memprobe::memstore::{EmbedderConfig, MemoryStore, MemoryStoreConfig};
use memprobe::model::MemoryUnit;
use memprobe::probegen::{LlmGenerator, Paraphraser, ProbeSource, TemplateGenerator};
use memprobe::scoring::{LlmJudge, MemoryJudge, NoisyJudge, ResponseJudge, RubricTableJudge};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Split files produced by `memprobe ingest` (injection.jsonl and
    /// candidates.jsonl).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_dir: Option<PathBuf>,
    /// Alternative to `split_dir`: ingest this corpus inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    pub agent: AgentConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub judge: JudgeConfig,
    pub attack: AttackConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub corpus: PathBuf,
    #[serde(flatten)]
    pub spec: SplitSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendName {
    Oracle,
    BuiltinLlm,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub backend: BackendName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub defense: bool,
    #[serde(default = "default_top_l")]
    pub top_l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBehavior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<LlmEndpoint>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub min_interval_ms: u64,
    #[serde(default)]
    pub embedder: EmbedderConfig,
}

fn default_top_l() -> usize {
    5
}

fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct GeneratorConfig {
    #[serde(default)]
    pub kind: GeneratorKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<LlmEndpoint>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKindName {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    #[serde(default)]
    pub kind: JudgeKindName,
    /// Tier-flip probability for the noisy rubric judge.
    #[serde(default = "default_flip_rate")]
    pub flip_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<LlmEndpoint>,
}

fn default_flip_rate() -> f64 {
    0.10
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            kind: JudgeKindName::RubricTable,
            flip_rate: default_flip_rate(),
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKindName {
    #[default]
    RubricTable,
    NoisyRubric,
    Llm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_failure_budget")]
    pub failure_budget: f64,
}

fn default_repeats() -> usize {
    3
}

fn default_failure_budget() -> f64 {
    0.05
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: default_repeats(),
            failure_budget: default_failure_budget(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.agent.backend {
            BackendName::Oracle => {}
            BackendName::BuiltinLlm | BackendName::Remote => {
                if self.agent.endpoint.is_none() {
                    bail!("agent backend {:?} requires an endpoint", self.agent.backend);
                }
            }
        }
        if self.generator.kind == GeneratorKindName::Llm
            && self.generator.endpoint.is_none()
            && self.agent.endpoint.is_none()
        {
            bail!("llm generator requires an endpoint");
        }
        if self.judge.kind == JudgeKindName::Llm
            && self.judge.endpoint.is_none()
            && self.agent.endpoint.is_none()
        {
            bail!("llm judge requires an endpoint");
        }
        Ok(())
    }

    /// Build the per-run components for one repetition seed: a fresh
    /// store populated from the injection set, the agent, generator, and
    /// judges. One request gate is shared by agent and judge traffic.
    pub fn build_components(&self, injection: &[MemoryUnit], seed: u64) -> Result<RunComponents> {
        let gate = RequestGate::new(self.agent.max_in_flight, self.agent.min_interval_ms);
        let store = MemoryStore::new(
            self.agent.embedder.build(Arc::clone(&gate)),
            MemoryStoreConfig {
                top_l: self.agent.top_l,
                persistence_path: None,
            },
        );
        if self.agent.backend != BackendName::Remote {
            for unit in injection {
                let mut unit = unit.clone();
                // Corpus embeddings may come from a different provider;
                // re-embed locally for a consistent space.
                unit.embedding = None;
                store
                    .insert(unit)
                    .map_err(|e| anyhow::anyhow!("injecting unit: {e}"))?;
            }
        }
        let store = Arc::new(store);

        let mut agent = match self.agent.backend {
            BackendName::Oracle => {
                let behavior = OracleBehavior {
                    rng_seed: seed,
                    ..self.agent.oracle.unwrap_or_default()
                };
                AgentBackend::oracle(behavior, Arc::clone(&store))
            }
            BackendName::BuiltinLlm => AgentBackend::builtin_llm(
                self.agent.endpoint.clone().expect("validated"),
                Arc::clone(&store),
                Arc::clone(&gate),
            ),
            BackendName::Remote => AgentBackend::remote(
                self.agent.endpoint.clone().expect("validated"),
                Arc::clone(&gate),
            ),
        };
        if let Some(prompt) = &self.agent.system_prompt {
            agent = agent.with_system_prompt(prompt.clone());
        }
        if self.agent.defense {
            agent.enable_defense();
        }

        let generator: Box<dyn ProbeSource> = match self.generator.kind {
            GeneratorKindName::Template => Box::new(TemplateGenerator),
            GeneratorKindName::Llm => {
                let endpoint = self
                    .generator
                    .endpoint
                    .clone()
                    .or_else(|| self.agent.endpoint.clone())
                    .expect("validated");
                Box::new(LlmGenerator::new(Arc::new(ChatClient::new(
                    endpoint,
                    RetryPolicy::default(),
                    Arc::clone(&gate),
                ))))
            }
        };

        let (response_judge, memory_judge): (Box<dyn ResponseJudge>, Box<dyn MemoryJudge>) =
            match self.judge.kind {
                JudgeKindName::RubricTable => {
                    (Box::new(RubricTableJudge), Box::new(RubricTableJudge))
                }
                JudgeKindName::NoisyRubric => (
                    Box::new(NoisyJudge::new(RubricTableJudge, self.judge.flip_rate, seed)),
                    Box::new(NoisyJudge::new(RubricTableJudge, self.judge.flip_rate, seed)),
                ),
                JudgeKindName::Llm => {
                    let endpoint = self
                        .judge
                        .endpoint
                        .clone()
                        .or_else(|| self.agent.endpoint.clone())
                        .expect("validated");
                    let client = Arc::new(ChatClient::new(
                        endpoint,
                        RetryPolicy::default(),
                        Arc::clone(&gate),
                    ));
                    (
                        Box::new(LlmJudge::new(Arc::clone(&client))),
                        Box::new(LlmJudge::new(client)),
                    )
                }
            };

        let paraphraser = match self.generator.kind {
            GeneratorKindName::Template => Some(Paraphraser::Table),
            GeneratorKindName::Llm => {
                let endpoint = self
                    .generator
                    .endpoint
                    .clone()
                    .or_else(|| self.agent.endpoint.clone())
                    .expect("validated");
                Some(Paraphraser::llm(Arc::new(ChatClient::new(
                    endpoint,
                    RetryPolicy::default(),
                    gate,
                ))))
            }
        };

        Ok(RunComponents {
            agent,
            generator,
            response_judge,
            memory_judge,
            paraphraser,
        })
    }
}
