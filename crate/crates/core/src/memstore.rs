//! User-scoped vector memory store: embed, persist, and retrieve memory
//! units by cosine similarity.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{EmbeddingsClient, LlmEndpoint, LlmError, RequestGate, RetryPolicy};
use crate::model::{l2_norm, MemoryUnit, ModelError, Split};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("memory content must be non-empty")]
    EmptyContent,
    #[error("embedding provider failed: {0} (retriable)")]
    Embedding(String),
    #[error("duplicate memory unit id {0}")]
    DuplicateId(String),
    #[error("snapshot i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Text-to-vector provider. All outputs are L2-normalized.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError>;
    fn dim(&self) -> usize;
}

/// Deterministic character 3-gram feature-hashing embedder.
///
/// Same input text always yields the bitwise-identical vector, which is
/// what makes the oracle pipeline reproducible without a model server.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dim: usize,
}

impl HashedNgramEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashedNgramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError> {
        if text.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let mut v = vec![0.0f32; self.dim];
        // Boundary markers so inputs shorter than the gram width still
        // produce at least one feature.
        let padded: Vec<char> = std::iter::once('\u{2}')
            .chain(text.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut buf = String::new();
        for gram in padded.windows(3) {
            buf.clear();
            buf.extend(gram);
            let h = fnv1a(buf.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        if padded.len() < 3 {
            let h = fnv1a(buf.as_bytes());
            v[(h % self.dim as u64) as usize] += 1.0;
        }
        let norm = l2_norm(&v);
        if norm == 0.0 {
            // Signed hashing can cancel in principle; fall back to a
            // single whole-string feature.
            let h = fnv1a(text.as_bytes());
            v[(h % self.dim as u64) as usize] = 1.0;
            return Ok(v);
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Serializable embedding-provider choice: the deterministic hashed
/// n-gram embedder, or a remote embeddings endpoint for real runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    HashedNgram {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Remote { endpoint: LlmEndpoint, dim: usize },
}

fn default_dim() -> usize {
    HashedNgramEmbedder::DEFAULT_DIM
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::HashedNgram { dim: default_dim() }
    }
}

impl EmbedderConfig {
    pub fn build(&self, gate: Arc<RequestGate>) -> Arc<dyn Embedder> {
        match self {
            EmbedderConfig::HashedNgram { dim } => Arc::new(HashedNgramEmbedder::new(*dim)),
            EmbedderConfig::Remote { endpoint, dim } => {
                Arc::new(RemoteEmbedder::new(endpoint.clone(), *dim, gate))
            }
        }
    }
}

/// Embedder backed by an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    client: EmbeddingsClient,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: LlmEndpoint, dim: usize, gate: Arc<RequestGate>) -> Self {
        Self {
            client: EmbeddingsClient::new(endpoint, RetryPolicy::default(), gate),
            dim,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, StoreError> {
        if text.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let mut v = self
            .client
            .embed(text)
            .map_err(|e: LlmError| StoreError::Embedding(e.to_string()))?;
        let norm = l2_norm(&v);
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryStoreConfig {
    /// Retrieval depth: how many units a query surfaces.
    pub top_l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persistence_path: Option<PathBuf>,
}

impl Default for MemoryStoreConfig {
    fn default() -> Self {
        Self {
            top_l: 5,
            persistence_path: None,
        }
    }
}

/// A retrieved unit with its similarity to the query.
#[derive(Debug, Clone)]
pub struct ScoredUnit {
    pub unit: MemoryUnit,
    pub similarity: f64,
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na = l2_norm(a) as f64;
    let nb = l2_norm(b) as f64;
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// In-memory user-scoped store. Reads run concurrently; writes take the
/// store-wide write lock, so retrieval sees either the pre- or post-write
/// store, never a partial unit.
pub struct MemoryStore {
    units: RwLock<HashMap<String, Vec<MemoryUnit>>>,
    ids: RwLock<HashSet<String>>,
    embedder: Arc<dyn Embedder>,
    config: MemoryStoreConfig,
    next_id: AtomicU64,
}

impl MemoryStore {
    pub fn new(embedder: Arc<dyn Embedder>, config: MemoryStoreConfig) -> Self {
        Self {
            units: RwLock::new(HashMap::new()),
            ids: RwLock::new(HashSet::new()),
            embedder,
            config,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn config(&self) -> &MemoryStoreConfig {
        &self.config
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// Fresh store with the same embedder and config but no units.
    pub fn empty_clone(&self) -> Self {
        Self::new(Arc::clone(&self.embedder), self.config.clone())
    }

    /// Embed and append a new unit to the user's store.
    pub fn write(&self, user_id: &str, content: &str) -> Result<MemoryUnit, StoreError> {
        if content.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let embedding = self.embedder.embed(content)?;
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("mu-{n:06}");
        let unit = MemoryUnit {
            id: id.clone(),
            user_id: user_id.to_string(),
            content: content.to_string(),
            split: Split::Member,
            group_id: id,
            embedding: Some(embedding),
        };
        self.insert(unit.clone())?;
        Ok(unit)
    }

    /// Insert an existing unit, embedding it first if necessary.
    pub fn insert(&self, mut unit: MemoryUnit) -> Result<(), StoreError> {
        if unit.content.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        if unit.embedding.is_none() {
            unit.embedding = Some(self.embedder.embed(&unit.content)?);
        }
        unit.validate()?;
        {
            let mut ids = self.ids.write();
            if !ids.insert(unit.id.clone()) {
                return Err(StoreError::DuplicateId(unit.id));
            }
        }
        self.units
            .write()
            .entry(unit.user_id.clone())
            .or_default()
            .push(unit);
        Ok(())
    }

    /// Top-`top_l` units for the user by nonincreasing cosine similarity.
    /// Ties break toward older (earlier-inserted) units. Unknown users get
    /// an empty list.
    pub fn retrieve(
        &self,
        user_id: &str,
        query: &str,
        top_l: usize,
    ) -> Result<Vec<ScoredUnit>, StoreError> {
        let qv = self.embedder.embed(query)?;
        let units = self.units.read();
        let Some(user_units) = units.get(user_id) else {
            return Ok(Vec::new());
        };
        let mut scored: Vec<ScoredUnit> = user_units
            .iter()
            .map(|u| ScoredUnit {
                similarity: cosine(u.embedding.as_deref().unwrap_or(&[]), &qv),
                unit: u.clone(),
            })
            .collect();
        // Stable sort keeps insertion order among equal similarities.
        scored.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).unwrap());
        scored.truncate(top_l);
        Ok(scored)
    }

    pub fn retrieve_default(&self, user_id: &str, query: &str) -> Result<Vec<ScoredUnit>, StoreError> {
        self.retrieve(user_id, query, self.config.top_l)
    }

    pub fn user_len(&self, user_id: &str) -> usize {
        self.units.read().get(user_id).map_or(0, |v| v.len())
    }

    pub fn len(&self) -> usize {
        self.units.read().values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All units for a user, in insertion order.
    pub fn user_units(&self, user_id: &str) -> Vec<MemoryUnit> {
        self.units.read().get(user_id).cloned().unwrap_or_default()
    }

    /// Snapshot to the configured persistence path, if one is set.
    pub fn persist(&self) -> Result<(), StoreError> {
        if let Some(path) = self.config.persistence_path.clone() {
            self.save_snapshot(&path)?;
        }
        Ok(())
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), StoreError> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let units = self.units.read();
        let mut user_ids: Vec<&String> = units.keys().collect();
        user_ids.sort();
        for uid in user_ids {
            for unit in &units[uid] {
                serde_json::to_writer(&mut w, unit).map_err(std::io::Error::other)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_snapshot(
        path: &Path,
        embedder: Arc<dyn Embedder>,
        config: MemoryStoreConfig,
    ) -> Result<Self, StoreError> {
        let store = Self::new(embedder, config);
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let unit: MemoryUnit = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match store.insert(unit) {
                Ok(()) => {}
                Err(StoreError::DuplicateId(id)) => {
                    return Err(StoreError::Parse {
                        line: i + 1,
                        message: format!("duplicate memory unit id {id}"),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store() -> MemoryStore {
        MemoryStore::new(
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        )
    }

    #[test]
    fn write_produces_a_normalized_default_dim_embedding() {
        let s = store();
        let unit = s
            .write("u1", "Alice bought a blue backpack at Target.")
            .unwrap();
        let v = unit.embedding.unwrap();
        assert_eq!(v.len(), HashedNgramEmbedder::DEFAULT_DIM);
        assert!((l2_norm(&v) - 1.0).abs() < 1e-6);
        assert_eq!(s.user_len("u1"), 1);
    }

    #[test]
    fn identical_writes_get_distinct_ids_and_identical_embeddings() {
        let s = store();
        let a = s.write("u1", "same text").unwrap();
        let b = s.write("u1", "same text").unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(a.embedding, b.embedding);
    }

    #[test]
    fn self_query_ranks_first() {
        let s = store();
        s.write("u1", "Alice bought a blue backpack at Target.").unwrap();
        s.write("u1", "Bob adopted a small gray kitten in May.").unwrap();
        let hits = s
            .retrieve("u1", "Alice bought a blue backpack at Target.", 2)
            .unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].unit.content, "Alice bought a blue backpack at Target.");
        assert!((hits[0].similarity - 1.0).abs() < 1e-6);
        assert!(hits[0].similarity >= hits[1].similarity);
    }

    #[test]
    fn empty_store_and_unknown_user_retrieve_nothing() {
        let s = store();
        assert!(s.retrieve("nobody", "anything", 5).unwrap().is_empty());
    }

    #[test]
    fn top_one_is_the_cosine_argmax() {
        let s = store();
        let contents: Vec<String> = (0..10)
            .map(|i| format!("memory number {i} about topic {}", (b'a' + i as u8) as char))
            .collect();
        for c in &contents {
            s.write("u1", c).unwrap();
        }
        let query = "memory number 7 about topic h";
        let hits = s.retrieve("u1", query, 1).unwrap();
        assert_eq!(hits.len(), 1);
        // Exhaustive comparison with a direct full scan.
        let emb = HashedNgramEmbedder::default();
        let qv = emb.embed(query).unwrap();
        let best = contents
            .iter()
            .map(|c| (c, cosine(&emb.embed(c).unwrap(), &qv)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(&hits[0].unit.content, best.0);
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.jsonl");
        let s = store();
        s.write("u1", "first memory").unwrap();
        s.write("u1", "second memory").unwrap();
        s.write("u2", "third memory").unwrap();
        s.save_snapshot(&path).unwrap();
        let loaded = MemoryStore::load_snapshot(
            &path,
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        )
        .unwrap();
        for uid in ["u1", "u2"] {
            let a = s.user_units(uid);
            let b = loaded.user_units(uid);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_snapshot_loads_an_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let loaded = MemoryStore::load_snapshot(
            &path,
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        )
        .unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn duplicate_ids_in_snapshot_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        let line = r#"{"id":"m1","user_id":"u1","content":"abc","split":"member","group_id":"g1"}"#;
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        let err = match MemoryStore::load_snapshot(
            &path,
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        ) {
            Err(e) => e,
            Ok(_) => panic!("expected a duplicate-id error"),
        };
        match err {
            StoreError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn malformed_snapshot_reports_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"m1","user_id":"u1","content":"abc","split":"member","group_id":"g1"}
not json at all
"#,
        )
        .unwrap();
        let err = match MemoryStore::load_snapshot(
            &path,
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        ) {
            Err(e) => e,
            Ok(_) => panic!("expected a parse error"),
        };
        match err {
            StoreError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_write_is_rejected() {
        let s = store();
        assert!(matches!(s.write("u1", "   "), Err(StoreError::EmptyContent)));
    }

    #[test]
    fn persist_writes_to_the_configured_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("persisted.jsonl");
        let s = MemoryStore::new(
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig {
                top_l: 5,
                persistence_path: Some(path.clone()),
            },
        );
        s.write("u1", "a persisted memory").unwrap();
        s.persist().unwrap();
        let loaded = MemoryStore::load_snapshot(
            &path,
            Arc::new(HashedNgramEmbedder::default()),
            MemoryStoreConfig::default(),
        )
        .unwrap();
        assert_eq!(loaded.user_units("u1"), s.user_units("u1"));
    }

    proptest! {
        #[test]
        fn embeddings_are_unit_norm(text in "\\PC{1,120}") {
            prop_assume!(!text.is_empty());
            let emb = HashedNgramEmbedder::default();
            let v = emb.embed(&text).unwrap();
            prop_assert!((l2_norm(&v) - 1.0).abs() < 1e-6);
        }

        #[test]
        fn retrieval_matches_the_brute_force_oracle(
            contents in prop::collection::vec("[a-z ]{3,40}", 1..40),
            query in "[a-z ]{3,40}",
            top_l in 1usize..8,
        ) {
            prop_assume!(contents.iter().all(|c| !c.trim().is_empty()));
            prop_assume!(!query.trim().is_empty());
            let s = store();
            for c in &contents {
                s.write("u1", c).unwrap();
            }
            let hits = s.retrieve("u1", &query, top_l).unwrap();
            prop_assert_eq!(hits.len(), top_l.min(contents.len()));
            // Similarity sequence is nonincreasing.
            for w in hits.windows(2) {
                prop_assert!(w[0].similarity >= w[1].similarity);
            }
            // Full-scan oracle: stable sort over all units.
            let emb = HashedNgramEmbedder::default();
            let qv = emb.embed(&query).unwrap();
            let mut oracle: Vec<(usize, f64)> = contents
                .iter()
                .enumerate()
                .map(|(i, c)| (i, cosine(&emb.embed(c).unwrap(), &qv)))
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            for (hit, (idx, sim)) in hits.iter().zip(oracle.iter()) {
                prop_assert_eq!(&hit.unit.content, &contents[*idx]);
                prop_assert!((hit.similarity - sim).abs() < 1e-12);
            }
        }
    }
}
