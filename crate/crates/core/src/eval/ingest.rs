//! Corpus ingestion: read extracted memory-unit JSONL, assign a
//! group-atomic member/non-member split from the seed, cap evaluation
//! candidates per user, and emit the injection set plus manifest.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use super::EvalError;
use crate::memstore::fnv1a;
use crate::model::{CandidateStatement, MemoryUnit, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Perltqa,
    Locomo,
    Msc,
    Synthetic,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DatasetKind::Perltqa => "perltqa",
            DatasetKind::Locomo => "locomo",
            DatasetKind::Msc => "msc",
            DatasetKind::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerUserCap {
    pub members: usize,
    pub nonmembers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dataset: DatasetKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_user_cap: Option<PerUserCap>,
    /// Corpus field that groups units atomically (event/session id).
    #[serde(default = "default_group_field")]
    pub group_field: String,
}

fn default_seed() -> u64 {
    42
}

fn default_ratio() -> f64 {
    0.5
}

fn default_group_field() -> String {
    "group_id".into()
}

impl SplitSpec {
    pub fn new(dataset: DatasetKind) -> Self {
        Self {
            dataset,
            seed: default_seed(),
            split_ratio: default_ratio(),
            per_user_cap: None,
            group_field: default_group_field(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserCounts {
    pub units: usize,
    pub members: usize,
    pub nonmembers: usize,
    pub candidate_members: usize,
    pub candidate_nonmembers: usize,
}

/// Split bookkeeping written alongside the split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset: DatasetKind,
    pub seed: u64,
    pub split_ratio: f64,
    pub users: usize,
    pub units: usize,
    pub members: usize,
    pub nonmembers: usize,
    pub candidate_members: usize,
    pub candidate_nonmembers: usize,
    pub per_user: BTreeMap<String, UserCounts>,
}

pub struct IngestOutput {
    /// Every member unit, uncapped: the agent store is always built from
    /// all of them.
    pub injection: Vec<MemoryUnit>,
    /// Capped, labeled evaluation candidates.
    pub candidates: Vec<CandidateStatement>,
    pub manifest: SplitManifest,
}

#[derive(Deserialize)]
struct RawRow {
    id: Option<String>,
    user_id: Option<String>,
    content: Option<String>,
    #[serde(default)]
    embedding: Option<Vec<f32>>,
    #[serde(flatten)]
    rest: serde_json::Map<String, serde_json::Value>,
}

/// Deterministic group assignment: member iff the seeded hash fraction of
/// the group key falls below the split ratio. Order-independent, so the
/// same (corpus, seed, ratio) always reproduces the same split.
pub fn group_split(seed: u64, group_key: &str, ratio: f64) -> Split {
    let h = fnv1a(format!("{seed}|{group_key}").as_bytes());
    let frac = (h >> 11) as f64 / (1u64 << 53) as f64;
    if frac < ratio {
        Split::Member
    } else {
        Split::NonMember
    }
}

pub fn ingest(path: &Path, spec: &SplitSpec) -> Result<IngestOutput, EvalError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let file_name = path.display().to_string();
    let schema_err = |line: usize, message: String| EvalError::Schema {
        file: file_name.clone(),
        line,
        message,
    };

    let mut units: Vec<MemoryUnit> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let row: RawRow = serde_json::from_str(&line)
            .map_err(|e| schema_err(lineno, e.to_string()))?;
        let id = row
            .id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| schema_err(lineno, "unit missing id".into()))?;
        let user_id = row
            .user_id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| schema_err(lineno, "unit missing user_id".into()))?;
        let content = row
            .content
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| schema_err(lineno, "unit missing content".into()))?;
        let group = row
            .rest
            .get(&spec.group_field)
            .and_then(|v| v.as_str())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                schema_err(lineno, format!("unit missing {}", spec.group_field))
            })?
            .to_string();
        if !seen_ids.insert(id.clone()) {
            return Err(schema_err(lineno, format!("duplicate unit id {id}")));
        }
        let split = group_split(spec.seed, &group, spec.split_ratio);
        units.push(MemoryUnit {
            id,
            user_id,
            content,
            split,
            group_id: group,
            embedding: row.embedding,
        });
    }

    let mut per_user: BTreeMap<String, UserCounts> = BTreeMap::new();
    for u in &units {
        let entry = per_user.entry(u.user_id.clone()).or_default();
        entry.units += 1;
        match u.split {
            Split::Member => entry.members += 1,
            Split::NonMember => entry.nonmembers += 1,
        }
    }

    // Injection: every member unit, regardless of candidate caps.
    let injection: Vec<MemoryUnit> = units
        .iter()
        .filter(|u| u.split == Split::Member)
        .cloned()
        .collect();

    // Candidates: per-user capped, in corpus order.
    let mut candidates = Vec::new();
    let mut taken: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for u in &units {
        let (m_taken, n_taken) = taken.entry(u.user_id.clone()).or_insert((0, 0));
        let allowed = match (u.split, spec.per_user_cap) {
            (_, None) => true,
            (Split::Member, Some(cap)) => *m_taken < cap.members,
            (Split::NonMember, Some(cap)) => *n_taken < cap.nonmembers,
        };
        if !allowed {
            continue;
        }
        match u.split {
            Split::Member => *m_taken += 1,
            Split::NonMember => *n_taken += 1,
        }
        let counts = per_user.get_mut(&u.user_id).expect("user counted");
        match u.split {
            Split::Member => counts.candidate_members += 1,
            Split::NonMember => counts.candidate_nonmembers += 1,
        }
        candidates.push(CandidateStatement {
            id: u.id.clone(),
            user_id: u.user_id.clone(),
            content: u.content.clone(),
            truth: u.split,
            paraphrased_from: None,
        });
    }
    if let Some(cap) = spec.per_user_cap {
        for (user, counts) in &per_user {
            if counts.members < cap.members || counts.nonmembers < cap.nonmembers {
                log::info!(
                    "user {user} has fewer units than the cap ({}/{} members, {}/{} nonmembers); using all",
                    counts.members, cap.members, counts.nonmembers, cap.nonmembers
                );
            }
        }
    }

    let manifest = SplitManifest {
        dataset: spec.dataset,
        seed: spec.seed,
        split_ratio: spec.split_ratio,
        users: per_user.len(),
        units: units.len(),
        members: injection.len(),
        nonmembers: units.len() - injection.len(),
        candidate_members: candidates
            .iter()
            .filter(|c| c.truth == Split::Member)
            .count(),
        candidate_nonmembers: candidates
            .iter()
            .filter(|c| c.truth == Split::NonMember)
            .count(),
        per_user,
    };

    Ok(IngestOutput {
        injection,
        candidates,
        manifest,
    })
}
