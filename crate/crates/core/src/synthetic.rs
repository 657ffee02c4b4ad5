//! Deterministic synthetic corpora: the three-class separation corpus the
//! oracle end-to-end tests run on, and schema-shaped unit corpora for
//! ingestion tests and demos. Everything is pure index arithmetic with
//! no RNG, so two builds of the same corpus are byte-identical.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::model::{CandidateStatement, MemoryUnit, Split};

const PERSONS: [&str; 60] = [
    "Alice", "Bob", "Carol", "David", "Emma", "Frank", "Grace", "Henry", "Irene", "Jack", "Karen",
    "Liam", "Mona", "Nathan", "Olivia", "Peter", "Quinn", "Rosa", "Samuel", "Tina", "Umar", "Vera",
    "Walter", "Xenia", "Yusuf", "Zara", "Aaron", "Bella", "Caleb", "Daisy", "Edgar", "Fiona",
    "Gavin", "Hazel", "Ivan", "Julia", "Kevin", "Lena", "Marcus", "Nora", "Oscar", "Paula",
    "Ralph", "Sophie", "Tobias", "Ursula", "Victor", "Wendy", "Ximena", "Yvonne", "Zachary",
    "Amara", "Boris", "Celine", "Dmitri", "Elena", "Felix", "Greta", "Hugo", "Ingrid",
];

// Disjoint vocabulary pools per candidate class keep the lexical overlap
// structure exact: member probes fully overlap their own stored unit,
// inferable probes partially overlap their two stored siblings, and
// plain probes overlap nothing.
const MEMBER_VERBS: [&str; 5] = ["bought", "adopted", "visited", "ordered", "painted"];
const PLAIN_VERBS: [&str; 5] = ["hosted", "joined", "cleaned", "baked", "attended"];
const MEMBER_ADJS: [&str; 5] = ["blue", "gray", "silver", "wooden", "leather"];
const INF_ADJS: [&str; 5] = ["red", "green", "copper", "velvet", "marble"];
const PLAIN_ADJS: [&str; 4] = ["plaid", "ceramic", "woolen", "vintage"];
const MEMBER_NOUNS: [&str; 5] = ["backpack", "kitten", "teapot", "lamp", "jacket"];
const INF_NOUNS: [&str; 5] = ["scooter", "guitar", "kettle", "telescope", "canoe"];
const PLAIN_NOUNS: [&str; 4] = ["rug", "hammock", "bookshelf", "bicycle"];
const MEMBER_PLACES: [&str; 5] = ["Target", "Ikea", "Petco", "Aldi", "Lowes"];
const INF_PLACES: [&str; 5] = ["Walmart", "Costco", "Sephora", "Staples", "Rei"];
const PLAIN_PLACES: [&str; 4] = ["Safeway", "Walgreens", "Michaels", "Kohls"];
const MEMBER_MONTHS: [&str; 5] = ["January", "February", "March", "April", "May"];
const INF_MONTHS: [&str; 3] = ["June", "July", "August"];
const PLAIN_MONTHS: [&str; 4] = ["September", "October", "November", "December"];

/// Ground-truth class of a separation-corpus candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateClass {
    Member,
    PlainNonMember,
    /// Not stored verbatim, but derivable from two stored siblings.
    InferableNonMember,
}

/// The constructed corpus behind the oracle separation tests: 20 members,
/// 20 plain non-members, 20 inferable non-members over 4 users.
pub struct SeparationCorpus {
    /// Units to inject into the agent store (members plus siblings).
    pub units: Vec<MemoryUnit>,
    pub candidates: Vec<CandidateStatement>,
    pub class_of: BTreeMap<String, CandidateClass>,
}

fn day_for(g: usize) -> usize {
    2 + (g * 3) % 26
}

fn unit(id: &str, user: &str, content: String) -> MemoryUnit {
    MemoryUnit {
        id: id.to_string(),
        user_id: user.to_string(),
        content,
        split: Split::Member,
        group_id: id.to_string(),
        embedding: None,
    }
}

fn candidate(id: &str, user: &str, content: String, truth: Split) -> CandidateStatement {
    CandidateStatement {
        id: id.to_string(),
        user_id: user.to_string(),
        content,
        truth,
        paraphrased_from: None,
    }
}

pub fn separation_corpus() -> SeparationCorpus {
    let mut units = Vec::new();
    let mut candidates = Vec::new();
    let mut class_of = BTreeMap::new();

    // Members: stored verbatim.
    for g in 0..20 {
        let user = format!("u{}", g % 4);
        let content = format!(
            "{} {} a {} {} at {} on {} {}.",
            PERSONS[g],
            MEMBER_VERBS[g % 5],
            MEMBER_ADJS[g % 5],
            MEMBER_NOUNS[(g / 5) % 5],
            MEMBER_PLACES[g % 5],
            MEMBER_MONTHS[g % 5],
            day_for(g),
        );
        let id = format!("m-{g:03}");
        units.push(unit(&id, &user, content.clone()));
        candidates.push(candidate(&id, &user, content, Split::Member));
        class_of.insert(id, CandidateClass::Member);
    }

    // Inferable non-members: the statement itself is absent, but two
    // stored siblings jointly cover all of its facts.
    for i in 0..20 {
        let g = 20 + i;
        let user = format!("u{}", i % 4);
        let person = PERSONS[g];
        // `w` is the candidate's slot within its user; pools are indexed
        // so no two inferable candidates of one user share a verb, item,
        // or place, keeping their sibling pairs lexically isolated.
        let w = i / 4;
        let verb = MEMBER_VERBS[i % 5];
        let adj = INF_ADJS[i % 5];
        let noun = INF_NOUNS[w % 5];
        let place = INF_PLACES[w % 5];
        let month = INF_MONTHS[i % 3];
        let day = day_for(g);
        let content =
            format!("{person} {verb} a {adj} {noun} at {place} on {month} {day}.");
        let id = format!("inf-{i:03}");
        units.push(unit(
            &format!("sib-{i:03}-a"),
            &user,
            format!("{person} was shopping at {place} on {month} {day} with a friend."),
        ));
        units.push(unit(
            &format!("sib-{i:03}-b"),
            &user,
            format!("{person} paid for a {adj} {noun} on {month} {day} at the checkout."),
        ));
        candidates.push(candidate(&id, &user, content, Split::NonMember));
        class_of.insert(id, CandidateClass::InferableNonMember);
    }

    // Plain non-members: nothing related is stored.
    for j in 0..20 {
        let g = 40 + j;
        let user = format!("u{}", j % 4);
        let content = format!(
            "{} {} a {} {} at {} on {} {}.",
            PERSONS[g],
            PLAIN_VERBS[j % 5],
            PLAIN_ADJS[j % 4],
            PLAIN_NOUNS[(j / 4) % 4],
            PLAIN_PLACES[j % 4],
            PLAIN_MONTHS[j % 4],
            day_for(g),
        );
        let id = format!("p-{j:03}");
        candidates.push(candidate(&id, &user, content, Split::NonMember));
        class_of.insert(id, CandidateClass::PlainNonMember);
    }

    SeparationCorpus {
        units,
        candidates,
        class_of,
    }
}

/// One raw corpus line as ingested from disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRow {
    pub id: String,
    pub user_id: String,
    pub content: String,
    pub group_id: String,
}

/// Schema-shaped synthetic corpus: `users` users, each with
/// `groups_per_user` event groups of `units_per_group` related units.
pub fn schema_corpus(users: usize, groups_per_user: usize, units_per_group: usize) -> Vec<CorpusRow> {
    const VERBS: [&str; 10] = [
        "bought", "adopted", "visited", "ordered", "painted", "hosted", "joined", "cleaned",
        "baked", "attended",
    ];
    const ADJS: [&str; 9] = [
        "blue", "red", "gray", "green", "silver", "wooden", "plaid", "ceramic", "velvet",
    ];
    const NOUNS: [&str; 9] = [
        "backpack", "scooter", "kitten", "teapot", "lamp", "guitar", "rug", "kettle", "jacket",
    ];
    const PLACES: [&str; 9] = [
        "Target", "Walmart", "Ikea", "Costco", "Petco", "Aldi", "Sephora", "Lowes", "Safeway",
    ];
    const MONTHS_ALL: [&str; 12] = [
        "January", "February", "March", "April", "May", "June", "July", "August", "September",
        "October", "November", "December",
    ];
    let mut rows = Vec::new();
    let mut serial = 0usize;
    for u in 0..users {
        let user_id = format!("user-{u:04}");
        for g in 0..groups_per_user {
            let group_id = format!("{user_id}-g{g:03}");
            for k in 0..units_per_group {
                let person = PERSONS[(u * 7 + g * 3 + k) % PERSONS.len()];
                let content = format!(
                    "{person} {} a {} {} at {} on {} {}.",
                    VERBS[(serial * 5 + 1) % VERBS.len()],
                    ADJS[(serial * 3 + 2) % ADJS.len()],
                    NOUNS[(serial * 7 + 3) % NOUNS.len()],
                    PLACES[(serial * 11 + 4) % PLACES.len()],
                    MONTHS_ALL[(serial * 13 + 5) % MONTHS_ALL.len()],
                    2 + (serial * 3) % 26,
                );
                rows.push(CorpusRow {
                    id: format!("unit-{serial:06}"),
                    user_id: user_id.clone(),
                    content,
                    group_id: group_id.clone(),
                });
                serial += 1;
            }
        }
    }
    rows
}

pub fn write_corpus_jsonl(path: &Path, rows: &[CorpusRow]) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separation_corpus_has_the_documented_shape() {
        let corpus = separation_corpus();
        assert_eq!(corpus.candidates.len(), 60);
        assert_eq!(corpus.units.len(), 20 + 40);
        let members = corpus
            .class_of
            .values()
            .filter(|c| **c == CandidateClass::Member)
            .count();
        let plain = corpus
            .class_of
            .values()
            .filter(|c| **c == CandidateClass::PlainNonMember)
            .count();
        let inferable = corpus
            .class_of
            .values()
            .filter(|c| **c == CandidateClass::InferableNonMember)
            .count();
        assert_eq!((members, plain, inferable), (20, 20, 20));
        // Members are stored verbatim; other candidates are not.
        let stored: Vec<&str> = corpus.units.iter().map(|u| u.content.as_str()).collect();
        for c in &corpus.candidates {
            let is_stored = stored.contains(&c.content.as_str());
            match corpus.class_of[&c.id] {
                CandidateClass::Member => assert!(is_stored),
                _ => assert!(!is_stored),
            }
        }
    }

    #[test]
    fn corpora_are_deterministic() {
        let a = separation_corpus();
        let b = separation_corpus();
        assert_eq!(a.candidates, b.candidates);
        assert_eq!(a.units, b.units);
        let ra = schema_corpus(3, 2, 2);
        let rb = schema_corpus(3, 2, 2);
        assert_eq!(
            serde_json::to_string(&ra).unwrap(),
            serde_json::to_string(&rb).unwrap()
        );
    }

    #[test]
    fn schema_corpus_counts_multiply_out() {
        let rows = schema_corpus(4, 3, 2);
        assert_eq!(rows.len(), 24);
        let users: std::collections::BTreeSet<&str> =
            rows.iter().map(|r| r.user_id.as_str()).collect();
        assert_eq!(users.len(), 4);
    }
}
