//! Lexical helpers shared by the oracle agent, the rubric-table judges,
//! and the template probe generator: tokenization, a small lemma table,
//! content-word overlap, and question-shape detection.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use crate::prompts::RATIONALE_MARKERS;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "at", "in", "on", "of", "for", "to", "from", "with", "and", "or",
    "as", "is", "are", "was", "were", "be", "been", "am", "do", "does", "did", "who", "whom",
    "whose", "what", "where", "when", "which", "how", "why", "it", "its", "his", "her", "hers",
    "their", "theirs", "my", "your", "our", "this", "that", "these", "those", "i", "you", "he",
    "she", "they", "we", "them", "us", "me", "him", "about", "into", "over", "under", "after",
    "before", "during", "within", "without", "something", "anything", "someone", "anyone",
    "anywhere", "nothing", "kind", "sort", "type", "place", "store", "date", "person", "true",
    "statement", "consistent", "following", "remember", "remembered", "recall", "fact", "answer",
    "yes", "no", "not", "regarding", "happen", "happened", "happens", "know", "get", "tell",
    "tells", "told", "support", "supports", "sure", "prior", "information", "memory", "s",
    "stored", "context", "mention", "mentions", "mentioned", "involved", "exactly", "location",
    "day", "when", "recently", "detail", "completes", "note", "missing",
];

/// Irregular or synonym-collapsing lemma pairs. The table only needs to
/// cover the controlled vocabulary of the deterministic test corpus and
/// the word-substitution paraphraser.
const LEMMAS: &[(&str, &str)] = &[
    ("bought", "buy"),
    ("buys", "buy"),
    ("buying", "buy"),
    ("purchase", "buy"),
    ("purchased", "buy"),
    ("purchases", "buy"),
    ("purchasing", "buy"),
    ("visited", "visit"),
    ("visits", "visit"),
    ("toured", "visit"),
    ("tours", "visit"),
    ("tour", "visit"),
    ("adopted", "adopt"),
    ("adopts", "adopt"),
    ("borrowed", "borrow"),
    ("borrows", "borrow"),
    ("ordered", "order"),
    ("orders", "order"),
    ("cooked", "cook"),
    ("cooks", "cook"),
    ("prepared", "cook"),
    ("prepares", "cook"),
    ("painted", "paint"),
    ("paints", "paint"),
    ("repaired", "repair"),
    ("repairs", "repair"),
    ("fixed", "repair"),
    ("fixes", "repair"),
    ("planted", "plant"),
    ("plants", "plant"),
    ("watched", "watch"),
    ("watches", "watch"),
    ("rented", "rent"),
    ("rents", "rent"),
    ("leased", "rent"),
    ("leases", "rent"),
    ("sold", "sell"),
    ("sells", "sell"),
    ("attended", "attend"),
    ("attends", "attend"),
    ("joined", "join"),
    ("joins", "join"),
    ("hosted", "host"),
    ("hosts", "host"),
    ("booked", "book"),
    ("books", "book"),
    ("reserved", "book"),
    ("reserves", "book"),
    ("baked", "bake"),
    ("bakes", "bake"),
    ("cleaned", "clean"),
    ("cleans", "clean"),
    ("lost", "lose"),
    ("loses", "lose"),
    ("found", "find"),
    ("finds", "find"),
    ("went", "go"),
    ("goes", "go"),
    ("made", "make"),
    ("makes", "make"),
    ("taught", "teach"),
    ("teaches", "teach"),
    ("borrowing", "borrow"),
    ("collected", "collect"),
    ("collects", "collect"),
];

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.iter().copied().collect())
}

fn lemmas() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| LEMMAS.iter().copied().collect())
}

/// Map a lowercase word to its lemma: table lookup first, then a plural
/// `-s` strip for longer words.
pub fn lemma(word: &str) -> String {
    if let Some(l) = lemmas().get(word) {
        return (*l).to_string();
    }
    if word.len() >= 4 && word.ends_with('s') && !word.ends_with("ss") {
        let stem = &word[..word.len() - 1];
        if let Some(l) = lemmas().get(stem) {
            return (*l).to_string();
        }
        return stem.to_string();
    }
    word.to_string()
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lemmatized tokens with stopwords removed.
pub fn content_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|w| !stopwords().contains(w.as_str()))
        .map(|w| lemma(&w))
        .collect()
}

pub fn content_word_set(text: &str) -> BTreeSet<String> {
    content_words(text).into_iter().collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// Fraction of `query_words` found in `unit_words`.
pub fn overlap_fraction(query_words: &BTreeSet<String>, unit_words: &BTreeSet<String>) -> f64 {
    if query_words.is_empty() {
        return 0.0;
    }
    let hit = query_words.intersection(unit_words).count() as f64;
    hit / query_words.len() as f64
}

pub fn has_rationale_marker(question: &str) -> bool {
    let lower = question.to_lowercase();
    RATIONALE_MARKERS.iter().any(|m| lower.contains(m))
}

/// Drop the `?`-delimited segments that are rationale follow-ups. When the
/// whole question is a rationale-style question (the naive probe), the
/// original text is kept so its content words still count.
pub fn strip_rationale(question: &str) -> String {
    let kept: Vec<&str> = question
        .split_inclusive('?')
        .filter(|seg| {
            let lower = seg.to_lowercase();
            !RATIONALE_MARKERS.iter().any(|m| lower.contains(m))
        })
        .collect();
    let joined = kept.join("");
    if content_words(&joined).is_empty() {
        question.to_string()
    } else {
        joined
    }
}

pub fn is_yes_no_question(question: &str) -> bool {
    const AUX: &[&str] = &[
        "did", "do", "does", "is", "are", "was", "were", "has", "have", "had", "can", "could",
        "would", "will", "am",
    ];
    match tokenize(question).first() {
        Some(first) => AUX.contains(&first.as_str()),
        None => false,
    }
}

pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Substrings enclosed in double quotes, in order of appearance.
pub fn quoted_spans(text: &str) -> Vec<String> {
    text.split('"')
        .enumerate()
        .filter_map(|(i, seg)| {
            if i % 2 == 1 && !seg.trim().is_empty() {
                Some(seg.to_string())
            } else {
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_words_lemmatize_and_drop_stopwords() {
        let words = content_words("Where did Alice buy the backpack?");
        assert_eq!(words, vec!["alice", "buy", "backpack"]);
        let words = content_words("Alice bought a blue backpack at Target.");
        assert_eq!(words, vec!["alice", "buy", "blue", "backpack", "target"]);
    }

    #[test]
    fn purchase_and_buy_share_a_lemma() {
        assert_eq!(lemma("purchased"), "buy");
        assert_eq!(lemma("bought"), "buy");
        assert_eq!(lemma("purchase"), "buy");
    }

    #[test]
    fn rationale_stripping_keeps_the_recall_segment() {
        let q = "Where did Alice buy the backpack? What memory tells you this?";
        let stripped = strip_rationale(q);
        assert_eq!(stripped, "Where did Alice buy the backpack?");
        assert!(has_rationale_marker(q));
        assert!(!has_rationale_marker(&stripped));
    }

    #[test]
    fn naive_question_survives_stripping() {
        let q = "How do you know about Alice's purchase?";
        let stripped = strip_rationale(q);
        assert_eq!(content_words(&stripped), vec!["alice", "buy"]);
    }

    #[test]
    fn yes_no_detection() {
        assert!(is_yes_no_question("Did Alice buy a blue backpack?"));
        assert!(is_yes_no_question("Is it true that Alice went home?"));
        assert!(!is_yes_no_question("Where did Alice buy the backpack?"));
    }

    #[test]
    fn quoted_span_extraction() {
        let spans = quoted_spans(r#"I know this because my memory states: "Alice bought a blue backpack at Target.""#);
        assert_eq!(spans, vec!["Alice bought a blue backpack at Target.".to_string()]);
    }
}
