//! Probe generation: recall probes (with and without rationale
//! follow-ups), judgment probes, the naive probe, and candidate
//! paraphrasing. A deterministic template generator covers tests and
//! oracle runs; an LLM generator covers real runs.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::llm::{ChatClient, ChatMessage};
use crate::model::{AttackCandidateView, CandidateStatement, ProbeKind, RecallProbe};
use crate::prompts;
use crate::text;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("probe count must be at least 1")]
    InvalidK,
    #[error("generator returned malformed probes after retries: {raw}")]
    Malformed { raw: String },
    #[error("paraphraser returned the input verbatim after retries")]
    ParaphraseUnchanged,
    #[error("generator call failed: {0}")]
    Llm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Template,
    Llm,
}

/// The K probes planned for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub candidate_id: String,
    pub probes: Vec<RecallProbe>,
    pub generator: GeneratorKind,
    pub rationale_enabled: bool,
}

/// Common surface for the template and LLM generators.
pub trait ProbeSource: Send + Sync {
    fn recall_plan(
        &self,
        x: &AttackCandidateView,
        k: usize,
        rationale_enabled: bool,
    ) -> Result<ProbePlan, GenError>;

    fn judgment_plan(&self, x: &AttackCandidateView, k: usize) -> Result<ProbePlan, GenError>;

    fn naive_plan(&self, x: &AttackCandidateView) -> Result<ProbePlan, GenError>;
}

// ---------------------------------------------------------------------
// Slot extraction
// ---------------------------------------------------------------------

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Atomic slots pulled out of a candidate statement by the rule-based
/// extractor: capitalized runs for people, at/in phrases for locations,
/// article-led noun phrases for items, month-day pairs for dates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Slots {
    pub person: Option<String>,
    /// Original surface form of the main verb, e.g. "bought".
    pub verb: Option<String>,
    pub item: Option<String>,
    pub item_article: Option<String>,
    pub location: Option<String>,
    pub date: Option<String>,
}

impl Slots {
    fn verb_lemma(&self) -> Option<String> {
        self.verb.as_deref().map(|v| text::lemma(&v.to_lowercase()))
    }

    fn head_noun(&self) -> Option<String> {
        self.item
            .as_deref()
            .and_then(|i| i.split_whitespace().last())
            .map(str::to_string)
    }

    /// Topic label for the location slot: purchases happen at a "store".
    fn location_topic(&self) -> &'static str {
        match self.verb_lemma().as_deref() {
            Some("buy") | Some("order") => "store",
            _ => "location",
        }
    }
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

fn is_capitalized(token: &str) -> bool {
    token.chars().next().is_some_and(|c| c.is_uppercase())
}

pub fn extract_slots(content: &str) -> Slots {
    let raw: Vec<&str> = content.split_whitespace().collect();
    let words: Vec<String> = raw.iter().map(|t| strip_punct(t).to_string()).collect();
    let mut slots = Slots::default();
    let mut claimed = vec![false; words.len()];

    // Date: month name followed by a number.
    for i in 0..words.len() {
        if MONTHS.contains(&words[i].as_str()) {
            if let Some(day) = words.get(i + 1) {
                if day.chars().all(|c| c.is_ascii_digit()) && !day.is_empty() {
                    slots.date = Some(format!("{} {}", words[i], day));
                    claimed[i] = true;
                    claimed[i + 1] = true;
                    break;
                }
            }
        }
    }

    // Location: capitalized run right after "at" or "in".
    for i in 0..words.len() {
        let lower = words[i].to_lowercase();
        if (lower == "at" || lower == "in") && !claimed[i] {
            let mut j = i + 1;
            let mut parts = Vec::new();
            while j < words.len()
                && is_capitalized(&words[j])
                && !claimed[j]
                && !MONTHS.contains(&words[j].as_str())
            {
                parts.push(words[j].clone());
                claimed[j] = true;
                let run_ends = raw[j].ends_with([',', '.', ';', '!', '?']);
                j += 1;
                if run_ends {
                    break;
                }
            }
            if !parts.is_empty() {
                claimed[i] = true;
                slots.location = Some(parts.join(" "));
                break;
            }
        }
    }

    // Person: first unclaimed capitalized run that is not scaffolding.
    let mut person_end = None;
    for i in 0..words.len() {
        if claimed[i] || words[i].is_empty() {
            continue;
        }
        let lower = words[i].to_lowercase();
        if is_capitalized(&words[i])
            && !MONTHS.contains(&words[i].as_str())
            && !matches!(lower.as_str(), "a" | "an" | "the" | "at" | "in" | "on" | "recently")
        {
            let mut parts = vec![words[i].clone()];
            let mut j = i + 1;
            if !raw[i].ends_with([',', '.', ';', '!', '?']) {
                while j < words.len() && is_capitalized(&words[j]) && !claimed[j] {
                    parts.push(words[j].clone());
                    let run_ends = raw[j].ends_with([',', '.', ';', '!', '?']);
                    j += 1;
                    if run_ends {
                        break;
                    }
                }
            }
            slots.person = Some(parts.join(" "));
            person_end = Some(j);
            break;
        }
    }

    // Verb: the token right after the person run.
    if let Some(end) = person_end {
        if let Some(v) = words.get(end) {
            if !v.is_empty() && v.chars().all(|c| c.is_lowercase() || !c.is_alphabetic()) {
                slots.verb = Some(v.clone());
            }
        }
    }

    // Item: article-led noun phrase after the verb.
    let start = person_end.unwrap_or(0);
    for i in start..words.len() {
        let lower = words[i].to_lowercase();
        if matches!(lower.as_str(), "a" | "an" | "the") {
            let mut parts = Vec::new();
            let mut j = i + 1;
            while j < words.len() {
                let w = &words[j];
                let wl = w.to_lowercase();
                if w.is_empty()
                    || is_capitalized(w)
                    || matches!(wl.as_str(), "at" | "in" | "on" | "for" | "as" | "with" | "to")
                {
                    break;
                }
                parts.push(w.clone());
                // Stop at the token that ended the raw sentence segment.
                if raw[j].ends_with(['.', ',', ';', '!', '?']) {
                    break;
                }
                j += 1;
            }
            if !parts.is_empty() {
                slots.item = Some(parts.join(" "));
                slots.item_article = Some(lower);
                break;
            }
        }
    }

    slots
}

// ---------------------------------------------------------------------
// Template generator
// ---------------------------------------------------------------------

/// Deterministic rule-based probe generator. It mirrors the LLM
/// generator's contract on the controlled statement grammar used by the
/// oracle corpora: distinct atomic slots first, then paraphrase fills,
/// never placing a probe's own key value in its question.
#[derive(Debug, Default, Clone)]
pub struct TemplateGenerator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    Person,
    Item,
    Location,
    Date,
}

fn at_loc(slots: &Slots) -> String {
    slots
        .location
        .as_deref()
        .map(|l| format!(" at {l}"))
        .unwrap_or_default()
}

fn on_date(slots: &Slots) -> String {
    slots
        .date
        .as_deref()
        .map(|d| format!(" on {d}"))
        .unwrap_or_default()
}

fn item_with_article(slots: &Slots) -> String {
    match (&slots.item_article, &slots.item) {
        (Some(a), Some(i)) => format!("{a} {i}"),
        (None, Some(i)) => i.clone(),
        _ => String::new(),
    }
}

/// One recall question for a slot; `form` 0 is the primary phrasing and
/// higher forms are paraphrases.
fn recall_question(slots: &Slots, kind: SlotKind, form: usize) -> (String, String, String) {
    let person = slots.person.clone().unwrap_or_default();
    let verb = slots.verb.clone().unwrap_or_else(|| "mentioned".into());
    let lemma = slots.verb_lemma().unwrap_or_else(|| "mention".into());
    let head = slots.head_noun().unwrap_or_default();
    let item_a = item_with_article(slots);
    let loc = at_loc(slots);
    let date = on_date(slots);
    let the_head = if head.is_empty() {
        String::new()
    } else {
        format!(" the {head}")
    };
    let item_seg = if item_a.is_empty() {
        String::new()
    } else {
        format!(" {item_a}")
    };
    match kind {
        SlotKind::Person => {
            let topic = "person".to_string();
            let kv = person;
            let q = match form % 3 {
                0 => format!("Who {verb}{item_seg}{loc}{date}?"),
                1 => format!("Which person {verb}{item_seg}{loc}?"),
                _ => format!("Who was it that {verb}{item_seg}{date}?"),
            };
            (topic, kv, q)
        }
        SlotKind::Item => {
            let topic = "item".to_string();
            let kv = slots.item.clone().unwrap_or_default();
            let q = match form % 3 {
                0 => format!("What did {person} {lemma}{loc}{date}?"),
                1 => format!("What kind of {head} did {person} {lemma}{loc}?"),
                _ => format!("What exactly did {person} {lemma}{date}?"),
            };
            (topic, kv, q)
        }
        SlotKind::Location => {
            let topic = slots.location_topic().to_string();
            let kv = slots.location.clone().unwrap_or_default();
            let q = match form % 3 {
                0 => format!("Where did {person} {lemma}{the_head}?"),
                1 => format!("Which {topic} did {person} {lemma}{the_head} at?"),
                _ => format!("At what location did {person} {lemma}{the_head}?"),
            };
            (topic, kv, q)
        }
        SlotKind::Date => {
            let topic = "date".to_string();
            let kv = slots.date.clone().unwrap_or_default();
            let q = match form % 3 {
                0 => format!("On what date did {person} {lemma}{the_head}?"),
                1 => format!("When did {person} {lemma}{the_head}{loc}?"),
                _ => format!("On which day did {person} {lemma}{the_head}{loc}?"),
            };
            (topic, kv, q)
        }
    }
}

/// Fallback when no slot can be extracted: probe the longest content word
/// with the statement (minus that word) as context.
fn fallback_probe(content: &str) -> (String, String, String) {
    let words = text::tokenize(content);
    let kv = words
        .iter()
        .max_by_key(|w| w.len())
        .cloned()
        .unwrap_or_else(|| "detail".into());
    let masked: String = content
        .split_whitespace()
        .map(|w| {
            if strip_punct(w).eq_ignore_ascii_case(&kv) {
                "____"
            } else {
                w
            }
        })
        .collect::<Vec<_>>()
        .join(" ");
    (
        "detail".to_string(),
        kv,
        format!("What detail completes this remembered note: \"{masked}\"?"),
    )
}

impl TemplateGenerator {
    fn slot_order(slots: &Slots) -> Vec<SlotKind> {
        let mut order = Vec::new();
        if slots.person.is_some() {
            order.push(SlotKind::Person);
        }
        if slots.item.is_some() {
            order.push(SlotKind::Item);
        }
        if slots.location.is_some() {
            order.push(SlotKind::Location);
        }
        if slots.date.is_some() {
            order.push(SlotKind::Date);
        }
        order
    }
}

impl ProbeSource for TemplateGenerator {
    fn recall_plan(
        &self,
        x: &AttackCandidateView,
        k: usize,
        rationale_enabled: bool,
    ) -> Result<ProbePlan, GenError> {
        if k == 0 {
            return Err(GenError::InvalidK);
        }
        let slots = extract_slots(&x.content);
        let order = Self::slot_order(&slots);
        let mut drafts: Vec<(String, String, String)> = Vec::with_capacity(k);
        if order.is_empty() {
            for _ in 0..k {
                drafts.push(fallback_probe(&x.content));
            }
        } else {
            // Distinct atomic slots first...
            for kind in order.iter().take(k) {
                drafts.push(recall_question(&slots, *kind, 0));
            }
            // ...then paraphrase fills, cycling the slots in reverse.
            let mut form = 1;
            let mut cursor = 0;
            while drafts.len() < k {
                let kind = order[order.len() - 1 - (cursor % order.len())];
                drafts.push(recall_question(&slots, kind, form));
                cursor += 1;
                if cursor % order.len() == 0 {
                    form += 1;
                }
            }
        }
        let kind = if rationale_enabled {
            ProbeKind::RecallWithRationale
        } else {
            ProbeKind::RecallPlain
        };
        let probes: Vec<RecallProbe> = drafts
            .into_iter()
            .enumerate()
            .map(|(i, (topic, key_value, base))| {
                let question = if rationale_enabled {
                    let clause = prompts::RATIONALE_CLAUSES[i % prompts::RATIONALE_CLAUSES.len()];
                    format!("{base} {clause}")
                } else {
                    base
                };
                RecallProbe {
                    topic,
                    key_value,
                    question,
                    kind,
                    index: i,
                }
            })
            .collect();
        let plan = ProbePlan {
            candidate_id: x.id.clone(),
            probes,
            generator: GeneratorKind::Template,
            rationale_enabled,
        };
        validate_plan(&plan, k, rationale_enabled, true)
            .map_err(|raw| GenError::Malformed { raw })?;
        Ok(plan)
    }

    fn judgment_plan(&self, x: &AttackCandidateView, k: usize) -> Result<ProbePlan, GenError> {
        if k == 0 {
            return Err(GenError::InvalidK);
        }
        let slots = extract_slots(&x.content);
        let person = slots.person.clone().unwrap_or_default();
        let verb = slots.verb.clone().unwrap_or_else(|| "mentioned".into());
        let lemma = slots.verb_lemma().unwrap_or_else(|| "mention".into());
        let item_a = item_with_article(&slots);
        let loc = at_loc(&slots);
        let date = on_date(&slots);
        let head = slots.head_noun().unwrap_or_default();
        let content = x.content.trim_end_matches('.');
        let forms: Vec<(String, String)> = vec![
            (
                "item".into(),
                if item_a.is_empty() {
                    format!("Did {person} {lemma} anything?")
                } else {
                    format!("Did {person} {lemma} {item_a}?")
                },
            ),
            (
                "location".into(),
                if loc.is_empty() {
                    format!("Did {person} {lemma} anything recently?")
                } else {
                    format!("Did {person} {lemma} anything{loc}?")
                },
            ),
            (
                "statement".into(),
                format!("Is the following consistent with what you remember: \"{content}\"?"),
            ),
            (
                "person".into(),
                if item_a.is_empty() {
                    format!("Was it {person} who was involved?")
                } else {
                    format!("Was it {person} who {verb} {item_a}{loc}?")
                },
            ),
            (
                "date".into(),
                if date.is_empty() || head.is_empty() {
                    format!("Does your stored context mention {person}?")
                } else {
                    format!("Did {person} {lemma} the {head}{date}?")
                },
            ),
        ];
        let probes: Vec<RecallProbe> = (0..k)
            .map(|i| {
                let (topic, question) = forms[i % forms.len()].clone();
                RecallProbe {
                    topic,
                    key_value: "yes".into(),
                    question,
                    kind: ProbeKind::Judgment,
                    index: i,
                }
            })
            .collect();
        Ok(ProbePlan {
            candidate_id: x.id.clone(),
            probes,
            generator: GeneratorKind::Template,
            rationale_enabled: false,
        })
    }

    fn naive_plan(&self, x: &AttackCandidateView) -> Result<ProbePlan, GenError> {
        let slots = extract_slots(&x.content);
        let topic = match (&slots.person, slots.head_noun()) {
            (Some(p), Some(h)) => format!("{p}'s {h}"),
            (Some(p), None) => p.clone(),
            (None, Some(h)) => format!("the {h}"),
            (None, None) => "this statement".to_string(),
        };
        let key_value = slots
            .item
            .clone()
            .or(slots.person.clone())
            .or(slots.location.clone())
            .or(slots.date.clone())
            .unwrap_or_else(|| fallback_probe(&x.content).1);
        let question = prompts::fill(prompts::NAIVE_PROBE_TEMPLATE, &[("topic", &topic)]);
        Ok(ProbePlan {
            candidate_id: x.id.clone(),
            probes: vec![RecallProbe {
                topic,
                key_value,
                question,
                kind: ProbeKind::Naive,
                index: 0,
            }],
            generator: GeneratorKind::Template,
            rationale_enabled: false,
        })
    }
}

/// Contract checks shared by both generators. Returns a description of
/// the first violation.
fn validate_plan(
    plan: &ProbePlan,
    k: usize,
    rationale_enabled: bool,
    forbid_key_in_question: bool,
) -> Result<(), String> {
    if plan.probes.len() != k {
        return Err(format!("expected {k} probes, got {}", plan.probes.len()));
    }
    for p in &plan.probes {
        if p.question.trim().is_empty() {
            return Err(format!("probe {} has an empty question", p.index));
        }
        if p.key_value.trim().is_empty() {
            return Err(format!("probe {} has an empty key_value", p.index));
        }
        if forbid_key_in_question && text::contains_ci(&p.question, &p.key_value) {
            return Err(format!(
                "probe {} leaks its key_value into the question",
                p.index
            ));
        }
        if text::is_yes_no_question(&p.question) {
            return Err(format!("probe {} is a yes/no question", p.index));
        }
        let has_marker = text::has_rationale_marker(&p.question);
        if rationale_enabled && !has_marker {
            return Err(format!("probe {} is missing a rationale follow-up", p.index));
        }
        if !rationale_enabled && has_marker {
            return Err(format!("probe {} carries a rationale follow-up", p.index));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// LLM generator
// ---------------------------------------------------------------------

/// Probe generator backed by a chat endpoint using the query-generation
/// prompt. Replies are validated against the plan contract and
/// re-requested up to three times.
pub struct LlmGenerator {
    client: Arc<ChatClient>,
    retries: u32,
}

#[derive(Deserialize)]
struct ProbesShape {
    probes: Vec<ProbeShape>,
}

#[derive(Deserialize)]
struct ProbeShape {
    topic: String,
    key_value: String,
    question: String,
}

impl LlmGenerator {
    pub fn new(client: Arc<ChatClient>) -> Self {
        Self { client, retries: 3 }
    }

    fn request_plan(
        &self,
        x: &AttackCandidateView,
        k: usize,
        rationale_enabled: bool,
        kind: ProbeKind,
        template: &str,
    ) -> Result<ProbePlan, GenError> {
        let prompt = prompts::fill(
            template,
            &[("k", k.to_string().as_str()), ("content", &x.content)],
        );
        let mut last_raw = String::new();
        for _ in 0..self.retries {
            let reply = self
                .client
                .chat(&[ChatMessage::user(prompt.clone())], false)
                .map_err(|e| GenError::Llm(e.to_string()))?;
            last_raw = reply.content;
            let Some(parsed) = parse_probes_json(&last_raw) else {
                continue;
            };
            let probes: Vec<RecallProbe> = parsed
                .probes
                .into_iter()
                .enumerate()
                .map(|(i, p)| RecallProbe {
                    topic: p.topic,
                    key_value: p.key_value,
                    question: p.question,
                    kind,
                    index: i,
                })
                .collect();
            let plan = ProbePlan {
                candidate_id: x.id.clone(),
                probes,
                generator: GeneratorKind::Llm,
                rationale_enabled,
            };
            // Key-value leakage is a hard rule for the template generator
            // but only a prompt-level preference for the model; tolerate
            // it here rather than burning retries.
            if validate_plan(&plan, k, rationale_enabled, false).is_ok() {
                return Ok(plan);
            }
        }
        Err(GenError::Malformed { raw: last_raw })
    }
}

fn parse_probes_json(raw: &str) -> Option<ProbesShape> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    serde_json::from_str(&raw[start..=end]).ok()
}

impl ProbeSource for LlmGenerator {
    fn recall_plan(
        &self,
        x: &AttackCandidateView,
        k: usize,
        rationale_enabled: bool,
    ) -> Result<ProbePlan, GenError> {
        if k == 0 {
            return Err(GenError::InvalidK);
        }
        let template = if rationale_enabled {
            prompts::QUERY_GENERATION_PROMPT
        } else {
            prompts::QUERY_GENERATION_PROMPT_NO_RATIONALE
        };
        self.request_plan(
            x,
            k,
            rationale_enabled,
            if rationale_enabled {
                ProbeKind::RecallWithRationale
            } else {
                ProbeKind::RecallPlain
            },
            template,
        )
    }

    fn judgment_plan(&self, x: &AttackCandidateView, k: usize) -> Result<ProbePlan, GenError> {
        // Judgment probing keeps the template forms; the rubric only
        // swaps the scoring criterion, not the question source.
        TemplateGenerator.judgment_plan(x, k)
    }

    fn naive_plan(&self, x: &AttackCandidateView) -> Result<ProbePlan, GenError> {
        TemplateGenerator.naive_plan(x)
    }
}

// ---------------------------------------------------------------------
// Paraphrasing
// ---------------------------------------------------------------------

const VERB_SWAPS: &[(&str, &str)] = &[
    ("bought", "purchased"),
    ("purchased", "bought"),
    ("visited", "toured"),
    ("toured", "visited"),
    ("repaired", "fixed"),
    ("fixed", "repaired"),
    ("booked", "reserved"),
    ("reserved", "booked"),
    ("rented", "leased"),
    ("leased", "rented"),
    ("cooked", "prepared"),
    ("prepared", "cooked"),
];

/// Candidate paraphrasers: a deterministic word-substitution/reorder
/// table for tests, or a paraphrase model for real runs.
pub enum Paraphraser {
    Table,
    Llm { client: Arc<ChatClient>, retries: u32 },
}

impl Paraphraser {
    pub fn llm(client: Arc<ChatClient>) -> Self {
        Paraphraser::Llm { client, retries: 3 }
    }

    pub fn paraphrase_text(&self, content: &str) -> Result<String, GenError> {
        match self {
            Paraphraser::Table => {
                let out = table_paraphrase(content);
                if out == content {
                    Err(GenError::ParaphraseUnchanged)
                } else {
                    Ok(out)
                }
            }
            Paraphraser::Llm { client, retries } => {
                let prompt = prompts::fill(prompts::PARAPHRASE_PROMPT, &[("content", content)]);
                #[derive(Deserialize)]
                struct Shape {
                    paraphrase: String,
                }
                for _ in 0..*retries {
                    let reply = client
                        .chat(&[ChatMessage::user(prompt.clone())], false)
                        .map_err(|e| GenError::Llm(e.to_string()))?;
                    let raw = reply.content;
                    let parsed = raw
                        .find('{')
                        .zip(raw.rfind('}'))
                        .and_then(|(s, e)| serde_json::from_str::<Shape>(&raw[s..=e]).ok());
                    if let Some(p) = parsed {
                        if !p.paraphrase.trim().is_empty() && p.paraphrase != content {
                            return Ok(p.paraphrase);
                        }
                    }
                }
                Err(GenError::ParaphraseUnchanged)
            }
        }
    }

    pub fn paraphrase_view(&self, x: &AttackCandidateView) -> Result<AttackCandidateView, GenError> {
        Ok(AttackCandidateView {
            id: format!("{}-s", x.id),
            user_id: x.user_id.clone(),
            content: self.paraphrase_text(&x.content)?,
        })
    }
}

/// Paraphrase preprocessing for the paraphrase-candidate attack variant:
/// the derived candidate keeps the user, truth label, and a link back to
/// the original statement.
pub fn paraphrase_candidate(
    x: &CandidateStatement,
    paraphraser: &Paraphraser,
) -> Result<CandidateStatement, GenError> {
    Ok(CandidateStatement {
        id: format!("{}-s", x.id),
        user_id: x.user_id.clone(),
        content: paraphraser.paraphrase_text(&x.content)?,
        truth: x.truth,
        paraphrased_from: Some(x.id.clone()),
    })
}

fn table_paraphrase(content: &str) -> String {
    // Word substitutions first.
    let mut out_words: Vec<String> = Vec::new();
    let mut substituted = false;
    for token in content.split_whitespace() {
        let bare = strip_punct(token);
        let lower = bare.to_lowercase();
        let swap = VERB_SWAPS.iter().find(|(from, _)| *from == lower);
        match swap {
            Some((_, to)) if !bare.is_empty() => {
                substituted = true;
                out_words.push(token.replacen(bare, to, 1));
            }
            _ => out_words.push(token.to_string()),
        }
    }
    let mut text_out = out_words.join(" ");

    // Then front the at-phrase when one exists mid-sentence.
    let slots = extract_slots(&text_out);
    if let Some(loc) = &slots.location {
        let seg = format!(" at {loc}");
        if !text_out.starts_with("At ") && text_out.contains(&seg) {
            let removed = text_out.replacen(&seg, "", 1);
            text_out = format!("At {loc}, {removed}");
        }
    }
    if text_out == content && !substituted {
        text_out = format!("Recently, {content}");
    }
    text_out
}
