//! Interaction history and the belief built from it.
//!
//! [`HistoryBuffer`] is a bounded FIFO of `(observation, action, feedback)`
//! entries. [`summarize`] asks a language model to compress the retained
//! entries into a [`Belief`]; [`summarize_deterministic`] is the pure
//! template path used offline and as the fallback.

use std::collections::{BTreeMap, VecDeque};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, Role};
use crate::prompts::Template;
use crate::skills::{is_valid_token, parse_action, Action};
use crate::world::{Feedback, Status};

pub const DEFAULT_CAPACITY: usize = 32;
/// Sentinel action recorded when the critic vetoed the planned action.
pub const SKIPPED: &str = "skipped";

const RECENT_DONE: usize = 5;
const RECENT_ISSUES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    pub observation: String,
    pub action: String,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MemoryError {
    #[error("buffer capacity must be at least 1")]
    InvalidCapacity,
    #[error("step {got} does not follow step {last}")]
    NonMonotonicStep { last: u64, got: u64 },
    #[error("summarizer backend failed: {0}")]
    Backend(#[from] BackendError),
    #[error("summarizer response unparseable: {0}")]
    Unparseable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryBuffer {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Result<Self, MemoryError> {
        if capacity < 1 {
            return Err(MemoryError::InvalidCapacity);
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry, evicting the oldest one when full.
    pub fn push(&mut self, entry: HistoryEntry) -> Result<(), MemoryError> {
        if let Some(last) = self.entries.back() {
            if entry.step <= last.step {
                return Err(MemoryError::NonMonotonicStep {
                    last: last.step,
                    got: entry.step,
                });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn to_vec(&self) -> Vec<HistoryEntry> {
        self.entries.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefFact {
    pub object: String,
    pub place: String,
}

/// Summarized estimate of the world and task progress.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Belief {
    pub summary: String,
    /// At most one entry per object, sorted by object token.
    pub facts: Vec<BeliefFact>,
    pub completed: Vec<String>,
    pub issues: Vec<String>,
}

impl Belief {
    pub fn place_of(&self, object: &str) -> Option<&str> {
        self.facts.iter().find(|f| f.object == object).map(|f| f.place.as_str())
    }

    /// Text block shown to planner and critic; [`Belief::parse`] reads the
    /// same layout back.
    pub fn render(&self) -> String {
        fn list(out: &mut String, title: &str, items: impl Iterator<Item = String>) {
            out.push_str(title);
            out.push_str(":\n");
            let mut any = false;
            for item in items {
                any = true;
                out.push_str("- ");
                out.push_str(&item);
                out.push('\n');
            }
            if !any {
                out.push_str("- (none)\n");
            }
        }
        let mut out = format!("SUMMARY: {}\n", self.summary);
        list(
            &mut out,
            "FACTS",
            self.facts.iter().map(|f| format!("{}: {}", f.object, f.place)),
        );
        list(&mut out, "DONE", self.completed.iter().cloned());
        list(&mut out, "ISSUES", self.issues.iter().cloned());
        out
    }

    /// Parses a SUMMARY / FACTS / DONE / ISSUES response. Fact lines may use
    /// `object: place`, `object -> place` or `object is in|on|at place`;
    /// lines whose tokens are not entity tokens are dropped.
    pub fn parse(text: &str) -> Result<Belief, String> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Summary,
            Facts,
            Done,
            Issues,
        }
        let mut section = Section::None;
        let mut saw_summary = false;
        let mut summary = Vec::new();
        let mut facts = BTreeMap::new();
        let mut completed = Vec::new();
        let mut issues = Vec::new();

        for line in text.lines() {
            let trimmed = line.trim();
            let upper_tag = trimmed
                .split_once(':')
                .map(|(t, rest)| (t.trim().to_ascii_uppercase(), rest.trim()));
            if let Some((tag, rest)) = &upper_tag {
                let next = match tag.as_str() {
                    "SUMMARY" => Some(Section::Summary),
                    "FACTS" => Some(Section::Facts),
                    "DONE" => Some(Section::Done),
                    "ISSUES" => Some(Section::Issues),
                    _ => None,
                };
                if let Some(next) = next {
                    if next == Section::Summary {
                        saw_summary = true;
                        if !rest.is_empty() {
                            summary.push(rest.to_string());
                        }
                    }
                    section = next;
                    continue;
                }
            }
            if trimmed.is_empty() {
                continue;
            }
            let item = trimmed
                .strip_prefix("- ")
                .or_else(|| trimmed.strip_prefix("* "))
                .map(str::trim);
            match (&section, item) {
                (Section::Summary, _) => summary.push(trimmed.to_string()),
                (_, Some("(none)")) => {}
                (Section::Facts, Some(item)) => {
                    if let Some((o, p)) = parse_fact(item) {
                        facts.insert(o, p);
                    }
                }
                (Section::Done, Some(item)) => completed.push(item.to_string()),
                (Section::Issues, Some(item)) => issues.push(item.to_string()),
                _ => {}
            }
        }
        if !saw_summary {
            return Err("missing SUMMARY section".into());
        }
        Ok(Belief {
            summary: summary.join(" "),
            facts: facts
                .into_iter()
                .map(|(object, place)| BeliefFact { object, place })
                .collect(),
            completed,
            issues,
        })
    }
}

fn parse_fact(item: &str) -> Option<(String, String)> {
    let (o, p) = item.split_once("->").or_else(|| item.split_once(':')).or_else(|| {
        [" is in ", " is on ", " is at "]
            .iter()
            .find_map(|sep| item.split_once(sep))
    })?;
    let o = o.trim().to_ascii_lowercase();
    let p = p.trim().trim_end_matches('.').to_ascii_lowercase();
    (is_valid_token(&o) && is_valid_token(&p)).then_some((o, p))
}

/// Renders entries for the summarizer prompt, one block per step.
pub fn serialize_history(entries: &[HistoryEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let fb = match (&e.feedback.status, &e.feedback.kind) {
            (Status::Ok, _) => "ok".to_string(),
            (Status::Err, Some(k)) => format!("err({})", serde_json::to_value(k).unwrap().as_str().unwrap_or("")),
            (Status::Err, None) => "err".to_string(),
        };
        out.push_str(&format!(
            "[step {}]\nOBSERVATION:\n{}\nACTION: {}\nFEEDBACK: {fb}: {}\n",
            e.step, e.observation, e.action, e.feedback.message
        ));
    }
    out
}

fn sentence_patterns() -> (Regex, Regex) {
    (
        Regex::new(r"(?m)\b([a-z][a-z0-9_]*) is (?:in|on) ([a-z][a-z0-9_]*)\.").unwrap(),
        Regex::new(r"(?m)\b([a-z][a-z0-9_]*) is holding ([a-z][a-z0-9_]*)\.").unwrap(),
    )
}

/// Template summarizer. Object locations come from observation sentences of
/// the form `X is in|on P.` / `R is holding X.` and from successful
/// `pick_from` / `release_to` entries; the latest evidence wins. The last few
/// failures (critic vetoes included) become open issues.
pub fn summarize_deterministic(entries: &[HistoryEntry], task: &str) -> Belief {
    if entries.is_empty() {
        return Belief::default();
    }
    let (placed, holding) = sentence_patterns();
    let mut facts: BTreeMap<String, String> = BTreeMap::new();
    let mut hands: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
    let mut done = Vec::new();
    let mut issues = Vec::new();
    let mut ok = 0usize;

    for e in entries {
        for c in placed.captures_iter(&e.observation) {
            facts.insert(c[1].to_string(), c[2].to_string());
        }
        for c in holding.captures_iter(&e.observation) {
            let (robot, object) = (c[1].to_string(), c[2].to_string());
            let held = hands.entry(robot.clone()).or_default();
            if !held.contains(&object) {
                held.push_back(object.clone());
            }
            facts.insert(object, robot);
        }

        if e.feedback.is_ok() {
            ok += 1;
            done.push(e.action.clone());
            match parse_action(&e.action) {
                Ok(Action::PickFrom { robot, object, .. }) => {
                    let held = hands.entry(robot.clone()).or_default();
                    held.retain(|o| *o != object);
                    held.push_back(object.clone());
                    facts.insert(object, robot);
                }
                Ok(Action::ReleaseTo { robot, space }) => {
                    if let Some(object) = hands.get_mut(&robot).and_then(VecDeque::pop_front) {
                        facts.insert(object, space);
                    }
                }
                _ => {}
            }
        } else {
            issues.push(format!("[step {}] {}", e.step, e.feedback.message));
        }
    }

    let first = entries.first().map(|e| e.step).unwrap_or_default();
    let last = entries.last().map(|e| e.step).unwrap_or_default();
    let failed = entries.len() - ok;
    let summary = format!(
        "Working on: {}. Steps {first}-{last}: {ok} actions succeeded, {failed} failed or were skipped.",
        task.trim().trim_end_matches('.')
    );

    let tail = |v: Vec<String>, k: usize| v[v.len().saturating_sub(k)..].to_vec();
    Belief {
        summary,
        facts: facts
            .into_iter()
            .map(|(object, place)| BeliefFact { object, place })
            .collect(),
        completed: tail(done, RECENT_DONE),
        issues: tail(issues, RECENT_ISSUES),
    }
}

/// Language-model summarizer. An unparseable answer is retried once with the
/// parse error appended; after that, or on a backend error, the template
/// summarizer is used when `allow_fallback` is set.
pub fn summarize(
    backend: &dyn ChatBackend,
    entries: &[HistoryEntry],
    task: &str,
    allow_fallback: bool,
) -> Result<Belief, MemoryError> {
    if entries.is_empty() {
        return Ok(Belief::default());
    }
    let history = serialize_history(entries);
    let template = Template::get(Role::Summarizer);
    let values = [("TASK", task), ("HISTORY", history.as_str())];

    let mut note: Option<String> = None;
    let mut last_err = MemoryError::Unparseable("no attempt".into());
    for _ in 0..2 {
        let req = template.request(&values, note.as_deref());
        match backend.complete(&req) {
            Ok(text) => match Belief::parse(&text) {
                Ok(b) => return Ok(b),
                Err(e) => {
                    note = Some(e.clone());
                    last_err = MemoryError::Unparseable(e);
                }
            },
            Err(e) => {
                last_err = MemoryError::Backend(e);
                break;
            }
        }
    }
    if allow_fallback {
        tracing::debug!(error = %last_err, "summarizer falling back to template belief");
        Ok(summarize_deterministic(entries, task))
    } else {
        Err(last_err)
    }
}
