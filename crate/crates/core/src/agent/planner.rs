use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, Role};
use crate::prompts::Template;
use crate::skills::{extract_actions, Action};

/// A sub-goal and the actions still to run for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub subgoal: String,
    pub pending: VecDeque<Action>,
    pub origin_step: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("planner response unparseable: {0}")]
    Unparseable(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Everything the planner prompt is built from.
pub struct PlanInput<'a> {
    pub task: &'a str,
    pub catalog: &'a str,
    pub belief: &'a str,
    pub observation: &'a str,
    /// Free-form lines about the current sub-goal, critic advice or
    /// execution feedback. May be empty.
    pub context: &'a str,
}

/// Result of a successful plan call: the plan plus per-line parse
/// diagnostics for lines that were dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutput {
    pub plan: Plan,
    pub diagnostics: Vec<String>,
}

/// Parses a SUBGOAL line and ACTIONS block. Malformed action lines are
/// dropped and reported; at least one valid action is required.
pub fn parse_plan(text: &str, step: u64) -> Result<PlanOutput, String> {
    let subgoal = text
        .lines()
        .find_map(|l| {
            let l = l.trim();
            let (tag, rest) = l.split_once(':')?;
            tag.trim()
                .eq_ignore_ascii_case("subgoal")
                .then(|| rest.trim().to_string())
        })
        .filter(|s| !s.is_empty())
        .ok_or("missing SUBGOAL line")?;
    let extracted = extract_actions(text).map_err(|e| e.message)?;
    let diagnostics: Vec<String> = extracted.errors.iter().map(|e| e.to_string()).collect();
    if extracted.actions.is_empty() {
        return Err(format!(
            "ACTIONS block has no valid skill call ({})",
            diagnostics.join("; ")
        ));
    }
    Ok(PlanOutput {
        plan: Plan {
            subgoal,
            pending: extracted.actions.into(),
            origin_step: step,
        },
        diagnostics,
    })
}

/// Asks the planner for a sub-goal and action list. An unparseable answer is
/// retried up to `retries` times with the diagnostics appended.
pub fn plan(
    backend: &dyn ChatBackend,
    input: &PlanInput<'_>,
    step: u64,
    retries: u32,
) -> Result<PlanOutput, PlanError> {
    let template = Template::get(Role::Planner);
    let values = [
        ("TASK", input.task),
        ("SKILLS", input.catalog),
        ("BELIEF", input.belief),
        ("OBSERVATION", input.observation),
        ("CONTEXT", input.context),
    ];
    let mut note: Option<String> = None;
    for _ in 0..=retries {
        let req = template.request(&values, note.as_deref());
        let text = backend.complete(&req)?;
        match parse_plan(&text, step) {
            Ok(out) => {
                for d in &out.diagnostics {
                    tracing::debug!(diagnostic = %d, "dropped malformed action line");
                }
                return Ok(out);
            }
            Err(e) => note = Some(e),
        }
    }
    Err(PlanError::Unparseable(note.unwrap_or_default()))
}
