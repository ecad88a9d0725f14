//! Turns raw scene graphs into the short text observation that the planner
//! and summarizer consume. The critic is the only role that sees raw scene
//! graphs.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, Role};
use crate::prompts::Template;
use crate::world::{Location, RawObservation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextObservation {
    pub text: String,
    pub robot: String,
    pub step: u64,
}

/// Template rendering with one sentence per fact. Objects whose token occurs
/// in the task instruction are listed first.
pub fn describe_deterministic(raw: &RawObservation, task: &str) -> TextObservation {
    let mut lines = vec![format!("{} is positioned at {}.", raw.robot, raw.position)];
    for flag in &raw.container_flags {
        let state = if flag.open { "open" } else { "closed" };
        lines.push(format!("{} is {state}.", flag.container));
    }

    let mut facts: Vec<_> = raw.facts.iter().collect();
    facts.sort_by_key(|f| !mentions(task, &f.object));
    for f in &facts {
        match &f.location {
            Location::Place(p) => {
                let prep = if raw.flag(p).is_some() { "in" } else { "on" };
                lines.push(format!("{} is {prep} {p}.", f.object));
            }
            Location::Hand(r) => lines.push(format!("{r} is holding {}.", f.object)),
        }
    }
    if raw.facts.is_empty() {
        lines.push("No objects are visible.".into());
    }

    TextObservation {
        text: lines.join(" "),
        robot: raw.robot.clone(),
        step: raw.step,
    }
}

fn mentions(task: &str, token: &str) -> bool {
    task.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .any(|w| w.eq_ignore_ascii_case(token))
}

/// Asks the backend for a description of the serialized scene graph. Falls
/// back to [`describe_deterministic`] on backend failure or an empty answer
/// when `allow_fallback` is set.
pub fn describe(
    backend: &dyn ChatBackend,
    raw: &RawObservation,
    task: &str,
    allow_fallback: bool,
) -> Result<TextObservation, BackendError> {
    let scene = serde_json::to_string_pretty(raw).expect("observation serializes");
    let req = Template::get(Role::Observer).request(&[("TASK", task), ("ROBOT", &raw.robot), ("SCENE", &scene)], None);
    let result = backend.complete(&req).and_then(|text| {
        let text = text.trim().to_string();
        if text.is_empty() {
            Err(BackendError::Malformed("empty observation text".into()))
        } else {
            Ok(text)
        }
    });
    match result {
        Ok(text) => Ok(TextObservation {
            text,
            robot: raw.robot.clone(),
            step: raw.step,
        }),
        Err(e) if allow_fallback => {
            tracing::debug!(error = %e, "observer falling back to template description");
            Ok(describe_deterministic(raw, task))
        }
        Err(e) => Err(e),
    }
}

/// One block per robot, as shown to the planner and stored in history.
pub fn join_observations(obs: &[TextObservation]) -> String {
    obs.iter()
        .map(|o| format!("[{}] {}", o.robot, o.text))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptRule, ScriptedBackend};
    use crate::world::{ContainerFlag, ObjectFact};

    fn raw(facts: Vec<(&str, Location)>, flags: Vec<(&str, bool)>, position: &str) -> RawObservation {
        RawObservation {
            robot: "robot1".into(),
            position: position.into(),
            facts: facts
                .into_iter()
                .map(|(o, l)| ObjectFact {
                    object: o.into(),
                    location: l,
                })
                .collect(),
            container_flags: flags
                .into_iter()
                .map(|(c, open)| ContainerFlag {
                    container: c.into(),
                    open,
                })
                .collect(),
            step: 3,
        }
    }

    #[test]
    fn nothing_visible() {
        let t = describe_deterministic(&raw(vec![], vec![], "sink"), "find water");
        assert!(t.text.contains("No objects are visible"));
    }

    #[test]
    fn closed_oven_sentence() {
        let t = describe_deterministic(&raw(vec![], vec![("oven", false)], "oven"), "");
        assert!(t.text.contains("oven is closed."));
    }

    #[test]
    fn fact_sentence_and_purity() {
        let r = raw(
            vec![
                ("plate", Location::Place("table".into())),
                ("apple", Location::Place("table".into())),
                ("cup", Location::Hand("robot1".into())),
            ],
            vec![],
            "table",
        );
        let a = describe_deterministic(&r, "put the apple in the oven");
        let b = describe_deterministic(&r, "put the apple in the oven");
        assert_eq!(a, b);
        assert!(a.text.contains("apple is on table."));
        assert!(a.text.contains("robot1 is holding cup."));
        // task-relevant object first
        assert!(a.text.find("apple").unwrap() < a.text.find("plate").unwrap());
    }

    #[test]
    fn open_refrigerator_with_water() {
        let r = raw(
            vec![("water", Location::Place("refrigerator".into()))],
            vec![("refrigerator", true)],
            "refrigerator",
        );
        let t = describe_deterministic(&r, "find water");
        assert!(t.text.contains("water is in refrigerator."));
    }

    #[test]
    fn scripted_and_fallback() {
        let r = raw(vec![], vec![], "sink");
        let b = ScriptedBackend::new(vec![ScriptRule::new(
            Some(Role::Observer),
            Some("ROBOT: robot1"),
            "robot1 stands at the sink and sees nothing useful.",
        )])
        .unwrap();
        let t = describe(&b, &r, "find water", false).unwrap();
        assert_eq!(t.text, "robot1 stands at the sink and sees nothing useful.");

        let empty = ScriptedBackend::new(vec![]).unwrap();
        assert!(describe(&empty, &r, "find water", false).is_err());
        let t = describe(&empty, &r, "find water", true).unwrap();
        assert_eq!(t, describe_deterministic(&r, "find water"));
    }
}
