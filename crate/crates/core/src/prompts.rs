//! Prompt templates. Each asset under `prompts/` has a `[system]` and a
//! `[user]` section; `{{NAME}}` placeholders in the user section are
//! substituted by [`Template::render`].
//!
//! | template   | placeholders                                              |
//! |------------|-----------------------------------------------------------|
//! | observer   | `TASK`, `ROBOT`, `SCENE`                                  |
//! | summarizer | `TASK`, `HISTORY`                                         |
//! | planner    | `TASK`, `SKILLS`, `BELIEF`, `OBSERVATION`, `CONTEXT`      |
//! | critic     | `TASK`, `BELIEF`, `SCENES`, `ACTION`                      |

use crate::backend::{ChatMessage, ChatRequest, Role};

pub struct Template {
    pub role: Role,
    pub system: &'static str,
    pub user: &'static str,
}

fn split(role: Role, raw: &'static str) -> Template {
    let body = raw.strip_prefix("[system]\n").expect("template starts with [system]");
    let (system, user) = body.split_once("\n[user]\n").expect("template has [user]");
    Template { role, system, user }
}

impl Template {
    pub fn get(role: Role) -> Template {
        match role {
            Role::Observer => split(role, include_str!("../prompts/observer.txt")),
            Role::Summarizer => split(role, include_str!("../prompts/summarizer.txt")),
            Role::Planner => split(role, include_str!("../prompts/planner.txt")),
            Role::Critic => split(role, include_str!("../prompts/critic.txt")),
        }
    }

    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = self.user.to_string();
        for (key, value) in values {
            out = out.replace(&format!("{{{{{key}}}}}"), value);
        }
        out
    }

    /// A request with the system text and the rendered user message.
    /// `retry_note`, when given, is appended so a retry still carries the full
    /// original prompt.
    pub fn request(&self, values: &[(&str, &str)], retry_note: Option<&str>) -> ChatRequest {
        let mut user = self.render(values);
        if let Some(note) = retry_note {
            user.push_str("\nPREVIOUS ANSWER REJECTED: ");
            user.push_str(note);
            user.push('\n');
        }
        ChatRequest::new(
            self.role,
            vec![ChatMessage::system(self.system), ChatMessage::user(user)],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_placeholders_fill() {
        let cases: [(Role, &[&str]); 4] = [
            (Role::Observer, &["TASK", "ROBOT", "SCENE"]),
            (Role::Summarizer, &["TASK", "HISTORY"]),
            (Role::Planner, &["TASK", "SKILLS", "BELIEF", "OBSERVATION", "CONTEXT"]),
            (Role::Critic, &["TASK", "BELIEF", "SCENES", "ACTION"]),
        ];
        for (role, keys) in cases {
            let t = Template::get(role);
            let values: Vec<(&str, &str)> = keys.iter().map(|k| (*k, "x")).collect();
            let text = t.render(&values);
            assert!(!text.contains("{{"), "{role}: {text}");
            assert!(!t.system.is_empty());
        }
    }
}
