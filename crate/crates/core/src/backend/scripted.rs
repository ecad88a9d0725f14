use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, Role};

/// One canned response. A rule matches when its role filter (if any) equals
/// the request role and every present matcher hits the final user message.
/// A rule with neither `contains` nor `pattern` matches everything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub one_shot: bool,
}

impl ScriptRule {
    pub fn new(role: Option<Role>, contains: Option<&str>, response: impl Into<String>) -> Self {
        Self {
            role,
            contains: contains.map(str::to_string),
            pattern: None,
            response: response.into(),
            one_shot: false,
        }
    }
}

#[derive(Debug)]
struct Compiled {
    rule: ScriptRule,
    pattern: Option<Regex>,
}

/// Deterministic rule-table backend. Rules are tried in order and the first
/// match answers; a consumed one-shot rule is skipped for the rest of the
/// session. Responses depend only on the request sequence.
#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Arc<[Compiled]>,
    consumed: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, BackendError> {
        let compiled = rules
            .into_iter()
            .map(|rule| {
                let pattern = rule
                    .pattern
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| BackendError::Config(format!("bad script pattern: {e}")))?;
                Ok(Compiled { rule, pattern })
            })
            .collect::<Result<Vec<_>, BackendError>>()?;
        let n = compiled.len();
        Ok(Self {
            rules: compiled.into(),
            consumed: Mutex::new(vec![false; n]),
        })
    }

    /// Roles that at least one rule can answer.
    pub fn roles(&self) -> Vec<Role> {
        Role::ALL
            .into_iter()
            .filter(|r| self.rules.iter().any(|c| c.rule.role.is_none_or(|x| x == *r)))
            .collect()
    }

    fn fork(&self) -> Self {
        Self {
            rules: Arc::clone(&self.rules),
            consumed: Mutex::new(vec![false; self.rules.len()]),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let text = req.last_user();
        let mut consumed = self.consumed.lock().expect("script session lock");
        for (i, c) in self.rules.iter().enumerate() {
            if consumed[i] {
                continue;
            }
            if c.rule.role.is_some_and(|r| r != req.role) {
                continue;
            }
            if c.rule.contains.as_deref().is_some_and(|s| !text.contains(s)) {
                continue;
            }
            if c.pattern.as_ref().is_some_and(|p| !p.is_match(text)) {
                continue;
            }
            if c.rule.one_shot {
                consumed[i] = true;
            }
            return Ok(c.rule.response.clone());
        }
        Err(BackendError::NoRuleMatched(req.role))
    }

    fn session(&self) -> Box<dyn ChatBackend> {
        Box::new(self.fork())
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ChatMessage;

    fn req(role: Role, text: &str) -> ChatRequest {
        ChatRequest::new(role, vec![ChatMessage::user(text)])
    }

    #[test]
    fn first_match_wins() {
        let b = ScriptedBackend::new(vec![
            ScriptRule::new(Some(Role::Planner), Some("SUBGOAL"), "plan A"),
            ScriptRule::new(Some(Role::Planner), Some("SUBGOAL"), "plan B"),
        ])
        .unwrap();
        assert_eq!(b.complete(&req(Role::Planner, "give SUBGOAL")).unwrap(), "plan A");
    }

    #[test]
    fn role_filter_and_miss() {
        let b = ScriptedBackend::new(vec![ScriptRule::new(Some(Role::Planner), None, "x")]).unwrap();
        assert_eq!(
            b.complete(&req(Role::Critic, "anything")),
            Err(BackendError::NoRuleMatched(Role::Critic))
        );
        assert_eq!(b.roles(), vec![Role::Planner]);
    }

    #[test]
    fn empty_rules_always_miss() {
        let b = ScriptedBackend::new(Vec::new()).unwrap();
        assert!(matches!(
            b.complete(&req(Role::Observer, "x")),
            Err(BackendError::NoRuleMatched(_))
        ));
    }

    #[test]
    fn one_shot_is_scoped_to_session() {
        let mut first = ScriptRule::new(None, None, "once");
        first.one_shot = true;
        let b = ScriptedBackend::new(vec![first, ScriptRule::new(None, None, "again")]).unwrap();
        assert_eq!(b.complete(&req(Role::Planner, "a")).unwrap(), "once");
        assert_eq!(b.complete(&req(Role::Planner, "a")).unwrap(), "again");
        let s = b.session();
        assert_eq!(s.complete(&req(Role::Planner, "a")).unwrap(), "once");
    }

    #[test]
    fn pattern_matching() {
        let mut r = ScriptRule::new(None, None, "matched");
        r.pattern = Some(r"water: \w+".into());
        let b = ScriptedBackend::new(vec![r]).unwrap();
        assert!(b.complete(&req(Role::Planner, "- water: refrigerator")).is_ok());
        assert!(b.complete(&req(Role::Planner, "nothing")).is_err());
        let mut bad = ScriptRule::new(None, None, "x");
        bad.pattern = Some("(".into());
        assert!(matches!(ScriptedBackend::new(vec![bad]), Err(BackendError::Config(_))));
    }
}
