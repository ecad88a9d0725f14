use serde::{Deserialize, Serialize};

use super::trace::VerdictSource;
use crate::backend::{BackendError, ChatBackend, Role};
use crate::memory::{Belief, HistoryEntry};
use crate::prompts::Template;
use crate::skills::Action;
use crate::world::{RawObservation, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticCategory {
    None,
    Outdated,
    Redundant,
    Invalid,
    WrongPlanning,
}

impl CriticCategory {
    pub const REJECTIONS: [CriticCategory; 4] = [
        CriticCategory::Outdated,
        CriticCategory::Redundant,
        CriticCategory::Invalid,
        CriticCategory::WrongPlanning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CriticCategory::None => "none",
            CriticCategory::Outdated => "outdated",
            CriticCategory::Redundant => "redundant",
            CriticCategory::Invalid => "invalid",
            CriticCategory::WrongPlanning => "wrong_planning",
        }
    }

    /// Accepts the snake-case token as well as looser spellings such as
    /// "Wrong planning" or "Outdated actions".
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let t = t.trim_end_matches("_actions").trim_end_matches("_action");
        match t {
            "none" | "" => Some(CriticCategory::None),
            "outdated" => Some(CriticCategory::Outdated),
            "redundant" => Some(CriticCategory::Redundant),
            "invalid" => Some(CriticCategory::Invalid),
            "wrong_planning" | "wrong_plan" => Some(CriticCategory::WrongPlanning),
            _ => None,
        }
    }
}

/// Critic decision for one candidate action. A valid verdict always has
/// category `None`; a rejection always has one of the four others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub valid: bool,
    pub category: CriticCategory,
    pub feedback: String,
    #[serde(default)]
    pub advice: String,
}

impl CriticVerdict {
    pub fn accept() -> Self {
        Self {
            valid: true,
            category: CriticCategory::None,
            feedback: "action is feasible".into(),
            advice: String::new(),
        }
    }

    pub fn reject(category: CriticCategory, feedback: impl Into<String>, advice: impl Into<String>) -> Self {
        debug_assert_ne!(category, CriticCategory::None);
        Self {
            valid: false,
            category,
            feedback: feedback.into(),
            advice: advice.into(),
        }
    }

    /// Reads a VERDICT / CATEGORY / FEEDBACK / ADVICE block.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut verdict = None;
        let mut category = None;
        let mut feedback = None;
        let mut advice = String::new();
        for line in text.lines() {
            let Some((tag, rest)) = line.trim().split_once(':') else {
                continue;
            };
            let rest = rest.trim();
            match tag.trim().to_ascii_uppercase().as_str() {
                "VERDICT" => {
                    verdict = match rest.to_ascii_lowercase().as_str() {
                        "true" | "valid" | "yes" => Some(true),
                        "false" | "invalid" | "no" => Some(false),
                        _ => return Err(format!("VERDICT must be true or false, got `{rest}`")),
                    }
                }
                "CATEGORY" => {
                    category = Some(CriticCategory::parse(rest).ok_or_else(|| format!("unknown CATEGORY `{rest}`"))?)
                }
                "FEEDBACK" => feedback = Some(rest.to_string()),
                "ADVICE" => advice = rest.to_string(),
                _ => {}
            }
        }
        let valid = verdict.ok_or("missing VERDICT line")?;
        let category = category.ok_or("missing CATEGORY line")?;
        let feedback = feedback.ok_or("missing FEEDBACK line")?;
        if valid {
            return Ok(Self {
                valid,
                category: CriticCategory::None,
                feedback,
                advice,
            });
        }
        if category == CriticCategory::None {
            return Err("a rejection needs a CATEGORY other than none".into());
        }
        Ok(Self {
            valid,
            category,
            feedback,
            advice,
        })
    }
}

/// Deterministic critic over the raw scene graphs of all robots.
///
/// Checks run in a fixed order and the first failing one names the category:
/// invalid, redundant, outdated, wrong planning.
pub struct RuleCritic<'a> {
    sim: &'a Simulator,
}

fn observed_flag(raws: &[RawObservation], container: &str) -> Option<bool> {
    raws.iter().find_map(|r| r.flag(container))
}

fn observed_place(raws: &[RawObservation], object: &str) -> Option<String> {
    raws.iter().find_map(|r| {
        r.facts
            .iter()
            .find(|f| f.object == object)
            .map(|f| f.location.token().to_string())
    })
}

/// Containers sharing the family prefix (`drawer_left` / `drawer_right`).
fn sibling_compartments<'s>(sim: &'s Simulator, place: &str) -> Vec<&'s str> {
    let Some((family, _)) = place.rsplit_once('_') else {
        return Vec::new();
    };
    sim.config()
        .containers
        .iter()
        .map(|c| c.token.as_str())
        .filter(|c| *c != place && c.rsplit_once('_').is_some_and(|(f, _)| f == family))
        .collect()
}

impl<'a> RuleCritic<'a> {
    pub fn new(sim: &'a Simulator) -> Self {
        Self { sim }
    }

    pub fn check(
        &self,
        action: &Action,
        raws: &[RawObservation],
        belief: &Belief,
        _recent: &[HistoryEntry],
    ) -> CriticVerdict {
        if let Err(fb) = self.sim.validate_action(action) {
            let reason = fb
                .message
                .split_once(" failed: ")
                .map_or(fb.message.as_str(), |(_, r)| r);
            return CriticVerdict::reject(
                CriticCategory::Invalid,
                format!("{action} is invalid: {reason}"),
                "use only entity tokens from the scene with the argument kinds of the skill pool",
            );
        }
        self.redundant(action, raws, belief)
            .or_else(|| self.outdated(action, raws, belief))
            .or_else(|| self.wrong_planning(action, raws))
            .unwrap_or_else(CriticVerdict::accept)
    }

    fn own<'r>(&self, raws: &'r [RawObservation], robot: &str) -> Option<&'r RawObservation> {
        raws.iter().find(|r| r.robot == robot)
    }

    fn redundant(&self, action: &Action, raws: &[RawObservation], belief: &Belief) -> Option<CriticVerdict> {
        let reject = |f: String, a: &str| Some(CriticVerdict::reject(CriticCategory::Redundant, f, a));
        match action {
            Action::Open { target, .. } if observed_flag(raws, target) == Some(true) => reject(
                format!("{target} is already open"),
                "skip this action and continue with the next step",
            ),
            Action::Close { target, .. } if observed_flag(raws, target) == Some(false) => reject(
                format!("{target} is already closed"),
                "skip this action and continue with the next step",
            ),
            Action::GoTo { robot, navpoint } if self.own(raws, robot).is_some_and(|o| o.position == *navpoint) => {
                reject(
                    format!("{robot} is already at {navpoint}"),
                    "skip this action and continue with the next step",
                )
            }
            Action::PickFrom { robot, object, .. } => {
                let in_hand = self.own(raws, robot).is_some_and(|o| o.held().any(|h| h == object));
                let believed = belief.place_of(object) == Some(robot.as_str());
                let seen_elsewhere = observed_place(raws, object).is_some_and(|p| p != *robot);
                (in_hand || (believed && !seen_elsewhere)).then(|| {
                    CriticVerdict::reject(
                        CriticCategory::Redundant,
                        format!("{robot} already holds {object}"),
                        "skip this action and continue with the next step",
                    )
                })
            }
            _ => None,
        }
    }

    fn outdated(&self, action: &Action, raws: &[RawObservation], belief: &Belief) -> Option<CriticVerdict> {
        match action {
            Action::PickFrom { robot, object, space } => {
                let own = self.own(raws, robot)?;
                if own.position != *space {
                    return None;
                }
                if own.flag(space) == Some(false) {
                    return Some(CriticVerdict::reject(
                        CriticCategory::Outdated,
                        format!("{space} is closed; open it first"),
                        format!("open({robot}, {space}) before picking {object}"),
                    ));
                }
                if own.objects_at(space).any(|o| o == object) {
                    return None;
                }
                let advice = if let Some(p) = observed_place(raws, object).filter(|p| p != space) {
                    format!("{object} is visible at {p}")
                } else {
                    let siblings = sibling_compartments(self.sim, space);
                    if !siblings.is_empty() {
                        format!("check other compartments of the drawer ({})", siblings.join(", "))
                    } else if let Some(p) = belief.place_of(object).filter(|p| p != space) {
                        format!("{object} was last seen at {p}")
                    } else {
                        format!("search other locations for {object}")
                    }
                };
                Some(CriticVerdict::reject(
                    CriticCategory::Outdated,
                    format!("{object} is not in {space}"),
                    advice,
                ))
            }
            Action::ReleaseTo { robot, space } => {
                let own = self.own(raws, robot)?;
                if own.held().next().is_none() {
                    return Some(CriticVerdict::reject(
                        CriticCategory::Outdated,
                        format!("{robot} is not holding anything"),
                        "pick up the object first",
                    ));
                }
                if own.position == *space && own.flag(space) == Some(false) {
                    return Some(CriticVerdict::reject(
                        CriticCategory::Outdated,
                        format!("{space} is closed; open it first"),
                        format!("open({robot}, {space}) before releasing"),
                    ));
                }
                None
            }
            _ => None,
        }
    }

    fn wrong_planning(&self, action: &Action, raws: &[RawObservation]) -> Option<CriticVerdict> {
        let robot = action.robot();
        let spec = self.sim.index().robot(robot)?;
        let target = match action {
            Action::GoTo { navpoint, .. } => {
                return (!spec.mobile).then(|| {
                    CriticVerdict::reject(
                        CriticCategory::WrongPlanning,
                        format!("{robot} is stationary and cannot go to {navpoint}"),
                        "assign the task to a mobile robot",
                    )
                });
            }
            Action::Open { target, .. } | Action::Close { target, .. } => target,
            Action::PickFrom { space, .. } | Action::ReleaseTo { space, .. } => space,
        };
        let own = self.own(raws, robot)?;
        if own.position != *target {
            let advice = if spec.mobile {
                format!("go_to({robot}, {target}) first")
            } else {
                format!("{robot} stays at {}; use a mobile robot for {target}", own.position)
            };
            return Some(CriticVerdict::reject(
                CriticCategory::WrongPlanning,
                format!("{robot} is at {}, not {target}", own.position),
                advice,
            ));
        }
        if let Action::PickFrom { .. } = action {
            if own.held().count() >= spec.capacity {
                return Some(CriticVerdict::reject(
                    CriticCategory::WrongPlanning,
                    format!("{robot} has no free hand"),
                    format!("release an object held by {robot} first"),
                ));
            }
        }
        None
    }
}

/// Model critic with one retry on an unparseable answer, then the rule
/// critic when `allow_fallback` is set.
#[allow(clippy::too_many_arguments)]
pub fn critique(
    backend: &dyn ChatBackend,
    rules: &RuleCritic<'_>,
    action: &Action,
    belief: &Belief,
    raws: &[RawObservation],
    recent: &[HistoryEntry],
    task: &str,
    allow_fallback: bool,
) -> Result<(CriticVerdict, VerdictSource), BackendError> {
    let scenes = serde_json::to_string_pretty(raws).expect("observations serialize");
    let belief_text = belief.render();
    let action_text = action.to_string();
    let values = [
        ("TASK", task),
        ("BELIEF", belief_text.as_str()),
        ("SCENES", scenes.as_str()),
        ("ACTION", action_text.as_str()),
    ];
    let template = Template::get(Role::Critic);
    let mut note: Option<String> = None;
    let mut failure = None;
    for _ in 0..2 {
        match backend.complete(&template.request(&values, note.as_deref())) {
            Ok(text) => match CriticVerdict::parse(&text) {
                Ok(v) => return Ok((v, VerdictSource::Model)),
                Err(e) => {
                    failure = Some(BackendError::Malformed(e.clone()));
                    note = Some(e);
                }
            },
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let err = failure.expect("loop ran");
    if allow_fallback {
        tracing::debug!(error = %err, "critic falling back to rule critic");
        Ok((rules.check(action, raws, belief, recent), VerdictSource::Rule))
    } else {
        Err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptRule, ScriptedBackend};
    use crate::skills::parse_action;
    use crate::world::{load_world, WorldConfig, WorldState};

    fn setup(actions: &[&str]) -> (Simulator, WorldState) {
        let (sim, mut st) = load_world(WorldConfig::default_kitchen()).unwrap();
        for a in actions {
            let (next, fb) = sim.step(&st, &parse_action(a).unwrap());
            assert!(fb.is_ok(), "{a}: {}", fb.message);
            st = next;
        }
        (sim, st)
    }

    fn judge(sim: &Simulator, st: &WorldState, action: &str) -> CriticVerdict {
        RuleCritic::new(sim).check(
            &parse_action(action).unwrap(),
            &sim.observe_all(st),
            &Belief::default(),
            &[],
        )
    }

    #[test]
    fn empty_drawer_is_outdated() {
        let (sim, st) = setup(&["go_to(robot1, drawer_left)", "open(robot1, drawer_left)"]);
        let v = judge(&sim, &st, "pick_from(robot1, medication, drawer_left)");
        assert_eq!(v.category, CriticCategory::Outdated);
        assert!(v.advice.contains("check other compartments of the drawer"));
        assert!(v.advice.contains("drawer_right"));
    }

    #[test]
    fn open_on_open_is_redundant() {
        let (sim, st) = setup(&["go_to(robot1, oven)", "open(robot1, oven)"]);
        assert_eq!(
            judge(&sim, &st, "open(robot1, oven)").category,
            CriticCategory::Redundant
        );
    }

    #[test]
    fn stationary_go_to_is_wrong_planning() {
        let (sim, st) = setup(&[]);
        assert_eq!(
            judge(&sim, &st, "go_to(robot2, sink)").category,
            CriticCategory::WrongPlanning
        );
    }

    #[test]
    fn well_preconditioned_pick_passes() {
        let (sim, st) = setup(&["go_to(robot1, table)"]);
        assert_eq!(
            judge(&sim, &st, "pick_from(robot1, apple, table)"),
            CriticVerdict::accept()
        );
    }

    #[test]
    fn unknown_entity_is_invalid() {
        let (sim, st) = setup(&[]);
        assert_eq!(
            judge(&sim, &st, "open(robot1, dishwasher)").category,
            CriticCategory::Invalid
        );
    }

    #[test]
    fn verdict_parsing() {
        let v = CriticVerdict::parse(
            "THOUGHT: x\nVERDICT: false\nCATEGORY: Redundant actions\nFEEDBACK: already open\nADVICE: move on",
        )
        .unwrap();
        assert_eq!(v.category, CriticCategory::Redundant);
        assert_eq!(v.advice, "move on");
        let v = CriticVerdict::parse("VERDICT: true\nCATEGORY: outdated\nFEEDBACK: ok").unwrap();
        assert_eq!(v.category, CriticCategory::None);
        assert!(CriticVerdict::parse("VERDICT: false\nCATEGORY: none\nFEEDBACK: x").is_err());
        assert!(CriticVerdict::parse("VERDICT: maybe\nCATEGORY: none\nFEEDBACK: x").is_err());
        assert!(CriticVerdict::parse("FEEDBACK: x").is_err());
    }

    #[test]
    fn model_critic_and_fallback() {
        let (sim, st) = setup(&["go_to(robot1, refrigerator)", "open(robot1, refrigerator)"]);
        let raws = sim.observe_all(&st);
        let rules = RuleCritic::new(&sim);
        let action = parse_action("open(robot1, refrigerator)").unwrap();
        let b = ScriptedBackend::new(vec![ScriptRule::new(
            Some(Role::Critic),
            Some("CANDIDATE ACTION: open(robot1, refrigerator)"),
            "VERDICT: false\nCATEGORY: redundant\nFEEDBACK: refrigerator is open already\nADVICE: continue",
        )])
        .unwrap();
        let (v, src) = critique(&b, &rules, &action, &Belief::default(), &raws, &[], "find water", false).unwrap();
        assert_eq!((v.category, src), (CriticCategory::Redundant, VerdictSource::Model));

        let garbage = ScriptedBackend::new(vec![ScriptRule::new(None, None, "looks fine to me")]).unwrap();
        assert!(critique(&garbage, &rules, &action, &Belief::default(), &raws, &[], "t", false).is_err());
        let (v, src) = critique(&garbage, &rules, &action, &Belief::default(), &raws, &[], "t", true).unwrap();
        assert_eq!((v.category, src), (CriticCategory::Redundant, VerdictSource::Rule));
    }
}
