use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::Objective;
use crate::backend::{ScriptRule, ScriptedBackend};
use crate::world::{Location, PerturbationEffect, PerturbationEvent, Simulator, WorldConfig, WorldIndex, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Search,
    Manipulation,
    Integration,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Search, Family::Manipulation, Family::Integration];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Search => "search",
            Family::Manipulation => "manipulation",
            Family::Integration => "integration",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// World-state predicate used for milestones and goals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    ObjectAt {
        object: String,
        place: String,
    },
    Holding {
        object: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        robot: Option<String>,
    },
    IsOpen(String),
    IsClosed(String),
    /// Some robot currently sees the object.
    Visible(String),
    Removed(String),
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
}

impl Predicate {
    pub fn eval(&self, sim: &Simulator, state: &WorldState) -> bool {
        match self {
            Predicate::ObjectAt { object, place } => state.objects.get(object) == Some(&Location::Place(place.clone())),
            Predicate::Holding { object, robot } => match state.objects.get(object) {
                Some(Location::Hand(r)) => robot.as_ref().is_none_or(|want| want == r),
                _ => false,
            },
            Predicate::IsOpen(c) => state.open.get(c) == Some(&true),
            Predicate::IsClosed(c) => state.open.get(c) == Some(&false),
            Predicate::Visible(o) => sim.is_visible(state, o),
            Predicate::Removed(o) => state.removed.contains(o),
            Predicate::All(ps) => ps.iter().all(|p| p.eval(sim, state)),
            Predicate::Any(ps) => ps.iter().any(|p| p.eval(sim, state)),
        }
    }

    fn tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::ObjectAt { object, place } => out.extend([object.as_str(), place.as_str()]),
            Predicate::Holding { object, robot } => {
                out.push(object);
                if let Some(r) = robot {
                    out.push(r);
                }
            }
            Predicate::IsOpen(t) | Predicate::IsClosed(t) | Predicate::Visible(t) | Predicate::Removed(t) => {
                out.push(t)
            }
            Predicate::All(ps) | Predicate::Any(ps) => ps.iter().for_each(|p| p.tokens(out)),
        }
    }

    fn check(&self, index: &WorldIndex) -> Result<(), String> {
        let bad = |what: &str, t: &str| Err(format!("`{t}` is not a known {what}"));
        match self {
            Predicate::ObjectAt { object, place } => {
                if !index.is_object(object) {
                    return bad("object", object);
                }
                if !index.is_place(place) {
                    return bad("place", place);
                }
            }
            Predicate::Holding { object, robot } => {
                if !index.is_object(object) {
                    return bad("object", object);
                }
                if let Some(r) = robot.as_deref().filter(|r| !index.is_robot(r)) {
                    return bad("robot", r);
                }
            }
            Predicate::IsOpen(c) | Predicate::IsClosed(c) => {
                if !index.is_container(c) {
                    return bad("container", c);
                }
            }
            Predicate::Visible(o) | Predicate::Removed(o) => {
                if !index.is_object(o) {
                    return bad("object", o);
                }
            }
            Predicate::All(ps) | Predicate::Any(ps) => {
                if ps.is_empty() {
                    return Err("empty predicate list".into());
                }
                for p in ps {
                    p.check(index)?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ps: &[Predicate], sep: &str| ps.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep);
        match self {
            Predicate::ObjectAt { object, place } => write!(f, "{object} at {place}"),
            Predicate::Holding { object, robot: Some(r) } => write!(f, "{r} holds {object}"),
            Predicate::Holding { object, robot: None } => write!(f, "{object} held"),
            Predicate::IsOpen(c) => write!(f, "{c} open"),
            Predicate::IsClosed(c) => write!(f, "{c} closed"),
            Predicate::Visible(o) => write!(f, "{o} visible"),
            Predicate::Removed(o) => write!(f, "{o} removed"),
            Predicate::All(ps) => write!(f, "({})", join(ps, " and ")),
            Predicate::Any(ps) => write!(f, "({})", join(ps, " or ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Milestone {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub predicate: Predicate,
}

impl Milestone {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.predicate.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub family: Family,
    pub instruction: String,
    #[serde(default = "default_world_name")]
    pub world: String,
    pub milestones: Vec<Milestone>,
    /// Defaults to "every milestone latched".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<PerturbationEvent>,
    /// Scripted-backend rules used when the suite runs offline.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptRule>,
}

fn default_world_name() -> String {
    "default".into()
}

impl Objective for TaskSpec {
    fn milestone_labels(&self) -> Vec<String> {
        self.milestones.iter().map(Milestone::label).collect()
    }

    fn milestones(&self, sim: &Simulator, state: &WorldState) -> Vec<bool> {
        self.milestones.iter().map(|m| m.predicate.eval(sim, state)).collect()
    }

    fn goal(&self, sim: &Simulator, state: &WorldState, latched: &[bool]) -> bool {
        match &self.goal {
            Some(p) => p.eval(sim, state),
            None => latched.iter().all(|m| *m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldSource {
    /// `default_kitchen` is the only builtin.
    Builtin(String),
    /// Relative paths resolve against the suite file's directory.
    Path(PathBuf),
    Inline(WorldConfig),
}

/// Schema problem with a JSON-path-like location.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct SchemaError {
    pub location: String,
    pub message: String,
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        location: location.into(),
        message: message.into(),
    }
}

/// A validated task suite with resolved world configurations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suite {
    pub trials_per_task: usize,
    pub worlds: BTreeMap<String, WorldConfig>,
    pub tasks: Vec<TaskSpec>,
}

const DEFAULT_SUITE: &str = include_str!("../../suites/default.json");

impl Suite {
    /// The bundled suite: search, manipulation and two integration tasks,
    /// three trials each.
    pub fn builtin_default() -> Suite {
        Suite::from_json(DEFAULT_SUITE, None).expect("bundled suite is valid")
    }

    pub fn trial_count(&self) -> usize {
        self.tasks.len() * self.trials_per_task
    }

    pub fn world_for(&self, task: &TaskSpec) -> &WorldConfig {
        &self.worlds[&task.world]
    }

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Suite, SchemaError> {
        let root: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| schema("$", "suite must be a JSON object"))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "trials_per_task" | "worlds" | "tasks") {
                return Err(schema(format!("$.{key}"), "unknown field"));
            }
        }

        let trials_per_task = match obj.get("trials_per_task") {
            None => 3,
            Some(v) => {
                v.as_u64()
                    .filter(|n| *n >= 1)
                    .ok_or_else(|| schema("$.trials_per_task", "must be a positive integer"))? as usize
            }
        };

        let mut worlds = BTreeMap::new();
        let sources: BTreeMap<String, WorldSource> = match obj.get("worlds") {
            None => BTreeMap::from([("default".into(), WorldSource::Builtin("default_kitchen".into()))]),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| schema("$.worlds", e.to_string()))?,
        };
        for (name, src) in sources {
            let loc = format!("$.worlds.{name}");
            let cfg = match src {
                WorldSource::Builtin(b) if b == "default_kitchen" => WorldConfig::default_kitchen(),
                WorldSource::Builtin(b) => return Err(schema(loc, format!("unknown builtin world `{b}`"))),
                WorldSource::Inline(cfg) => cfg,
                WorldSource::Path(p) => {
                    let full = match base_dir {
                        Some(d) if p.is_relative() => d.join(&p),
                        _ => p.clone(),
                    };
                    let text = std::fs::read_to_string(&full)
                        .map_err(|e| schema(&loc, format!("cannot read {}: {e}", full.display())))?;
                    WorldConfig::from_json(&text).map_err(|e| schema(&loc, e.to_string()))?
                }
            };
            cfg.validate().map_err(|e| schema(&loc, e.to_string()))?;
            worlds.insert(name, cfg);
        }

        let raw_tasks = obj
            .get("tasks")
            .and_then(Value::as_array)
            .ok_or_else(|| schema("$.tasks", "must be an array"))?;
        if raw_tasks.is_empty() {
            return Err(schema("$.tasks", "suite has no tasks"));
        }
        let mut tasks = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, raw) in raw_tasks.iter().enumerate() {
            let loc = format!("$.tasks[{i}]");
            let task: TaskSpec = serde_json::from_value(raw.clone()).map_err(|e| schema(&loc, e.to_string()))?;
            if !ids.insert(task.id.clone()) {
                return Err(schema(format!("{loc}.id"), format!("duplicate task id `{}`", task.id)));
            }
            let world = worlds
                .get(&task.world)
                .ok_or_else(|| schema(format!("{loc}.world"), format!("unknown world `{}`", task.world)))?;
            validate_task(&task, world, &loc)?;
            tasks.push(task);
        }
        Ok(Suite {
            trials_per_task,
            worlds,
            tasks,
        })
    }

    pub fn load(path: &Path) -> Result<Suite, SchemaError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| schema("$", format!("cannot read {}: {e}", path.display())))?;
        Suite::from_json(&text, path.parent())
    }
}

/// Reads and validates a suite file.
pub fn load_suite(path: &Path) -> Result<Vec<TaskSpec>, SchemaError> {
    Suite::load(path).map(|s| s.tasks)
}

fn validate_task(task: &TaskSpec, world: &WorldConfig, loc: &str) -> Result<(), SchemaError> {
    if task.id.trim().is_empty() {
        return Err(schema(format!("{loc}.id"), "empty task id"));
    }
    if task.milestones.is_empty() {
        return Err(schema(
            format!("{loc}.milestones"),
            "at least one milestone is required",
        ));
    }
    let mut with_events = world.clone();
    with_events.perturbations = task.perturbations.clone();
    let index = WorldIndex::build(&with_events).map_err(|e| schema(format!("{loc}.perturbations"), e.to_string()))?;
    for (j, m) in task.milestones.iter().enumerate() {
        m.predicate
            .check(&index)
            .map_err(|e| schema(format!("{loc}.milestones[{j}]"), e))?;
    }
    if let Some(goal) = &task.goal {
        goal.check(&index).map_err(|e| schema(format!("{loc}.goal"), e))?;
    }
    ScriptedBackend::new(task.script.clone()).map_err(|e| schema(format!("{loc}.script"), e.to_string()))?;
    Ok(())
}

/// Objects the task names anywhere: instruction, predicates, perturbations
/// or scripted responses.
fn referenced_objects(task: &TaskSpec, world: &WorldConfig) -> BTreeSet<String> {
    let word = Regex::new(r"[a-z][a-z0-9_]*").unwrap();
    let objects: BTreeSet<&str> = world.objects.iter().map(|o| o.token.as_str()).collect();
    let mut text = task.instruction.to_ascii_lowercase();
    let mut tokens = Vec::new();
    for m in &task.milestones {
        m.predicate.tokens(&mut tokens);
    }
    if let Some(g) = &task.goal {
        g.tokens(&mut tokens);
    }
    for ev in &task.perturbations {
        if let PerturbationEffect::Move { object, .. } = &ev.effect {
            tokens.push(object);
        }
    }
    for r in &task.script {
        text.push(' ');
        text.push_str(&r.response);
    }
    word.find_iter(&text)
        .map(|m| m.as_str())
        .chain(tokens)
        .filter(|t| objects.contains(t))
        .map(str::to_string)
        .collect()
}

/// World for one trial: filler objects the task never mentions are
/// scattered over spaces and containers using the trial seed, and the task's
/// perturbations are attached.
pub fn trial_world(task: &TaskSpec, world: &WorldConfig, seed: u64) -> WorldConfig {
    let mut cfg = world.clone();
    let keep = referenced_objects(task, world);
    let mut places: Vec<String> = cfg.spaces.clone();
    places.extend(cfg.containers.iter().map(|c| c.token.clone()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !places.is_empty() {
        for o in cfg.objects.iter_mut().filter(|o| o.filler && !keep.contains(&o.token)) {
            o.place = places.choose(&mut rng).expect("non-empty").clone();
        }
    }
    cfg.perturbations = task.perturbations.clone();
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_has_twelve_trials() {
        let s = Suite::builtin_default();
        assert_eq!(s.trial_count(), 12);
        let fams: Vec<Family> = s.tasks.iter().map(|t| t.family).collect();
        assert_eq!(
            fams,
            [
                Family::Search,
                Family::Manipulation,
                Family::Integration,
                Family::Integration
            ]
        );
        assert!(s.tasks.iter().any(|t| !t.perturbations.is_empty()));
    }

    #[test]
    fn unknown_family_is_schema_error() {
        let text = r#"{"tasks":[{"id":"t","family":"cooking","instruction":"x","milestones":[{"predicate":{"visible":"apple"}}]}]}"#;
        let err = Suite::from_json(text, None).unwrap_err();
        assert_eq!(err.location, "$.tasks[0]");
    }

    #[test]
    fn missing_world_is_schema_error() {
        let text = r#"{"tasks":[{"id":"t","family":"search","instruction":"x","world":"garage","milestones":[{"predicate":{"visible":"apple"}}]}]}"#;
        let err = Suite::from_json(text, None).unwrap_err();
        assert_eq!(err.location, "$.tasks[0].world");
    }

    #[test]
    fn bad_predicate_token() {
        let text = r#"{"tasks":[{"id":"t","family":"search","instruction":"x","milestones":[{"predicate":{"is_open":"table"}}]}]}"#;
        let err = Suite::from_json(text, None).unwrap_err();
        assert_eq!(err.location, "$.tasks[0].milestones[0]");
        let text = r#"{"tasks":[{"id":"t","family":"search","instruction":"x","milestones":[]}]}"#;
        assert!(Suite::from_json(text, None).is_err());
    }

    #[test]
    fn trial_world_keeps_referenced_objects() {
        let s = Suite::builtin_default();
        let task = s.tasks.iter().find(|t| t.id == "integration_2").unwrap();
        let base = s.world_for(task);
        for seed in 0..20 {
            let w = trial_world(task, base, seed);
            let bread = w.objects.iter().find(|o| o.token == "bread").unwrap();
            assert_eq!(bread.place, "oven");
            assert!(w.validate().is_ok());
        }
        assert_eq!(trial_world(task, base, 7), trial_world(task, base, 7));
    }

    #[test]
    fn predicate_labels() {
        let p = Predicate::All(vec![
            Predicate::Visible("water".into()),
            Predicate::ObjectAt {
                object: "water".into(),
                place: "table".into(),
            },
        ]);
        assert_eq!(p.to_string(), "(water visible and water at table)");
    }
}
