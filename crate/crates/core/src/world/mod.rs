//! Deterministic, partially observable kitchen simulator.
//!
//! [`Simulator`] owns the validated configuration; [`WorldState`] is a plain
//! value that [`Simulator::step`] maps to a successor. Rejected actions never
//! modify the state, so an `Err` feedback always leaves the digest intact.

mod config;
mod observe;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::skills::{Action, ArgKind};

pub use config::{
    ConfigError, ContainerSpec, DeviceSpec, ObjectSpec, PerturbationEffect, PerturbationEvent, RobotSpec, WorldConfig,
    WorldIndex,
};
pub use observe::{ContainerFlag, ObjectFact, RawObservation};

/// Where an object currently is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Place(String),
    Hand(String),
}

impl Location {
    pub fn token(&self) -> &str {
        match self {
            Location::Place(t) | Location::Hand(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: BTreeMap<String, Location>,
    /// Objects destroyed by a destructive device.
    pub removed: BTreeSet<String>,
    pub open: BTreeMap<String, bool>,
    pub positions: BTreeMap<String, String>,
    /// Held objects per robot, oldest pick first.
    pub hands: BTreeMap<String, Vec<String>>,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    NotAtLocation,
    ContainerClosed,
    HandFull,
    HandEmpty,
    ObjectNotVisible,
    ImmobileRobot,
    UnknownEntity,
    MalformedAction,
    AlreadyOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Err,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FeedbackKind>,
    pub message: String,
}

impl Feedback {
    pub fn ok(message: impl Into<String>) -> Self {
        Self {
            status: Status::Ok,
            kind: None,
            message: message.into(),
        }
    }

    pub fn err(kind: FeedbackKind, message: impl Into<String>) -> Self {
        Self {
            status: Status::Err,
            kind: Some(kind),
            message: message.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
}

/// Validated world description plus the transition, observation and query
/// functions over [`WorldState`].
#[derive(Debug, Clone)]
pub struct Simulator {
    config: Arc<WorldConfig>,
    index: Arc<WorldIndex>,
}

/// Builds a simulator and its initial state.
pub fn load_world(cfg: WorldConfig) -> Result<(Simulator, WorldState), ConfigError> {
    let sim = Simulator::new(cfg)?;
    let state = sim.initial_state();
    Ok((sim, state))
}

impl Simulator {
    pub fn new(cfg: WorldConfig) -> Result<Self, ConfigError> {
        let index = WorldIndex::build(&cfg)?;
        Ok(Self {
            config: Arc::new(cfg),
            index: Arc::new(index),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn index(&self) -> &WorldIndex {
        &self.index
    }

    pub fn initial_state(&self) -> WorldState {
        let cfg = &self.config;
        WorldState {
            objects: cfg
                .objects
                .iter()
                .map(|o| (o.token.clone(), Location::Place(o.place.clone())))
                .collect(),
            removed: BTreeSet::new(),
            open: cfg.containers.iter().map(|c| (c.token.clone(), c.open)).collect(),
            positions: cfg.robots.iter().map(|r| (r.token.clone(), r.start.clone())).collect(),
            hands: cfg.robots.iter().map(|r| (r.token.clone(), Vec::new())).collect(),
            step: 0,
        }
    }

    /// Checks entity existence and argument kinds without looking at state.
    pub fn validate_action(&self, action: &Action) -> Result<(), Feedback> {
        let args = action.args();
        for a in &args {
            if !self.index.knows(a) {
                return Err(Feedback::err(
                    FeedbackKind::UnknownEntity,
                    format!("{action} failed: unknown entity {a}"),
                ));
            }
        }
        for (a, kind) in args.iter().zip(action.arg_kinds()) {
            let ok = match kind {
                ArgKind::Robot => self.index.is_robot(a),
                ArgKind::Object => self.index.is_object(a),
                ArgKind::Openable => self.index.is_container(a),
                ArgKind::Place => self.index.is_place(a),
                ArgKind::Navpoint => self.index.is_navpoint(a),
            };
            if !ok {
                return Err(Feedback::err(
                    FeedbackKind::MalformedAction,
                    format!("{action} failed: {a} is not a valid {kind:?} argument"),
                ));
            }
        }
        Ok(())
    }

    /// Applies one action.
    ///
    /// Preconditions are checked in a fixed order and the first violation
    /// decides the error kind: unknown entity, argument kind, then per skill
    ///
    /// - `go_to`: robot is mobile
    /// - `open`: robot at target, target closed (`AlreadyOpen` otherwise)
    /// - `close`: robot at target, target open (`ContainerClosed` otherwise)
    /// - `pick_from`: robot at space, space open, object in space, free hand
    /// - `release_to`: robot holds something, robot at space, space open
    ///
    /// `release_to` puts down the object held longest. Releasing into a
    /// destructive device removes the object from the world. The step counter
    /// only advances on success.
    pub fn step(&self, state: &WorldState, action: &Action) -> (WorldState, Feedback) {
        match self.try_step(state, action) {
            Ok((next, fb)) => (next, fb),
            Err(fb) => (state.clone(), fb),
        }
    }

    fn try_step(&self, state: &WorldState, action: &Action) -> Result<(WorldState, Feedback), Feedback> {
        self.validate_action(action)?;
        let robot = action.robot();
        let position = &state.positions[robot];
        let spec = &self.index.robots[robot];
        let mut next = state.clone();

        let at = |place: &str| -> Result<(), Feedback> {
            if position != place {
                Err(Feedback::err(
                    FeedbackKind::NotAtLocation,
                    format!("{action} failed: {robot} is at {position}, not {place}"),
                ))
            } else {
                Ok(())
            }
        };
        let open_or_err = |place: &str| -> Result<(), Feedback> {
            if state.open.get(place) == Some(&false) {
                Err(Feedback::err(
                    FeedbackKind::ContainerClosed,
                    format!("{action} failed: {place} is closed"),
                ))
            } else {
                Ok(())
            }
        };

        let message = match action {
            Action::GoTo { navpoint, .. } => {
                if !spec.mobile {
                    return Err(Feedback::err(
                        FeedbackKind::ImmobileRobot,
                        format!("{action} failed: {robot} cannot move"),
                    ));
                }
                next.positions.insert(robot.to_string(), navpoint.clone());
                format!("{robot} moved to {navpoint}")
            }
            Action::Open { target, .. } => {
                at(target)?;
                if state.open[target] {
                    return Err(Feedback::err(
                        FeedbackKind::AlreadyOpen,
                        format!("{action} failed: {target} is already open"),
                    ));
                }
                next.open.insert(target.clone(), true);
                format!("{robot} opened {target}")
            }
            Action::Close { target, .. } => {
                at(target)?;
                if !state.open[target] {
                    return Err(Feedback::err(
                        FeedbackKind::ContainerClosed,
                        format!("{action} failed: {target} is already closed"),
                    ));
                }
                next.open.insert(target.clone(), false);
                format!("{robot} closed {target}")
            }
            Action::PickFrom { object, space, .. } => {
                at(space)?;
                open_or_err(space)?;
                if state.objects.get(object) != Some(&Location::Place(space.clone())) {
                    return Err(Feedback::err(
                        FeedbackKind::ObjectNotVisible,
                        format!("{action} failed: {object} not found at {space}"),
                    ));
                }
                if state.hands[robot].len() >= spec.capacity {
                    return Err(Feedback::err(
                        FeedbackKind::HandFull,
                        format!("{action} failed: {robot} hands are full"),
                    ));
                }
                next.objects.insert(object.clone(), Location::Hand(robot.to_string()));
                next.hands.get_mut(robot).unwrap().push(object.clone());
                format!("{robot} picked {object} from {space}")
            }
            Action::ReleaseTo { space, .. } => {
                if state.hands[robot].is_empty() {
                    return Err(Feedback::err(
                        FeedbackKind::HandEmpty,
                        format!("{action} failed: {robot} holds nothing"),
                    ));
                }
                at(space)?;
                open_or_err(space)?;
                let object = next.hands.get_mut(robot).unwrap().remove(0);
                if self.index.is_destructive(space) {
                    next.objects.remove(&object);
                    next.removed.insert(object.clone());
                    format!("{robot} released {object} into {space}; {object} was discarded")
                } else {
                    next.objects.insert(object.clone(), Location::Place(space.clone()));
                    format!("{robot} released {object} to {space}")
                }
            }
        };
        next.step += 1;
        Ok((next, Feedback::ok(message)))
    }

    /// Applies every scheduled event whose trigger equals `step_index`, in
    /// schedule order. Events naming missing or removed entities are skipped.
    pub fn apply_perturbations(
        &self,
        state: &WorldState,
        schedule: &[PerturbationEvent],
        step_index: u64,
    ) -> WorldState {
        let mut next = state.clone();
        for ev in schedule.iter().filter(|e| e.step == step_index) {
            match &ev.effect {
                PerturbationEffect::Close { container } => match next.open.get_mut(container) {
                    Some(flag) => *flag = false,
                    None => tracing::warn!(%container, "perturbation skipped: no such container"),
                },
                PerturbationEffect::Move { object, place } => {
                    if !self.index.is_place(place) || !next.objects.contains_key(object) {
                        tracing::warn!(%object, %place, "perturbation skipped: unknown or removed entity");
                        continue;
                    }
                    if let Some(Location::Hand(r)) = next.objects.get(object).cloned() {
                        if let Some(h) = next.hands.get_mut(&r) {
                            h.retain(|o| o != object);
                        }
                    }
                    next.objects.insert(object.clone(), Location::Place(place.clone()));
                }
            }
        }
        next
    }

    /// `None` when the object was destroyed.
    pub fn where_is(&self, state: &WorldState, object: &str) -> Result<Option<Location>, WorldError> {
        if !self.index.is_object(object) {
            return Err(WorldError::UnknownEntity(object.to_string()));
        }
        Ok(state.objects.get(object).cloned())
    }

    pub fn is_open(&self, state: &WorldState, container: &str) -> Result<bool, WorldError> {
        state
            .open
            .get(container)
            .copied()
            .ok_or_else(|| WorldError::UnknownEntity(container.to_string()))
    }

    pub fn holding<'a>(&self, state: &'a WorldState, robot: &str) -> Result<&'a [String], WorldError> {
        state
            .hands
            .get(robot)
            .map(Vec::as_slice)
            .ok_or_else(|| WorldError::UnknownEntity(robot.to_string()))
    }

    /// True when some robot currently sees `object`.
    pub fn is_visible(&self, state: &WorldState, object: &str) -> bool {
        self.index.robots().any(|r| {
            self.observe(state, &r.token)
                .map(|o| o.facts.iter().any(|f| f.object == object))
                .unwrap_or(false)
        })
    }

    /// Checks the structural invariants; used by tests and replay.
    pub fn check_invariants(&self, state: &WorldState) -> Result<(), String> {
        for (obj, loc) in &state.objects {
            if state.removed.contains(obj) {
                return Err(format!("{obj} is both placed and removed"));
            }
            if let Location::Hand(r) = loc {
                if !state.hands.get(r).is_some_and(|h| h.contains(obj)) {
                    return Err(format!("{obj} claims hand of {r} but is not held"));
                }
            }
        }
        let total = state.objects.len() + state.removed.len();
        if total != self.index.objects.len() {
            return Err(format!("object count {total} != {}", self.index.objects.len()));
        }
        for (r, held) in &state.hands {
            let spec = &self.index.robots[r];
            if held.len() > spec.capacity {
                return Err(format!("{r} holds {} > capacity {}", held.len(), spec.capacity));
            }
            for o in held {
                if state.objects.get(o) != Some(&Location::Hand(r.clone())) {
                    return Err(format!("{r} holds {o} but it is elsewhere"));
                }
            }
            if !spec.mobile && state.positions[r] != spec.start {
                return Err(format!("stationary {r} moved"));
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 over the canonical JSON encoding of the state. All maps are
/// ordered, so equal states always serialize identically.
pub fn state_digest(state: &WorldState) -> String {
    let bytes = serde_json::to_vec(state).expect("world state serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::parse_action;

    fn sim() -> (Simulator, WorldState) {
        load_world(WorldConfig::default_kitchen()).unwrap()
    }

    fn act(s: &str) -> Action {
        parse_action(s).unwrap()
    }

    fn run(sim: &Simulator, st: &WorldState, steps: &[&str]) -> WorldState {
        steps.iter().fold(st.clone(), |s, a| {
            let (n, fb) = sim.step(&s, &act(a));
            assert!(fb.is_ok(), "{a}: {fb:?}");
            n
        })
    }

    #[test]
    fn initial_state_mirrors_config() {
        let (sim, st) = sim();
        assert_eq!(st.step, 0);
        assert_eq!(st.open.values().filter(|o| !**o).count(), 4);
        assert!(!sim.is_open(&st, "oven").unwrap());
        sim.check_invariants(&st).unwrap();
    }

    #[test]
    fn empty_world_is_valid() {
        let mut cfg = WorldConfig::default_kitchen();
        cfg.objects.clear();
        let (sim, st) = load_world(cfg).unwrap();
        assert!(st.objects.is_empty());
        sim.check_invariants(&st).unwrap();
    }

    #[test]
    fn open_refrigerator() {
        let (sim, st) = sim();
        let st = run(&sim, &st, &["go_to(robot1, refrigerator)"]);
        let (next, fb) = sim.step(&st, &act("open(robot1, refrigerator)"));
        assert!(fb.is_ok());
        assert!(next.open["refrigerator"]);
        assert_ne!(state_digest(&st), state_digest(&next));
    }

    #[test]
    fn pick_from_closed_refrigerator() {
        let (sim, st) = sim();
        let st = run(&sim, &st, &["go_to(robot1, refrigerator)"]);
        let (next, fb) = sim.step(&st, &act("pick_from(robot1, water, refrigerator)"));
        assert_eq!(fb.kind, Some(FeedbackKind::ContainerClosed));
        assert_eq!(next, st);
    }

    #[test]
    fn stationary_robot_cannot_move() {
        let (sim, st) = sim();
        let (_, fb) = sim.step(&st, &act("go_to(robot2, sink)"));
        assert_eq!(fb.kind, Some(FeedbackKind::ImmobileRobot));
    }

    #[test]
    fn every_error_kind_is_reachable() {
        let (sim, st) = sim();
        let cases = [
            ("open(robot1, oven)", FeedbackKind::NotAtLocation),
            ("go_to(robot1, pantry)", FeedbackKind::UnknownEntity),
            ("open(robot1, apple)", FeedbackKind::MalformedAction),
            ("release_to(robot1, sink)", FeedbackKind::HandEmpty),
            ("pick_from(robot1, apple, sink)", FeedbackKind::ObjectNotVisible),
            ("go_to(robot2, table)", FeedbackKind::ImmobileRobot),
        ];
        for (a, k) in cases {
            assert_eq!(sim.step(&st, &act(a)).1.kind, Some(k), "{a}");
        }
        let full = run(
            &sim,
            &st,
            &["pick_from(robot1, cup, sink)", "pick_from(robot1, sponge, sink)"],
        );
        let mut extra = full.clone();
        extra.objects.insert("apple".into(), Location::Place("sink".into()));
        assert_eq!(
            sim.step(&extra, &act("pick_from(robot1, apple, sink)")).1.kind,
            Some(FeedbackKind::HandFull)
        );
        let at_oven = run(&sim, &st, &["go_to(robot1, oven)", "open(robot1, oven)"]);
        assert_eq!(
            sim.step(&at_oven, &act("open(robot1, oven)")).1.kind,
            Some(FeedbackKind::AlreadyOpen)
        );
        let closed = run(&sim, &at_oven, &["close(robot1, oven)"]);
        assert_eq!(
            sim.step(&closed, &act("pick_from(robot1, bread, oven)")).1.kind,
            Some(FeedbackKind::ContainerClosed)
        );
    }

    #[test]
    fn release_oldest_and_garbage_removal() {
        let (sim, st) = sim();
        let st = run(
            &sim,
            &st,
            &[
                "pick_from(robot1, cup, sink)",
                "pick_from(robot1, sponge, sink)",
                "go_to(robot1, garbage_can)",
                "release_to(robot1, garbage_can)",
            ],
        );
        assert_eq!(sim.where_is(&st, "cup").unwrap(), None);
        assert!(st.removed.contains("cup"));
        assert_eq!(sim.holding(&st, "robot1").unwrap(), ["sponge".to_string()]);
        sim.check_invariants(&st).unwrap();
    }

    #[test]
    fn queries_after_manipulation() {
        let (sim, st) = sim();
        let st = run(&sim, &st, &["go_to(robot1, table)", "pick_from(robot1, apple, table)"]);
        assert!(sim.holding(&st, "robot1").unwrap().contains(&"apple".to_string()));
        let st = run(&sim, &st, &["release_to(robot1, table)"]);
        assert_eq!(
            sim.where_is(&st, "apple").unwrap(),
            Some(Location::Place("table".into()))
        );
        assert!(sim.where_is(&st, "ghost").is_err());
        assert!(sim.is_open(&st, "table").is_err());
        assert!(sim.holding(&st, "apple").is_err());
    }

    #[test]
    fn perturbations() {
        let (sim, st) = sim();
        let st = run(
            &sim,
            &st,
            &["go_to(robot1, refrigerator)", "open(robot1, refrigerator)"],
        );
        let schedule = vec![
            PerturbationEvent {
                step: 5,
                effect: PerturbationEffect::Close {
                    container: "refrigerator".into(),
                },
            },
            PerturbationEvent {
                step: 5,
                effect: PerturbationEffect::Move {
                    object: "apple".into(),
                    place: "sink".into(),
                },
            },
            PerturbationEvent {
                step: 5,
                effect: PerturbationEffect::Move {
                    object: "ghost".into(),
                    place: "sink".into(),
                },
            },
        ];
        assert_eq!(sim.apply_perturbations(&st, &schedule, 4), st);
        let next = sim.apply_perturbations(&st, &schedule, 5);
        assert!(!next.open["refrigerator"]);
        assert_eq!(next.objects["apple"], Location::Place("sink".into()));
        sim.check_invariants(&next).unwrap();
    }

    #[test]
    fn digest_is_stable() {
        let (_, st) = sim();
        assert_eq!(state_digest(&st), state_digest(&st.clone()));
        assert_eq!(state_digest(&st).len(), 64);
    }
}
