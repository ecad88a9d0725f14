use serde::{Deserialize, Serialize};

use super::{Location, Simulator, WorldError, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectFact {
    pub object: String,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerFlag {
    pub container: String,
    pub open: bool,
}

/// What one robot's camera would show, as a scene graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawObservation {
    pub robot: String,
    pub position: String,
    pub facts: Vec<ObjectFact>,
    pub container_flags: Vec<ContainerFlag>,
    pub step: u64,
}

impl RawObservation {
    /// Objects reported at `place` (not in hands).
    pub fn objects_at<'a>(&'a self, place: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.facts.iter().filter_map(move |f| match &f.location {
            Location::Place(p) if p == place => Some(f.object.as_str()),
            _ => None,
        })
    }

    pub fn held(&self) -> impl Iterator<Item = &str> {
        self.facts.iter().filter_map(|f| match &f.location {
            Location::Hand(r) if *r == self.robot => Some(f.object.as_str()),
            _ => None,
        })
    }

    pub fn flag(&self, container: &str) -> Option<bool> {
        self.container_flags
            .iter()
            .find(|f| f.container == container)
            .map(|f| f.open)
    }
}

impl Simulator {
    /// A robot sees the place at its navpoint (contents only when that place
    /// is open), the open flag of that place, and its own hand. A stationary
    /// robot never leaves its start, so it always watches the same place.
    pub fn observe(&self, state: &WorldState, robot: &str) -> Result<RawObservation, WorldError> {
        let position = state
            .positions
            .get(robot)
            .ok_or_else(|| WorldError::UnknownEntity(robot.to_string()))?
            .clone();

        let mut container_flags = Vec::new();
        let place_open = match state.open.get(&position) {
            Some(&open) => {
                container_flags.push(ContainerFlag {
                    container: position.clone(),
                    open,
                });
                open
            }
            None => true,
        };

        let mut facts = Vec::new();
        if place_open {
            let here = Location::Place(position.clone());
            facts.extend(
                state
                    .objects
                    .iter()
                    .filter(|(_, loc)| **loc == here)
                    .map(|(o, loc)| ObjectFact {
                        object: o.clone(),
                        location: loc.clone(),
                    }),
            );
        }
        facts.extend(state.hands[robot].iter().map(|o| ObjectFact {
            object: o.clone(),
            location: Location::Hand(robot.to_string()),
        }));

        Ok(RawObservation {
            robot: robot.to_string(),
            position,
            facts,
            container_flags,
            step: state.step,
        })
    }

    /// Observations for every robot in token order.
    pub fn observe_all(&self, state: &WorldState) -> Vec<RawObservation> {
        self.index()
            .robots()
            .map(|r| self.observe(state, &r.token).expect("configured robot"))
            .collect()
    }
}
