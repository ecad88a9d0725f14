use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::skills::{is_valid_token, EntityKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub token: String,
    pub place: String,
    /// Filler objects carry no task meaning; trials may reshuffle them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub filler: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub token: String,
    #[serde(default)]
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub token: String,
    /// Objects released here leave the world.
    #[serde(default)]
    pub destructive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub token: String,
    pub mobile: bool,
    pub capacity: usize,
    pub start: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationEffect {
    Close { container: String },
    Move { object: String, place: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    pub step: u64,
    pub effect: PerturbationEffect,
}

/// Static description of a kitchen. Places are the union of spaces,
/// containers and devices; a device may share its token with a container
/// (an oven is both). Every place needs a navpoint of the same token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub containers: Vec<ContainerSpec>,
    #[serde(default)]
    pub spaces: Vec<String>,
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub navpoints: Vec<String>,
    #[serde(default)]
    pub robots: Vec<RobotSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<PerturbationEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid token `{0}`")]
    BadToken(String),
    #[error("duplicate token `{0}`")]
    Duplicate(String),
    #[error("{owner} references unknown {expected} `{token}`")]
    Dangling {
        owner: String,
        expected: &'static str,
        token: String,
    },
    #[error("place `{0}` has no navpoint")]
    MissingNavpoint(String),
    #[error("robot `{0}` has zero hand capacity")]
    ZeroCapacity(String),
    #[error("malformed world config: {0}")]
    Json(String),
}

impl WorldConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))
    }

    /// The default desk-scale kitchen: ten objects, four closed containers,
    /// two open spaces, three devices, one mobile dual-arm robot and one
    /// stationary single-arm robot watching the table.
    pub fn default_kitchen() -> Self {
        let obj = |t: &str, p: &str, filler: bool| ObjectSpec {
            token: t.into(),
            place: p.into(),
            filler,
        };
        let closed = |t: &str| ContainerSpec {
            token: t.into(),
            open: false,
        };
        let places = [
            "table",
            "sink",
            "refrigerator",
            "drawer_left",
            "drawer_right",
            "oven",
            "garbage_can",
        ];
        WorldConfig {
            objects: vec![
                obj("apple", "table", false),
                obj("water", "refrigerator", false),
                obj("medication", "drawer_right", false),
                obj("cup", "sink", true),
                obj("bread", "oven", true),
                obj("milk", "refrigerator", true),
                obj("banana", "table", true),
                obj("sponge", "sink", true),
                obj("plate", "table", true),
                obj("knife", "drawer_right", true),
            ],
            containers: vec![
                closed("refrigerator"),
                closed("drawer_left"),
                closed("drawer_right"),
                closed("oven"),
            ],
            spaces: vec!["table".into(), "sink".into()],
            devices: vec![
                DeviceSpec {
                    token: "oven".into(),
                    destructive: false,
                },
                DeviceSpec {
                    token: "refrigerator".into(),
                    destructive: false,
                },
                DeviceSpec {
                    token: "garbage_can".into(),
                    destructive: true,
                },
            ],
            navpoints: places.iter().map(|s| s.to_string()).collect(),
            robots: vec![
                RobotSpec {
                    token: "robot1".into(),
                    mobile: true,
                    capacity: 2,
                    start: "sink".into(),
                },
                RobotSpec {
                    token: "robot2".into(),
                    mobile: false,
                    capacity: 1,
                    start: "table".into(),
                },
            ],
            perturbations: Vec::new(),
        }
    }

    /// Checks tokens and references; the first problem found is returned.
    pub fn validate(&self) -> Result<(), ConfigError> {
        WorldIndex::build(self).map(|_| ())
    }
}

/// Resolved lookup tables for a validated config.
#[derive(Debug, Clone)]
pub struct WorldIndex {
    pub(crate) robots: BTreeMap<String, RobotSpec>,
    pub(crate) objects: BTreeSet<String>,
    pub(crate) containers: BTreeSet<String>,
    pub(crate) spaces: BTreeSet<String>,
    pub(crate) devices: BTreeMap<String, bool>,
    pub(crate) navpoints: BTreeSet<String>,
}

impl WorldIndex {
    pub fn build(cfg: &WorldConfig) -> Result<Self, ConfigError> {
        let mut seen = BTreeSet::new();
        let mut claim = |t: &str| -> Result<(), ConfigError> {
            if !is_valid_token(t) {
                return Err(ConfigError::BadToken(t.to_string()));
            }
            if !seen.insert(t.to_string()) {
                return Err(ConfigError::Duplicate(t.to_string()));
            }
            Ok(())
        };

        for o in &cfg.objects {
            claim(&o.token)?;
        }
        for r in &cfg.robots {
            claim(&r.token)?;
        }
        for s in &cfg.spaces {
            claim(s)?;
        }
        for c in &cfg.containers {
            claim(&c.token)?;
        }
        let containers: BTreeSet<String> = cfg.containers.iter().map(|c| c.token.clone()).collect();
        let mut devices = BTreeMap::new();
        for d in &cfg.devices {
            // a device may double as a container, never as anything else
            if !containers.contains(&d.token) {
                claim(&d.token)?;
            } else if !is_valid_token(&d.token) {
                return Err(ConfigError::BadToken(d.token.clone()));
            }
            if devices.insert(d.token.clone(), d.destructive).is_some() {
                return Err(ConfigError::Duplicate(d.token.clone()));
            }
        }

        let spaces: BTreeSet<String> = cfg.spaces.iter().cloned().collect();
        let is_place = |t: &str| spaces.contains(t) || containers.contains(t) || devices.contains_key(t);

        let mut navpoints = BTreeSet::new();
        for n in &cfg.navpoints {
            if !is_valid_token(n) {
                return Err(ConfigError::BadToken(n.clone()));
            }
            if !is_place(n) {
                return Err(ConfigError::Dangling {
                    owner: "navpoints".into(),
                    expected: "place",
                    token: n.clone(),
                });
            }
            if !navpoints.insert(n.clone()) {
                return Err(ConfigError::Duplicate(n.clone()));
            }
        }
        for place in spaces.iter().chain(containers.iter()).chain(devices.keys()) {
            if !navpoints.contains(place) {
                return Err(ConfigError::MissingNavpoint(place.clone()));
            }
        }

        for o in &cfg.objects {
            if !is_place(&o.place) {
                return Err(ConfigError::Dangling {
                    owner: format!("object {}", o.token),
                    expected: "place",
                    token: o.place.clone(),
                });
            }
        }
        let mut robots = BTreeMap::new();
        for r in &cfg.robots {
            if r.capacity == 0 {
                return Err(ConfigError::ZeroCapacity(r.token.clone()));
            }
            if !navpoints.contains(&r.start) {
                return Err(ConfigError::Dangling {
                    owner: format!("robot {}", r.token),
                    expected: "navpoint",
                    token: r.start.clone(),
                });
            }
            robots.insert(r.token.clone(), r.clone());
        }

        let objects: BTreeSet<String> = cfg.objects.iter().map(|o| o.token.clone()).collect();
        for (i, ev) in cfg.perturbations.iter().enumerate() {
            let owner = format!("perturbations[{i}]");
            match &ev.effect {
                PerturbationEffect::Close { container } => {
                    if !containers.contains(container) {
                        return Err(ConfigError::Dangling {
                            owner,
                            expected: "container",
                            token: container.clone(),
                        });
                    }
                }
                PerturbationEffect::Move { object, place } => {
                    if !objects.contains(object) {
                        return Err(ConfigError::Dangling {
                            owner,
                            expected: "object",
                            token: object.clone(),
                        });
                    }
                    if !is_place(place) {
                        return Err(ConfigError::Dangling {
                            owner,
                            expected: "place",
                            token: place.clone(),
                        });
                    }
                }
            }
        }

        Ok(WorldIndex {
            robots,
            objects,
            containers,
            spaces,
            devices,
            navpoints,
        })
    }

    pub fn is_place(&self, t: &str) -> bool {
        self.spaces.contains(t) || self.containers.contains(t) || self.devices.contains_key(t)
    }

    pub fn is_robot(&self, t: &str) -> bool {
        self.robots.contains_key(t)
    }

    pub fn is_object(&self, t: &str) -> bool {
        self.objects.contains(t)
    }

    pub fn is_container(&self, t: &str) -> bool {
        self.containers.contains(t)
    }

    pub fn is_navpoint(&self, t: &str) -> bool {
        self.navpoints.contains(t)
    }

    pub fn is_destructive(&self, t: &str) -> bool {
        self.devices.get(t).copied().unwrap_or(false)
    }

    pub fn robot(&self, t: &str) -> Option<&RobotSpec> {
        self.robots.get(t)
    }

    pub fn robots(&self) -> impl Iterator<Item = &RobotSpec> {
        self.robots.values()
    }

    /// Primary kind of a token. Shared container/device tokens report
    /// `Container`.
    pub fn kind_of(&self, t: &str) -> Option<EntityKind> {
        if self.robots.contains_key(t) {
            Some(EntityKind::Robot)
        } else if self.objects.contains(t) {
            Some(EntityKind::Object)
        } else if self.containers.contains(t) {
            Some(EntityKind::Container)
        } else if self.spaces.contains(t) {
            Some(EntityKind::Space)
        } else if self.devices.contains_key(t) {
            Some(EntityKind::Device)
        } else if self.navpoints.contains(t) {
            Some(EntityKind::Navpoint)
        } else {
            None
        }
    }

    pub fn knows(&self, t: &str) -> bool {
        self.kind_of(t).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_kitchen_shape() {
        let cfg = WorldConfig::default_kitchen();
        cfg.validate().unwrap();
        assert_eq!(cfg.objects.len(), 10);
        assert_eq!(cfg.containers.len(), 4);
        assert!(cfg.containers.iter().all(|c| !c.open));
        assert_eq!(cfg.spaces.len(), 2);
        assert_eq!(cfg.devices.len(), 3);
        assert_eq!(cfg.robots.len(), 2);
        assert_eq!(cfg.objects.iter().filter(|o| o.filler).count(), 7);
        let mobile: Vec<_> = cfg.robots.iter().filter(|r| r.mobile).collect();
        assert_eq!(mobile.len(), 1);
        assert_eq!(mobile[0].capacity, 2);
    }

    #[test]
    fn dangling_start_navpoint() {
        let mut cfg = WorldConfig::default_kitchen();
        cfg.robots[0].start = "pantry".into();
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::Dangling { token, .. }) if token == "pantry"
        ));
    }

    #[test]
    fn duplicate_across_kinds() {
        let mut cfg = WorldConfig::default_kitchen();
        cfg.objects[0].token = "robot1".into();
        assert_eq!(cfg.validate(), Err(ConfigError::Duplicate("robot1".into())));
    }

    #[test]
    fn place_without_navpoint() {
        let mut cfg = WorldConfig::default_kitchen();
        cfg.navpoints.retain(|n| n != "sink");
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let cfg = WorldConfig::default_kitchen();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(WorldConfig::from_json(&text).unwrap(), cfg);
    }
}
