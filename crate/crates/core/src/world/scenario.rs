use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Human, ReferencePath, RobotState, Vec2, WorldError, DEFAULT_RADIUS};

/// Half-space `normal · p <= offset`, with `normal` of unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec2, offset: f64) -> Self {
        HalfSpace { normal, offset }
    }

    /// Signed distance from `p` to the boundary, positive inside.
    pub fn clearance(&self, p: Vec2) -> f64 {
        self.offset - self.normal.dot(p)
    }
}

/// A convex free-space region given as an intersection of half-spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub halfspaces: Vec<HalfSpace>,
}

/// Axis-aligned workspace rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec2,
    pub max: Vec2,
}

impl Workspace {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Initial condition of one pedestrian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpawn {
    pub position: Vec2,
    pub goal: Vec2,
    pub desired_speed: f64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub robot_start: RobotState,
    #[serde(default = "default_radius")]
    pub robot_radius: f64,
    #[serde(default = "default_radius")]
    pub human_radius: f64,
    pub goal: Vec2,
    pub reference_path: ReferencePath,
    #[serde(default)]
    pub humans_init: Vec<HumanSpawn>,
    #[serde(default)]
    pub corridors: Vec<Corridor>,
    pub bounds: Workspace,
    /// Text stand-in for what an onboard camera would see.
    #[serde(default)]
    pub scene_description: String,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Scenarios shipped with the crate: `corridor` and `open`.
    pub fn builtin(name: &str) -> Option<Scenario> {
        let text = match name {
            "corridor" => include_str!("../../scenarios/corridor.json"),
            "open" => include_str!("../../scenarios/open.json"),
            _ => return None,
        };
        Some(Self::from_json(text).expect("builtin scenario is valid"))
    }

    pub fn halfspaces(&self) -> impl Iterator<Item = &HalfSpace> {
        self.corridors.iter().flat_map(|c| c.halfspaces.iter())
    }

    /// Humans at t=0, walking at their desired speed toward their goals.
    pub fn initial_humans(&self) -> Vec<Human> {
        self.humans_init
            .iter()
            .enumerate()
            .map(|(i, spawn)| Human {
                id: i as u32,
                position: spawn.position,
                velocity: (spawn.goal - spawn.position).normalized() * spawn.desired_speed,
                radius: self.human_radius,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let fail = |msg: String| Err(WorldError::InvalidScenario(msg));
        if !(self.robot_radius > 0.0 && self.human_radius > 0.0) {
            return fail("radii must be positive".into());
        }
        if !self.robot_start.is_finite() {
            return fail("robot_start is not finite".into());
        }
        if self.bounds.min.x >= self.bounds.max.x || self.bounds.min.y >= self.bounds.max.y {
            return fail("bounds rectangle is empty".into());
        }
        if !self.bounds.contains(self.goal) {
            return fail("goal lies outside the workspace".into());
        }
        for hs in self.halfspaces() {
            if (hs.normal.norm() - 1.0).abs() > 1e-6 {
                return fail(format!(
                    "half-space normal {:?} is not unit length",
                    hs.normal
                ));
            }
            if hs.clearance(self.robot_start.position()) - self.robot_radius <= 0.0 {
                return fail("robot_start violates a corridor half-space".into());
            }
        }
        let contact = self.robot_radius + self.human_radius;
        for (i, h) in self.humans_init.iter().enumerate() {
            if !(h.desired_speed >= 0.0) || !h.position.is_finite() || !h.goal.is_finite() {
                return fail(format!("human {i} has an invalid spawn"));
            }
            if h.position.distance(self.robot_start.position()) <= contact {
                return fail(format!("human {i} overlaps the robot start"));
            }
        }
        Ok(())
    }
}
