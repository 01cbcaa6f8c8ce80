//! Robot dynamics, humans, reference paths and scenarios.

mod geometry;
mod human;
mod path;
mod robot;
mod scenario;

pub use geometry::Vec2;
pub use human::{predict_humans, Human, HumanPrediction, DEFAULT_RADIUS};
pub use path::{path_project, PathProjection, ReferencePath};
pub use robot::{normalize_angle, unicycle_step, ControlInput, InputBounds, RobotState};
pub use scenario::{Corridor, HalfSpace, HumanSpawn, Scenario, Workspace};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid reference path: {0}")]
    InvalidPath(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario document: {0}")]
    Json(#[from] serde_json::Error),
}
