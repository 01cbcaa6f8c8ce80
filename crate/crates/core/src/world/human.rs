use serde::{Deserialize, Serialize};

use super::Vec2;

/// Default disc radius for humans and the robot.
pub const DEFAULT_RADIUS: f64 = 0.3;

/// A pedestrian modelled as a disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Human {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl Human {
    pub fn new(id: u32, position: Vec2, velocity: Vec2) -> Self {
        Human {
            id,
            position,
            velocity,
            radius: DEFAULT_RADIUS,
        }
    }
}

/// Predicted positions for stages `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanPrediction {
    pub human_id: u32,
    pub positions: Vec<Vec2>,
}

/// Constant-velocity extrapolation of every human over the horizon.
///
/// Output order follows ascending human id.
pub fn predict_humans(humans: &[Human], horizon: usize, dt: f64) -> Vec<HumanPrediction> {
    let mut out: Vec<HumanPrediction> = humans
        .iter()
        .map(|h| HumanPrediction {
            human_id: h.id,
            positions: (0..=horizon)
                .map(|k| h.position + h.velocity * (k as f64 * dt))
                .collect(),
        })
        .collect();
    out.sort_by_key(|p| p.human_id);
    out
}
