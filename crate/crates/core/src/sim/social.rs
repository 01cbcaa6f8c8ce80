use serde::{Deserialize, Serialize};

use crate::world::{HalfSpace, Human, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialForceParams {
    /// Walking speed for pedestrians created without an explicit one.
    pub desired_speed: f64,
    /// Relaxation time toward the desired velocity [s].
    pub tau: f64,
    /// Agent repulsion strength [m/s²].
    pub a: f64,
    /// Agent repulsion range [m].
    pub b: f64,
    pub wall_a: f64,
    pub wall_b: f64,
    pub max_speed: f64,
    /// Distance at which a pedestrian counts as arrived and stops.
    pub goal_tolerance: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        SocialForceParams {
            desired_speed: 1.3,
            tau: 0.5,
            a: 2.0,
            b: 0.3,
            wall_a: 2.0,
            wall_b: 0.3,
            max_speed: 1.8,
            goal_tolerance: 0.2,
        }
    }
}

impl SocialForceParams {
    pub fn is_valid(&self) -> bool {
        [
            self.desired_speed,
            self.tau,
            self.a,
            self.b,
            self.wall_a,
            self.wall_b,
            self.max_speed,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
            && self.goal_tolerance >= 0.0
    }
}

/// A simulated human with somewhere to go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub human: Human,
    pub goal: Vec2,
    pub desired_speed: f64,
}

impl Pedestrian {
    pub fn desired_velocity(&self, params: &SocialForceParams) -> Vec2 {
        let to_goal = self.goal - self.human.position;
        if to_goal.norm() <= params.goal_tolerance {
            Vec2::ZERO
        } else {
            to_goal.normalized() * self.desired_speed
        }
    }
}

/// `strength * exp((r_sum - d) / range)` along `dir`.
fn repulsion(strength: f64, range: f64, r_sum: f64, d: f64, dir: Vec2) -> Vec2 {
    dir * (strength * ((r_sum - d) / range).exp())
}

/// The robot as other agents see it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotDisc {
    pub position: Vec2,
    pub radius: f64,
}

/// Acceleration acting on pedestrian `i`.
pub fn social_force(
    peds: &[Pedestrian],
    i: usize,
    robot: Option<RobotDisc>,
    walls: &[HalfSpace],
    params: &SocialForceParams,
) -> Vec2 {
    let me = &peds[i];
    let p = me.human.position;
    let mut f = (me.desired_velocity(params) - me.human.velocity) * (1.0 / params.tau);
    for (j, other) in peds.iter().enumerate() {
        if j == i {
            continue;
        }
        let delta = p - other.human.position;
        f += repulsion(
            params.a,
            params.b,
            me.human.radius + other.human.radius,
            delta.norm(),
            delta.normalized(),
        );
    }
    if let Some(r) = robot {
        let delta = p - r.position;
        f += repulsion(
            params.a,
            params.b,
            me.human.radius + r.radius,
            delta.norm(),
            delta.normalized(),
        );
    }
    for w in walls {
        f += repulsion(
            params.wall_a,
            params.wall_b,
            me.human.radius,
            w.clearance(p),
            -w.normal,
        );
    }
    f
}

/// Advances every pedestrian by `dt` with symplectic Euler: velocity first,
/// clamped to `max_speed`, then position with the new velocity.
pub fn social_force_step(
    peds: &[Pedestrian],
    robot: Option<RobotDisc>,
    walls: &[HalfSpace],
    params: &SocialForceParams,
    dt: f64,
) -> Vec<Pedestrian> {
    (0..peds.len())
        .map(|i| {
            let f = social_force(peds, i, robot, walls, params);
            let mut next = peds[i].clone();
            let mut v = next.human.velocity + f * dt;
            let speed = v.norm();
            if speed > params.max_speed {
                v = v * (params.max_speed / speed);
            }
            next.human.velocity = v;
            next.human.position += v * dt;
            next
        })
        .collect()
}
