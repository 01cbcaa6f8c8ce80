use serde::{Deserialize, Serialize};

use crate::dsl::CostSpec;
use crate::world::{normalize_angle, unicycle_step, ControlInput, RobotState, Vec2};

use super::problem::spec_v_ref;
use super::{MpcConfig, PlanningWorld, TrajectoryPlan};

/// Warm-start generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedPolicy {
    StraightToReference,
    PassLeftOfNearestHuman,
    PassRightOfNearestHuman,
    PreviousSolutionShifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub policy: SeedPolicy,
    pub inputs: Vec<ControlInput>,
}

const HEADING_GAIN: f64 = 2.0;
const SPEED_TIME_CONSTANT: f64 = 0.5;

/// Pure-pursuit rollout toward a per-stage target point.
fn pursue(
    world: &PlanningWorld,
    config: &MpcConfig,
    v_target: f64,
    mut target: impl FnMut(usize, &RobotState) -> Vec2,
) -> Vec<ControlInput> {
    let b = &config.bounds;
    let mut x = world.robot;
    let mut out = Vec::with_capacity(config.horizon);
    for k in 0..config.horizon {
        let t = target(k, &x);
        let d = t - x.position();
        let err = if d.norm_squared() > 1e-12 {
            normalize_angle(d.y.atan2(d.x) - x.theta)
        } else {
            0.0
        };
        let u = b.clamp(ControlInput::new(
            (v_target - x.v) / SPEED_TIME_CONSTANT,
            HEADING_GAIN * err,
        ));
        x = unicycle_step(&x, &u, config.dt);
        out.push(u);
    }
    out
}

/// Where the straight seed steers: a lookahead point on the path, or the
/// goal when the cost tracks a goal without path terms.
fn reference_target(world: &PlanningWorld, spec: &CostSpec, x: &RobotState) -> Vec2 {
    let tracks_path = spec.has_term("contour") || spec.has_term("lag");
    if !tracks_path && spec.has_term("goal") {
        if let (Some(gx), Some(gy)) = (spec.params().get("goal_x"), spec.params().get("goal_y")) {
            return Vec2::new(gx, gy);
        }
    }
    let proj = world.path.project(x.position());
    let lookahead = x.v.max(1.0);
    world.path.point_at(proj.s + lookahead).0
}

fn nearest_human(world: &PlanningWorld) -> Option<usize> {
    let p = world.robot.position();
    (0..world.humans.len()).min_by(|&i, &j| {
        let (a, b) = (&world.humans[i], &world.humans[j]);
        (a.position - p)
            .norm_squared()
            .total_cmp(&(b.position - p).norm_squared())
            .then(a.id.cmp(&b.id))
    })
}

/// Warm starts for one solve: `config.seeds` generated sequences followed
/// by the shifted previous solution when one exists.
pub fn generate_seeds(
    world: &PlanningWorld,
    spec: &CostSpec,
    config: &MpcConfig,
    previous: Option<&TrajectoryPlan>,
) -> Vec<Seed> {
    let v_target = spec_v_ref(spec, config.v_max);
    let straight = pursue(world, config, v_target, |_, x| {
        reference_target(world, spec, x)
    });
    let mut seeds = Vec::with_capacity(config.seeds + 1);
    match nearest_human(world) {
        None => {
            for _ in 0..config.seeds {
                seeds.push(Seed {
                    policy: SeedPolicy::StraightToReference,
                    inputs: straight.clone(),
                });
            }
        }
        Some(h) => {
            let human = &world.humans[h];
            let offset = 2.0 * (world.robot_radius + human.radius);
            let pass = |side: f64| {
                pursue(world, config, v_target, |k, x| {
                    let o = human.position + human.velocity * (k as f64 * config.dt);
                    let to_human = o - x.position();
                    if to_human.dot(x.heading()) > 0.0 {
                        o + to_human.normalized().perp() * (side * offset)
                    } else {
                        reference_target(world, spec, x)
                    }
                })
            };
            let cycle = [
                (SeedPolicy::StraightToReference, straight),
                (SeedPolicy::PassLeftOfNearestHuman, pass(1.0)),
                (SeedPolicy::PassRightOfNearestHuman, pass(-1.0)),
            ];
            for i in 0..config.seeds {
                let (policy, inputs) = &cycle[i % cycle.len()];
                seeds.push(Seed {
                    policy: *policy,
                    inputs: inputs.clone(),
                });
            }
        }
    }
    if let Some(prev) = previous.filter(|p| !p.inputs.is_empty()) {
        let mut inputs: Vec<_> = prev.inputs.iter().skip(1).copied().collect();
        let last = *prev.inputs.last().unwrap();
        inputs.resize(config.horizon, last);
        seeds.push(Seed {
            policy: SeedPolicy::PreviousSolutionShifted,
            inputs,
        });
    }
    seeds
}
