use rayon::prelude::*;

use crate::dsl::{CostSpec, Scratch};
use crate::world::{predict_humans, ControlInput, RobotState};

use super::problem::{spec_v_ref, Evaluation, Problem, StageContext};
use super::{MpcConfig, MpcError, PlanStatus, PlanningWorld, Seed, TrajectoryPlan};

const MAX_BACKTRACKS: usize = 40;
const STEP_TOL: f64 = 1e-7;

/// Result of one control-period solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub best: TrajectoryPlan,
    /// One plan per seed, in seed order.
    pub plans: Vec<TrajectoryPlan>,
}

impl SolveOutput {
    /// First planned input, or the braking input if no plan is feasible.
    pub fn command(&self, config: &MpcConfig, state: &RobotState) -> ControlInput {
        match self.best.status {
            PlanStatus::Infeasible => braking_input(config, state),
            _ => self
                .best
                .inputs
                .first()
                .copied()
                .unwrap_or(ControlInput::ZERO),
        }
    }
}

/// Maximum deceleration that does not reverse, no turning.
pub fn braking_input(config: &MpcConfig, state: &RobotState) -> ControlInput {
    ControlInput::new(config.bounds.a_min.max(-state.v / config.dt), 0.0)
}

fn max_abs(g: &[[f64; 2]]) -> f64 {
    g.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

fn optimize(
    problem: &Problem<'_>,
    seed: &Seed,
    seed_id: usize,
) -> Result<TrajectoryPlan, MpcError> {
    let cfg = problem.config;
    let n = problem.horizon();
    let mut u: Vec<ControlInput> = seed.inputs.clone();
    u.resize(n, u.last().copied().unwrap_or(ControlInput::ZERO));
    problem.project(&mut u);

    let mut scratch = Scratch::default();
    let mut mu = cfg.mu0;
    let mut states = problem.rollout(&u);
    let mut ev = problem.evaluate(&u, &states, mu, &mut scratch)?;
    let mut grad = Vec::with_capacity(n);
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut trial = u.clone();

    let status = loop {
        let mut prev: Option<(Vec<ControlInput>, Vec<[f64; 2]>)> = None;
        let stationary = loop {
            if iters >= cfg.max_iters {
                break false;
            }
            problem.gradient(&u, &states, mu, &mut scratch, &mut grad)?;
            iters += 1;
            let gmax = max_abs(&grad);
            if gmax == 0.0 {
                break true;
            }
            let mut alpha = 0.5 / gmax;
            if let Some((pu, pg)) = &prev {
                let (mut ss, mut sy) = (0.0, 0.0);
                for k in 0..n {
                    let s = [u[k].a - pu[k].a, u[k].omega - pu[k].omega];
                    let y = [grad[k][0] - pg[k][0], grad[k][1] - pg[k][1]];
                    ss += s[0] * s[0] + s[1] * s[1];
                    sy += s[0] * y[0] + s[1] * y[1];
                }
                if sy > 0.0 && ss > 0.0 {
                    alpha = (ss / sy).min(1e3 / gmax);
                }
            }
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                for k in 0..n {
                    trial[k] = ControlInput::new(
                        u[k].a - alpha * grad[k][0],
                        u[k].omega - alpha * grad[k][1],
                    );
                }
                problem.project(&mut trial);
                let mut slope = 0.0;
                let mut step: f64 = 0.0;
                for k in 0..n {
                    let da = trial[k].a - u[k].a;
                    let dw = trial[k].omega - u[k].omega;
                    slope += grad[k][0] * da + grad[k][1] * dw;
                    step = step.max(da.abs()).max(dw.abs());
                }
                if slope >= 0.0 || step < STEP_TOL {
                    break;
                }
                let tstates = problem.rollout(&trial);
                let tev = problem.evaluate(&trial, &tstates, mu, &mut scratch)?;
                if tev.merit <= ev.merit + cfg.armijo_c * slope {
                    accepted = Some((tstates, tev));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((tstates, tev)) = accepted else {
                break true;
            };
            let decrease = ev.merit - tev.merit;
            prev = Some((u.clone(), grad.clone()));
            std::mem::swap(&mut u, &mut trial);
            states = tstates;
            ev = tev;
            trace.push((mu, ev.merit));
            if decrease <= cfg.rel_tol * ev.merit.abs().max(1e-12) {
                break true;
            }
        };
        if ev.max_violation <= cfg.tol_g {
            break if stationary {
                PlanStatus::Converged
            } else {
                PlanStatus::MaxIter
            };
        }
        if mu >= cfg.mu_max || iters >= cfg.max_iters {
            break PlanStatus::Infeasible;
        }
        mu = (mu * cfg.mu_factor).min(cfg.mu_max);
        ev = problem.evaluate(&u, &states, mu, &mut scratch)?;
    };

    let Evaluation {
        cost,
        max_violation,
        ..
    } = ev;
    Ok(TrajectoryPlan {
        states,
        inputs: u,
        cost,
        max_violation,
        seed_id,
        status,
        iterations: iters,
        merit_trace: trace,
    })
}

fn select(plans: &[TrajectoryPlan], tol_g: f64) -> TrajectoryPlan {
    let feasible = plans
        .iter()
        .filter(|p| p.status != PlanStatus::Infeasible && p.is_feasible(tol_g))
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.seed_id.cmp(&b.seed_id)));
    match feasible {
        Some(p) => p.clone(),
        None => plans
            .iter()
            .min_by(|a, b| {
                a.max_violation
                    .total_cmp(&b.max_violation)
                    .then(a.seed_id.cmp(&b.seed_id))
            })
            .map(|p| TrajectoryPlan {
                status: PlanStatus::Infeasible,
                ..p.clone()
            })
            .expect("at least one seed"),
    }
}

/// Optimizes every seed and returns the cheapest feasible plan.
pub fn solve(
    world: &PlanningWorld,
    spec: &CostSpec,
    config: &MpcConfig,
    seeds: &[Seed],
) -> Result<SolveOutput, MpcError> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(MpcError::InvalidConfig("no seeds supplied".into()));
    }
    let predictions = predict_humans(&world.humans, config.horizon, config.dt);
    let radii: Vec<f64> = {
        let mut sorted: Vec<_> = world.humans.iter().map(|h| (h.id, h.radius)).collect();
        sorted.sort_by_key(|(id, _)| *id);
        sorted.into_iter().map(|(_, r)| r).collect()
    };
    let ctx = StageContext::new(
        &world.path,
        &predictions,
        world.robot.position(),
        spec_v_ref(spec, config.v_max),
        config.dt,
    );
    let problem = Problem::new(
        ctx,
        config,
        world.robot,
        spec,
        &world.halfspaces,
        world.robot_radius,
        &radii,
    )?;
    let plans: Vec<TrajectoryPlan> = if config.parallel {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, s)| optimize(&problem, s, i))
            .collect::<Result<_, _>>()?
    } else {
        seeds
            .iter()
            .enumerate()
            .map(|(i, s)| optimize(&problem, s, i))
            .collect::<Result<_, _>>()?
    };
    let best = select(&plans, config.tol_g);
    Ok(SolveOutput { best, plans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{compose_cost, BuiltinTerm, CostTerm, ParameterSet};
    use crate::mpc::{corridor_constraints, generate_seeds, human_constraint};
    use crate::world::{unicycle_step, HalfSpace, Human, ReferencePath, Vec2};
    use std::collections::BTreeMap;

    fn goal_spec(goal: Vec2) -> CostSpec {
        let mut params = ParameterSet::navigation_defaults();
        params.set_goal(goal.x, goal.y);
        params.set_value("v_ref", 1.0);
        compose_cost(
            vec![CostTerm::builtin(BuiltinTerm::Goal)],
            &BTreeMap::new(),
            params,
            "Reach the goal.",
        )
        .unwrap()
    }

    fn open_world(humans: Vec<Human>) -> PlanningWorld {
        PlanningWorld {
            robot: RobotState::new(0.0, 0.0, 0.0, 0.0),
            robot_radius: 0.3,
            humans,
            path: ReferencePath::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]).unwrap(),
            halfspaces: vec![],
        }
    }

    #[test]
    fn reaches_goal_in_empty_world() {
        let cfg = MpcConfig::default();
        let world = open_world(vec![]);
        let spec = goal_spec(Vec2::new(5.0, 0.0));
        let seeds = generate_seeds(&world, &spec, &cfg, None);
        let out = solve(&world, &spec, &cfg, &seeds).unwrap();
        let end = out.best.states.last().unwrap().position();
        assert!(end.distance(Vec2::new(5.0, 0.0)) < 0.5, "end {end:?}");
        assert_ne!(out.best.status, PlanStatus::Infeasible);
        for w in out.best.merit_trace.windows(2) {
            if w[0].0 == w[1].0 {
                assert!(w[1].1 <= w[0].1);
            }
        }
        for (k, u) in out.best.inputs.iter().enumerate() {
            assert!(cfg.bounds.contains(*u));
            assert_eq!(
                out.best.states[k + 1],
                unicycle_step(&out.best.states[k], u, cfg.dt)
            );
        }
        assert!(out
            .best
            .states
            .iter()
            .all(|s| s.v >= 0.0 && s.v <= cfg.v_max + 1e-12));
    }

    #[test]
    fn avoids_static_human_symmetrically() {
        let cfg = MpcConfig::default();
        let human = Human::new(0, Vec2::new(2.5, 0.0), Vec2::ZERO);
        let world = open_world(vec![human.clone()]);
        let spec = goal_spec(Vec2::new(5.0, 0.0));
        let seeds = generate_seeds(&world, &spec, &cfg, None);
        let out = solve(&world, &spec, &cfg, &seeds).unwrap();
        assert_ne!(out.best.status, PlanStatus::Infeasible);
        let r = world.robot_radius + human.radius;
        let clearance = out
            .best
            .states
            .iter()
            .map(|s| s.position().distance(human.position))
            .fold(f64::INFINITY, f64::min);
        assert!(clearance >= r - 1e-3, "clearance {clearance}");
        let (l, rr) = (&out.plans[1], &out.plans[2]);
        assert!((l.cost - rr.cost).abs() <= 0.01 * l.cost.abs().max(rr.cost.abs()));
        for s in &out.best.states[1..] {
            assert!(human_constraint(s, human.position, 0.3, 0.3) <= cfg.tol_g);
        }
    }

    #[test]
    fn wall_ahead_at_speed_brakes() {
        let cfg = MpcConfig::default();
        let mut world = open_world(vec![]);
        world.robot = RobotState::new(0.0, 0.0, 0.0, 2.5);
        world.halfspaces = vec![HalfSpace::new(Vec2::new(1.0, 0.0), 0.5)];
        let spec = goal_spec(Vec2::new(5.0, 0.0));
        assert!(corridor_constraints(&world.robot, &world.halfspaces, 0.3)[0] < 0.0);
        let seeds = generate_seeds(&world, &spec, &cfg, None);
        let out = solve(&world, &spec, &cfg, &seeds).unwrap();
        assert_eq!(out.best.status, PlanStatus::Infeasible);
        assert_eq!(
            out.command(&cfg, &world.robot),
            ControlInput::new(-3.0, 0.0)
        );
    }

    #[test]
    fn serial_and_parallel_agree() {
        let human = Human::new(1, Vec2::new(3.0, 0.4), Vec2::new(-0.8, 0.0));
        let world = open_world(vec![human]);
        let spec = goal_spec(Vec2::new(6.0, 0.0));
        let par = MpcConfig::default();
        let ser = MpcConfig {
            parallel: false,
            ..par.clone()
        };
        let seeds = generate_seeds(&world, &spec, &par, None);
        let a = solve(&world, &spec, &par, &seeds).unwrap();
        let b = solve(&world, &spec, &ser, &seeds).unwrap();
        assert_eq!(a, b);
    }
}
