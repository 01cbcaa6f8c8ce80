use langnav_core::assistants::{j_goal, j_path};
use langnav_core::dsl::{CostSpec, ParameterSet};
use langnav_core::mpc::{
    corridor_constraints, generate_seeds, human_constraint, solve, MpcConfig, PlanStatus,
    PlanningWorld,
};
use langnav_core::world::{unicycle_step, HalfSpace, Human, ReferencePath, RobotState, Vec2};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Scene {
    world: PlanningWorld,
    goal_task: bool,
}

fn scene() -> impl Strategy<Value = Scene> {
    let human = (2.0..9.0f64, -1.8..1.8f64, -1.3..1.3f64, -0.5..0.5f64);
    (
        -0.5..0.5f64,
        -0.6..0.6f64,
        0.0..2.0f64,
        prop::collection::vec(human, 0..4),
        prop::bool::ANY,
        prop::bool::ANY,
    )
        .prop_map(|(y0, theta, v, humans, walls, goal_task)| {
            let robot = RobotState::new(0.0, y0, theta, v);
            let humans = humans
                .into_iter()
                .enumerate()
                .map(|(i, (x, y, vx, vy))| Human::new(i as u32, Vec2::new(x, y), Vec2::new(vx, vy)))
                .collect();
            let halfspaces = if walls {
                vec![
                    HalfSpace::new(Vec2::new(0.0, 1.0), 2.5),
                    HalfSpace::new(Vec2::new(0.0, -1.0), 2.5),
                ]
            } else {
                vec![]
            };
            Scene {
                world: PlanningWorld {
                    robot,
                    robot_radius: 0.3,
                    humans,
                    path: ReferencePath::new(vec![Vec2::new(0.0, 0.0), Vec2::new(12.0, 0.0)])
                        .unwrap(),
                    halfspaces,
                },
                goal_task,
            }
        })
}

fn spec_for(scene: &Scene) -> CostSpec {
    let mut params = ParameterSet::navigation_defaults();
    params.set_goal(8.0, 0.0);
    if scene.goal_task {
        j_goal(params)
    } else {
        j_path(params)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn serial_and_parallel_select_the_same_plan(s in scene()) {
        let spec = spec_for(&s);
        let par = MpcConfig::default();
        let ser = MpcConfig { parallel: false, ..par.clone() };
        let seeds = generate_seeds(&s.world, &spec, &par, None);
        let a = solve(&s.world, &spec, &par, &seeds).unwrap();
        let b = solve(&s.world, &spec, &ser, &seeds).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn plans_respect_solver_contracts(s in scene()) {
        let spec = spec_for(&s);
        let cfg = MpcConfig::default();
        let seeds = generate_seeds(&s.world, &spec, &cfg, None);
        let out = solve(&s.world, &spec, &cfg, &seeds).unwrap();
        for plan in &out.plans {
            prop_assert_eq!(plan.states[0], s.world.robot);
            prop_assert_eq!(plan.states.len(), cfg.horizon + 1);
            for (k, u) in plan.inputs.iter().enumerate() {
                prop_assert!(cfg.bounds.contains(*u), "{u:?}");
                prop_assert_eq!(plan.states[k + 1], unicycle_step(&plan.states[k], u, cfg.dt));
            }
            for w in plan.merit_trace.windows(2) {
                if w[0].0 == w[1].0 {
                    prop_assert!(w[1].1 <= w[0].1, "merit rose from {} to {} at mu {}", w[0].1, w[1].1, w[0].0);
                }
            }
            if plan.status == PlanStatus::Converged {
                let r_r = s.world.robot_radius;
                for (k, st) in plan.states.iter().enumerate().skip(1) {
                    for h in &s.world.humans {
                        let p = h.position + h.velocity * (k as f64 * cfg.dt);
                        prop_assert!(human_constraint(st, p, r_r, h.radius) <= cfg.tol_g);
                    }
                    for g in corridor_constraints(st, &s.world.halfspaces, r_r) {
                        prop_assert!(g <= cfg.tol_g);
                    }
                }
            }
        }
    }
}

#[test]
fn scaling_weights_scales_cost_and_keeps_trajectory() {
    let world = PlanningWorld {
        robot: RobotState::new(0.0, 0.4, 0.2, 0.5),
        robot_radius: 0.3,
        humans: vec![],
        path: ReferencePath::new(vec![Vec2::new(0.0, 0.0), Vec2::new(12.0, 0.0)]).unwrap(),
        halfspaces: vec![],
    };
    let mut params = ParameterSet::navigation_defaults();
    params.set_goal(6.0, 1.0);
    let cfg = MpcConfig::default();
    for base in [j_path(params.clone()), j_goal(params)] {
        let seeds = generate_seeds(&world, &base, &cfg, None);
        let reference = solve(&world, &base, &cfg, &seeds).unwrap().best;
        for lambda in [0.5, 2.0, 4.0] {
            let scaled = base.scaled(lambda).unwrap();
            let out = solve(&world, &scaled, &cfg, &seeds).unwrap().best;
            let rel = (out.cost - lambda * reference.cost).abs() / (lambda * reference.cost);
            assert!(
                rel < 1e-3,
                "{}: cost {} vs {}",
                base.provenance(),
                out.cost,
                lambda * reference.cost
            );
            for (a, b) in out.states.iter().zip(&reference.states) {
                assert!(
                    a.position().distance(b.position()) < 1e-3,
                    "lambda {lambda}: {a:?} vs {b:?}"
                );
            }
        }
    }
}
