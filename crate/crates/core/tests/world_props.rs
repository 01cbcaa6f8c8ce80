use std::f64::consts::PI;

use langnav_core::world::{
    normalize_angle, path_project, predict_humans, unicycle_step, ControlInput, Human,
    ReferencePath, RobotState, Vec2,
};
use proptest::prelude::*;

type Ode = [f64; 4];

fn rhs(s: Ode, u: &ControlInput) -> Ode {
    [s[3] * s[2].cos(), s[3] * s[2].sin(), u.omega, u.a]
}

fn rk4(state: &RobotState, u: &ControlInput, dt: f64) -> Ode {
    let s = [state.x, state.y, state.theta, state.v];
    let add = |a: Ode, b: Ode, h: f64| {
        [
            a[0] + h * b[0],
            a[1] + h * b[1],
            a[2] + h * b[2],
            a[3] + h * b[3],
        ]
    };
    let k1 = rhs(s, u);
    let k2 = rhs(add(s, k1, dt / 2.0), u);
    let k3 = rhs(add(s, k2, dt / 2.0), u);
    let k4 = rhs(add(s, k3, dt), u);
    let mut out = s;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn one_step_error(state: &RobotState, u: &ControlInput, dt: f64) -> f64 {
    let e = unicycle_step(state, u, dt);
    let r = rk4(state, u, dt);
    let dtheta = normalize_angle(e.theta - r[2]);
    ((e.x - r[0]).powi(2) + (e.y - r[1]).powi(2) + dtheta.powi(2) + (e.v - r[3]).powi(2)).sqrt()
}

fn vec2() -> impl Strategy<Value = Vec2> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn polyline() -> impl Strategy<Value = ReferencePath> {
    prop::collection::vec(vec2(), 2..7).prop_filter_map("coincident waypoints", |pts| {
        pts.windows(2)
            .all(|w| w[0].distance(w[1]) > 1e-3)
            .then(|| ReferencePath::new(pts).ok())
            .flatten()
    })
}

proptest! {
    #[test]
    fn euler_error_shrinks_with_step(
        x in -5.0..5.0f64, y in -5.0..5.0f64, theta in -PI..PI, v in 0.0..2.5f64,
        a in -3.0..3.0f64, omega in -1.5..1.5f64,
    ) {
        let s = RobotState::new(x, y, theta, v);
        let u = ControlInput::new(a, omega);
        let coarse = one_step_error(&s, &u, 0.1);
        let fine = one_step_error(&s, &u, 0.05);
        prop_assume!(coarse > 1e-12);
        prop_assert!(fine <= coarse / 2.0, "dt=0.1: {coarse}, dt=0.05: {fine}");
    }

    #[test]
    fn heading_stays_in_half_open_interval(theta in -50.0..50.0f64, omega in -1.5..1.5f64, near in prop::bool::ANY) {
        let theta = if near { PI - 1e-12 } else { theta };
        let s = unicycle_step(&RobotState::new(0.0, 0.0, theta, 1.0), &ControlInput::new(0.0, omega), 0.1);
        prop_assert!(s.theta > -PI && s.theta <= PI, "{}", s.theta);
        let n = normalize_angle(theta);
        prop_assert!(n > -PI && n <= PI);
        prop_assert!((n.cos() - theta.cos()).abs() < 1e-9 && (n.sin() - theta.sin()).abs() < 1e-9);
    }

    #[test]
    fn constant_velocity_prediction_is_exact(
        humans in prop::collection::vec((vec2(), vec2()), 0..5),
        horizon in 1usize..40,
    ) {
        let humans: Vec<Human> = humans.into_iter().enumerate()
            .map(|(i, (p, v))| Human::new(i as u32, p, v))
            .collect();
        let dt = 0.1;
        let preds = predict_humans(&humans, horizon, dt);
        prop_assert_eq!(preds.len(), humans.len());
        for (h, pred) in humans.iter().zip(&preds) {
            prop_assert_eq!(pred.human_id, h.id);
            prop_assert_eq!(pred.positions.len(), horizon + 1);
            for (k, p) in pred.positions.iter().enumerate() {
                let t = k as f64 * dt;
                let exact = Vec2::new(h.position.x + h.velocity.x * t, h.position.y + h.velocity.y * t);
                prop_assert!(p.distance(exact) <= 1e-12 * (1.0 + exact.norm()), "{p:?} vs {exact:?}");
            }
        }
    }

    #[test]
    fn projection_is_global_minimum(path in polyline(), q in vec2()) {
        let proj = path_project(&path, q);
        let d = proj.closest.distance(q);
        let total = path.length();
        let brute = (0..=1000)
            .map(|i| path.point_at(total * i as f64 / 1000.0).0.distance(q))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(d <= brute + 1e-9, "projection {d} vs sampled {brute}");
        let (at_s, _) = path.point_at(proj.s);
        prop_assert!(at_s.distance(proj.closest) < 1e-9);
    }
}
