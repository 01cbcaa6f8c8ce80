use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Vec2;

/// Second-order unicycle state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in (-pi, pi].
    pub theta: f64,
    /// Forward speed.
    pub v: f64,
}

impl RobotState {
    pub const fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        RobotState { x, y, theta, v }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

/// Linear acceleration and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { a: 0.0, omega: 0.0 };

    pub const fn new(a: f64, omega: f64) -> Self {
        ControlInput { a, omega }
    }
}

/// Box bounds on the control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for InputBounds {
    fn default() -> Self {
        InputBounds {
            a_min: -3.0,
            a_max: 3.0,
            omega_min: -1.5,
            omega_max: 1.5,
        }
    }
}

impl InputBounds {
    pub fn clamp(&self, input: ControlInput) -> ControlInput {
        ControlInput {
            a: input.a.clamp(self.a_min, self.a_max),
            omega: input.omega.clamp(self.omega_min, self.omega_max),
        }
    }

    pub fn contains(&self, input: ControlInput) -> bool {
        (self.a_min..=self.a_max).contains(&input.a)
            && (self.omega_min..=self.omega_max).contains(&input.omega)
    }

    pub fn is_ordered(&self) -> bool {
        self.a_min <= self.a_max && self.omega_min <= self.omega_max
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// One explicit-Euler step of the second-order unicycle.
///
/// The input is used as given; callers are responsible for bounding it.
pub fn unicycle_step(state: &RobotState, input: &ControlInput, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let (sin, cos) = state.theta.sin_cos();
    RobotState {
        x: state.x + dt * state.v * cos,
        y: state.y + dt * state.v * sin,
        theta: normalize_angle(state.theta + dt * input.omega),
        v: state.v + dt * input.a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coasting_straight() {
        let next = unicycle_step(
            &RobotState::new(0.0, 0.0, 0.0, 1.0),
            &ControlInput::ZERO,
            0.1,
        );
        assert_eq!(next, RobotState::new(0.1, 0.0, 0.0, 1.0));
    }

    #[test]
    fn coasting_along_y() {
        let next = unicycle_step(
            &RobotState::new(0.0, 0.0, PI / 2.0, 1.0),
            &ControlInput::ZERO,
            0.1,
        );
        assert!(next.x.abs() < 1e-15);
        assert_eq!(next.y, 0.1);
        assert_eq!(next.theta, PI / 2.0);
        assert_eq!(next.v, 1.0);
    }

    #[test]
    fn acceleration_from_rest_uses_old_speed() {
        let next = unicycle_step(&RobotState::default(), &ControlInput::new(1.0, 0.0), 0.1);
        assert_eq!(next.v, 0.1);
        assert_eq!(next.x, 0.0);
    }

    #[test]
    fn heading_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        let s = unicycle_step(
            &RobotState::new(0.0, 0.0, PI - 0.01, 0.0),
            &ControlInput::new(0.0, 1.0),
            0.1,
        );
        assert!(s.theta > -PI && s.theta <= PI);
        assert!((s.theta - (-PI + 0.09)).abs() < 1e-12);
    }

    #[test]
    fn bounds_clamp() {
        let b = InputBounds::default();
        let c = b.clamp(ControlInput::new(10.0, -10.0));
        assert_eq!(c, ControlInput::new(3.0, -1.5));
        assert!(b.contains(c));
    }
}
