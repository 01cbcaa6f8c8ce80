use crate::world::{HalfSpace, RobotState, Vec2};

/// Disc avoidance constraint `1 - |dp|^2 / r^2 <= 0` with `r = r_r + r_h`.
pub fn human_constraint(state: &RobotState, human: Vec2, r_robot: f64, r_human: f64) -> f64 {
    let r = r_robot + r_human;
    let d = state.position() - human;
    1.0 - d.dot(d) / (r * r)
}

/// `n · p - b + r_r` per half-space; non-positive when the robot disc fits.
pub fn corridor_constraints(
    state: &RobotState,
    halfspaces: &[HalfSpace],
    r_robot: f64,
) -> Vec<f64> {
    let p = state.position();
    halfspaces
        .iter()
        .map(|h| h.normal.dot(p) - h.offset + r_robot)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_constraint_values() {
        let s = RobotState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(human_constraint(&s, Vec2::new(0.6, 0.0), 0.3, 0.3), 0.0);
        assert_eq!(human_constraint(&s, Vec2::ZERO, 0.3, 0.3), 1.0);
        assert_eq!(human_constraint(&s, Vec2::new(0.0, 1.2), 0.3, 0.3), -3.0);
    }

    #[test]
    fn wall_sign_convention() {
        let wall = [HalfSpace::new(Vec2::new(0.0, 1.0), 2.0)];
        let inside = corridor_constraints(&RobotState::new(0.0, 1.0, 0.0, 0.0), &wall, 0.3);
        assert!((inside[0] + 0.7).abs() < 1e-15);
        let edge = corridor_constraints(&RobotState::new(0.0, 1.7, 0.0, 0.0), &wall, 0.3);
        assert!(edge[0].abs() < 1e-15);
        let out = corridor_constraints(&RobotState::new(0.0, 2.5, 0.0, 0.0), &wall, 0.3);
        assert!(out[0] > 0.0);
    }
}
