use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, Termination};

/// Navigation metrics of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub collision: bool,
    pub duration: f64,
    pub path_length: f64,
    /// Smallest robot-to-human distance over the episode; infinite when
    /// the scenario has no humans.
    pub min_human_distance: f64,
    pub mean_speed: f64,
    pub mean_abs_accel: f64,
    pub mean_abs_omega: f64,
}

/// Summarizes an episode. Distances are center to center unless
/// `subtract_radii` is set, in which case both radii are removed.
pub fn compute_metrics(record: &EpisodeRecord, subtract_radii: bool) -> Metrics {
    let n = record.steps.len().max(1) as f64;
    let mut positions: Vec<_> = record.steps.iter().map(|s| s.robot.position()).collect();
    positions.push(record.final_robot.position());
    let path_length = positions.windows(2).map(|w| w[0].distance(w[1])).sum();

    let snapshots = record
        .steps
        .iter()
        .map(|s| (s.robot.position(), &s.humans))
        .chain(std::iter::once((
            record.final_robot.position(),
            &record.final_humans,
        )));
    let mut min_d = f64::INFINITY;
    for (p, humans) in snapshots {
        for h in humans {
            min_d = min_d.min(p.distance(h.position));
        }
    }
    if subtract_radii && min_d.is_finite() {
        min_d = (min_d - record.robot_radius - record.human_radius).max(0.0);
    }

    let mean = |f: &dyn Fn(&super::StepLog) -> f64| record.steps.iter().map(f).sum::<f64>() / n;
    Metrics {
        collision: record.termination == Termination::Collision,
        duration: record.duration(),
        path_length,
        min_human_distance: min_d,
        mean_speed: mean(&|s| s.robot.v.abs()),
        mean_abs_accel: mean(&|s| s.input.a.abs()),
        mean_abs_omega: mean(&|s| s.input.omega.abs()),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mpc::PlanStatus;
    use crate::sim::StepLog;
    use crate::world::{ControlInput, Human, RobotState, Vec2};

    fn record(
        states: &[(f64, f64, f64)],
        humans: Vec<Vec<Human>>,
        final_robot: RobotState,
    ) -> EpisodeRecord {
        let steps = states
            .iter()
            .zip(humans)
            .enumerate()
            .map(|(i, (&(x, y, v), hs))| StepLog {
                t: i as f64 * 0.1,
                robot: RobotState::new(x, y, 0.0, v),
                input: ControlInput::new(0.5, -0.25),
                humans: hs,
                spec_digest: Arc::from("d"),
                plan_status: PlanStatus::Converged,
            })
            .collect();
        EpisodeRecord {
            scenario: "synthetic".into(),
            seed: 0,
            dt: 0.1,
            robot_radius: 0.3,
            human_radius: 0.3,
            steps,
            final_robot,
            final_humans: vec![],
            termination: Termination::GoalReached,
            events: vec![],
            incidents: vec![],
        }
    }

    #[test]
    fn straight_line_at_unit_speed() {
        let states: Vec<_> = (0..100).map(|i| (i as f64 * 0.1, 0.0, 1.0)).collect();
        let rec = record(
            &states,
            vec![vec![]; 100],
            RobotState::new(10.0, 0.0, 0.0, 1.0),
        );
        let m = compute_metrics(&rec, false);
        assert!((m.duration - 10.0).abs() < 1e-12);
        assert!((m.path_length - 10.0).abs() < 1e-9);
        assert!((m.mean_speed - 1.0).abs() < 1e-12);
        assert_eq!(m.mean_abs_accel, 0.5);
        assert_eq!(m.mean_abs_omega, 0.25);
        assert_eq!(m.min_human_distance, f64::INFINITY);
        assert!(!m.collision);
    }

    #[test]
    fn passing_human_minimum() {
        let humans: Vec<Vec<Human>> = (0..21)
            .map(|i| {
                vec![Human::new(
                    0,
                    Vec2::new(-2.0 + 0.2 * i as f64, 1.5),
                    Vec2::new(2.0, 0.0),
                )]
            })
            .collect();
        let rec = record(
            &vec![(0.0, 0.0, 0.0); 21],
            humans,
            RobotState::new(0.0, 0.0, 0.0, 0.0),
        );
        let m = compute_metrics(&rec, false);
        assert!((m.min_human_distance - 1.5).abs() < 1e-12);
        let surface = compute_metrics(&rec, true);
        assert!((surface.min_human_distance - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zig_zag_length() {
        // (0,0) -> (3,4) -> (6,0) -> (6,2): 5 + 5 + 2.
        let rec = record(
            &[(0.0, 0.0, 0.0), (3.0, 4.0, 0.0), (6.0, 0.0, 0.0)],
            vec![vec![]; 3],
            RobotState::new(6.0, 2.0, 0.0, 0.0),
        );
        assert!((compute_metrics(&rec, false).path_length - 12.0).abs() < 1e-12);
    }
}
