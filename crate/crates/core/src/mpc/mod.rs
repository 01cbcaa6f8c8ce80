//! Multi-seed single-shooting MPC over a composed cost specification.

mod constraints;
mod problem;
mod seeds;
mod solver;

use serde::{Deserialize, Serialize};

use crate::world::{
    ControlInput, HalfSpace, Human, InputBounds, ReferencePath, RobotState, Scenario,
};

pub use constraints::{corridor_constraints, human_constraint};
pub use problem::{stage_cost, StageContext};
pub use seeds::{generate_seeds, Seed, SeedPolicy};
pub use solver::{braking_input, solve, SolveOutput};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MpcError {
    #[error("cost rejected: {0}")]
    CostRejected(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub bounds: InputBounds,
    pub v_max: f64,
    /// Maximum constraint violation accepted as feasible.
    pub tol_g: f64,
    /// Gradient iterations per seed across all penalty levels.
    pub max_iters: usize,
    pub mu0: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    pub armijo_c: f64,
    /// Inner loop stops once the relative merit decrease falls below this.
    pub rel_tol: f64,
    pub seeds: usize,
    /// Extra clearance added to `r_r + r_h` inside the solver only.
    pub human_margin: f64,
    pub parallel: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 30,
            dt: 0.1,
            bounds: InputBounds::default(),
            v_max: 2.5,
            tol_g: 1e-3,
            max_iters: 1000,
            mu0: 10.0,
            mu_factor: 10.0,
            mu_max: 1e5,
            armijo_c: 1e-4,
            rel_tol: 1e-6,
            seeds: 3,
            human_margin: 0.1,
            parallel: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let fail = |m: &str| Err(MpcError::InvalidConfig(m.to_string()));
        if self.horizon < 5 {
            return fail("horizon must be at least 5 stages");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail("dt must be positive");
        }
        if !self.bounds.is_ordered() || self.bounds.a_min > 0.0 || self.bounds.a_max < 0.0 {
            return fail("input bounds must be ordered and contain zero acceleration");
        }
        if !(self.v_max > 0.0) {
            return fail("v_max must be positive");
        }
        if !(self.tol_g > 0.0) {
            return fail("tol_g must be positive");
        }
        if self.seeds == 0 {
            return fail("at least one seed is required");
        }
        if !(self.mu0 > 0.0 && self.mu_factor > 1.0 && self.mu_max >= self.mu0) {
            return fail("penalty schedule must start positive and increase");
        }
        if !(self.human_margin >= 0.0) {
            return fail("human margin must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// One optimized trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub states: Vec<RobotState>,
    pub inputs: Vec<ControlInput>,
    /// Cost without the penalty contribution.
    pub cost: f64,
    pub max_violation: f64,
    pub seed_id: usize,
    pub status: PlanStatus,
    #[serde(skip)]
    pub iterations: usize,
    /// `(mu, merit)` after every accepted step.
    #[serde(skip)]
    pub merit_trace: Vec<(f64, f64)>,
}

impl TrajectoryPlan {
    pub fn is_feasible(&self, tol_g: f64) -> bool {
        self.max_violation <= tol_g
    }
}

/// Everything the solver needs to know about the surroundings.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningWorld {
    pub robot: RobotState,
    pub robot_radius: f64,
    pub humans: Vec<Human>,
    pub path: ReferencePath,
    pub halfspaces: Vec<HalfSpace>,
}

impl PlanningWorld {
    pub fn from_scenario(scenario: &Scenario, robot: RobotState, humans: Vec<Human>) -> Self {
        PlanningWorld {
            robot,
            robot_radius: scenario.robot_radius,
            humans,
            path: scenario.reference_path.clone(),
            halfspaces: scenario.halfspaces().copied().collect(),
        }
    }
}
