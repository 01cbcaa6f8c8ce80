use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::{CostExpr, Var};

/// The term library the cost generator may name instead of writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinTerm {
    Contour,
    Lag,
    Accel,
    Omega,
    Velocity,
    Goal,
}

impl BuiltinTerm {
    pub const ALL: [BuiltinTerm; 6] = [
        BuiltinTerm::Contour,
        BuiltinTerm::Lag,
        BuiltinTerm::Accel,
        BuiltinTerm::Omega,
        BuiltinTerm::Velocity,
        BuiltinTerm::Goal,
    ];

    /// Terms every cost function must contain.
    pub const MANDATORY: [BuiltinTerm; 3] = [
        BuiltinTerm::Accel,
        BuiltinTerm::Omega,
        BuiltinTerm::Velocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinTerm::Contour => "contour",
            BuiltinTerm::Lag => "lag",
            BuiltinTerm::Accel => "accel",
            BuiltinTerm::Omega => "omega",
            BuiltinTerm::Velocity => "velocity",
            BuiltinTerm::Goal => "goal",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            BuiltinTerm::Contour => "squared lateral distance to the reference path",
            BuiltinTerm::Lag => "squared along-path lag behind the reference progress",
            BuiltinTerm::Accel => "squared linear acceleration input",
            BuiltinTerm::Omega => "squared angular velocity input",
            BuiltinTerm::Velocity => "squared deviation from the reference speed v_ref",
            BuiltinTerm::Goal => "squared distance to the goal (goal_x, goal_y)",
        }
    }

    pub fn expr(self) -> CostExpr {
        let var = CostExpr::var;
        match self {
            BuiltinTerm::Contour => var(Var::Ec).pow(2),
            BuiltinTerm::Lag => var(Var::El).pow(2),
            BuiltinTerm::Accel => var(Var::A).pow(2),
            BuiltinTerm::Omega => var(Var::Omega).pow(2),
            BuiltinTerm::Velocity => (var(Var::V) - CostExpr::param("v_ref")).pow(2),
            BuiltinTerm::Goal => {
                (CostExpr::param("goal_x") - var(Var::Px)).pow(2)
                    + (CostExpr::param("goal_y") - var(Var::Py)).pow(2)
            }
        }
    }
}

impl fmt::Display for BuiltinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown builtin term `{0}`")]
pub struct UnknownBuiltin(pub String);

impl FromStr for BuiltinTerm {
    type Err = UnknownBuiltin;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinTerm::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| UnknownBuiltin(s.to_string()))
    }
}

/// Canonical expression of a builtin term by identifier.
pub fn builtin(identifier: &str) -> Result<CostExpr, UnknownBuiltin> {
    identifier.parse::<BuiltinTerm>().map(BuiltinTerm::expr)
}
