use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dsl::{
    compose_cost, BuiltinTerm, CostExpr, CostSpec, CostTerm, Parameter, ParameterSet, TermBody, Var,
};

/// Capability a cost term provides, as seen by the routing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Path,
    Goal,
    HumanFollow,
    HumanMax,
    SafeDistance,
}

fn references_human(e: &CostExpr) -> bool {
    let vars = e.vars();
    vars.contains(&Var::OhX) || vars.contains(&Var::OhY)
}

/// Structural classification of one term.
pub fn term_feature(term: &CostTerm) -> Option<Feature> {
    match &term.body {
        TermBody::Builtin(BuiltinTerm::Contour | BuiltinTerm::Lag) => Some(Feature::Path),
        TermBody::Builtin(BuiltinTerm::Goal) => Some(Feature::Goal),
        TermBody::Builtin(_) => None,
        TermBody::Expr(e) => {
            if references_human(e) {
                Some(if e.contains_if_else() {
                    Feature::SafeDistance
                } else if e.contains_division() {
                    Feature::HumanMax
                } else {
                    Feature::HumanFollow
                })
            } else {
                let vars = e.vars();
                let params = e.params();
                if vars.contains(&Var::Ec) || vars.contains(&Var::El) {
                    Some(Feature::Path)
                } else if params.iter().any(|p| p == "goal_x" || p == "goal_y") {
                    Some(Feature::Goal)
                } else {
                    None
                }
            }
        }
    }
}

pub fn spec_features(spec: &CostSpec) -> BTreeSet<Feature> {
    spec.terms().iter().filter_map(term_feature).collect()
}

fn with_terms(terms: Vec<CostTerm>, params: ParameterSet, provenance: &str) -> CostSpec {
    compose_cost(terms, &BTreeMap::new(), params, provenance).expect("reference spec is valid")
}

fn builtins(list: &[BuiltinTerm]) -> Vec<CostTerm> {
    list.iter().copied().map(CostTerm::builtin).collect()
}

const MANDATORY: [BuiltinTerm; 3] = [
    BuiltinTerm::Velocity,
    BuiltinTerm::Accel,
    BuiltinTerm::Omega,
];

/// Path following: contour, lag and the mandatory terms.
pub fn j_path(params: ParameterSet) -> CostSpec {
    let mut t = builtins(&[BuiltinTerm::Contour, BuiltinTerm::Lag]);
    t.extend(builtins(&MANDATORY));
    with_terms(t, params, "Follow the path.")
}

/// Goal reaching.
pub fn j_goal(params: ParameterSet) -> CostSpec {
    let mut t = builtins(&[BuiltinTerm::Goal]);
    t.extend(builtins(&MANDATORY));
    with_terms(t, params, "Reach the goal.")
}

pub const HUMAN_FOLLOW_SOURCE: &str = "(oh_x - px)^2 + (oh_y - py)^2";
pub const HUMAN_MAX_SOURCE: &str = "1/((oh_x - px)^2 + (oh_y - py)^2 + eps)";
pub const SAFE_DISTANCE_SOURCE: &str =
    "if_else((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2, 0, ((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2)^2)";

/// Follow the closest human.
pub fn j_hf(params: ParameterSet) -> CostSpec {
    let mut t = vec![CostTerm::from_source("human_follow", HUMAN_FOLLOW_SOURCE).unwrap()];
    t.extend(builtins(&MANDATORY));
    with_terms(t, params, "Follow the closest human.")
}

/// Maximize the distance to the closest human.
pub fn j_hmax(params: ParameterSet) -> CostSpec {
    let mut t = vec![CostTerm::from_source("human_distance", HUMAN_MAX_SOURCE).unwrap()];
    t.extend(builtins(&MANDATORY));
    with_terms(t, params, "Maximize the distance to the closest human.")
}

/// Goal reaching while keeping at least `d_safe` from the closest human.
pub fn j_sd(mut params: ParameterSet) -> CostSpec {
    if !params.contains("d_safe") {
        params.insert("d_safe", Parameter::tunable(1.0, "m"));
    }
    let mut t = vec![CostTerm::from_source("safe_distance", SAFE_DISTANCE_SOURCE).unwrap()];
    t.extend(builtins(&[BuiltinTerm::Goal]));
    t.extend(builtins(&MANDATORY));
    with_terms(
        t,
        params,
        "Go to the goal while keeping a safe distance from humans.",
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_specs_classify() {
        let p = ParameterSet::navigation_defaults();
        assert_eq!(
            spec_features(&j_path(p.clone())),
            BTreeSet::from([Feature::Path])
        );
        assert_eq!(
            spec_features(&j_goal(p.clone())),
            BTreeSet::from([Feature::Goal])
        );
        assert_eq!(
            spec_features(&j_hf(p.clone())),
            BTreeSet::from([Feature::HumanFollow])
        );
        assert_eq!(
            spec_features(&j_hmax(p.clone())),
            BTreeSet::from([Feature::HumanMax])
        );
        assert_eq!(
            spec_features(&j_sd(p)),
            BTreeSet::from([Feature::Goal, Feature::SafeDistance])
        );
    }
}
