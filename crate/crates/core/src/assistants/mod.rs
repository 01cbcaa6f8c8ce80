//! The language-model assistant pipeline: capability routing, cost
//! generation, camera guidance and weight retrieval.

mod client;
pub mod corpus;
mod fault;
mod format;
mod library;
mod live;
mod mock;
mod pipeline;
mod prompts;
mod replay;
mod worker;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use client::{request_digest, ChatTurn, LlmClient, LlmError};
pub use fault::{Fault, FaultyClient};
pub use format::{parse_decision, parse_manifest, parse_ratings, CostManifest, WeightAnswer};
pub use library::{
    j_goal, j_hf, j_hmax, j_path, j_sd, spec_features, term_feature, Feature, HUMAN_FOLLOW_SOURCE,
    HUMAN_MAX_SOURCE, SAFE_DISTANCE_SOURCE,
};
pub use live::LiveBackend;
pub use mock::{query_features, MockBackend};
pub use pipeline::{
    camera_adapt, generate_cost, retrieve_weights, route, ActiveSpec, Clock, Pipeline,
    PipelineOutcome, RetrievedWeights, SpecHandle,
};
pub use prompts::PromptSet;
pub use replay::{RecordingBackend, ReplayBackend};
pub use worker::PipelineWorker;

use crate::dsl::CostSpecError;

/// Rating every term starts with.
pub const INITIAL_RATING: u8 = 5;
pub const MAX_RATING: u8 = 10;

/// A natural-language instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub index: u64,
    pub text: String,
    /// Seconds on the caller's clock.
    pub received_at: f64,
}

impl Query {
    pub fn new(
        index: u64,
        text: impl Into<String>,
        received_at: f64,
    ) -> Result<Self, AssistantError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(AssistantError::EmptyQuery);
        }
        Ok(Query {
            index,
            text,
            received_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteKind {
    GenerateNewCost,
    AdaptToEnvironment,
    UpdateParameters,
}

impl RouteKind {
    pub fn token(self) -> &'static str {
        match self {
            RouteKind::GenerateNewCost => "GENERATE_NEW_COST",
            RouteKind::AdaptToEnvironment => "ADAPT_TO_ENVIRONMENT",
            RouteKind::UpdateParameters => "UPDATE_PARAMETERS",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() {
                    c.to_ascii_uppercase()
                } else {
                    '_'
                }
            })
            .collect();
        [
            RouteKind::GenerateNewCost,
            RouteKind::AdaptToEnvironment,
            RouteKind::UpdateParameters,
        ]
        .into_iter()
        .find(|k| k.token() == norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub kind: RouteKind,
    pub rationale: String,
}

/// Integer importance per term name, each in `0..=10`.
pub type ImportanceRatings = BTreeMap<String, u8>;

/// Uniform initial ratings for every term of a spec.
pub fn initial_ratings<'a>(names: impl IntoIterator<Item = &'a str>) -> ImportanceRatings {
    names
        .into_iter()
        .map(|n| (n.to_string(), INITIAL_RATING))
        .collect()
}

/// `w = z / mean(z)`.
pub fn ratings_to_weights(z: &ImportanceRatings) -> Result<BTreeMap<String, f64>, AssistantError> {
    let total: u32 = z.values().map(|&v| v as u32).sum();
    if total == 0 {
        return Err(AssistantError::AllZeroRatings);
    }
    let n = z.len() as f64;
    Ok(z.iter()
        .map(|(k, &v)| (k.clone(), v as f64 * n / total as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Capability,
    CostGen,
    Camera,
    WeightRet,
    Applied,
    Rejected,
    /// A queued query was superseded by a newer one.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub query_index: u64,
    pub stage: Stage,
    pub detail: String,
    /// Seconds since the pipeline started on this query.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssistantError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("all importance ratings are zero")]
    AllZeroRatings,
    #[error("language model transport failed: {0}")]
    Transport(#[from] LlmError),
    #[error("cost rejected: {0}")]
    CostRejected(String),
    #[error("invalid cost specification: {0}")]
    Spec(#[from] CostSpecError),
    #[error("unparseable {stage} response: {detail}")]
    Unparseable { stage: &'static str, detail: String },
    #[error("no scene description available")]
    NoSceneDescription,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(pairs: &[(&str, u8)]) -> ImportanceRatings {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn uniform_ratings_give_unit_weights() {
        let w =
            ratings_to_weights(&z(&[("a", 5), ("b", 5), ("c", 5), ("d", 5), ("e", 5)])).unwrap();
        assert!(w.values().all(|&x| x == 1.0));
    }

    #[test]
    fn ten_five_zero() {
        let w = ratings_to_weights(&z(&[("a", 10), ("b", 5), ("c", 0)])).unwrap();
        assert_eq!(w["a"], 2.0);
        assert_eq!(w["b"], 1.0);
        assert_eq!(w["c"], 0.0);
    }

    #[test]
    fn all_zero_is_refused() {
        assert_eq!(
            ratings_to_weights(&z(&[("a", 0), ("b", 0)])),
            Err(AssistantError::AllZeroRatings)
        );
        assert_eq!(
            ratings_to_weights(&z(&[])),
            Err(AssistantError::AllZeroRatings)
        );
    }

    #[test]
    fn route_tokens() {
        assert_eq!(
            RouteKind::from_token("generate new cost"),
            Some(RouteKind::GenerateNewCost)
        );
        assert_eq!(
            RouteKind::from_token("UPDATE_PARAMETERS"),
            Some(RouteKind::UpdateParameters)
        );
        assert_eq!(RouteKind::from_token("maybe"), None);
    }

    #[test]
    fn empty_query_rejected() {
        assert_eq!(Query::new(0, "  ", 0.0), Err(AssistantError::EmptyQuery));
    }
}
