//! Query corpus for evaluating the assistants, and its scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::{BuiltinTerm, CostSpec, ParameterSet, TermBody};

use super::{
    generate_cost, initial_ratings, j_goal, j_hf, j_hmax, j_path, j_sd, ratings_to_weights,
    retrieve_weights, route, spec_features, Feature, LlmClient, PromptSet, RouteKind,
};

/// Builds a reference spec by name: `J_path`, `J_goal`, `J_hf`, `J_hmax`
/// or `J_sd`.
pub fn reference_spec(name: &str, params: ParameterSet) -> Option<CostSpec> {
    Some(match name {
        "J_path" => j_path(params),
        "J_goal" => j_goal(params),
        "J_hf" => j_hf(params),
        "J_hmax" => j_hmax(params),
        "J_sd" => j_sd(params),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityCase {
    pub id: String,
    pub query: String,
    /// Reference spec name to expected route token.
    pub expected: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum ShapeCheck {
    /// The term names equal this set.
    Terms { names: Vec<String> },
    /// Some term provides this capability.
    Feature { feature: Feature },
    /// The parameter exists and is tunable.
    TunableParam { name: String },
    /// A conditional expression term references the parameter.
    ConditionalUsing { param: String },
}

impl ShapeCheck {
    pub fn holds(&self, spec: &CostSpec) -> bool {
        match self {
            ShapeCheck::Terms { names } => {
                let mut want: Vec<&str> = names.iter().map(String::as_str).collect();
                let mut have = spec.term_names();
                want.sort_unstable();
                have.sort_unstable();
                want == have
            }
            ShapeCheck::Feature { feature } => spec_features(spec).contains(feature),
            ShapeCheck::TunableParam { name } => {
                spec.params().entry(name).is_some_and(|p| p.tunable)
            }
            ShapeCheck::ConditionalUsing { param } => spec.terms().iter().any(|t| match &t.body {
                TermBody::Expr(e) => e.contains_if_else() && e.params().iter().any(|p| p == param),
                TermBody::Builtin(_) => false,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationCase {
    pub id: String,
    pub query: String,
    /// Reference spec active before the query.
    pub from: String,
    pub checks: Vec<ShapeCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Param,
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub target: Target,
    pub name: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCase {
    pub id: String,
    pub query: String,
    pub spec: String,
    pub checks: Vec<DirectionCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub capability: Vec<CapabilityCase>,
    pub generation: Vec<GenerationCase>,
    pub weights: Vec<WeightCase>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed corpus: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("corpus case {case} names unknown spec `{spec}`")]
    UnknownSpec { case: String, spec: String },
    #[error("corpus case {case} expects unknown route `{route}`")]
    UnknownRoute { case: String, route: String },
}

const SHIPPED: &str = include_str!("../../corpus/assistants.json");

impl Corpus {
    /// The C1–C5, G1–G6 and W1–W6 query sets.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED).expect("shipped corpus is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let c: Corpus = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let known = |case: &str, spec: &str| {
            if reference_spec(spec, ParameterSet::navigation_defaults()).is_some() {
                Ok(())
            } else {
                Err(CorpusError::UnknownSpec {
                    case: case.into(),
                    spec: spec.into(),
                })
            }
        };
        for c in &self.capability {
            for (spec, route) in &c.expected {
                known(&c.id, spec)?;
                if RouteKind::from_token(route).is_none() {
                    return Err(CorpusError::UnknownRoute {
                        case: c.id.clone(),
                        route: route.clone(),
                    });
                }
            }
        }
        for g in &self.generation {
            known(&g.id, &g.from)?;
        }
        for w in &self.weights {
            known(&w.id, &w.spec)?;
        }
        Ok(())
    }
}

/// Success count for one corpus case, optionally against one spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub assistant: String,
    pub case: String,
    /// Reference spec active before the query.
    pub spec: String,
    pub successes: u32,
    pub trials: u32,
    /// Last observed outcome, for diagnostics.
    pub observed: String,
}

impl EvalRow {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn all_perfect(&self) -> bool {
        self.rows.iter().all(|r| r.successes == r.trials)
    }

    pub fn rows_for<'a>(&'a self, assistant: &'a str) -> impl Iterator<Item = &'a EvalRow> + 'a {
        self.rows.iter().filter(move |r| r.assistant == assistant)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:<5} {:<7} {:>6} {:>6}  {}\n",
            "assistant", "case", "spec", "rate", "n", "last outcome"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:<5} {:<7} {:>6.2} {:>6}  {}",
                r.assistant,
                r.case,
                r.spec,
                r.rate(),
                r.trials,
                r.observed
            );
        }
        out
    }
}

/// Runs every case `repetitions` times. Each trial gets a fresh client.
pub fn evaluate(
    corpus: &Corpus,
    repetitions: u32,
    prompts: &PromptSet,
    new_client: &mut dyn FnMut() -> Box<dyn LlmClient>,
) -> EvalReport {
    let params = ParameterSet::navigation_defaults;
    let mut rows = Vec::new();

    for c in &corpus.capability {
        for (spec_name, expected) in &c.expected {
            let spec = reference_spec(spec_name, params()).expect("validated");
            let expected = RouteKind::from_token(expected).expect("validated");
            let mut row = row("capability", &c.id, spec_name, repetitions);
            for _ in 0..repetitions {
                let mut client = new_client();
                let outcome = route(client.as_mut(), prompts, &mut Vec::new(), &c.query, &spec);
                row.observed = match &outcome {
                    Ok(d) => d.kind.token().to_string(),
                    Err(e) => e.to_string(),
                };
                if matches!(&outcome, Ok(d) if d.kind == expected) {
                    row.successes += 1;
                }
            }
            rows.push(row);
        }
    }

    for g in &corpus.generation {
        let current = reference_spec(&g.from, params()).expect("validated");
        let mut row = row("cost generation", &g.id, &g.from, repetitions);
        for _ in 0..repetitions {
            let mut client = new_client();
            match generate_cost(client.as_mut(), prompts, &g.query, &current) {
                Ok(spec) => {
                    let mandatory = BuiltinTerm::MANDATORY
                        .iter()
                        .all(|m| spec.has_term(m.name()));
                    let failed: Vec<String> = g
                        .checks
                        .iter()
                        .filter(|c| !c.holds(&spec))
                        .map(|c| format!("{c:?}"))
                        .collect();
                    row.observed = if failed.is_empty() && mandatory {
                        row.successes += 1;
                        format!("terms: {}", spec.term_names().join(", "))
                    } else if !mandatory {
                        "mandatory terms missing".into()
                    } else {
                        format!("failed {}", failed.join("; "))
                    };
                }
                Err(e) => row.observed = e.to_string(),
            }
        }
        rows.push(row);
    }

    for w in &corpus.weights {
        let spec = reference_spec(&w.spec, params()).expect("validated");
        let z0 = initial_ratings(spec.term_names());
        let w0 = ratings_to_weights(&z0).expect("initial ratings are positive");
        let mut row = row("weight retrieval", &w.id, &w.spec, repetitions);
        for _ in 0..repetitions {
            let mut client = new_client();
            let retrieved = retrieve_weights(
                client.as_mut(),
                prompts,
                &mut Vec::new(),
                &w.query,
                &spec,
                &z0,
                spec.params(),
            );
            let result = retrieved.and_then(|r| Ok((ratings_to_weights(&r.ratings)?, r.params)));
            match result {
                Ok((w1, p1)) => {
                    let ok = w.checks.iter().all(|c| {
                        let (before, after) = match c.target {
                            Target::Weight => (w0.get(&c.name).copied(), w1.get(&c.name).copied()),
                            Target::Param => (spec.params().get(&c.name), p1.get(&c.name)),
                        };
                        match (before, after, c.direction) {
                            (Some(b), Some(a), Direction::Increase) => a > b,
                            (Some(b), Some(a), Direction::Decrease) => a < b,
                            _ => false,
                        }
                    });
                    if ok {
                        row.successes += 1;
                    }
                    row.observed = w1
                        .iter()
                        .map(|(k, v)| format!("{k}={v:.2}"))
                        .collect::<Vec<_>>()
                        .join(" ");
                }
                Err(e) => row.observed = e.to_string(),
            }
        }
        rows.push(row);
    }

    EvalReport { rows }
}

fn row(assistant: &str, case: &str, spec: &str, trials: u32) -> EvalRow {
    EvalRow {
        assistant: assistant.into(),
        case: case.into(),
        spec: spec.into(),
        successes: 0,
        trials,
        observed: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assistants::MockBackend;

    #[test]
    fn shipped_corpus_has_all_cases() {
        let c = Corpus::shipped();
        assert_eq!(c.capability.len(), 5);
        assert_eq!(c.generation.len(), 6);
        assert_eq!(c.weights.len(), 6);
    }

    #[test]
    fn unknown_spec_is_rejected() {
        let bad = r#"{"capability":[],"generation":[{"id":"G","query":"q","from":"J_x","checks":[]}],"weights":[]}"#;
        assert!(matches!(
            Corpus::from_json(bad),
            Err(CorpusError::UnknownSpec { .. })
        ));
    }

    #[test]
    fn mock_is_perfect_on_shipped_corpus() {
        let report = evaluate(&Corpus::shipped(), 1, &PromptSet::default(), &mut || {
            Box::new(MockBackend::new())
        });
        assert!(report.all_perfect(), "{}", report.to_table());
        assert_eq!(report.rows.len(), 15 + 6 + 6);
    }
}
