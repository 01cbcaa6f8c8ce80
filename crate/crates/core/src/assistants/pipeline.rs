use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use crate::dsl::{compose_cost, CostSpec, ParameterSet};

use super::format::{parse_decision, parse_manifest, parse_ratings};
use super::prompts::{
    camera_message, capability_message, cost_generation_message, repair_message, weight_message,
};
use super::{
    ratings_to_weights, AssistantError, ChatTurn, ImportanceRatings, LlmClient, PipelineEvent,
    PromptSet, Query, RouteDecision, RouteKind, Stage, INITIAL_RATING, MAX_RATING,
};

/// The controller's current cost function together with the ratings that
/// produced its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSpec {
    pub spec: Arc<CostSpec>,
    pub ratings: ImportanceRatings,
    /// Incremented on every install.
    pub version: u64,
}

/// Shared slot holding the active spec. Readers get a consistent snapshot;
/// writers replace the whole value at once.
#[derive(Debug, Clone)]
pub struct SpecHandle(Arc<RwLock<Arc<ActiveSpec>>>);

impl SpecHandle {
    pub fn new(spec: CostSpec, ratings: ImportanceRatings) -> Self {
        SpecHandle(Arc::new(RwLock::new(Arc::new(ActiveSpec {
            spec: Arc::new(spec),
            ratings,
            version: 0,
        }))))
    }

    /// Uses uniform initial ratings for every term of `spec`.
    pub fn with_initial_ratings(spec: CostSpec) -> Self {
        let z = super::initial_ratings(spec.term_names());
        Self::new(spec, z)
    }

    pub fn snapshot(&self) -> Arc<ActiveSpec> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces the active spec and returns the new version.
    pub fn install(&self, spec: CostSpec, ratings: ImportanceRatings) -> u64 {
        let mut slot = self.0.write().unwrap_or_else(|e| e.into_inner());
        let version = slot.version + 1;
        *slot = Arc::new(ActiveSpec {
            spec: Arc::new(spec),
            ratings,
            version,
        });
        version
    }
}

/// Source of the `elapsed` field in pipeline events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Wall,
    /// Every event reports zero elapsed time, keeping event streams
    /// reproducible.
    Virtual,
}

struct Stopwatch {
    clock: Clock,
    start: Instant,
}

impl Stopwatch {
    fn elapsed(&self) -> f64 {
        match self.clock {
            Clock::Wall => self.start.elapsed().as_secs_f64(),
            Clock::Virtual => 0.0,
        }
    }
}

fn unparseable(stage: &'static str, detail: impl Into<String>) -> AssistantError {
    AssistantError::Unparseable {
        stage,
        detail: detail.into(),
    }
}

/// Asks the capability assistant how to handle `query`.
///
/// An answer without a recognizable decision is retried once and then
/// treated as [`RouteKind::UpdateParameters`].
pub fn route(
    client: &mut dyn LlmClient,
    prompts: &PromptSet,
    history: &mut Vec<ChatTurn>,
    query: &str,
    spec: &CostSpec,
) -> Result<RouteDecision, AssistantError> {
    let user = capability_message(query, spec);
    for _ in 0..2 {
        let answer = client.send(&prompts.capability, history, &user)?;
        if let Some(d) = parse_decision(&answer) {
            history.push(ChatTurn {
                user,
                assistant: answer,
            });
            return Ok(d);
        }
    }
    Ok(RouteDecision {
        kind: RouteKind::UpdateParameters,
        rationale: "no decision could be read from the answer; keeping the current terms".into(),
    })
}

fn build_spec(answer: &str, query: &str, current: &CostSpec) -> Result<CostSpec, String> {
    let manifest = parse_manifest(answer)?;
    let mut params = current.params().clone();
    for (name, p) in manifest.params {
        match params.entry(&name) {
            Some(existing) if !existing.tunable => {}
            _ => params.insert(name, p),
        }
    }
    compose_cost(manifest.terms, &BTreeMap::new(), params, query).map_err(|e| e.to_string())
}

/// Asks the cost generation assistant for a new set of terms.
///
/// Every term of the returned spec has weight 1. A rejected answer gets one
/// repair round-trip carrying the validation error.
pub fn generate_cost(
    client: &mut dyn LlmClient,
    prompts: &PromptSet,
    query: &str,
    current: &CostSpec,
) -> Result<CostSpec, AssistantError> {
    let user = cost_generation_message(query, current);
    let first = client.send(&prompts.cost_generation, &[], &user)?;
    let error = match build_spec(&first, query, current) {
        Ok(spec) => return Ok(spec),
        Err(e) => e,
    };
    let conversation = [ChatTurn {
        user,
        assistant: first,
    }];
    let second = client.send(
        &prompts.cost_generation,
        &conversation,
        &repair_message(&error),
    )?;
    build_spec(&second, query, current).map_err(AssistantError::CostRejected)
}

/// Asks the camera assistant for motion guidance about a described scene.
pub fn camera_adapt(
    client: &mut dyn LlmClient,
    prompts: &PromptSet,
    scene: &str,
) -> Result<String, AssistantError> {
    let answer = client.send(&prompts.camera, &[], &camera_message(scene))?;
    let guidance = answer.trim();
    if guidance.is_empty() {
        return Err(unparseable("camera", "empty guidance"));
    }
    Ok(guidance.to_string())
}

/// Ratings and parameter values after clamping and filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedWeights {
    pub ratings: ImportanceRatings,
    pub params: ParameterSet,
    pub reason: String,
    /// Entries of the answer that were clamped or ignored.
    pub warnings: Vec<String>,
}

/// Asks the weight retrieval assistant to rate every term of `spec`.
///
/// Ratings outside `0..=10` are clamped, names that are not terms of `spec`
/// are ignored, and only existing tunable parameters are updated.
pub fn retrieve_weights(
    client: &mut dyn LlmClient,
    prompts: &PromptSet,
    history: &mut Vec<ChatTurn>,
    instruction: &str,
    spec: &CostSpec,
    ratings: &ImportanceRatings,
    params: &ParameterSet,
) -> Result<RetrievedWeights, AssistantError> {
    let user = weight_message(instruction, spec, ratings, params);
    let mut last_error = String::new();
    let mut parsed = None;
    for _ in 0..2 {
        let answer = client.send(&prompts.weight_retrieval, history, &user)?;
        match parse_ratings(&answer) {
            Ok(a) => {
                history.push(ChatTurn {
                    user: user.clone(),
                    assistant: answer,
                });
                parsed = Some(a);
                break;
            }
            Err(e) => last_error = e,
        }
    }
    let answer = parsed.ok_or_else(|| unparseable("weight retrieval", last_error))?;

    let mut warnings = Vec::new();
    let mut out: ImportanceRatings = spec
        .term_names()
        .into_iter()
        .map(|n| {
            (
                n.to_string(),
                ratings.get(n).copied().unwrap_or(INITIAL_RATING),
            )
        })
        .collect();
    for (name, z) in answer.ratings {
        match out.get_mut(&name) {
            Some(slot) => {
                let clamped = z.clamp(0, MAX_RATING as i64);
                if clamped != z {
                    warnings.push(format!("rating {name}={z} clamped to {clamped}"));
                }
                *slot = clamped as u8;
            }
            None => warnings.push(format!("ignored rating for unknown term `{name}`")),
        }
    }
    let mut new_params = params.clone();
    for (name, value) in answer.params {
        match params.entry(&name) {
            Some(p) if p.tunable => {
                let value = if name == "v_ref" {
                    let v = value.clamp(0.0, params.v_max());
                    if v != value {
                        warnings.push(format!("v_ref={value} clamped to {v}"));
                    }
                    v
                } else {
                    value
                };
                new_params.set_value(&name, value);
            }
            Some(_) => warnings.push(format!(
                "ignored update of environmental parameter `{name}`"
            )),
            None => warnings.push(format!("ignored unknown parameter `{name}`")),
        }
    }
    Ok(RetrievedWeights {
        ratings: out,
        params: new_params,
        reason: answer.reason,
        warnings,
    })
}

/// Result of one [`Pipeline::handle_query`] call.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutcome {
    Applied { route: RouteKind, version: u64 },
    Rejected { error: AssistantError },
}

impl PipelineOutcome {
    pub fn is_applied(&self) -> bool {
        matches!(self, PipelineOutcome::Applied { .. })
    }
}

const MAX_HISTORY: usize = 8;

fn push_bounded(history: &mut Vec<ChatTurn>) {
    if history.len() > MAX_HISTORY {
        let excess = history.len() - MAX_HISTORY;
        history.drain(..excess);
    }
}

/// Runs queries through the four assistants and installs the result.
///
/// Capability and weight retrieval keep a rolling conversation over past
/// queries; cost generation and camera guidance start fresh every time.
pub struct Pipeline {
    client: Box<dyn LlmClient>,
    prompts: PromptSet,
    clock: Clock,
    scene: Option<String>,
    capability_history: Vec<ChatTurn>,
    weight_history: Vec<ChatTurn>,
}

impl Pipeline {
    pub fn new(client: impl LlmClient + 'static) -> Self {
        Self::from_boxed(Box::new(client))
    }

    pub fn from_boxed(client: Box<dyn LlmClient>) -> Self {
        Pipeline {
            client,
            prompts: PromptSet::default(),
            clock: Clock::Wall,
            scene: None,
            capability_history: Vec::new(),
            weight_history: Vec::new(),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Latest textual scene description, consumed by camera adaptation.
    pub fn set_scene(&mut self, text: impl Into<String>) {
        self.scene = Some(text.into());
    }

    pub fn scene(&self) -> Option<&str> {
        self.scene.as_deref()
    }

    /// Forgets conversation history and the backend's state.
    pub fn reset(&mut self) {
        self.capability_history.clear();
        self.weight_history.clear();
        self.client.reset();
    }

    /// Routes, generates or adapts, rates, and installs a new spec into
    /// `handle`. On any failure `handle` is left untouched and a
    /// [`Stage::Rejected`] event is emitted.
    pub fn handle_query(
        &mut self,
        query: &Query,
        handle: &SpecHandle,
        emit: &mut dyn FnMut(PipelineEvent),
    ) -> PipelineOutcome {
        let watch = Stopwatch {
            clock: self.clock,
            start: Instant::now(),
        };
        let current = handle.snapshot();
        let mut event = |stage: Stage, detail: String| {
            emit(PipelineEvent {
                query_index: query.index,
                stage,
                detail,
                elapsed: watch.elapsed(),
            })
        };
        match self.run(query, &current, &mut event) {
            Ok((route, spec, ratings)) => {
                let digest = spec.digest();
                let version = handle.install(spec, ratings);
                event(
                    Stage::Applied,
                    format!("spec {digest} installed as version {version}"),
                );
                PipelineOutcome::Applied { route, version }
            }
            Err(error) => {
                event(Stage::Rejected, error.to_string());
                PipelineOutcome::Rejected { error }
            }
        }
    }

    fn run(
        &mut self,
        query: &Query,
        current: &ActiveSpec,
        event: &mut dyn FnMut(Stage, String),
    ) -> Result<(RouteKind, CostSpec, ImportanceRatings), AssistantError> {
        let client = self.client.as_mut();
        let decision = route(
            client,
            &self.prompts,
            &mut self.capability_history,
            &query.text,
            &current.spec,
        )?;
        push_bounded(&mut self.capability_history);
        event(
            Stage::Capability,
            format!("{}: {}", decision.kind.token(), decision.rationale),
        );

        let (spec, ratings, instruction) = match decision.kind {
            RouteKind::GenerateNewCost => {
                let spec = generate_cost(client, &self.prompts, &query.text, &current.spec)?;
                let ratings: ImportanceRatings = spec
                    .term_names()
                    .into_iter()
                    .map(|n| {
                        (
                            n.to_string(),
                            current.ratings.get(n).copied().unwrap_or(INITIAL_RATING),
                        )
                    })
                    .collect();
                event(
                    Stage::CostGen,
                    format!("terms: {}", spec.term_names().join(", ")),
                );
                (spec, ratings, query.text.clone())
            }
            RouteKind::AdaptToEnvironment => {
                let scene = self
                    .scene
                    .as_deref()
                    .ok_or(AssistantError::NoSceneDescription)?;
                let guidance = camera_adapt(client, &self.prompts, scene)?;
                event(Stage::Camera, guidance.clone());
                ((*current.spec).clone(), current.ratings.clone(), guidance)
            }
            RouteKind::UpdateParameters => (
                (*current.spec).clone(),
                current.ratings.clone(),
                query.text.clone(),
            ),
        };

        let retrieved = retrieve_weights(
            client,
            &self.prompts,
            &mut self.weight_history,
            &instruction,
            &spec,
            &ratings,
            spec.params(),
        )?;
        push_bounded(&mut self.weight_history);
        for w in &retrieved.warnings {
            event(Stage::WeightRet, format!("warning: {w}"));
        }
        let weights = ratings_to_weights(&retrieved.ratings)?;
        let detail = retrieved
            .ratings
            .iter()
            .map(|(k, z)| format!("{k}={z}"))
            .collect::<Vec<_>>()
            .join(" ");
        event(Stage::WeightRet, detail);
        let spec = spec.retuned(&weights, retrieved.params, query.text.clone())?;
        Ok((decision.kind, spec, retrieved.ratings))
    }
}
