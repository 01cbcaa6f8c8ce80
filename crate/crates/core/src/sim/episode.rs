use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assistants::{j_path, Pipeline, PipelineEvent, Query, SpecHandle};
use crate::dsl::{CostSpec, ParameterSet};
use crate::mpc::{
    generate_seeds, solve, MpcConfig, MpcError, PlanStatus, PlanningWorld, SolveOutput,
    TrajectoryPlan,
};
use crate::world::{unicycle_step, ControlInput, HalfSpace, Human, RobotState, Scenario};

use super::social::{social_force_step, Pedestrian, RobotDisc, SocialForceParams};

/// One timed instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub t_seconds: f64,
    pub query_text: String,
}

/// Instructions delivered to the robot during an episode, ordered by time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryScript {
    entries: Vec<ScriptEntry>,
}

impl QueryScript {
    pub fn new(entries: impl IntoIterator<Item = (f64, String)>) -> Result<Self, SimError> {
        let entries = entries
            .into_iter()
            .map(|(t_seconds, query_text)| ScriptEntry {
                t_seconds,
                query_text,
            })
            .collect();
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: Vec<ScriptEntry>) -> Result<Self, SimError> {
        for e in &entries {
            if !(e.t_seconds.is_finite() && e.t_seconds >= 0.0) {
                return Err(SimError::InvalidScript(format!("bad time {}", e.t_seconds)));
            }
            if e.query_text.trim().is_empty() {
                return Err(SimError::InvalidScript(format!(
                    "empty query at t={}",
                    e.t_seconds
                )));
            }
        }
        entries.sort_by(|a, b| a.t_seconds.total_cmp(&b.t_seconds));
        Ok(QueryScript { entries })
    }

    /// A single query at t = 0.
    pub fn at_start(text: impl Into<String>) -> Self {
        QueryScript {
            entries: vec![ScriptEntry {
                t_seconds: 0.0,
                query_text: text.into(),
            }],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScript(e.to_string()))?;
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid query script: {0}")]
    InvalidScript(String),
    #[error("invalid episode configuration: {0}")]
    InvalidConfig(String),
    #[error("the query script needs an assistant pipeline")]
    MissingPipeline,
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub mpc: MpcConfig,
    pub social: SocialForceParams,
    /// Episode length limit [s].
    pub timeout: f64,
    /// Robot-to-goal distance that ends the episode [m].
    pub goal_tolerance: f64,
    /// Half-width of the uniform jitter on spawn positions, along x and y [m].
    pub spawn_jitter: [f64; 2],
    /// Half-width of the uniform jitter on desired walking speed [m/s].
    pub speed_jitter: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            mpc: MpcConfig::default(),
            social: SocialForceParams::default(),
            timeout: 60.0,
            goal_tolerance: 0.3,
            spawn_jitter: [0.5, 0.2],
            speed_jitter: 0.1,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.mpc.validate()?;
        if !self.social.is_valid() {
            return Err(SimError::InvalidConfig(
                "social force parameters must be positive".into(),
            ));
        }
        if !(self.timeout > 0.0 && self.goal_tolerance > 0.0) {
            return Err(SimError::InvalidConfig(
                "timeout and goal tolerance must be positive".into(),
            ));
        }
        if !(self.spawn_jitter.iter().all(|j| *j >= 0.0) && self.speed_jitter >= 0.0) {
            return Err(SimError::InvalidConfig(
                "jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GoalReached,
    Timeout,
    Collision,
}

/// State at the start of one control period and the input applied during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: f64,
    pub robot: RobotState,
    pub input: ControlInput,
    pub humans: Vec<Human>,
    pub spec_digest: Arc<str>,
    pub plan_status: PlanStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub robot_radius: f64,
    pub human_radius: f64,
    pub steps: Vec<StepLog>,
    pub final_robot: RobotState,
    pub final_humans: Vec<Human>,
    pub termination: Termination,
    pub events: Vec<PipelineEvent>,
    /// Solver and pipeline incidents that did not stop the episode.
    pub incidents: Vec<String>,
}

impl EpisodeRecord {
    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    /// Distinct spec digests in the order they became active.
    pub fn spec_digests(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.steps {
            if out.last() != Some(&&*s.spec_digest) {
                out.push(&s.spec_digest);
            }
        }
        out
    }
}

/// `J_path` with the scenario goal and initial ratings.
pub fn initial_spec(scenario: &Scenario) -> CostSpec {
    let mut params = ParameterSet::navigation_defaults();
    params.set_goal(scenario.goal.x, scenario.goal.y);
    j_path(params)
}

/// Spawned pedestrians with seeded jitter on position and speed.
pub fn spawn_pedestrians(
    scenario: &Scenario,
    config: &EpisodeConfig,
    seed: u64,
) -> Vec<Pedestrian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |half: f64| {
        if half > 0.0 {
            rng.gen_range(-half..=half)
        } else {
            0.0
        }
    };
    let walls: Vec<HalfSpace> = scenario.halfspaces().copied().collect();
    scenario
        .humans_init
        .iter()
        .enumerate()
        .map(|(i, spawn)| {
            let mut p = spawn.position;
            p.x += jitter(config.spawn_jitter[0]);
            p.y += jitter(config.spawn_jitter[1]);
            // Keep the jittered spawn inside every corridor.
            for w in &walls {
                let excess = scenario.human_radius - w.clearance(p);
                if excess > 0.0 {
                    p -= w.normal * excess;
                }
            }
            let speed = (spawn.desired_speed + jitter(config.speed_jitter)).max(0.0);
            let mut goal = spawn.goal;
            goal.y += p.y - spawn.position.y;
            let human = Human {
                id: i as u32,
                position: p,
                velocity: (goal - p).normalized() * speed,
                radius: scenario.human_radius,
            };
            Pedestrian {
                human,
                goal,
                desired_speed: speed,
            }
        })
        .collect()
}

/// Result of one control period.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub log: StepLog,
    /// The selected plan, starting at `log.robot`.
    pub plan: TrajectoryPlan,
    /// Set when the period ended in contact or at the goal.
    pub termination: Option<Termination>,
}

/// Closed-loop simulation advanced one control period at a time.
///
/// Each period predicts the humans at constant velocity, solves the MPC with
/// the cost spec currently held by the handle, applies the first input and
/// advances the pedestrians by social forces.
pub struct EpisodeStepper {
    scenario: Scenario,
    config: EpisodeConfig,
    handle: SpecHandle,
    walls: Vec<HalfSpace>,
    robot: RobotState,
    peds: Vec<Pedestrian>,
    step: usize,
    last_good: Arc<CostSpec>,
    previous: Option<TrajectoryPlan>,
    digest: Option<(Arc<CostSpec>, Arc<str>)>,
    incidents: Vec<String>,
}

impl EpisodeStepper {
    pub fn new(
        scenario: &Scenario,
        handle: SpecHandle,
        config: &EpisodeConfig,
        seed: u64,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let mut robot = scenario.robot_start;
        robot.v = robot.v.clamp(0.0, config.mpc.v_max);
        Ok(EpisodeStepper {
            walls: scenario.halfspaces().copied().collect(),
            peds: spawn_pedestrians(scenario, config, seed),
            last_good: handle.snapshot().spec.clone(),
            scenario: scenario.clone(),
            config: config.clone(),
            handle,
            robot,
            step: 0,
            previous: None,
            digest: None,
            incidents: Vec::new(),
        })
    }

    /// Time at the start of the next period.
    pub fn t(&self) -> f64 {
        self.step as f64 * self.config.mpc.dt
    }

    pub fn robot(&self) -> RobotState {
        self.robot
    }

    pub fn humans(&self) -> Vec<Human> {
        self.peds.iter().map(|p| p.human.clone()).collect()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn handle(&self) -> &SpecHandle {
        &self.handle
    }

    /// Solver and pipeline incidents so far, oldest first.
    pub fn incidents(&self) -> &[String] {
        &self.incidents
    }

    pub fn into_incidents(self) -> Vec<String> {
        self.incidents
    }

    pub fn step(&mut self) -> Result<StepOutcome, SimError> {
        let t = self.t();
        let humans = self.humans();
        let (out, spec) = self.plan(humans.clone(), t)?;
        let cfg = &self.config.mpc;
        let spec_digest = match &self.digest {
            Some((held, d)) if Arc::ptr_eq(held, &spec) => d.clone(),
            _ => {
                let d: Arc<str> = Arc::from(spec.digest());
                self.digest = Some((spec, d.clone()));
                d
            }
        };
        let robot = self.robot;
        let input = out.command(cfg, &robot);
        let log = StepLog {
            t,
            robot,
            input,
            humans,
            spec_digest,
            plan_status: out.best.status,
        };
        self.previous = Some(out.best.clone());

        let disc = RobotDisc {
            position: robot.position(),
            radius: self.scenario.robot_radius,
        };
        self.peds = social_force_step(
            &self.peds,
            Some(disc),
            &self.walls,
            &self.config.social,
            cfg.dt,
        );
        self.robot = unicycle_step(&robot, &input, cfg.dt);
        self.step += 1;

        let contact = self.scenario.robot_radius + self.scenario.human_radius;
        let termination = if self
            .peds
            .iter()
            .any(|p| p.human.position.distance(self.robot.position()) < contact)
        {
            Some(Termination::Collision)
        } else if self.robot.position().distance(self.scenario.goal) <= self.config.goal_tolerance {
            Some(Termination::GoalReached)
        } else {
            None
        };
        Ok(StepOutcome {
            log,
            plan: out.best,
            termination,
        })
    }

    fn plan(
        &mut self,
        humans: Vec<Human>,
        t: f64,
    ) -> Result<(SolveOutput, Arc<CostSpec>), SimError> {
        let world = PlanningWorld::from_scenario(&self.scenario, self.robot, humans);
        let cfg = &self.config.mpc;
        let active = self.handle.snapshot().spec.clone();
        let seeds = generate_seeds(&world, &active, cfg, self.previous.as_ref());
        match solve(&world, &active, cfg, &seeds) {
            Ok(out) => {
                self.last_good = active.clone();
                Ok((out, active))
            }
            Err(MpcError::CostRejected(why)) => {
                self.incidents.push(format!(
                    "t={t:.1}: cost rejected by solver ({why}); restoring previous spec"
                ));
                let fallback = self.last_good.clone();
                let z = crate::assistants::initial_ratings(fallback.term_names());
                self.handle.install((*fallback).clone(), z);
                let seeds = generate_seeds(&world, &fallback, cfg, self.previous.as_ref());
                Ok((solve(&world, &fallback, cfg, &seeds)?, fallback))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Runs one closed-loop episode with an [`EpisodeStepper`].
///
/// Script entries fire through `pipeline` at the first period at or after
/// their time stamp.
pub fn run_episode(
    scenario: &Scenario,
    handle: &SpecHandle,
    script: &QueryScript,
    mut pipeline: Option<&mut Pipeline>,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeRecord, SimError> {
    config.validate()?;
    if !script.is_empty() && pipeline.is_none() {
        return Err(SimError::MissingPipeline);
    }
    if let Some(p) = pipeline.as_deref_mut() {
        if !scenario.scene_description.is_empty() {
            p.set_scene(scenario.scene_description.clone());
        }
    }
    let dt = config.mpc.dt;
    let max_steps = (config.timeout / dt).round() as usize;
    let mut stepper = EpisodeStepper::new(scenario, handle.clone(), config, seed)?;
    let mut steps = Vec::with_capacity(max_steps);
    let mut events = Vec::new();
    let mut script_incidents = Vec::new();
    let mut next_entry = 0;
    let mut termination = Termination::Timeout;

    for _ in 0..max_steps {
        let t = stepper.t();
        while let Some(entry) = script.entries().get(next_entry) {
            if entry.t_seconds > t + 1e-9 {
                break;
            }
            next_entry += 1;
            let p = pipeline.as_deref_mut().expect("checked above");
            match Query::new(next_entry as u64, entry.query_text.clone(), t) {
                Ok(q) => {
                    p.handle_query(&q, handle, &mut |e| events.push(e));
                }
                Err(e) => script_incidents.push(format!("t={t:.1}: {e}")),
            }
        }
        let out = stepper.step()?;
        steps.push(out.log);
        if let Some(end) = out.termination {
            termination = end;
            break;
        }
    }

    let final_robot = stepper.robot();
    let final_humans = stepper.humans();
    let mut incidents = stepper.into_incidents();
    incidents.extend(script_incidents);
    Ok(EpisodeRecord {
        scenario: scenario.name.clone(),
        seed,
        dt,
        robot_radius: scenario.robot_radius,
        human_radius: scenario.human_radius,
        steps,
        final_robot,
        final_humans,
        termination,
        events,
        incidents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assistants::{j_goal, Clock, MockBackend};
    use crate::world::Vec2;

    #[test]
    fn script_is_sorted_and_validated() {
        let s = QueryScript::from_json(
            r#"[{"t_seconds": 5, "query_text": "Follow the closest human."},
                {"t_seconds": 0, "query_text": "Follow the path."}]"#,
        )
        .unwrap();
        assert_eq!(s.entries()[0].query_text, "Follow the path.");
        assert!(QueryScript::from_json(r#"[{"t_seconds": -1, "query_text": "x"}]"#).is_err());
        assert!(QueryScript::from_json(r#"[{"t_seconds": 1, "query_text": " "}]"#).is_err());
    }

    #[test]
    fn empty_open_goal_is_reached() {
        let mut scenario = Scenario::builtin("open").unwrap();
        scenario.humans_init.clear();
        scenario.goal = Vec2::new(scenario.robot_start.x + 5.0, scenario.robot_start.y);
        scenario.robot_start.theta = 0.0;
        let mut params = ParameterSet::navigation_defaults();
        params.set_goal(scenario.goal.x, scenario.goal.y);
        let handle = SpecHandle::with_initial_ratings(j_goal(params));
        let rec = run_episode(
            &scenario,
            &handle,
            &QueryScript::default(),
            None,
            &EpisodeConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(rec.termination, Termination::GoalReached);
        assert!(rec.duration() < 10.0, "{}", rec.duration());
        for w in rec.steps.windows(2) {
            assert!((w[1].t - w[0].t - rec.dt).abs() < 1e-9);
        }
    }

    #[test]
    fn script_switches_spec_once() {
        let scenario = Scenario::builtin("corridor").unwrap();
        let handle = SpecHandle::with_initial_ratings(initial_spec(&scenario));
        let script = QueryScript::new([
            (0.0, "Follow the path.".into()),
            (5.0, "Follow the closest human.".into()),
        ])
        .unwrap();
        let mut pipeline = Pipeline::new(MockBackend::new()).with_clock(Clock::Virtual);
        let config = EpisodeConfig {
            timeout: 8.0,
            ..EpisodeConfig::default()
        };
        let rec =
            run_episode(&scenario, &handle, &script, Some(&mut pipeline), &config, 3).unwrap();
        let after_start: Vec<&StepLog> = rec.steps.iter().filter(|s| s.t > 0.0).collect();
        let changes = after_start
            .windows(2)
            .filter(|w| w[0].spec_digest != w[1].spec_digest)
            .count();
        assert_eq!(changes, 1);
        let switch = after_start
            .windows(2)
            .find(|w| w[0].spec_digest != w[1].spec_digest)
            .unwrap();
        assert!((switch[1].t - 5.0).abs() < 1e-9);
        assert!(handle
            .snapshot()
            .spec
            .term_names()
            .contains(&"human_follow"));
    }

    #[test]
    fn script_without_pipeline_is_refused() {
        let scenario = Scenario::builtin("corridor").unwrap();
        let handle = SpecHandle::with_initial_ratings(initial_spec(&scenario));
        let err = run_episode(
            &scenario,
            &handle,
            &QueryScript::at_start("Be faster."),
            None,
            &EpisodeConfig::default(),
            1,
        );
        assert_eq!(err.unwrap_err(), SimError::MissingPipeline);
    }

    #[test]
    fn same_seed_same_record() {
        let scenario = Scenario::builtin("corridor").unwrap();
        let config = EpisodeConfig {
            timeout: 3.0,
            ..EpisodeConfig::default()
        };
        let run = || {
            let handle = SpecHandle::with_initial_ratings(initial_spec(&scenario));
            run_episode(
                &scenario,
                &handle,
                &QueryScript::default(),
                None,
                &config,
                11,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
