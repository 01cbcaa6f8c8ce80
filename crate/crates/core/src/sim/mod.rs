//! Closed-loop simulation with social-force pedestrians, and the metrics
//! and batch runner built on it.

mod batch;
mod episode;
mod metrics;
mod social;

pub use batch::{
    corridor_variants, run_batch, BatchReport, EpisodeRow, Stat, Variant, VariantSummary,
    BASE_INSTRUCTION,
};
pub use episode::{
    initial_spec, run_episode, spawn_pedestrians, EpisodeConfig, EpisodeRecord, EpisodeStepper,
    QueryScript, ScriptEntry, SimError, StepLog, StepOutcome, Termination,
};
pub use metrics::{compute_metrics, Metrics};
pub use social::{social_force, social_force_step, Pedestrian, RobotDisc, SocialForceParams};
