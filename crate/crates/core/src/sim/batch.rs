use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assistants::{Clock, LlmClient, Pipeline, SpecHandle};
use crate::world::Scenario;

use super::{
    compute_metrics, initial_spec, run_episode, EpisodeConfig, Metrics, QueryScript, SimError,
    Termination,
};

/// A labelled query script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub script: QueryScript,
}

impl Variant {
    pub fn at_start(label: impl Into<String>, query: impl Into<String>) -> Self {
        Variant {
            label: label.into(),
            script: QueryScript::at_start(query),
        }
    }
}

pub const BASE_INSTRUCTION: &str = "Follow the reference path.";

/// The six corridor variants: the base instruction alone, then with one
/// additional instruction each.
pub fn corridor_variants() -> Vec<Variant> {
    let extra = [
        ("a", ""),
        ("b", "Drive quickly."),
        ("c", "Drive carefully."),
        ("d", "You are navigating through a factory without humans."),
        ("e", "You are navigating through a hospital."),
        (
            "f",
            "Try to keep a distance of at least 1.5m from pedestrians.",
        ),
    ];
    extra
        .iter()
        .map(|(label, more)| {
            let query = if more.is_empty() {
                BASE_INSTRUCTION.to_string()
            } else {
                format!("{BASE_INSTRUCTION} {more}")
            };
            Variant::at_start(*label, query)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub variant: String,
    pub seed: u64,
    pub termination: Termination,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub instruction: String,
    pub episodes: usize,
    pub collision_rate: Stat,
    pub duration: Stat,
    pub path_length: Stat,
    pub min_human_distance: Stat,
    pub mean_speed: Stat,
    pub mean_abs_accel: Stat,
    pub mean_abs_omega: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub rows: Vec<EpisodeRow>,
    pub summary: Vec<VariantSummary>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    variant: &'a str,
    seed: u64,
    termination: &'a str,
    collision: bool,
    duration: f64,
    path_length: f64,
    min_human_distance: f64,
    mean_speed: f64,
    mean_abs_accel: f64,
    mean_abs_omega: f64,
}

impl BatchReport {
    pub fn summary_for(&self, variant: &str) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }

    pub fn collisions(&self) -> usize {
        self.rows.iter().filter(|r| r.metrics.collision).count()
    }

    /// One line per episode.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            let m = &r.metrics;
            w.serialize(CsvRow {
                variant: &r.variant,
                seed: r.seed,
                termination: match r.termination {
                    Termination::GoalReached => "goal_reached",
                    Termination::Timeout => "timeout",
                    Termination::Collision => "collision",
                },
                collision: m.collision,
                duration: m.duration,
                path_length: m.path_length,
                min_human_distance: m.min_human_distance,
                mean_speed: m.mean_speed,
                mean_abs_accel: m.mean_abs_accel,
                mean_abs_omega: m.mean_abs_omega,
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    /// Aligned `mean (std)` table, one row per variant.
    pub fn to_table(&self) -> String {
        let cell = |s: &Stat, prec: usize| format!("{:.p$} ({:.p$})", s.mean, s.std, p = prec);
        let header = [
            "variant",
            "col. rate",
            "dur. [s]",
            "path [m]",
            "min dist [m]",
            "v [m/s]",
            "a [m/s2]",
            "w [rad/s]",
        ];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for s in &self.summary {
            lines.push(vec![
                s.variant.clone(),
                cell(&s.collision_rate, 2),
                cell(&s.duration, 1),
                cell(&s.path_length, 2),
                cell(&s.min_human_distance, 2),
                cell(&s.mean_speed, 2),
                cell(&s.mean_abs_accel, 2),
                cell(&s.mean_abs_omega, 2),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let row: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", row.join("  ").trim_end());
        }
        for s in &self.summary {
            let _ = writeln!(out, "{}: {}", s.variant, s.instruction);
        }
        out
    }
}

fn summarize(variant: &Variant, rows: &[&EpisodeRow]) -> VariantSummary {
    let stat = |f: &dyn Fn(&Metrics) -> f64| {
        Stat::of(&rows.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
    };
    VariantSummary {
        variant: variant.label.clone(),
        instruction: variant
            .script
            .entries()
            .iter()
            .map(|e| e.query_text.as_str())
            .collect::<Vec<_>>()
            .join(" / "),
        episodes: rows.len(),
        collision_rate: stat(&|m| if m.collision { 1.0 } else { 0.0 }),
        duration: stat(&|m| m.duration),
        path_length: stat(&|m| m.path_length),
        min_human_distance: stat(&|m| m.min_human_distance),
        mean_speed: stat(&|m| m.mean_speed),
        mean_abs_accel: stat(&|m| m.mean_abs_accel),
        mean_abs_omega: stat(&|m| m.mean_abs_omega),
    }
}

/// Runs `episodes` episodes per variant with seeds `base_seed + i`.
///
/// Every episode starts from the scenario's initial spec with a fresh
/// pipeline on a client from `new_client`. Episodes run in parallel; the
/// report is ordered by variant, then seed.
pub fn run_batch(
    scenario: &Scenario,
    variants: &[Variant],
    episodes: usize,
    base_seed: u64,
    config: &EpisodeConfig,
    new_client: &(dyn Fn() -> Box<dyn LlmClient> + Sync),
) -> Result<BatchReport, SimError> {
    if episodes == 0 {
        return Err(SimError::InvalidConfig(
            "at least one episode per variant is required".into(),
        ));
    }
    config.validate()?;
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| (0..episodes as u64).map(move |i| (v, base_seed + i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let variant = &variants[v];
            let handle = SpecHandle::with_initial_ratings(initial_spec(scenario));
            let mut pipeline = Pipeline::from_boxed(new_client()).with_clock(Clock::Virtual);
            let record = run_episode(
                scenario,
                &handle,
                &variant.script,
                Some(&mut pipeline),
                config,
                seed,
            )?;
            Ok(EpisodeRow {
                variant: variant.label.clone(),
                seed,
                termination: record.termination,
                metrics: compute_metrics(&record, false),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let summary = variants
        .iter()
        .map(|v| {
            let mine: Vec<&EpisodeRow> = rows.iter().filter(|r| r.variant == v.label).collect();
            summarize(v, &mine)
        })
        .collect();
    Ok(BatchReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assistants::MockBackend;

    #[test]
    fn variants_cover_six_instructions() {
        let v = corridor_variants();
        assert_eq!(v.len(), 6);
        assert_eq!(
            v[0].script.entries()[0].query_text,
            "Follow the reference path."
        );
        assert!(v[5].script.entries()[0]
            .query_text
            .ends_with("1.5m from pedestrians."));
    }

    #[test]
    fn stat_of_single_value() {
        assert_eq!(
            Stat::of(&[3.0]),
            Stat {
                mean: 3.0,
                std: 0.0
            }
        );
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn single_episode_batch() {
        let scenario = Scenario::builtin("corridor").unwrap();
        let config = EpisodeConfig {
            timeout: 2.0,
            ..EpisodeConfig::default()
        };
        let variants = vec![Variant::at_start("a", BASE_INSTRUCTION)];
        let mock = || Box::new(MockBackend::new()) as Box<dyn LlmClient>;
        let report = run_batch(&scenario, &variants, 1, 5, &config, &mock).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.summary[0].duration.std, 0.0);
        let again = run_batch(&scenario, &variants, 1, 5, &config, &mock).unwrap();
        assert_eq!(report, again);
        let csv = report.to_csv();
        assert!(csv.starts_with("variant,seed,termination,collision,duration"));
        assert_eq!(csv.lines().count(), 2);
        assert!(report.to_table().contains("min dist"));
        assert!(run_batch(&scenario, &variants, 0, 5, &config, &mock).is_err());
    }
}
