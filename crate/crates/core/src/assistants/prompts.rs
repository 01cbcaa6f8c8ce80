use std::fmt::Write as _;
use std::path::Path;

use crate::dsl::{CostSpec, ParameterSet};

use super::ImportanceRatings;

/// System prompts for the four assistants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub capability: String,
    pub cost_generation: String,
    pub camera: String,
    pub weight_retrieval: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            capability: include_str!("../../prompts/capability.txt").to_string(),
            cost_generation: include_str!("../../prompts/cost_generation.txt").to_string(),
            camera: include_str!("../../prompts/camera.txt").to_string(),
            weight_retrieval: include_str!("../../prompts/weight_retrieval.txt").to_string(),
        }
    }
}

impl PromptSet {
    /// Reads `capability.txt`, `cost_generation.txt`, `camera.txt` and
    /// `weight_retrieval.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Ok(PromptSet {
            capability: read("capability.txt")?,
            cost_generation: read("cost_generation.txt")?,
            camera: read("camera.txt")?,
            weight_retrieval: read("weight_retrieval.txt")?,
        })
    }
}

pub(crate) const QUERY: &str = "QUERY:";
pub(crate) const INSTRUCTION: &str = "INSTRUCTION:";
pub(crate) const SCENE: &str = "SCENE:";
pub(crate) const COST_SOURCE: &str = "CURRENT COST SOURCE:";
pub(crate) const RATINGS: &str = "CURRENT RATINGS:";
pub(crate) const PARAMETERS: &str = "PARAMETERS:";

fn write_params(out: &mut String, params: &ParameterSet) {
    let _ = writeln!(out, "{PARAMETERS}");
    for (name, p) in params.iter() {
        let kind = if p.tunable {
            "tunable"
        } else {
            "environmental"
        };
        let _ = writeln!(out, "{name}={} {} {kind}", p.value, p.unit);
    }
}

pub(crate) fn capability_message(query: &str, spec: &CostSpec) -> String {
    let mut out = format!(
        "{QUERY} {query}\nCURRENT COST TERMS: {}\n",
        spec.term_names().join(", ")
    );
    let _ = write!(out, "{COST_SOURCE}\n{}", spec.source());
    write_params(&mut out, spec.params());
    out
}

pub(crate) fn cost_generation_message(query: &str, spec: &CostSpec) -> String {
    let mut out = format!("{QUERY} {query}\n");
    let _ = write!(out, "{COST_SOURCE}\n{}", spec.source());
    write_params(&mut out, spec.params());
    out
}

pub(crate) fn repair_message(error: &str) -> String {
    format!(
        "Your answer could not be used: {error}\nAnswer again with corrected TERM and PARAM lines only."
    )
}

pub(crate) fn camera_message(scene: &str) -> String {
    format!("{SCENE} {scene}\n")
}

pub(crate) fn weight_message(
    instruction: &str,
    spec: &CostSpec,
    ratings: &ImportanceRatings,
    params: &ParameterSet,
) -> String {
    let mut out = format!("{INSTRUCTION} {instruction}\n");
    let _ = write!(out, "{COST_SOURCE}\n{}", spec.source());
    let _ = writeln!(out, "{RATINGS}");
    for (name, z) in ratings {
        let _ = writeln!(out, "{name}={z}");
    }
    write_params(&mut out, params);
    out
}

/// Lines following `header` up to the next blank line or header.
pub(crate) fn section<'a>(message: &'a str, header: &str) -> Vec<&'a str> {
    let mut lines = message.lines();
    for l in lines.by_ref() {
        if l.trim() == header {
            break;
        }
    }
    lines
        .take_while(|l| {
            let t = l.trim();
            !t.is_empty()
                && !(t.ends_with(':')
                    && t.chars()
                        .all(|c| c.is_ascii_uppercase() || c == ' ' || c == ':'))
        })
        .collect()
}

/// Text after `key` on the first line that starts with it.
pub(crate) fn field<'a>(message: &'a str, key: &str) -> Option<&'a str> {
    message
        .lines()
        .find_map(|l| l.trim().strip_prefix(key))
        .map(str::trim)
}
