use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Duration;

use crate::dsl::{BuiltinTerm, CostTerm, DEFAULT_V_MAX};

use super::library::{
    term_feature, Feature, HUMAN_FOLLOW_SOURCE, HUMAN_MAX_SOURCE, SAFE_DISTANCE_SOURCE,
};
use super::prompts::{field, section, COST_SOURCE, INSTRUCTION, PARAMETERS, QUERY, RATINGS, SCENE};
use super::{ChatTurn, LlmClient, LlmError, MAX_RATING};

/// Deterministic keyword-rule stand-in for a language model.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    latency: Duration,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sleeps for `latency` before every answer.
    pub fn with_latency(latency: Duration) -> Self {
        MockBackend { latency }
    }
}

fn has_any(text: &str, needles: &[&str]) -> bool {
    needles.iter().any(|n| text.contains(n))
}

const ADAPT: &[&str] = &[
    "adapt to the environment",
    "adapt to your surroundings",
    "look around",
    "perceive",
];
const FOLLOW: &[&str] = &[
    "follow the closest human",
    "follow the nearest",
    "follow the human",
    "follow the person",
    "minimize the distance to the closest human",
    "minimise the distance to the closest human",
    "stay close to the closest human",
];
const MAXIMIZE: &[&str] = &[
    "maximize the distance",
    "maximise the distance",
    "stay away from",
];
const SAFE: &[&str] = &[
    "safe distance",
    "distance of at least",
    "keep a distance",
    "keep distance",
    "more distance",
    "distance to humans",
    "distance from humans",
    "distance to pedestrians",
    "distance from pedestrians",
];
const FAST: &[&str] = &[
    "faster",
    "quickly",
    "fast",
    "hurry",
    "factory",
    "productive",
];
const CAREFUL: &[&str] = &[
    "carefully",
    "careful",
    "hospital",
    "slower",
    "slow down",
    "gently",
];
const SMOOTH: &[&str] = &["smoother", "smooth"];
const STICK: &[&str] = &[
    "stick to the path",
    "stay on the path",
    "closer to the path",
];
const ROTATE: &[&str] = &[
    "rotate more",
    "rotation capabilities",
    "turn more",
    "increase rotation",
];

/// Capabilities a query asks for, by keyword.
pub fn query_features(query: &str) -> BTreeSet<Feature> {
    let q = query.to_lowercase();
    let mut f = BTreeSet::new();
    if q.contains("path") {
        f.insert(Feature::Path);
    }
    if q.contains("goal") {
        f.insert(Feature::Goal);
    }
    if has_any(&q, FOLLOW) {
        f.insert(Feature::HumanFollow);
    }
    if has_any(&q, MAXIMIZE) {
        f.insert(Feature::HumanMax);
    }
    if has_any(&q, SAFE) {
        f.insert(Feature::SafeDistance);
    }
    f
}

/// Padding added to a requested minimum distance. The safe-distance term is
/// a soft penalty that settles short of its target.
const AT_LEAST_PAD: f64 = 0.3;

/// `d_safe` for a request: the stated distance, padded when it is a floor
/// ("at least 1.5m").
fn safe_target(text: &str) -> Option<f64> {
    let d = distance_in(text)?;
    Some(if text.contains("at least") {
        d + AT_LEAST_PAD
    } else {
        d
    })
}

/// First length in metres mentioned in `text`, such as `1.5m` or `2 meters`.
fn distance_in(text: &str) -> Option<f64> {
    let words: Vec<&str> = text.split_whitespace().collect();
    for (i, w) in words.iter().enumerate() {
        let w = w.trim_end_matches(['.', ',', ';']);
        if let Some(num) = w.strip_suffix('m') {
            if let Ok(x) = num.parse::<f64>() {
                return Some(x);
            }
        }
        if let Ok(x) = w.parse::<f64>() {
            let unit = words
                .get(i + 1)
                .map(|u| u.trim_end_matches(['.', ',', ';']));
            if matches!(unit, Some("m" | "meter" | "meters" | "metre" | "metres")) {
                return Some(x);
            }
        }
    }
    None
}

/// Terms listed in a cost-source section.
fn listed_terms(message: &str) -> Vec<CostTerm> {
    section(message, COST_SOURCE)
        .into_iter()
        .filter_map(|line| {
            let (name, rest) = line.split_once(" = ")?;
            let name = name.trim();
            match rest.strip_suffix(" (builtin)") {
                Some(_) => name.parse::<BuiltinTerm>().ok().map(CostTerm::builtin),
                None => CostTerm::from_source(name, rest.trim()).ok(),
            }
        })
        .collect()
}

fn key_values(lines: &[&str]) -> BTreeMap<String, (String, bool)> {
    lines
        .iter()
        .filter_map(|l| {
            let (k, rest) = l.split_once('=')?;
            let mut words = rest.split_whitespace();
            let value = words.next()?.to_string();
            let tunable = !rest.contains("environmental");
            Some((k.trim().to_string(), (value, tunable)))
        })
        .collect()
}

impl MockBackend {
    fn capability(&self, user: &str) -> String {
        let query = field(user, QUERY).unwrap_or_default();
        let q = query.to_lowercase();
        let (kind, reason) = if has_any(&q, ADAPT) {
            (
                "ADAPT_TO_ENVIRONMENT",
                "the instruction asks to sense the surroundings".to_string(),
            )
        } else {
            let have: BTreeSet<Feature> =
                listed_terms(user).iter().filter_map(term_feature).collect();
            let need = query_features(query);
            let missing: Vec<_> = need.difference(&have).map(|f| format!("{f:?}")).collect();
            if missing.is_empty() {
                (
                    "UPDATE_PARAMETERS",
                    "the current terms already cover the instruction".to_string(),
                )
            } else {
                (
                    "GENERATE_NEW_COST",
                    format!("missing capability: {}", missing.join(", ")),
                )
            }
        };
        format!("DECISION: {kind}\nREASON: {reason}\n")
    }

    fn cost_generation(&self, conversation: &[ChatTurn], user: &str) -> String {
        let original = field(user, QUERY)
            .map(|_| user)
            .or_else(|| conversation.first().map(|t| t.user.as_str()))
            .unwrap_or(user);
        let query = field(original, QUERY).unwrap_or_default();
        let mut need = query_features(query);
        if need.is_empty() {
            need = listed_terms(original)
                .iter()
                .filter_map(term_feature)
                .collect();
        }
        if need.is_empty() {
            need.insert(Feature::Path);
        }
        let mut out = String::new();
        for f in &need {
            match f {
                Feature::Path => out.push_str("TERM: contour\nTERM: lag\n"),
                Feature::Goal => out.push_str("TERM: goal\n"),
                Feature::HumanFollow => {
                    let _ = writeln!(out, "TERM: human_follow := {HUMAN_FOLLOW_SOURCE}");
                }
                Feature::HumanMax => {
                    let _ = writeln!(out, "TERM: human_distance := {HUMAN_MAX_SOURCE}");
                }
                Feature::SafeDistance => {
                    let d = safe_target(query).unwrap_or(1.0);
                    let _ = writeln!(out, "TERM: safe_distance := {SAFE_DISTANCE_SOURCE}");
                    let _ = writeln!(out, "PARAM: d_safe = {d} m tunable");
                }
            }
        }
        out.push_str("TERM: velocity\nTERM: accel\nTERM: omega\n");
        out
    }

    fn camera(&self, user: &str) -> String {
        let scene = field(user, SCENE).unwrap_or_default().to_lowercase();
        let mentions_people = has_any(
            &scene,
            &["people", "pedestrian", "human", "person", "crowd"],
        );
        let negated = has_any(
            &scene,
            &[
                "no people",
                "no pedestrian",
                "no human",
                "without people",
                "without pedestrians",
                "nobody",
                "empty",
            ],
        );
        let people = mentions_people && !negated;
        let confined = has_any(&scene, &["corridor", "narrow", "confined", "hallway"]);
        if people && (scene.contains("crowd") || (scene.contains("open") && !confined)) {
            "- Open area with a dense crowd of people in close proximity.\n\
             - Strict path tracking matters less than moving around the crowd.\n\
             - Move smoothly and gently; keep the speed moderate.\n"
                .to_string()
        } else if people && confined {
            "- Narrow pathway congested with pedestrians.\n\
             - Keep close to the path because the space is narrow.\n\
             - Reduce speed; careful and smooth motion matters more than speed.\n"
                .to_string()
        } else if confined {
            "- Confined space without dynamic obstacles.\n\
             - Track the reference path and keep the reference speed.\n\
             - Moderate smoothness is enough.\n"
                .to_string()
        } else {
            "- Open space without notable obstacles.\n- Keep the current behaviour.\n".to_string()
        }
    }

    fn weight_retrieval(&self, user: &str) -> String {
        let instruction = field(user, INSTRUCTION).unwrap_or_default().to_lowercase();
        let mut z: BTreeMap<String, i64> = key_values(&section(user, RATINGS))
            .into_iter()
            .filter_map(|(k, (v, _))| Some((k, v.parse().ok()?)))
            .collect();
        let params = key_values(&section(user, PARAMETERS));
        let value = |name: &str| params.get(name).and_then(|(v, _)| v.parse::<f64>().ok());
        let mut new_params: BTreeMap<&str, f64> = BTreeMap::new();
        let mut reasons = Vec::new();

        let set_row = |z: &mut BTreeMap<String, i64>, row: [i64; 5]| {
            for (name, r) in ["contour", "lag", "velocity", "accel", "omega"]
                .iter()
                .zip(row)
            {
                if let Some(e) = z.get_mut(*name) {
                    *e = r;
                }
            }
        };
        let bump = |z: &mut BTreeMap<String, i64>, name: &str, d: i64| {
            if let Some(e) = z.get_mut(name) {
                *e = (*e + d).clamp(0, MAX_RATING as i64);
            }
        };

        // Camera guidance maps onto a whole rating row; plain instructions
        // adjust individual ratings.
        let scene_row = if instruction.contains("dense crowd") {
            Some(([6, 6, 4, 7, 7], "crowded open area"))
        } else if instruction.contains("congested with pedestrians") {
            Some(([8, 8, 4, 7, 6], "narrow and congested"))
        } else if instruction.contains("without dynamic obstacles") {
            Some(([8, 8, 6, 6, 7], "confined and empty"))
        } else {
            None
        };
        if let Some((row, why)) = scene_row {
            set_row(&mut z, row);
            reasons.push(why);
        }
        let plain = scene_row.is_none();
        if plain && has_any(&instruction, FAST) {
            let v_max = value("v_max").unwrap_or(DEFAULT_V_MAX);
            if params.get("v_ref").is_some_and(|(_, t)| *t) {
                new_params.insert("v_ref", v_max);
            }
            bump(&mut z, "velocity", 2);
            reasons.push("faster");
        }
        if plain && has_any(&instruction, CAREFUL) {
            if let Some(v) = value("v_ref") {
                new_params.insert("v_ref", v.min(1.2));
            }
            bump(&mut z, "accel", 3);
            bump(&mut z, "omega", 3);
            reasons.push("careful");
        }
        if plain && has_any(&instruction, SMOOTH) {
            bump(&mut z, "accel", 2);
            bump(&mut z, "omega", 2);
            reasons.push("smoother");
        }
        if plain && has_any(&instruction, STICK) {
            bump(&mut z, "contour", 3);
            bump(&mut z, "lag", 3);
            reasons.push("path adherence");
        }
        if plain && has_any(&instruction, ROTATE) {
            bump(&mut z, "omega", -3);
            reasons.push("more rotation");
        }
        if plain && (has_any(&instruction, SAFE) || instruction.contains("farther")) {
            if let Some(d) = value("d_safe") {
                new_params.insert("d_safe", safe_target(&instruction).unwrap_or(d + 0.5));
            }
            bump(&mut z, "safe_distance", 5);
            bump(&mut z, "contour", -3);
            bump(&mut z, "lag", -3);
            reasons.push("more distance to humans, looser path tracking");
        }

        let mut out = String::new();
        for (name, r) in &z {
            let _ = writeln!(out, "RATING {name}={r}");
        }
        for (name, v) in &new_params {
            let _ = writeln!(out, "PARAM {name}={v}");
        }
        let reason = if reasons.is_empty() {
            "no change needed".to_string()
        } else {
            reasons.join(", ")
        };
        let _ = writeln!(out, "REASON: {reason}");
        out
    }
}

impl LlmClient for MockBackend {
    fn send(
        &mut self,
        _system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let answer = if field(user, INSTRUCTION).is_some() {
            self.weight_retrieval(user)
        } else if field(user, SCENE).is_some() {
            self.camera(user)
        } else if user.contains("CURRENT COST TERMS:") {
            self.capability(user)
        } else {
            self.cost_generation(conversation, user)
        };
        Ok(answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_in_text() {
        assert_eq!(
            distance_in("keep a distance of at least 1.5m from pedestrians."),
            Some(1.5)
        );
        assert_eq!(distance_in("at least 2 meters away"), Some(2.0));
        assert_eq!(distance_in("be careful"), None);
    }

    #[test]
    fn query_keywords() {
        assert_eq!(
            query_features("Stick to the path."),
            BTreeSet::from([Feature::Path])
        );
        assert_eq!(
            query_features("Go to the goal while keeping a safe distance from humans."),
            BTreeSet::from([Feature::Goal, Feature::SafeDistance])
        );
        assert_eq!(query_features("Be faster."), BTreeSet::new());
        assert_eq!(
            query_features(
                "Follow the reference path. You are navigating through a factory without humans."
            ),
            BTreeSet::from([Feature::Path])
        );
    }
}
