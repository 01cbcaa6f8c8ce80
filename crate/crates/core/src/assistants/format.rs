use std::collections::BTreeMap;

use crate::dsl::{BuiltinTerm, CostTerm, Parameter};

use super::{RouteDecision, RouteKind};

/// Content lines with code fences, bullets and blank lines removed.
fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .map(|l| l.trim_start_matches(['-', '*', ' ']))
}

/// Splits `KEY: rest` or `KEY rest`, matching the key case-insensitively.
fn keyed<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let head = line.get(..key.len())?;
    if !head.eq_ignore_ascii_case(key) {
        return None;
    }
    let rest = &line[key.len()..];
    if !(rest.starts_with(':') || rest.starts_with(' ')) {
        return None;
    }
    Some(rest.trim_start_matches(':').trim())
}

pub fn parse_decision(text: &str) -> Option<RouteDecision> {
    let mut kind = None;
    let mut rationale = String::new();
    for line in content_lines(text) {
        if let Some(v) = keyed(line, "DECISION") {
            kind = kind.or(RouteKind::from_token(v));
        } else if let Some(v) = keyed(line, "REASON") {
            rationale = v.to_string();
        }
    }
    kind.map(|kind| RouteDecision { kind, rationale })
}

/// Terms and parameter declarations proposed by the cost generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CostManifest {
    pub terms: Vec<CostTerm>,
    pub params: Vec<(String, Parameter)>,
}

fn parse_param_decl(v: &str) -> Result<(String, Parameter), String> {
    let (name, rest) = v
        .split_once('=')
        .ok_or_else(|| format!("parameter declaration `{v}` lacks `=`"))?;
    let name = name.trim().to_string();
    let mut words = rest.split_whitespace();
    let value: f64 = words
        .next()
        .and_then(|w| w.parse().ok())
        .filter(|x: &f64| x.is_finite())
        .ok_or_else(|| format!("parameter `{name}` has no finite numeric value"))?;
    let mut param = Parameter::tunable(value, "");
    for w in words {
        match w.to_ascii_lowercase().as_str() {
            "tunable" => param.tunable = true,
            "environmental" | "fixed" => param.tunable = false,
            unit => param.unit = unit.to_string(),
        }
    }
    Ok((name, param))
}

pub fn parse_manifest(text: &str) -> Result<CostManifest, String> {
    let mut terms = Vec::new();
    let mut params = Vec::new();
    for line in content_lines(text) {
        if let Some(v) = keyed(line, "TERM") {
            if let Some((name, src)) = v.split_once(":=") {
                let term =
                    CostTerm::from_source(name.trim(), src.trim()).map_err(|e| e.to_string())?;
                terms.push(term);
            } else {
                let b: BuiltinTerm = v
                    .parse()
                    .map_err(|e: crate::dsl::UnknownBuiltin| e.to_string())?;
                terms.push(CostTerm::builtin(b));
            }
        } else if let Some(v) = keyed(line, "PARAM") {
            params.push(parse_param_decl(v)?);
        }
    }
    if terms.is_empty() {
        return Err("response contains no TERM lines".into());
    }
    Ok(CostManifest { terms, params })
}

/// Raw weight-retrieval answer before clamping and filtering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightAnswer {
    pub ratings: BTreeMap<String, i64>,
    pub params: BTreeMap<String, f64>,
    pub reason: String,
}

pub fn parse_ratings(text: &str) -> Result<WeightAnswer, String> {
    let mut out = WeightAnswer::default();
    for line in content_lines(text) {
        if let Some(v) = keyed(line, "RATING") {
            let (name, value) = v
                .split_once('=')
                .ok_or_else(|| format!("rating `{v}` lacks `=`"))?;
            let z: i64 = value
                .trim()
                .parse()
                .map_err(|_| format!("rating for `{}` is not an integer", name.trim()))?;
            out.ratings.insert(name.trim().to_string(), z);
        } else if let Some(v) = keyed(line, "PARAM") {
            let (name, value) = v
                .split_once('=')
                .ok_or_else(|| format!("parameter `{v}` lacks `=`"))?;
            let x: f64 = value
                .split_whitespace()
                .next()
                .and_then(|w| w.parse().ok())
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| format!("parameter `{}` has no finite value", name.trim()))?;
            out.params.insert(name.trim().to_string(), x);
        } else if let Some(v) = keyed(line, "REASON") {
            out.reason = v.to_string();
        }
    }
    if out.ratings.is_empty() && out.params.is_empty() {
        return Err("response contains no RATING or PARAM lines".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::TermBody;

    #[test]
    fn decision_inside_fence() {
        let d = parse_decision("```\nDECISION: GENERATE_NEW_COST\nREASON: needs a goal term\n```")
            .unwrap();
        assert_eq!(d.kind, RouteKind::GenerateNewCost);
        assert_eq!(d.rationale, "needs a goal term");
        assert!(parse_decision("I think we should regenerate.").is_none());
    }

    #[test]
    fn manifest_mixes_builtins_and_expressions() {
        let m = parse_manifest(
            "TERM: goal\nTERM: safe_distance := if_else(px - d_safe, 0, (px - d_safe)^2)\nPARAM: d_safe = 1.5 m tunable\n",
        )
        .unwrap();
        assert_eq!(m.terms.len(), 2);
        assert!(matches!(
            m.terms[0].body,
            TermBody::Builtin(BuiltinTerm::Goal)
        ));
        assert_eq!(m.params[0].0, "d_safe");
        assert_eq!(m.params[0].1, Parameter::tunable(1.5, "m"));
        assert!(parse_manifest("TERM: jerk").is_err());
        assert!(parse_manifest("TERM: x := (px").is_err());
        assert!(parse_manifest("hello").is_err());
    }

    #[test]
    fn ratings_and_params() {
        let a = parse_ratings(
            "RATING contour=8\nRATING: velocity = 12\nPARAM v_ref=2.5\nREASON: faster",
        )
        .unwrap();
        assert_eq!(a.ratings["contour"], 8);
        assert_eq!(a.ratings["velocity"], 12);
        assert_eq!(a.params["v_ref"], 2.5);
        assert!(parse_ratings("RATING contour=high").is_err());
        assert!(parse_ratings("nothing useful").is_err());
    }
}
