use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ast::CostExpr;
use super::builtin::BuiltinTerm;
use super::eval::{eval, Env, EvalError, ParamSource, VarValues};
use super::parse::{parse_expr, ParseError};

/// Speed limit assumed when a parameter set carries no `v_max`.
pub const DEFAULT_V_MAX: f64 = 2.5;
/// Default reference speed.
pub const DEFAULT_V_REF: f64 = 2.0;
/// Default epsilon added to inverse-distance denominators [m^2].
pub const DEFAULT_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostSpecError {
    #[error("duplicate term name `{0}`")]
    DuplicateTerm(String),
    #[error("invalid term name `{0}`")]
    InvalidTermName(String),
    #[error("term `{term}` references parameter `{param}` which is not declared")]
    MissingParameter { term: String, param: String },
    #[error("weight for `{term}` must be finite and non-negative, got {weight}")]
    InvalidWeight { term: String, weight: f64 },
    #[error("weight given for unknown term `{0}`")]
    UnknownWeight(String),
    #[error("term `{term}`: {source}")]
    Parse {
        term: String,
        #[source]
        source: ParseError,
    },
    #[error("unknown builtin term `{0}`")]
    UnknownBuiltin(String),
    #[error("term `{0}` divides by an expression without a positive epsilon or constant guard")]
    UnguardedDivision(String),
    #[error("term `{0}` contains a non-finite constant")]
    NonFiniteConstant(String),
    #[error("parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
}

/// One named entry of the parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: f64,
    #[serde(default)]
    pub unit: String,
    /// Tunable parameters may be changed by the weight retrieval step;
    /// the rest are environmental.
    #[serde(default)]
    pub tunable: bool,
}

impl Parameter {
    pub fn tunable(value: f64, unit: &str) -> Self {
        Parameter {
            value,
            unit: unit.to_string(),
            tunable: true,
        }
    }

    pub fn environmental(value: f64, unit: &str) -> Self {
        Parameter {
            value,
            unit: unit.to_string(),
            tunable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSet(BTreeMap<String, Parameter>);

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// `v_ref`, `v_max`, `eps` and a goal at the origin.
    pub fn navigation_defaults() -> Self {
        let mut p = ParameterSet::new();
        p.insert("v_ref", Parameter::tunable(DEFAULT_V_REF, "m/s"));
        p.insert("v_max", Parameter::environmental(DEFAULT_V_MAX, "m/s"));
        p.insert("eps", Parameter::environmental(DEFAULT_EPS, "m^2"));
        p.insert("goal_x", Parameter::environmental(0.0, "m"));
        p.insert("goal_y", Parameter::environmental(0.0, "m"));
        p
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Parameter) {
        self.0.insert(name.into(), param);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).map(|p| p.value)
    }

    pub fn entry(&self, name: &str) -> Option<&Parameter> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Overwrites the value of an existing parameter, keeping unit and flag.
    pub fn set_value(&mut self, name: &str, value: f64) -> bool {
        match self.0.get_mut(name) {
            Some(p) => {
                p.value = value;
                true
            }
            None => false,
        }
    }

    pub fn v_max(&self) -> f64 {
        self.get("v_max").unwrap_or(DEFAULT_V_MAX)
    }

    pub fn set_goal(&mut self, x: f64, y: f64) {
        self.insert("goal_x", Parameter::environmental(x, "m"));
        self.insert("goal_y", Parameter::environmental(y, "m"));
    }

    /// Adds every entry of `other` that is not already present.
    pub fn merge_missing(&mut self, other: &ParameterSet) {
        for (k, v) in other.iter() {
            self.0.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CostSpecError> {
        for (name, p) in &self.0 {
            if !p.value.is_finite() {
                return Err(CostSpecError::InvalidParameter {
                    name: name.clone(),
                    reason: "value is not finite".into(),
                });
            }
        }
        if let Some(v_ref) = self.get("v_ref") {
            let v_max = self.v_max();
            if !(0.0..=v_max).contains(&v_ref) {
                return Err(CostSpecError::InvalidParameter {
                    name: "v_ref".into(),
                    reason: format!("{v_ref} outside [0, {v_max}]"),
                });
            }
        }
        Ok(())
    }
}

impl ParamSource for ParameterSet {
    fn param_value(&self, name: &str) -> Option<f64> {
        self.get(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermBody {
    Builtin(BuiltinTerm),
    Expr(CostExpr),
}

/// A named summand of the stage cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTerm", into = "RawTerm")]
pub struct CostTerm {
    pub name: String,
    pub body: TermBody,
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    name: String,
    kind: String,
    source: String,
}

impl TryFrom<RawTerm> for CostTerm {
    type Error = CostSpecError;

    fn try_from(raw: RawTerm) -> Result<Self, Self::Error> {
        match raw.kind.as_str() {
            "builtin" => {
                let b = raw
                    .source
                    .parse::<BuiltinTerm>()
                    .map_err(|e| CostSpecError::UnknownBuiltin(e.0))?;
                Ok(CostTerm::builtin_named(raw.name, b))
            }
            "expr" => CostTerm::from_source(raw.name, &raw.source),
            other => Err(CostSpecError::InvalidTermName(format!(
                "{}: unknown kind `{other}`",
                raw.name
            ))),
        }
    }
}

impl From<CostTerm> for RawTerm {
    fn from(t: CostTerm) -> Self {
        let (kind, source) = match &t.body {
            TermBody::Builtin(b) => ("builtin", b.name().to_string()),
            TermBody::Expr(e) => ("expr", e.to_string()),
        };
        RawTerm {
            name: t.name,
            kind: kind.to_string(),
            source,
        }
    }
}

impl CostTerm {
    /// Builtin term named after its identifier.
    pub fn builtin(b: BuiltinTerm) -> Self {
        Self::builtin_named(b.name(), b)
    }

    pub fn builtin_named(name: impl Into<String>, b: BuiltinTerm) -> Self {
        CostTerm {
            name: name.into(),
            body: TermBody::Builtin(b),
        }
    }

    pub fn expr(name: impl Into<String>, expr: CostExpr) -> Self {
        CostTerm {
            name: name.into(),
            body: TermBody::Expr(expr),
        }
    }

    pub fn from_source(name: impl Into<String>, source: &str) -> Result<Self, CostSpecError> {
        let name = name.into();
        let expr = parse_expr(source).map_err(|e| CostSpecError::Parse {
            term: name.clone(),
            source: e,
        })?;
        Ok(CostTerm::expr(name, expr))
    }

    pub fn to_expr(&self) -> CostExpr {
        match &self.body {
            TermBody::Builtin(b) => b.expr(),
            TermBody::Expr(e) => e.clone(),
        }
    }

    pub fn builtin_kind(&self) -> Option<BuiltinTerm> {
        match self.body {
            TermBody::Builtin(b) => Some(b),
            TermBody::Expr(_) => None,
        }
    }
}

/// Weighted sum of cost terms plus the parameters they reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct CostSpec {
    terms: Vec<CostTerm>,
    weights: BTreeMap<String, f64>,
    params: ParameterSet,
    #[serde(default)]
    provenance: String,
}

#[derive(Deserialize)]
struct RawSpec {
    terms: Vec<CostTerm>,
    #[serde(default)]
    weights: BTreeMap<String, f64>,
    #[serde(default)]
    params: ParameterSet,
    #[serde(default)]
    provenance: String,
}

impl TryFrom<RawSpec> for CostSpec {
    type Error = CostSpecError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        compose_cost(raw.terms, &raw.weights, raw.params, raw.provenance)
    }
}

fn valid_term_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_positive_guard(e: &CostExpr, params: &ParameterSet) -> bool {
    match e {
        CostExpr::Const(c) => *c > 0.0,
        CostExpr::Param(p) => params.get(p).is_some_and(|v| v > 0.0),
        _ => false,
    }
}

fn addend_guarded(e: &CostExpr, params: &ParameterSet) -> bool {
    match e {
        CostExpr::Add(l, r) => addend_guarded(l, params) || addend_guarded(r, params),
        other => is_positive_guard(other, params),
    }
}

fn division_guarded(denominator: &CostExpr, params: &ParameterSet) -> bool {
    match denominator {
        CostExpr::Const(c) => *c != 0.0,
        other => addend_guarded(other, params),
    }
}

fn check_expr(name: &str, expr: &CostExpr, params: &ParameterSet) -> Result<(), CostSpecError> {
    for p in expr.params() {
        if !params.contains(&p) {
            return Err(CostSpecError::MissingParameter {
                term: name.to_string(),
                param: p,
            });
        }
    }
    let mut err = None;
    expr.visit(&mut |e| match e {
        CostExpr::Const(c) if !c.is_finite() => {
            err.get_or_insert(CostSpecError::NonFiniteConstant(name.to_string()));
        }
        CostExpr::Div(_, d) if !division_guarded(d, params) => {
            err.get_or_insert(CostSpecError::UnguardedDivision(name.to_string()));
        }
        _ => {}
    });
    err.map_or(Ok(()), Err)
}

/// Validates terms, weights and parameters into a [`CostSpec`].
///
/// Missing mandatory terms (`accel`, `omega`, `velocity`) are injected.
/// Terms without an explicit weight get weight 1.
pub fn compose_cost(
    terms: Vec<CostTerm>,
    weights: &BTreeMap<String, f64>,
    mut params: ParameterSet,
    provenance: impl Into<String>,
) -> Result<CostSpec, CostSpecError> {
    let mut terms = terms;
    for m in BuiltinTerm::MANDATORY {
        if !terms.iter().any(|t| t.name == m.name()) {
            terms.push(CostTerm::builtin(m));
        }
    }
    if !params.contains("v_ref") {
        params.insert(
            "v_ref",
            Parameter::tunable(DEFAULT_V_REF.min(params.v_max()), "m/s"),
        );
    }
    params.validate()?;

    let mut seen = BTreeSet::new();
    for t in &terms {
        if !valid_term_name(&t.name) {
            return Err(CostSpecError::InvalidTermName(t.name.clone()));
        }
        if !seen.insert(t.name.as_str()) {
            return Err(CostSpecError::DuplicateTerm(t.name.clone()));
        }
        check_expr(&t.name, &t.to_expr(), &params)?;
    }
    if let Some(unknown) = weights.keys().find(|k| !seen.contains(k.as_str())) {
        return Err(CostSpecError::UnknownWeight(unknown.clone()));
    }
    let mut full = BTreeMap::new();
    for t in &terms {
        let w = weights.get(&t.name).copied().unwrap_or(1.0);
        if !(w.is_finite() && w >= 0.0) {
            return Err(CostSpecError::InvalidWeight {
                term: t.name.clone(),
                weight: w,
            });
        }
        full.insert(t.name.clone(), w);
    }
    Ok(CostSpec {
        terms,
        weights: full,
        params,
        provenance: provenance.into(),
    })
}

impl CostSpec {
    pub fn terms(&self) -> &[CostTerm] {
        &self.terms
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn term_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn term(&self, name: &str) -> Option<&CostTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn has_term(&self, name: &str) -> bool {
        self.term(name).is_some()
    }

    pub fn weight(&self, name: &str) -> Option<f64> {
        self.weights.get(name).copied()
    }

    /// Same terms with new weights and parameters, revalidated.
    pub fn retuned(
        &self,
        weights: &BTreeMap<String, f64>,
        params: ParameterSet,
        provenance: impl Into<String>,
    ) -> Result<CostSpec, CostSpecError> {
        compose_cost(self.terms.clone(), weights, params, provenance)
    }

    /// Copy with one parameter value replaced, if it exists.
    pub fn with_param(&self, name: &str, value: f64) -> Result<CostSpec, CostSpecError> {
        let mut params = self.params.clone();
        params.set_value(name, value);
        self.retuned(&self.weights, params, self.provenance.clone())
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<CostSpec, CostSpecError> {
        let weights = self
            .weights
            .iter()
            .map(|(k, w)| (k.clone(), w * factor))
            .collect();
        self.retuned(&weights, self.params.clone(), self.provenance.clone())
    }

    /// `sum_alpha w_alpha * term_alpha` at one stage.
    pub fn stage_value(&self, vars: VarValues) -> Result<f64, EvalError> {
        let env = Env::new(vars, &self.params);
        let mut total = 0.0;
        for t in &self.terms {
            let w = self.weights[&t.name];
            if w != 0.0 {
                total += w * eval(&t.to_expr(), &env)?;
            }
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Weighted terms with every parameter folded into a constant.
    pub fn compiled_terms(&self) -> Vec<(String, f64, CostExpr)> {
        let lookup = |name: &str| self.params.get(name);
        self.terms
            .iter()
            .map(|t| {
                (
                    t.name.clone(),
                    self.weights[&t.name],
                    t.to_expr().substitute_params(&lookup),
                )
            })
            .collect()
    }

    /// Human-readable listing, one `name = source` line per term.
    pub fn source(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            let kind = match t.body {
                TermBody::Builtin(_) => " (builtin)",
                TermBody::Expr(_) => "",
            };
            let _ = writeln!(out, "{} = {}{}", t.name, t.to_expr(), kind);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cost spec serializes")
    }

    /// Short content hash over terms, weights and parameters.
    pub fn digest(&self) -> String {
        let body = serde_json::json!({
            "terms": self.terms,
            "weights": self.weights,
            "params": self.params,
        });
        let hash = Sha256::digest(body.to_string().as_bytes());
        hex::encode(&hash[..8])
    }
}
