use std::collections::{BTreeMap, HashMap};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::ast::{CostExpr, Var};

/// Offset inside `abs_smooth(x) = sqrt(x^2 + ABS_SMOOTH_EPS)`.
pub const ABS_SMOOTH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVar(Var),
    #[error("unbound parameter `{0}`")]
    UnboundParam(String),
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
}

/// Values for the stage variables; unset entries are unbound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VarValues([Option<f64>; Var::COUNT]);

impl VarValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.set(var, value);
        self
    }

    pub fn set(&mut self, var: Var, value: f64) {
        self.0[var.index()] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.0[var.index()]
    }

    /// Every variable bound, in [`Var::ALL`] order.
    pub fn full(values: [f64; Var::COUNT]) -> Self {
        VarValues(values.map(Some))
    }
}

/// Anything that resolves parameter names to values.
pub trait ParamSource {
    fn param_value(&self, name: &str) -> Option<f64>;
}

impl ParamSource for BTreeMap<String, f64> {
    fn param_value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl ParamSource for HashMap<String, f64> {
    fn param_value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl ParamSource for () {
    fn param_value(&self, _: &str) -> Option<f64> {
        None
    }
}

/// Evaluation environment: stage variables plus parameters.
pub struct Env<'a> {
    pub vars: VarValues,
    pub params: &'a dyn ParamSource,
}

impl<'a> Env<'a> {
    pub fn new(vars: VarValues, params: &'a dyn ParamSource) -> Self {
        Env { vars, params }
    }
}

/// How `if_else` combines its branches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IfElseMode {
    /// Only the selected branch is evaluated.
    #[default]
    Exact,
    /// `s * then + (1 - s) * else` with `s = sigmoid(cond / tau)`.
    Sigmoid { tau: f64 },
}

/// Number type the evaluator is generic over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn exp(self) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// Forward-mode dual number carrying `N` directional derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(re: f64) -> Self {
        Dual { re, eps: [0.0; N] }
    }

    /// Seeds slot `i` with derivative 1.
    pub fn variable(re: f64, i: usize) -> Self {
        let mut eps = [0.0; N];
        eps[i] = 1.0;
        Dual { re, eps }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        Dual {
            re: f,
            eps: self.eps.map(|d| d * df),
        }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e += r;
        }
        Dual {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e -= r;
        }
        Dual {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (self.eps[i] - re * rhs.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            re: -self.re,
            eps: self.eps.map(|d| -d),
        }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn constant(c: f64) -> Self {
        Dual::constant(c)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(1.0);
        }
        self.chain(self.re.powi(n), n as f64 * self.re.powi(n - 1))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
}

/// Evaluates `expr` over any [`Scalar`], resolving variables via `var`.
pub fn eval_generic<S: Scalar>(
    expr: &CostExpr,
    var: &impl Fn(Var) -> Option<S>,
    params: &dyn ParamSource,
    mode: IfElseMode,
) -> Result<S, EvalError> {
    use CostExpr::*;
    let rec = |e: &CostExpr| eval_generic(e, var, params, mode);
    Ok(match expr {
        Const(c) => S::constant(*c),
        Var(v) => var(*v).ok_or(EvalError::UnboundVar(*v))?,
        Param(p) => S::constant(
            params
                .param_value(p)
                .ok_or_else(|| EvalError::UnboundParam(p.clone()))?,
        ),
        Neg(x) => -rec(x)?,
        Add(l, r) => rec(l)? + rec(r)?,
        Sub(l, r) => rec(l)? - rec(r)?,
        Mul(l, r) => rec(l)? * rec(r)?,
        Div(l, r) => rec(l)? / rec(r)?,
        Pow(x, n) => rec(x)?.powi(*n as i32),
        Min(l, r) => {
            let (a, b) = (rec(l)?, rec(r)?);
            if b.value() < a.value() {
                b
            } else {
                a
            }
        }
        Max(l, r) => {
            let (a, b) = (rec(l)?, rec(r)?);
            if b.value() > a.value() {
                b
            } else {
                a
            }
        }
        Sqrt(x) => rec(x)?.sqrt(),
        AbsSmooth(x) => {
            let x = rec(x)?;
            (x * x + S::constant(ABS_SMOOTH_EPS)).sqrt()
        }
        IfElse(c, t, e) => {
            let cond = rec(c)?;
            match mode {
                IfElseMode::Exact => {
                    if cond.value() >= 0.0 {
                        rec(t)?
                    } else {
                        rec(e)?
                    }
                }
                IfElseMode::Sigmoid { tau } => {
                    let one = S::constant(1.0);
                    let s = one / (one + (-cond / S::constant(tau)).exp());
                    s * rec(t)? + (one - s) * rec(e)?
                }
            }
        }
    })
}

/// Exact-branch evaluation.
pub fn eval(expr: &CostExpr, env: &Env<'_>) -> Result<f64, EvalError> {
    let vars = env.vars;
    let value = eval_generic(expr, &|v| vars.get(v), env.params, IfElseMode::Exact)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Value and derivatives with respect to every stage variable, indexed by
/// [`Var::index`]. Unbound variables that the expression never touches are
/// harmless; referenced ones produce [`EvalError::UnboundVar`].
pub fn value_and_gradient(
    expr: &CostExpr,
    env: &Env<'_>,
    mode: IfElseMode,
) -> Result<(f64, [f64; Var::COUNT]), EvalError> {
    let vars = env.vars;
    let d: Dual<{ Var::COUNT }> = eval_generic(
        expr,
        &|v| vars.get(v).map(|x| Dual::variable(x, v.index())),
        env.params,
        mode,
    )?;
    if d.re.is_finite() && d.eps.iter().all(|g| g.is_finite()) {
        Ok((d.re, d.eps))
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Gradient with respect to `wrt`, in that order.
pub fn grad(expr: &CostExpr, env: &Env<'_>, wrt: &[Var]) -> Result<Vec<f64>, EvalError> {
    let (_, g) = value_and_gradient(expr, env, IfElseMode::Exact)?;
    Ok(wrt.iter().map(|v| g[v.index()]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse::parse_expr;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn velocity_tracking_vanishes_at_reference() {
        let e = parse_expr("(v - v_ref)^2").unwrap();
        let p = params(&[("v_ref", 1.7)]);
        let env = Env::new(VarValues::new().with(Var::V, 1.7), &p);
        assert_eq!(eval(&e, &env).unwrap(), 0.0);
    }

    #[test]
    fn goal_distance_value_and_gradient() {
        let e = parse_expr("(goal_x - px)^2 + (goal_y - py)^2").unwrap();
        let p = params(&[("goal_x", 4.0), ("goal_y", 6.0)]);
        let env = Env::new(VarValues::new().with(Var::Px, 1.0).with(Var::Py, 2.0), &p);
        assert_eq!(eval(&e, &env).unwrap(), 25.0);
        assert_eq!(
            grad(&e, &env, &[Var::Px, Var::Py]).unwrap(),
            vec![-6.0, -8.0]
        );
    }

    #[test]
    fn velocity_derivative() {
        let e = parse_expr("(v - v_ref)^2").unwrap();
        let p = params(&[("v_ref", 1.0)]);
        let env = Env::new(VarValues::new().with(Var::V, 2.0), &p);
        assert_eq!(grad(&e, &env, &[Var::V]).unwrap(), vec![2.0]);
    }

    #[test]
    fn inverse_distance_with_epsilon() {
        let e = parse_expr("1/((oh_x - px)^2 + (oh_y - py)^2 + eps)").unwrap();
        let p = params(&[("eps", 0.01)]);
        let vars = VarValues::new()
            .with(Var::OhX, 1.0)
            .with(Var::OhY, 0.0)
            .with(Var::Px, 0.0)
            .with(Var::Py, 0.0);
        assert_eq!(eval(&e, &Env::new(vars, &p)).unwrap(), 1.0 / 1.01);
    }

    #[test]
    fn if_else_takes_active_branch() {
        let e = parse_expr("if_else(v - 1, 10 * v, -v)").unwrap();
        let p = params(&[]);
        let hi = Env::new(VarValues::new().with(Var::V, 1.0), &p);
        assert_eq!(eval(&e, &hi).unwrap(), 10.0);
        assert_eq!(grad(&e, &hi, &[Var::V]).unwrap(), vec![10.0]);
        let lo = Env::new(VarValues::new().with(Var::V, 0.5), &p);
        assert_eq!(eval(&e, &lo).unwrap(), -0.5);
        assert_eq!(grad(&e, &lo, &[Var::V]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn sigmoid_blend_interpolates() {
        let e = parse_expr("if_else(v, 1, 0)").unwrap();
        let p = params(&[]);
        let env = Env::new(VarValues::new().with(Var::V, 0.0), &p);
        let d: f64 = eval_generic(
            &e,
            &|v| env.vars.get(v),
            &p,
            IfElseMode::Sigmoid { tau: 0.05 },
        )
        .unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbound_and_non_finite() {
        let e = parse_expr("v / w").unwrap();
        let p = params(&[("w", 0.0)]);
        assert_eq!(
            eval(&e, &Env::new(VarValues::new(), &p)).unwrap_err(),
            EvalError::UnboundVar(Var::V)
        );
        let env = Env::new(VarValues::new().with(Var::V, 1.0), &p);
        assert_eq!(eval(&e, &env).unwrap_err(), EvalError::NonFinite);
        let empty = params(&[]);
        let env = Env::new(VarValues::new().with(Var::V, 1.0), &empty);
        assert_eq!(
            eval(&e, &env).unwrap_err(),
            EvalError::UnboundParam("w".into())
        );
    }

    #[test]
    fn min_max_sqrt_abs() {
        let p = params(&[]);
        let env = Env::new(
            VarValues::new().with(Var::A, -3.0).with(Var::Omega, 4.0),
            &p,
        );
        let e = parse_expr("min(a, omega) + max(a, omega) + sqrt(a^2 + omega^2)").unwrap();
        assert_eq!(eval(&e, &env).unwrap(), 6.0);
        let g = grad(&e, &env, &[Var::A, Var::Omega]).unwrap();
        assert!((g[0] - (1.0 - 0.6)).abs() < 1e-12);
        assert!((g[1] - (1.0 + 0.8)).abs() < 1e-12);
        let e = parse_expr("abs_smooth(a)").unwrap();
        assert!((eval(&e, &env).unwrap() - 3.0).abs() < 1e-6);
    }
}
