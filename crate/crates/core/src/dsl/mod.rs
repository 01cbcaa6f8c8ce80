//! Differentiable cost-expression language and the cost-spec container.

mod ast;
mod binding;
mod builtin;
mod eval;
mod parse;
mod spec;
mod tape;

pub use ast::{CostExpr, Func, Var, MAX_EXPONENT};
pub use binding::{closest_human_binding, NO_HUMAN_SENTINEL};
pub use builtin::{builtin, BuiltinTerm, UnknownBuiltin};
pub use eval::{
    eval, eval_generic, grad, value_and_gradient, Dual, Env, EvalError, IfElseMode, ParamSource,
    Scalar, VarValues, ABS_SMOOTH_EPS,
};
pub use parse::{parse_expr, ParseError};
pub use spec::{
    compose_cost, CostSpec, CostSpecError, CostTerm, Parameter, ParameterSet, TermBody,
    DEFAULT_EPS, DEFAULT_V_MAX, DEFAULT_V_REF,
};
pub use tape::{Scratch, Tape};
