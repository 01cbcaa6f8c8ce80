use super::ast::{CostExpr, Var};
use super::eval::{EvalError, ParamSource, ABS_SMOOTH_EPS};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, i32),
    Min(usize, usize),
    Max(usize, usize),
    Sqrt(usize),
    AbsSmooth(usize),
    IfElse(usize, usize, usize),
}

/// Postorder instruction list for one expression with parameters folded in.
///
/// Evaluates with exact `if_else` semantics and computes the gradient with
/// respect to all stage variables in a single reverse sweep.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
}

impl Tape {
    pub fn compile(expr: &CostExpr, params: &dyn ParamSource) -> Result<Tape, EvalError> {
        let mut ops = Vec::with_capacity(expr.node_count());
        push(expr, params, &mut ops)?;
        Ok(Tape { ops })
    }

    /// Sum of `weight * expr` over the weighted terms, skipping zero weights.
    pub fn compile_weighted<'a>(
        terms: impl IntoIterator<Item = (f64, &'a CostExpr)>,
        params: &dyn ParamSource,
    ) -> Result<Tape, EvalError> {
        let mut ops = Vec::new();
        let mut acc: Option<usize> = None;
        for (w, e) in terms {
            if w == 0.0 {
                continue;
            }
            push(e, params, &mut ops)?;
            let body = ops.len() - 1;
            ops.push(Op::Const(w));
            ops.push(Op::Mul(ops.len() - 1, body));
            let term = ops.len() - 1;
            if let Some(prev) = acc {
                ops.push(Op::Add(prev, term));
            }
            acc = Some(ops.len() - 1);
        }
        if acc.is_none() {
            ops.push(Op::Const(0.0));
        }
        Ok(Tape { ops })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn forward(&self, vars: &[f64; Var::COUNT], val: &mut Vec<f64>) {
        val.clear();
        for op in &self.ops {
            let x = match *op {
                Op::Const(c) => c,
                Op::Var(i) => vars[i],
                Op::Neg(a) => -val[a],
                Op::Add(a, b) => val[a] + val[b],
                Op::Sub(a, b) => val[a] - val[b],
                Op::Mul(a, b) => val[a] * val[b],
                Op::Div(a, b) => val[a] / val[b],
                Op::Pow(a, n) => val[a].powi(n),
                Op::Min(a, b) => {
                    if val[b] < val[a] {
                        val[b]
                    } else {
                        val[a]
                    }
                }
                Op::Max(a, b) => {
                    if val[b] > val[a] {
                        val[b]
                    } else {
                        val[a]
                    }
                }
                Op::Sqrt(a) => val[a].sqrt(),
                Op::AbsSmooth(a) => (val[a] * val[a] + ABS_SMOOTH_EPS).sqrt(),
                Op::IfElse(c, t, e) => {
                    if val[c] >= 0.0 {
                        val[t]
                    } else {
                        val[e]
                    }
                }
            };
            val.push(x);
        }
    }

    pub fn eval(&self, vars: &[f64; Var::COUNT], scratch: &mut Vec<f64>) -> f64 {
        self.forward(vars, scratch);
        *scratch.last().unwrap_or(&0.0)
    }

    /// Value and gradient indexed by [`Var::index`].
    pub fn eval_grad(
        &self,
        vars: &[f64; Var::COUNT],
        scratch: &mut Scratch,
    ) -> (f64, [f64; Var::COUNT]) {
        let Scratch { val, adj } = scratch;
        self.forward(vars, val);
        let n = self.ops.len();
        adj.clear();
        adj.resize(n, 0.0);
        let mut g = [0.0; Var::COUNT];
        if n == 0 {
            return (0.0, g);
        }
        adj[n - 1] = 1.0;
        for i in (0..n).rev() {
            let d = adj[i];
            if d == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Const(_) => {}
                Op::Var(k) => g[k] += d,
                Op::Neg(a) => adj[a] -= d,
                Op::Add(a, b) => {
                    adj[a] += d;
                    adj[b] += d;
                }
                Op::Sub(a, b) => {
                    adj[a] += d;
                    adj[b] -= d;
                }
                Op::Mul(a, b) => {
                    adj[a] += d * val[b];
                    adj[b] += d * val[a];
                }
                Op::Div(a, b) => {
                    adj[a] += d / val[b];
                    adj[b] -= d * val[i] / val[b];
                }
                Op::Pow(a, p) => {
                    if p != 0 {
                        adj[a] += d * p as f64 * val[a].powi(p - 1);
                    }
                }
                Op::Min(a, b) => {
                    if val[b] < val[a] {
                        adj[b] += d
                    } else {
                        adj[a] += d
                    }
                }
                Op::Max(a, b) => {
                    if val[b] > val[a] {
                        adj[b] += d
                    } else {
                        adj[a] += d
                    }
                }
                Op::Sqrt(a) => adj[a] += d * 0.5 / val[i],
                Op::AbsSmooth(a) => adj[a] += d * val[a] / val[i],
                Op::IfElse(c, t, e) => {
                    if val[c] >= 0.0 {
                        adj[t] += d
                    } else {
                        adj[e] += d
                    }
                }
            }
        }
        (val[n - 1], g)
    }
}

/// Reusable buffers for [`Tape::eval_grad`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    val: Vec<f64>,
    adj: Vec<f64>,
}

impl Scratch {
    pub fn values(&mut self) -> &mut Vec<f64> {
        &mut self.val
    }
}

fn push(e: &CostExpr, params: &dyn ParamSource, ops: &mut Vec<Op>) -> Result<(), EvalError> {
    let child = |e: &CostExpr, ops: &mut Vec<Op>| -> Result<usize, EvalError> {
        push(e, params, ops)?;
        Ok(ops.len() - 1)
    };
    let op = match e {
        CostExpr::Const(c) => Op::Const(*c),
        CostExpr::Var(v) => Op::Var(v.index()),
        CostExpr::Param(p) => Op::Const(
            params
                .param_value(p)
                .ok_or_else(|| EvalError::UnboundParam(p.clone()))?,
        ),
        CostExpr::Neg(a) => Op::Neg(child(a, ops)?),
        CostExpr::Add(a, b) => Op::Add(child(a, ops)?, child(b, ops)?),
        CostExpr::Sub(a, b) => Op::Sub(child(a, ops)?, child(b, ops)?),
        CostExpr::Mul(a, b) => Op::Mul(child(a, ops)?, child(b, ops)?),
        CostExpr::Div(a, b) => Op::Div(child(a, ops)?, child(b, ops)?),
        CostExpr::Pow(a, n) => Op::Pow(child(a, ops)?, *n as i32),
        CostExpr::Min(a, b) => Op::Min(child(a, ops)?, child(b, ops)?),
        CostExpr::Max(a, b) => Op::Max(child(a, ops)?, child(b, ops)?),
        CostExpr::Sqrt(a) => Op::Sqrt(child(a, ops)?),
        CostExpr::AbsSmooth(a) => Op::AbsSmooth(child(a, ops)?),
        CostExpr::IfElse(c, t, f) => Op::IfElse(child(c, ops)?, child(t, ops)?, child(f, ops)?),
    };
    ops.push(op);
    Ok(())
}
