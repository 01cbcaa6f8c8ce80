use crate::dsl::{closest_human_binding, CostSpec, Scratch, Tape, Var, VarValues, DEFAULT_V_REF};
use crate::world::{
    unicycle_step, ControlInput, HalfSpace, HumanPrediction, PathProjection, ReferencePath,
    RobotState, Vec2,
};

use super::{MpcConfig, MpcError};

/// Per-solve data shared by every stage: path, predictions and the lag
/// reference schedule.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    pub path: &'a ReferencePath,
    pub predictions: &'a [HumanPrediction],
    /// Arc length of the initial state's projection.
    pub s_start: f64,
    pub v_ref: f64,
    pub dt: f64,
}

impl<'a> StageContext<'a> {
    pub fn new(
        path: &'a ReferencePath,
        predictions: &'a [HumanPrediction],
        start: Vec2,
        v_ref: f64,
        dt: f64,
    ) -> Self {
        StageContext {
            path,
            predictions,
            s_start: path.project(start).s,
            v_ref,
            dt,
        }
    }

    /// Arc length the robot should have reached at stage `k`.
    pub fn s_expected(&self, k: usize) -> f64 {
        (self.s_start + k as f64 * self.v_ref * self.dt).min(self.path.length())
    }

    pub fn closest_human(&self, p: Vec2, k: usize) -> Vec2 {
        closest_human_binding(
            p,
            self.predictions.iter().filter_map(|h| {
                let idx = k.min(h.positions.len().checked_sub(1)?);
                Some((h.human_id, h.positions[idx]))
            }),
        )
    }

    /// All stage variables, plus the projection used for `e_c` and `e_l`.
    pub fn bind(
        &self,
        state: &RobotState,
        input: &ControlInput,
        k: usize,
    ) -> ([f64; Var::COUNT], PathProjection) {
        let p = state.position();
        let proj = self.path.project(p);
        let d = p - proj.closest;
        let oh = self.closest_human(p, k);
        let mut vars = [0.0; Var::COUNT];
        vars[Var::Px.index()] = state.x;
        vars[Var::Py.index()] = state.y;
        vars[Var::Theta.index()] = state.theta;
        vars[Var::V.index()] = state.v;
        vars[Var::A.index()] = input.a;
        vars[Var::Omega.index()] = input.omega;
        vars[Var::OhX.index()] = oh.x;
        vars[Var::OhY.index()] = oh.y;
        vars[Var::Ec.index()] = proj.normal.dot(d);
        vars[Var::El.index()] = self.s_expected(k) - (proj.s + proj.tangent.dot(d));
        (vars, proj)
    }
}

pub(crate) fn spec_v_ref(spec: &CostSpec, v_max: f64) -> f64 {
    spec.params()
        .get("v_ref")
        .unwrap_or(DEFAULT_V_REF)
        .clamp(0.0, v_max)
}

/// Weighted stage cost of one `(state, input)` pair at stage `k`.
pub fn stage_cost(
    spec: &CostSpec,
    state: &RobotState,
    input: &ControlInput,
    k: usize,
    ctx: &StageContext<'_>,
) -> Result<f64, MpcError> {
    let (vars, _) = ctx.bind(state, input, k);
    spec.stage_value(VarValues::full(vars))
        .map_err(|e| MpcError::CostRejected(e.to_string()))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluation {
    pub cost: f64,
    pub max_violation: f64,
    pub merit: f64,
}

/// A single-shooting problem instance for a fixed initial state.
pub(crate) struct Problem<'a> {
    pub ctx: StageContext<'a>,
    pub config: &'a MpcConfig,
    pub x0: RobotState,
    tape: Tape,
    halfspaces: &'a [HalfSpace],
    r_robot: f64,
    /// Per prediction: squared inflated contact radius.
    r2: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        ctx: StageContext<'a>,
        config: &'a MpcConfig,
        x0: RobotState,
        spec: &CostSpec,
        halfspaces: &'a [HalfSpace],
        r_robot: f64,
        human_radii: &[f64],
    ) -> Result<Self, MpcError> {
        let terms: Vec<_> = spec
            .terms()
            .iter()
            .map(|t| (spec.weight(&t.name).unwrap_or(0.0), t.to_expr()))
            .collect();
        let tape = Tape::compile_weighted(terms.iter().map(|(w, e)| (*w, e)), spec.params())
            .map_err(|e| MpcError::CostRejected(e.to_string()))?;
        let r2 = human_radii
            .iter()
            .map(|rh| (r_robot + rh + config.human_margin).powi(2))
            .collect();
        Ok(Problem {
            ctx,
            config,
            x0,
            tape,
            halfspaces,
            r_robot,
            r2,
        })
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn rollout(&self, u: &[ControlInput]) -> Vec<RobotState> {
        let mut states = Vec::with_capacity(u.len() + 1);
        let mut x = self.x0;
        states.push(x);
        for input in u {
            x = unicycle_step(&x, input, self.config.dt);
            states.push(x);
        }
        states
    }

    /// Box clamp followed by a forward pass that keeps `v` in `[0, v_max]`.
    pub fn project(&self, u: &mut [ControlInput]) {
        let b = &self.config.bounds;
        let dt = self.config.dt;
        let mut v = self.x0.v;
        for input in u.iter_mut() {
            let mut c = b.clamp(*input);
            let lo = b.a_min.max(-v / dt);
            let hi = b.a_max.min((self.config.v_max - v) / dt);
            c.a = if lo <= hi {
                c.a.clamp(lo, hi)
            } else {
                lo.min(b.a_max)
            };
            v += dt * c.a;
            *input = c;
        }
    }

    fn stage_input(u: &[ControlInput], k: usize) -> ControlInput {
        u.get(k).copied().unwrap_or(ControlInput::ZERO)
    }

    pub fn evaluate(
        &self,
        u: &[ControlInput],
        states: &[RobotState],
        mu: f64,
        scratch: &mut Scratch,
    ) -> Result<Evaluation, MpcError> {
        let mut cost = 0.0;
        let mut penalty = 0.0;
        let mut max_violation: f64 = 0.0;
        for (k, x) in states.iter().enumerate() {
            let (vars, _) = self.ctx.bind(x, &Self::stage_input(u, k), k);
            cost += self.tape.eval(&vars, scratch.values());
            if k > 0 {
                self.for_each_violation(x, k, |g, _| {
                    penalty += g * g;
                    max_violation = max_violation.max(g);
                });
            }
        }
        if !cost.is_finite() {
            return Err(MpcError::CostRejected("non-finite stage cost".into()));
        }
        Ok(Evaluation {
            cost,
            max_violation,
            merit: cost + mu * penalty,
        })
    }

    /// Calls `f(g, dg/dp)` for every violated constraint at stage `k`.
    fn for_each_violation(&self, x: &RobotState, k: usize, mut f: impl FnMut(f64, Vec2)) {
        let p = x.position();
        for (pred, r2) in self.ctx.predictions.iter().zip(&self.r2) {
            let o = pred.positions[k.min(pred.positions.len() - 1)];
            let d = p - o;
            let g = 1.0 - d.dot(d) / r2;
            if g > 0.0 {
                f(g, d * (-2.0 / r2));
            }
        }
        for h in self.halfspaces {
            let g = h.normal.dot(p) - h.offset + self.r_robot;
            if g > 0.0 {
                f(g, h.normal);
            }
        }
    }

    /// Merit gradient with respect to every input via the adjoint recursion.
    pub fn gradient(
        &self,
        u: &[ControlInput],
        states: &[RobotState],
        mu: f64,
        scratch: &mut Scratch,
        out: &mut Vec<[f64; 2]>,
    ) -> Result<(), MpcError> {
        let n = u.len();
        let dt = self.config.dt;
        out.clear();
        out.resize(n, [0.0; 2]);
        // Costate over (x, y, theta, v).
        let mut lam = [0.0f64; 4];
        for k in (0..=n).rev() {
            let x = &states[k];
            let (vars, proj) = self.ctx.bind(x, &Self::stage_input(u, k), k);
            let (_, g) = self.tape.eval_grad(&vars, scratch);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(MpcError::CostRejected("non-finite cost gradient".into()));
            }
            let ec = g[Var::Ec.index()];
            let el = g[Var::El.index()];
            let mut gx = [
                g[Var::Px.index()] + ec * proj.normal.x - el * proj.tangent.x,
                g[Var::Py.index()] + ec * proj.normal.y - el * proj.tangent.y,
                g[Var::Theta.index()],
                g[Var::V.index()],
            ];
            if k > 0 {
                self.for_each_violation(x, k, |viol, dg| {
                    gx[0] += 2.0 * mu * viol * dg.x;
                    gx[1] += 2.0 * mu * viol * dg.y;
                });
            }
            if k < n {
                // lam currently holds the costate of stage k + 1.
                out[k] = [
                    g[Var::A.index()] + dt * lam[3],
                    g[Var::Omega.index()] + dt * lam[2],
                ];
                let (s, c) = x.theta.sin_cos();
                let next = lam;
                lam = [
                    gx[0] + next[0],
                    gx[1] + next[1],
                    gx[2] + next[2] + dt * x.v * (-s * next[0] + c * next[1]),
                    gx[3] + next[3] + dt * (c * next[0] + s * next[1]),
                ];
            } else {
                lam = gx;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{compose_cost, BuiltinTerm, CostTerm, ParameterSet};
    use crate::world::{predict_humans, Human};
    use std::collections::BTreeMap;

    fn straight_path() -> ReferencePath {
        ReferencePath::new(vec![Vec2::new(0.0, 0.0), Vec2::new(20.0, 0.0)]).unwrap()
    }

    fn spec_with(terms: &[BuiltinTerm], weights: &[(&str, f64)]) -> CostSpec {
        let weights: BTreeMap<_, _> = weights.iter().map(|(k, w)| (k.to_string(), *w)).collect();
        let mut params = ParameterSet::navigation_defaults();
        params.set_goal(5.0, 0.0);
        params.set_value("v_ref", 1.0);
        compose_cost(
            terms.iter().map(|b| CostTerm::builtin(*b)).collect(),
            &weights,
            params,
            "",
        )
        .unwrap()
    }

    #[test]
    fn path_cost_vanishes_on_reference() {
        let path = straight_path();
        let spec = spec_with(&[BuiltinTerm::Contour, BuiltinTerm::Lag], &[]);
        let ctx = StageContext::new(&path, &[], Vec2::new(2.0, 0.0), 1.0, 0.1);
        let s = RobotState::new(2.3, 0.0, 0.0, 1.0);
        assert_eq!(
            stage_cost(&spec, &s, &ControlInput::ZERO, 3, &ctx).unwrap(),
            0.0
        );
    }

    #[test]
    fn lateral_offset_costs_one() {
        let path = straight_path();
        let spec = spec_with(
            &[BuiltinTerm::Contour, BuiltinTerm::Lag],
            &[
                ("contour", 1.0),
                ("lag", 0.0),
                ("velocity", 0.0),
                ("accel", 0.0),
                ("omega", 0.0),
            ],
        );
        let ctx = StageContext::new(&path, &[], Vec2::new(4.0, 1.0), 1.0, 0.1);
        let s = RobotState::new(4.0, 1.0, 0.3, 0.2);
        let c = stage_cost(&spec, &s, &ControlInput::new(1.0, 1.0), 0, &ctx).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn goal_cost_vanishes_at_goal() {
        let path = straight_path();
        let spec = spec_with(&[BuiltinTerm::Goal], &[]);
        let ctx = StageContext::new(&path, &[], Vec2::ZERO, 1.0, 0.1);
        let s = RobotState::new(5.0, 0.0, 1.0, 1.0);
        assert_eq!(
            stage_cost(&spec, &s, &ControlInput::ZERO, 7, &ctx).unwrap(),
            0.0
        );
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let path = ReferencePath::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(5.0, 2.0),
        ])
        .unwrap();
        let hf = CostTerm::from_source("hmax", "1/((oh_x - px)^2 + (oh_y - py)^2 + eps)").unwrap();
        let mut terms: Vec<_> = [BuiltinTerm::Contour, BuiltinTerm::Lag, BuiltinTerm::Goal]
            .into_iter()
            .map(CostTerm::builtin)
            .collect();
        terms.push(hf);
        let mut params = ParameterSet::navigation_defaults();
        params.set_goal(4.0, 1.0);
        params.set_value("v_ref", 1.2);
        let spec = compose_cost(terms, &BTreeMap::new(), params, "").unwrap();
        let humans = vec![Human::new(0, Vec2::new(1.2, 0.3), Vec2::new(-0.2, 0.0))];
        let config = MpcConfig {
            horizon: 8,
            ..MpcConfig::default()
        };
        let preds = predict_humans(&humans, config.horizon, config.dt);
        let x0 = RobotState::new(0.2, -0.1, 0.2, 0.8);
        let ctx = StageContext::new(&path, &preds, x0.position(), 1.2, config.dt);
        let walls = [HalfSpace::new(Vec2::new(0.0, -1.0), 0.3)];
        let problem = Problem::new(ctx, &config, x0, &spec, &walls, 0.3, &[0.3]).unwrap();
        let u: Vec<_> = (0..8)
            .map(|k| ControlInput::new(0.3 - 0.1 * k as f64, 0.2 * (k as f64).sin()))
            .collect();
        let mu = 50.0;
        let mut scratch = Scratch::default();
        let mut g = Vec::new();
        problem
            .gradient(&u, &problem.rollout(&u), mu, &mut scratch, &mut g)
            .unwrap();
        let h = 1e-6;
        for k in 0..u.len() {
            for j in 0..2 {
                let mut up = u.clone();
                let mut dn = u.clone();
                if j == 0 {
                    up[k].a += h;
                    dn[k].a -= h;
                } else {
                    up[k].omega += h;
                    dn[k].omega -= h;
                }
                let fp = problem
                    .evaluate(&up, &problem.rollout(&up), mu, &mut scratch)
                    .unwrap();
                let fm = problem
                    .evaluate(&dn, &problem.rollout(&dn), mu, &mut scratch)
                    .unwrap();
                let fd = (fp.merit - fm.merit) / (2.0 * h);
                assert!(
                    (fd - g[k][j]).abs() <= 1e-5 * fd.abs().max(1.0),
                    "stage {k} input {j}: fd {fd} adjoint {}",
                    g[k][j]
                );
            }
        }
    }
}
