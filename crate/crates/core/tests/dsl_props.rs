use std::collections::BTreeMap;

use langnav_core::dsl::{
    compose_cost, eval, parse_expr, value_and_gradient, BuiltinTerm, CostExpr, CostTerm, Env,
    IfElseMode, ParameterSet, Tape, Var, VarValues,
};
use proptest::prelude::*;

const H: f64 = 1e-6;
const SWITCH_GAP: f64 = 1e-4;

fn leaf() -> impl Strategy<Value = CostExpr> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(|c| CostExpr::Const((c * 100.0).round() / 100.0)),
        prop::sample::select(Var::ALL.to_vec()).prop_map(CostExpr::Var),
        prop::sample::select(vec!["v_ref", "d_safe"]).prop_map(CostExpr::param),
    ]
}

/// Random cost expressions. Division and square roots only ever see
/// arguments bounded away from zero so the derivative exists everywhere.
fn expr() -> impl Strategy<Value = CostExpr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        let bounded = |e: CostExpr| CostExpr::Const(0.5) + e.pow(2);
        prop_oneof![
            inner.clone().prop_map(|e| -e),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| l + r),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| l - r),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| l * r),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| l / bounded(r)),
            (inner.clone(), 1u32..4).prop_map(|(e, n)| e.pow(n)),
            (inner.clone(), inner.clone())
                .prop_map(|(l, r)| CostExpr::Min(Box::new(l), Box::new(r))),
            (inner.clone(), inner.clone())
                .prop_map(|(l, r)| CostExpr::Max(Box::new(l), Box::new(r))),
            inner
                .clone()
                .prop_map(move |e| CostExpr::Sqrt(Box::new(bounded(e)))),
            inner.clone().prop_map(|e| CostExpr::AbsSmooth(Box::new(e))),
            (inner.clone(), inner.clone(), inner).prop_map(|(c, t, e)| CostExpr::if_else(c, t, e)),
        ]
    })
}

fn point() -> impl Strategy<Value = [f64; Var::COUNT]> {
    prop::array::uniform10(-2.0..2.0f64)
}

fn params() -> BTreeMap<String, f64> {
    [("v_ref".to_string(), 1.5), ("d_safe".to_string(), 1.2)].into()
}

fn value_at(e: &CostExpr, x: &[f64; Var::COUNT], p: &BTreeMap<String, f64>) -> f64 {
    eval(e, &Env::new(VarValues::full(*x), p)).expect("finite")
}

/// True when `x` lies within `SWITCH_GAP` of a branch switch of `e` or of
/// any point reached by the finite-difference stencil.
fn near_switch(e: &CostExpr, x: &[f64; Var::COUNT], p: &BTreeMap<String, f64>) -> bool {
    let mut near = false;
    e.visit(&mut |node| {
        let gap = match node {
            CostExpr::IfElse(c, _, _) => Some(value_at(c, x, p).abs()),
            CostExpr::Min(l, r) | CostExpr::Max(l, r) => {
                Some((value_at(l, x, p) - value_at(r, x, p)).abs())
            }
            _ => None,
        };
        near |= gap.is_some_and(|g| g < SWITCH_GAP);
    });
    near
}

fn central_difference(
    e: &CostExpr,
    x: &[f64; Var::COUNT],
    p: &BTreeMap<String, f64>,
) -> [f64; Var::COUNT] {
    let mut g = [0.0; Var::COUNT];
    for (i, gi) in g.iter_mut().enumerate() {
        let (mut up, mut down) = (*x, *x);
        up[i] += H;
        down[i] -= H;
        *gi = (value_at(e, &up, p) - value_at(e, &down, p)) / (2.0 * H);
    }
    g
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn assert_gradient_matches(e: &CostExpr, x: &[f64; Var::COUNT]) -> Result<(), TestCaseError> {
    let p = params();
    let (_, dual) =
        value_and_gradient(e, &Env::new(VarValues::full(*x), &p), IfElseMode::Exact).unwrap();
    let tape = Tape::compile(e, &p).unwrap();
    let mut scratch = Default::default();
    let (_, reverse) = tape.eval_grad(x, &mut scratch);
    let fd = central_difference(e, x, &p);
    for i in 0..Var::COUNT {
        prop_assert!(
            rel_err(dual[i], fd[i]) < 1e-5,
            "dual d/d{} {} vs fd {} for {e}",
            Var::ALL[i],
            dual[i],
            fd[i]
        );
        prop_assert!(
            rel_err(reverse[i], fd[i]) < 1e-5,
            "tape d/d{} {} vs fd {} for {e}",
            Var::ALL[i],
            reverse[i],
            fd[i]
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn gradient_matches_central_differences(e in expr(), x in point()) {
        let p = params();
        let stencil_hits_switch = (0..Var::COUNT).any(|i| {
            [H, -H].iter().any(|&d| {
                let mut y = x;
                y[i] += d;
                near_switch(&e, &y, &p)
            })
        });
        prop_assume!(!near_switch(&e, &x, &p) && !stencil_hits_switch);
        let v = value_at(&e, &x, &p);
        prop_assume!(v.abs() < 1e6);
        assert_gradient_matches(&e, &x)?;
    }

    #[test]
    fn printing_is_a_parse_fixpoint(e in expr()) {
        let printed = e.to_string();
        let reparsed = parse_expr(&printed).unwrap();
        prop_assert_eq!(reparsed.to_string(), printed);
    }

    #[test]
    fn reparsed_expression_evaluates_identically(e in expr(), x in point()) {
        let p = params();
        let reparsed = parse_expr(&e.to_string()).unwrap();
        let env = Env::new(VarValues::full(x), &p);
        match (eval(&e, &env), eval(&reparsed, &env)) {
            (Ok(a), Ok(b)) => prop_assert!(rel_err(a, b) < 1e-12, "{a} vs {b}"),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn eval_is_deterministic(e in expr(), x in point()) {
        let p = params();
        let env = Env::new(VarValues::full(x), &p);
        let a = eval(&e, &env).map(f64::to_bits);
        let b = eval(&e, &env).map(f64::to_bits);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn composed_costs_keep_mandatory_terms(pick in prop::collection::vec(prop::sample::select(BuiltinTerm::ALL.to_vec()), 0..6)) {
        let mut terms: Vec<CostTerm> = Vec::new();
        for b in pick {
            if !terms.iter().any(|t| t.builtin_kind() == Some(b)) {
                terms.push(CostTerm::builtin(b));
            }
        }
        let spec = compose_cost(terms, &BTreeMap::new(), ParameterSet::navigation_defaults(), "random").unwrap();
        for m in BuiltinTerm::MANDATORY {
            prop_assert!(spec.terms().iter().any(|t| t.builtin_kind() == Some(m)), "missing {m}");
        }
    }
}

#[test]
fn builtin_term_gradients_match() {
    let points = [
        [0.3, -1.2, 0.4, 1.1, -0.7, 0.25, 2.0, -0.5, 0.8, -0.3],
        [-1.5, 0.9, -2.0, 0.0, 1.9, -1.1, 0.1, 0.2, -1.7, 1.3],
    ];
    let mut p = params();
    p.insert("goal_x".into(), 4.0);
    p.insert("goal_y".into(), -1.0);
    for b in BuiltinTerm::ALL {
        let e = b.expr();
        for x in &points {
            let (_, g) =
                value_and_gradient(&e, &Env::new(VarValues::full(*x), &p), IfElseMode::Exact)
                    .unwrap();
            let fd = central_difference(&e, x, &p);
            for i in 0..Var::COUNT {
                assert!(
                    rel_err(g[i], fd[i]) < 1e-5,
                    "{b} d/d{}: {} vs {}",
                    Var::ALL[i],
                    g[i],
                    fd[i]
                );
            }
        }
    }
}

#[test]
fn library_sources_survive_round_trip() {
    use langnav_core::assistants::{HUMAN_FOLLOW_SOURCE, HUMAN_MAX_SOURCE, SAFE_DISTANCE_SOURCE};
    for src in [HUMAN_FOLLOW_SOURCE, HUMAN_MAX_SOURCE, SAFE_DISTANCE_SOURCE] {
        let once = parse_expr(src).unwrap().to_string();
        assert_eq!(parse_expr(&once).unwrap().to_string(), once);
    }
    for b in BuiltinTerm::ALL {
        let printed = b.expr().to_string();
        assert_eq!(parse_expr(&printed).unwrap(), b.expr());
    }
}
