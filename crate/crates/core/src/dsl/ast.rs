use std::collections::BTreeSet;
use std::fmt;

/// Per-stage quantities a cost expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Px,
    Py,
    Theta,
    V,
    A,
    Omega,
    /// Closest human, x coordinate.
    OhX,
    /// Closest human, y coordinate.
    OhY,
    /// Contour (lateral) error.
    Ec,
    /// Lag (longitudinal) error.
    El,
}

impl Var {
    pub const COUNT: usize = 10;

    pub const ALL: [Var; Var::COUNT] = [
        Var::Px,
        Var::Py,
        Var::Theta,
        Var::V,
        Var::A,
        Var::Omega,
        Var::OhX,
        Var::OhY,
        Var::Ec,
        Var::El,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Var::Px => "px",
            Var::Py => "py",
            Var::Theta => "theta",
            Var::V => "v",
            Var::A => "a",
            Var::Omega => "omega",
            Var::OhX => "oh_x",
            Var::OhY => "oh_y",
            Var::Ec => "e_c",
            Var::El => "e_l",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Built-in functions callable from the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    IfElse,
    Min,
    Max,
    Sqrt,
    AbsSmooth,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::IfElse => "if_else",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sqrt => "sqrt",
            Func::AbsSmooth => "abs_smooth",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::IfElse => 3,
            Func::Min | Func::Max => 2,
            Func::Sqrt | Func::AbsSmooth => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        [
            Func::IfElse,
            Func::Min,
            Func::Max,
            Func::Sqrt,
            Func::AbsSmooth,
        ]
        .into_iter()
        .find(|f| f.name() == name)
    }
}

/// Cost expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum CostExpr {
    Const(f64),
    Var(Var),
    Param(String),
    Neg(Box<CostExpr>),
    Add(Box<CostExpr>, Box<CostExpr>),
    Sub(Box<CostExpr>, Box<CostExpr>),
    Mul(Box<CostExpr>, Box<CostExpr>),
    Div(Box<CostExpr>, Box<CostExpr>),
    Pow(Box<CostExpr>, u32),
    Min(Box<CostExpr>, Box<CostExpr>),
    Max(Box<CostExpr>, Box<CostExpr>),
    Sqrt(Box<CostExpr>),
    AbsSmooth(Box<CostExpr>),
    /// `if_else(cond, then, else)`: `then` when `cond >= 0`.
    IfElse(Box<CostExpr>, Box<CostExpr>, Box<CostExpr>),
}

/// Largest exponent accepted by `^`.
pub const MAX_EXPONENT: u32 = 16;

impl CostExpr {
    pub fn var(v: Var) -> Self {
        CostExpr::Var(v)
    }

    pub fn param(name: impl Into<String>) -> Self {
        CostExpr::Param(name.into())
    }

    pub fn pow(self, n: u32) -> Self {
        CostExpr::Pow(Box::new(self), n)
    }

    pub fn if_else(cond: CostExpr, then: CostExpr, otherwise: CostExpr) -> Self {
        CostExpr::IfElse(Box::new(cond), Box::new(then), Box::new(otherwise))
    }

    /// Direct children, left to right.
    pub fn children(&self) -> Vec<&CostExpr> {
        use CostExpr::*;
        match self {
            Const(_) | Var(_) | Param(_) => vec![],
            Neg(x) | Pow(x, _) | Sqrt(x) | AbsSmooth(x) => vec![x],
            Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r) | Min(l, r) | Max(l, r) => vec![l, r],
            IfElse(c, t, e) => vec![c, t, e],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(|c| c.node_count())
            .sum::<usize>()
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let CostExpr::Param(p) = e {
                out.insert(p.clone());
            }
        });
        out
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let CostExpr::Var(v) = e {
                out.insert(*v);
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&CostExpr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn contains_if_else(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, CostExpr::IfElse(..)));
        found
    }

    pub fn contains_division(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, CostExpr::Div(..)));
        found
    }

    /// Replaces every parameter reference for which `lookup` returns a value
    /// with that constant.
    pub fn substitute_params(&self, lookup: &impl Fn(&str) -> Option<f64>) -> CostExpr {
        use CostExpr::*;
        let b = |e: &CostExpr| Box::new(e.substitute_params(lookup));
        match self {
            Param(p) => match lookup(p) {
                Some(v) => Const(v),
                None => Param(p.clone()),
            },
            Const(c) => Const(*c),
            Var(v) => Var(*v),
            Neg(x) => Neg(b(x)),
            Add(l, r) => Add(b(l), b(r)),
            Sub(l, r) => Sub(b(l), b(r)),
            Mul(l, r) => Mul(b(l), b(r)),
            Div(l, r) => Div(b(l), b(r)),
            Pow(x, n) => Pow(b(x), *n),
            Min(l, r) => Min(b(l), b(r)),
            Max(l, r) => Max(b(l), b(r)),
            Sqrt(x) => Sqrt(b(x)),
            AbsSmooth(x) => AbsSmooth(b(x)),
            IfElse(c, t, e) => IfElse(b(c), b(t), b(e)),
        }
    }

    fn precedence(&self) -> u8 {
        use CostExpr::*;
        match self {
            Add(..) | Sub(..) => 1,
            Mul(..) | Div(..) => 2,
            Neg(_) => 3,
            Const(c) if c.is_sign_negative() => 3,
            Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min_prec {
            f.write_str("(")?;
            self.write_bare(f)?;
            f.write_str(")")
        } else {
            self.write_bare(f)
        }
    }

    fn write_bare(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CostExpr::*;
        let binary = |f: &mut fmt::Formatter<'_>, l: &CostExpr, op: &str, r: &CostExpr, p: u8| {
            l.write_prec(f, p)?;
            write!(f, " {op} ")?;
            r.write_prec(f, p + 1)
        };
        let call = |f: &mut fmt::Formatter<'_>, name: &str, args: &[&CostExpr]| {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                a.write_prec(f, 0)?;
            }
            f.write_str(")")
        };
        match self {
            Const(c) if c.is_sign_negative() => write!(f, "-{}", c.abs()),
            Const(c) => write!(f, "{c}"),
            Var(v) => write!(f, "{v}"),
            Param(p) => f.write_str(p),
            Neg(x) => {
                f.write_str("-")?;
                x.write_prec(f, 3)
            }
            Add(l, r) => binary(f, l, "+", r, 1),
            Sub(l, r) => binary(f, l, "-", r, 1),
            Mul(l, r) => binary(f, l, "*", r, 2),
            Div(l, r) => binary(f, l, "/", r, 2),
            Pow(x, n) => {
                x.write_prec(f, 5)?;
                write!(f, "^{n}")
            }
            Min(l, r) => call(f, "min", &[l, r]),
            Max(l, r) => call(f, "max", &[l, r]),
            Sqrt(x) => call(f, "sqrt", &[x]),
            AbsSmooth(x) => call(f, "abs_smooth", &[x]),
            IfElse(c, t, e) => call(f, "if_else", &[c, t, e]),
        }
    }
}

impl fmt::Display for CostExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl std::ops::$trait for CostExpr {
            type Output = CostExpr;
            fn $method(self, rhs: CostExpr) -> CostExpr {
                CostExpr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl std::ops::Neg for CostExpr {
    type Output = CostExpr;
    fn neg(self) -> CostExpr {
        CostExpr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_minimal_parentheses() {
        let e = (CostExpr::var(Var::V) - CostExpr::param("v_ref")).pow(2);
        assert_eq!(e.to_string(), "(v - v_ref)^2");
        let e = CostExpr::Const(1.0) - (CostExpr::var(Var::A) - CostExpr::var(Var::Omega));
        assert_eq!(e.to_string(), "1 - (a - omega)");
        let e = -CostExpr::var(Var::Px).pow(2);
        assert_eq!(e.to_string(), "-px^2");
        let e = CostExpr::Const(-2.0).pow(2);
        assert_eq!(e.to_string(), "(-2)^2");
    }

    #[test]
    fn collects_names() {
        let e = CostExpr::if_else(
            CostExpr::var(Var::OhX) - CostExpr::param("d_safe"),
            CostExpr::Const(0.0),
            CostExpr::param("w"),
        );
        assert_eq!(
            e.params().into_iter().collect::<Vec<_>>(),
            vec!["d_safe", "w"]
        );
        assert_eq!(e.vars().into_iter().collect::<Vec<_>>(), vec![Var::OhX]);
        assert!(e.contains_if_else());
        assert_eq!(e.node_count(), 6);
    }

    #[test]
    fn var_names_round_trip() {
        for v in Var::ALL {
            assert_eq!(Var::from_name(v.name()), Some(v));
        }
    }
}
