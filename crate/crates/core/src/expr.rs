//! Expression trees over parameter variables and their JSON form.
//!
//! A node serializes in prefix notation:
//!
//! ```text
//! 2.5                    real constant
//! ["c", re, im]          complex constant
//! "u1"                   variable
//! ["+", a, b, ...]       sum          ["*", a, b, ...]  product
//! ["-", a, b]            difference   ["neg", a]        negation
//! ["/", a, b]            quotient     ["^", a, k]       integer power
//! ["sin", a] ["cos", a] ["exp", a]
//! ```
//!
//! A map is `{"vars": ["u1", ...], "components": [node, ...]}`.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(C64),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn real(x: f64) -> Self {
        Expr::Const(C64::new(x, 0.0))
    }

    pub fn constant(z: C64) -> Self {
        Expr::Const(z)
    }

    pub fn pow(self, k: i32) -> Self {
        Expr::Pow(Box::new(self), k)
    }

    pub fn sin(self) -> Self {
        Expr::Sin(Box::new(self))
    }

    pub fn cos(self) -> Self {
        Expr::Cos(Box::new(self))
    }

    pub fn exp(self) -> Self {
        Expr::Exp(Box::new(self))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(z) if *z == C64::new(0.0, 0.0))
    }

    /// `Σ cᵢ eᵢ`, dropping exact-zero coefficients and unit multipliers.
    pub fn linear_combination(terms: impl IntoIterator<Item = (C64, Expr)>) -> Expr {
        let one = C64::new(1.0, 0.0);
        let mut parts = Vec::new();
        for (c, e) in terms {
            if c == C64::new(0.0, 0.0) || e.is_zero() {
                continue;
            }
            match e {
                Expr::Const(z) => parts.push(Expr::Const(c * z)),
                e if c == one => parts.push(e),
                e => parts.push(Expr::Mul(vec![Expr::Const(c), e])),
            }
        }
        match parts.len() {
            0 => Expr::real(0.0),
            1 => parts.pop().unwrap(),
            _ => Expr::Add(parts),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().filter_map(Expr::max_var).max(),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.max_var().max(b.max_var()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.max_var()
            }
        }
    }

    /// Replace every variable `i` by `f(i)`.
    pub fn substitute(&self, f: &dyn Fn(usize) -> Expr) -> Expr {
        let sub = |e: &Expr| Box::new(e.substitute(f));
        match self {
            Expr::Var(i) => f(*i),
            Expr::Const(z) => Expr::Const(*z),
            Expr::Add(xs) => Expr::Add(xs.iter().map(|x| x.substitute(f)).collect()),
            Expr::Mul(xs) => Expr::Mul(xs.iter().map(|x| x.substitute(f)).collect()),
            Expr::Sub(a, b) => Expr::Sub(sub(a), sub(b)),
            Expr::Div(a, b) => Expr::Div(sub(a), sub(b)),
            Expr::Neg(a) => Expr::Neg(sub(a)),
            Expr::Pow(a, k) => Expr::Pow(sub(a), *k),
            Expr::Sin(a) => Expr::Sin(sub(a)),
            Expr::Cos(a) => Expr::Cos(sub(a)),
            Expr::Exp(a) => Expr::Exp(sub(a)),
        }
    }

    /// Plain complex evaluation (no derivatives).
    pub fn eval(&self, u: &[f64]) -> Result<C64> {
        Ok(match self {
            Expr::Var(i) => C64::new(
                *u.get(*i)
                    .ok_or_else(|| Error::UnknownVariable(format!("#{i}")))?,
                0.0,
            ),
            Expr::Const(z) => *z,
            Expr::Add(xs) => {
                let mut acc = C64::new(0.0, 0.0);
                for x in xs {
                    acc += x.eval(u)?;
                }
                acc
            }
            Expr::Mul(xs) => {
                let mut acc = C64::new(1.0, 0.0);
                for x in xs {
                    acc *= x.eval(u)?;
                }
                acc
            }
            Expr::Sub(a, b) => a.eval(u)? - b.eval(u)?,
            Expr::Neg(a) => -a.eval(u)?,
            Expr::Div(a, b) => {
                let den = b.eval(u)?;
                check_denominator(den)?;
                a.eval(u)? / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(u)?;
                if *k < 0 {
                    check_denominator(base)?;
                }
                base.powi(*k)
            }
            Expr::Sin(a) => a.eval(u)?.sin(),
            Expr::Cos(a) => a.eval(u)?.cos(),
            Expr::Exp(a) => a.eval(u)?.exp(),
        })
    }
}

/// Denominators with modulus at or below this are rejected.
pub const DENOMINATOR_FLOOR: f64 = 1e-14;

pub(crate) fn check_denominator(z: C64) -> Result<()> {
    if z.norm() <= DENOMINATOR_FLOOR {
        Err(Error::Domain(format!(
            "division by near-zero value {:.3e}",
            z.norm()
        )))
    } else {
        Ok(())
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, rhs])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// A vector-valued map ℂⁿ ⊃ U → ℂᴺ given by one expression per component.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprMap {
    vars: Vec<String>,
    components: Vec<Expr>,
}

impl ExprMap {
    pub fn new(vars: Vec<String>, components: Vec<Expr>) -> Result<Self> {
        let map = ExprMap { vars, components };
        map.validate()?;
        Ok(map)
    }

    /// Variables named `prefix1..prefixN`.
    pub fn with_prefix(prefix: &str, n_params: usize, components: Vec<Expr>) -> Result<Self> {
        let vars = (1..=n_params).map(|i| format!("{prefix}{i}")).collect();
        Self::new(vars, components)
    }

    fn validate(&self) -> Result<()> {
        for (k, c) in self.components.iter().enumerate() {
            if let Some(i) = c.max_var() {
                if i >= self.vars.len() {
                    return Err(Error::UnknownVariable(format!(
                        "index {i} in component {k} (map declares {} variables)",
                        self.vars.len()
                    )));
                }
            }
        }
        for (i, v) in self.vars.iter().enumerate() {
            if self.vars[..i].contains(v) {
                return Err(Error::MalformedExpr(format!("duplicate variable `{v}`")));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.vars.len()
    }

    pub fn n_out(&self) -> usize {
        self.components.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, u: &[f64]) -> Result<crate::CVec> {
        self.check_point(u)?;
        let vals = self
            .components
            .iter()
            .map(|c| c.eval(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::CVec::from_vec(vals))
    }

    pub(crate) fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.vars.len() {
            return Err(Error::InvalidSpec(format!(
                "point has {} coordinates, map expects {}",
                u.len(),
                self.vars.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "vars": self.vars,
            "components": self.components.iter().map(|c| node_to_json(c, &self.vars)).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::MalformedExpr("map must be an object".into()))?;
        let vars: Vec<String> = obj
            .get("vars")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MalformedExpr("missing `vars` array".into()))?
            .iter()
            .map(|x| {
                x.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::MalformedExpr("variable names must be strings".into()))
            })
            .collect::<Result<_>>()?;
        let comps = obj
            .get("components")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MalformedExpr("missing `components` array".into()))?
            .iter()
            .map(|c| node_from_json(c, &vars))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vars, comps)
    }
}

fn node_to_json(e: &Expr, vars: &[String]) -> Value {
    let un = |op: &str, a: &Expr| json!([op, node_to_json(a, vars)]);
    let bin =
        |op: &str, a: &Expr, b: &Expr| json!([op, node_to_json(a, vars), node_to_json(b, vars)]);
    match e {
        Expr::Var(i) => Value::String(vars[*i].clone()),
        Expr::Const(z) => {
            if z.im.to_bits() == 0 {
                json!(z.re)
            } else {
                json!(["c", z.re, z.im])
            }
        }
        Expr::Add(xs) => nary("+", xs, vars),
        Expr::Mul(xs) => nary("*", xs, vars),
        Expr::Sub(a, b) => bin("-", a, b),
        Expr::Div(a, b) => bin("/", a, b),
        Expr::Neg(a) => un("neg", a),
        Expr::Pow(a, k) => json!(["^", node_to_json(a, vars), k]),
        Expr::Sin(a) => un("sin", a),
        Expr::Cos(a) => un("cos", a),
        Expr::Exp(a) => un("exp", a),
    }
}

fn nary(op: &str, xs: &[Expr], vars: &[String]) -> Value {
    let mut arr = vec![Value::String(op.into())];
    arr.extend(xs.iter().map(|x| node_to_json(x, vars)));
    Value::Array(arr)
}

fn node_from_json(v: &Value, vars: &[String]) -> Result<Expr> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .map(Expr::real)
            .ok_or_else(|| Error::MalformedExpr(format!("bad number {n}"))),
        Value::String(s) => vars
            .iter()
            .position(|x| x == s)
            .map(Expr::Var)
            .ok_or_else(|| Error::UnknownVariable(s.clone())),
        Value::Array(items) => {
            let (op, args) = items
                .split_first()
                .ok_or_else(|| Error::MalformedExpr("empty node".into()))?;
            let op = op
                .as_str()
                .ok_or_else(|| Error::MalformedExpr("operator must be a string".into()))?;
            let arity = |k: usize| -> Result<()> {
                if args.len() == k {
                    Ok(())
                } else {
                    Err(Error::MalformedExpr(format!(
                        "`{op}` expects {k} arguments, got {}",
                        args.len()
                    )))
                }
            };
            let sub = |i: usize| node_from_json(&args[i], vars).map(Box::new);
            Ok(match op {
                "c" => {
                    arity(2)?;
                    let re = args[0].as_f64();
                    let im = args[1].as_f64();
                    match (re, im) {
                        (Some(re), Some(im)) => Expr::Const(C64::new(re, im)),
                        _ => return Err(Error::MalformedExpr("`c` expects two numbers".into())),
                    }
                }
                "+" | "*" => {
                    if args.is_empty() {
                        return Err(Error::MalformedExpr(format!("`{op}` needs operands")));
                    }
                    let xs = args
                        .iter()
                        .map(|a| node_from_json(a, vars))
                        .collect::<Result<Vec<_>>>()?;
                    if op == "+" {
                        Expr::Add(xs)
                    } else {
                        Expr::Mul(xs)
                    }
                }
                "-" => {
                    arity(2)?;
                    Expr::Sub(sub(0)?, sub(1)?)
                }
                "/" => {
                    arity(2)?;
                    Expr::Div(sub(0)?, sub(1)?)
                }
                "neg" => {
                    arity(1)?;
                    Expr::Neg(sub(0)?)
                }
                "^" => {
                    arity(2)?;
                    let k = args[1]
                        .as_i64()
                        .and_then(|k| i32::try_from(k).ok())
                        .ok_or_else(|| {
                            Error::MalformedExpr("exponent must be an integer".into())
                        })?;
                    Expr::Pow(sub(0)?, k)
                }
                "sin" => {
                    arity(1)?;
                    Expr::Sin(sub(0)?)
                }
                "cos" => {
                    arity(1)?;
                    Expr::Cos(sub(0)?)
                }
                "exp" => {
                    arity(1)?;
                    Expr::Exp(sub(0)?)
                }
                other => return Err(Error::MalformedExpr(format!("unknown operator `{other}`"))),
            })
        }
        other => Err(Error::MalformedExpr(format!("unexpected node {other}"))),
    }
}

impl Serialize for ExprMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExprMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        ExprMap::from_json(&v).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_map() -> ExprMap {
        // (t cos u, exp(t)/(1+u²), (t - u)^3)
        let t = Expr::var(0);
        let u = Expr::var(1);
        ExprMap::with_prefix(
            "x",
            2,
            vec![
                t.clone() * u.clone().cos(),
                t.clone().exp() / (Expr::real(1.0) + u.clone().pow(2)),
                -(t - u).pow(3),
            ],
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = sample_map();
        let text = serde_json::to_string(&m).unwrap();
        let back: ExprMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn unknown_variable_is_rejected() {
        let v = json!({"vars": ["u"], "components": [["+", "u", "w"]]});
        assert!(matches!(ExprMap::from_json(&v), Err(Error::UnknownVariable(s)) if s == "w"));
        assert!(matches!(
            ExprMap::new(vec!["u".into()], vec![Expr::var(3)]),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn malformed_nodes_are_rejected() {
        for bad in [
            json!({"vars": ["u"], "components": [["^", "u", 1.5]]}),
            json!({"vars": ["u"], "components": [["sin"]]}),
            json!({"vars": ["u"], "components": [["tan", "u"]]}),
            json!({"vars": ["u"], "components": [true]}),
        ] {
            assert!(ExprMap::from_json(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn plain_eval_and_domain_error() {
        let m = ExprMap::with_prefix("u", 1, vec![Expr::real(1.0) / Expr::var(0)]).unwrap();
        assert_eq!(m.eval(&[4.0]).unwrap()[0], C64::new(0.25, 0.0));
        assert!(matches!(m.eval(&[0.0]), Err(Error::Domain(_))));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0usize..3).prop_map(Expr::Var),
            (-10.0f64..10.0, -1.0f64..1.0).prop_map(|(a, b)| Expr::Const(C64::new(a, b))),
            (-10.0f64..10.0).prop_map(Expr::real),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(Expr::Add),
                prop::collection::vec(inner.clone(), 1..4).prop_map(Expr::Mul),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
                (inner.clone(), -3i32..4).prop_map(|(a, k)| a.pow(k)),
                inner.clone().prop_map(Expr::sin),
                inner.clone().prop_map(Expr::cos),
                inner.clone().prop_map(Expr::exp),
                inner.prop_map(|e| -e),
            ]
        })
    }

    proptest! {
        #[test]
        fn prop_json_round_trip(comps in prop::collection::vec(arb_expr(), 1..4)) {
            let m = ExprMap::with_prefix("u", 3, comps).unwrap();
            let text = serde_json::to_string(&m).unwrap();
            let back: ExprMap = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &m);
        }
    }
}
