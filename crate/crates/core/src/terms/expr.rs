use std::collections::{BTreeMap, BTreeSet};

use crate::terms::context::Context;
use crate::value::{Num, NumError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The operator obtained by swapping operands: `a < b` iff `b > a`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }
}

/// Symbolic arithmetic/boolean expression over variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Const(Value),
    Var(String),
    Neg(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    /// `if g1 then b1 elif g2 then b2 ... else e`; `arms` is never empty.
    Cond {
        arms: Vec<(Expr, Expr)>,
        otherwise: Box<Expr>,
    },
    /// Application of a (possibly uninterpreted) function symbol.
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("undefined function symbol `{0}`")]
    UndefinedSymbol(String),
    #[error("`{name}` expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("function definitions nest deeper than {0} calls")]
    RecursionLimit(usize),
    #[error("carrier type `{0}` is not a finite enumeration")]
    NotFinite(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

const MAX_CALL_DEPTH: usize = 64;

/// Read access to the current variable values.
pub trait Env {
    fn lookup(&self, var: &str) -> Option<&Value>;
}

impl Env for BTreeMap<String, Value> {
    fn lookup(&self, var: &str) -> Option<&Value> {
        self.get(var)
    }
}

struct Frame<'a> {
    params: &'a [String],
    args: &'a [Value],
}

impl Env for Frame<'_> {
    fn lookup(&self, var: &str) -> Option<&Value> {
        self.params.iter().position(|p| p == var).map(|i| &self.args[i])
    }
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn num(n: Num) -> Expr {
        Expr::Const(Value::Num(n))
    }

    pub fn int(v: i64) -> Expr {
        Expr::Const(Value::int(v))
    }

    pub fn sym(s: impl Into<String>) -> Expr {
        Expr::Const(Value::sym(s))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Const(Value::Bool(b))
    }

    pub fn call(name: impl Into<String>, args: Vec<Expr>) -> Expr {
        Expr::Call(name.into(), args)
    }

    pub fn arith(op: ArithOp, a: Expr, b: Expr) -> Expr {
        Expr::Arith(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::arith(ArithOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::arith(ArithOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::arith(ArithOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::arith(ArithOp::Div, a, b)
    }

    pub fn cmp(op: CmpOp, a: Expr, b: Expr) -> Expr {
        Expr::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::cmp(CmpOp::Eq, a, b)
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Expr {
        Expr::Not(Box::new(a))
    }

    pub fn cond(arms: Vec<(Expr, Expr)>, otherwise: Expr) -> Expr {
        assert!(!arms.is_empty(), "guard chains need at least one arm");
        Expr::Cond {
            arms,
            otherwise: Box::new(otherwise),
        }
    }

    /// Left-nested sum `e1 + e2 + ... + en`.
    pub fn sum_of(mut terms: Vec<Expr>) -> Expr {
        assert!(!terms.is_empty());
        let first = terms.remove(0);
        terms.into_iter().fold(first, Expr::add)
    }

    pub fn as_const(&self) -> Option<&Value> {
        match self {
            Expr::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Visit every direct sub-expression.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => vec![],
            Expr::Neg(a) | Expr::Not(a) => vec![a],
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                vec![a, b]
            }
            Expr::Cond { arms, otherwise } => arms
                .iter()
                .flat_map(|(g, b)| [g, b])
                .chain(std::iter::once(otherwise.as_ref()))
                .collect(),
            Expr::Call(_, args) => args.iter().collect(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        if let Expr::Var(v) = self {
            out.insert(v.clone());
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    pub fn collect_calls(&self, out: &mut BTreeSet<String>) {
        if let Expr::Call(f, _) = self {
            out.insert(f.clone());
        }
        for c in self.children() {
            c.collect_calls(out);
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        match self {
            Expr::Var(v) => v == var,
            _ => self.children().into_iter().any(|c| c.mentions(var)),
        }
    }

    /// Rebuild the expression with every sub-expression mapped bottom-up.
    pub fn map(&self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map(f))),
            Expr::Not(a) => Expr::Not(Box::new(a.map(f))),
            Expr::Arith(op, a, b) => Expr::Arith(*op, Box::new(a.map(f)), Box::new(b.map(f))),
            Expr::Cmp(op, a, b) => Expr::Cmp(*op, Box::new(a.map(f)), Box::new(b.map(f))),
            Expr::And(a, b) => Expr::And(Box::new(a.map(f)), Box::new(b.map(f))),
            Expr::Or(a, b) => Expr::Or(Box::new(a.map(f)), Box::new(b.map(f))),
            Expr::Cond { arms, otherwise } => Expr::Cond {
                arms: arms.iter().map(|(g, b)| (g.map(f), b.map(f))).collect(),
                otherwise: Box::new(otherwise.map(f)),
            },
            Expr::Call(name, args) => Expr::Call(name.clone(), args.iter().map(|a| a.map(f)).collect()),
        };
        f(rebuilt)
    }

    /// Capture-free substitution of a variable by an expression.
    pub fn substitute(&self, var: &str, by: &Expr) -> Expr {
        self.map(&mut |e| match &e {
            Expr::Var(v) if v == var => by.clone(),
            _ => e,
        })
    }

    pub fn rename_vars(&self, map: &BTreeMap<String, String>) -> Expr {
        self.map(&mut |e| match &e {
            Expr::Var(v) => match map.get(v) {
                Some(n) => Expr::Var(n.clone()),
                None => e,
            },
            _ => e,
        })
    }

    pub fn eval(&self, env: &dyn Env, ctx: &Context) -> Result<Value, EvalError> {
        self.eval_depth(env, ctx, 0)
    }

    pub fn eval_num(&self, env: &dyn Env, ctx: &Context) -> Result<Num, EvalError> {
        match self.eval(env, ctx)? {
            Value::Num(n) => Ok(n),
            other => Err(EvalError::TypeMismatch(format!(
                "expected a number, found {} `{other}`",
                other.kind()
            ))),
        }
    }

    pub fn eval_bool(&self, env: &dyn Env, ctx: &Context) -> Result<bool, EvalError> {
        self.eval_depth(env, ctx, 0).and_then(expect_bool)
    }

    fn eval_depth(&self, env: &dyn Env, ctx: &Context, depth: usize) -> Result<Value, EvalError> {
        let num = |e: &Expr| -> Result<Num, EvalError> {
            match e.eval_depth(env, ctx, depth)? {
                Value::Num(n) => Ok(n),
                other => Err(EvalError::TypeMismatch(format!(
                    "arithmetic on {} `{other}`",
                    other.kind()
                ))),
            }
        };
        let boolean = |e: &Expr| e.eval_depth(env, ctx, depth).and_then(expect_bool);
        Ok(match self {
            Expr::Const(v) => v.clone(),
            Expr::Var(name) => env
                .lookup(name)
                .cloned()
                .ok_or_else(|| EvalError::UnknownVariable(name.clone()))?,
            Expr::Neg(a) => Value::Num(num(a)?.neg()),
            Expr::Arith(op, a, b) => {
                let (x, y) = (num(a)?, num(b)?);
                Value::Num(match op {
                    ArithOp::Add => x.add(&y)?,
                    ArithOp::Sub => x.sub(&y)?,
                    ArithOp::Mul => x.mul(&y)?,
                    ArithOp::Div => x.div(&y)?,
                })
            }
            Expr::Cmp(op, a, b) => {
                let x = a.eval_depth(env, ctx, depth)?;
                let y = b.eval_depth(env, ctx, depth)?;
                Value::Bool(compare(*op, &x, &y)?)
            }
            Expr::And(a, b) => Value::Bool(boolean(a)? && boolean(b)?),
            Expr::Or(a, b) => Value::Bool(boolean(a)? || boolean(b)?),
            Expr::Not(a) => Value::Bool(!boolean(a)?),
            Expr::Cond { arms, otherwise } => {
                for (guard, branch) in arms {
                    if boolean(guard)? {
                        return branch.eval_depth(env, ctx, depth);
                    }
                }
                otherwise.eval_depth(env, ctx, depth)?
            }
            Expr::Call(name, args) => {
                let def = ctx
                    .function(name)
                    .ok_or_else(|| EvalError::UndefinedSymbol(name.clone()))?;
                let body = def
                    .body
                    .as_ref()
                    .ok_or_else(|| EvalError::UndefinedSymbol(name.clone()))?;
                if def.params.len() != args.len() {
                    return Err(EvalError::Arity {
                        name: name.clone(),
                        expected: def.params.len(),
                        found: args.len(),
                    });
                }
                if depth >= MAX_CALL_DEPTH {
                    return Err(EvalError::RecursionLimit(MAX_CALL_DEPTH));
                }
                let values = args
                    .iter()
                    .map(|a| a.eval_depth(env, ctx, depth))
                    .collect::<Result<Vec<_>, _>>()?;
                let frame = Frame {
                    params: &def.params,
                    args: &values,
                };
                body.eval_depth(&frame, ctx, depth + 1)?
            }
        })
    }
}

fn expect_bool(v: Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| {
        EvalError::TypeMismatch(format!("expected a boolean, found {} `{v}`", v.kind()))
    })
}

fn compare(op: CmpOp, x: &Value, y: &Value) -> Result<bool, EvalError> {
    match op {
        CmpOp::Eq | CmpOp::Ne => {
            let eq = x.semantic_eq(y).ok_or_else(|| {
                EvalError::TypeMismatch(format!("cannot compare {} with {}", x.kind(), y.kind()))
            })?;
            Ok(if op == CmpOp::Eq { eq } else { !eq })
        }
        _ => {
            let (a, b) = match (x, y) {
                (Value::Num(a), Value::Num(b)) => (a, b),
                _ => {
                    return Err(EvalError::TypeMismatch(format!(
                        "ordering comparison between {} and {}",
                        x.kind(),
                        y.kind()
                    )))
                }
            };
            let ord = a.cmp_num(b);
            Ok(match op {
                CmpOp::Lt => ord.is_lt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Ge => ord.is_ge(),
                CmpOp::Eq | CmpOp::Ne => unreachable!(),
            })
        }
    }
}

/// Variables referenced anywhere in `e`, guards included.
pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.collect_vars(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::context::FunDef;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn free_vars_examples() {
        assert!(free_vars(&Expr::int(3)).is_empty());
        let mean = Expr::div(
            Expr::sum_of(vec![Expr::var("v1"), Expr::var("v2"), Expr::var("v3")]),
            Expr::int(3),
        );
        assert_eq!(free_vars(&mean), set(&["v1", "v2", "v3"]));
        let f_red = Expr::cond(
            vec![(Expr::eq(Expr::var("c"), Expr::sym("red")), Expr::num(Num::ratio(95, 100)))],
            Expr::num(Num::ratio(5, 100)),
        );
        assert_eq!(free_vars(&f_red), set(&["c"]));
    }

    #[test]
    fn eval_arithmetic_exact() {
        let env: BTreeMap<String, Value> = [("x".to_string(), Value::int(10))].into();
        let ctx = Context::default();
        let e = Expr::div(Expr::add(Expr::var("x"), Expr::int(2)), Expr::int(3));
        assert_eq!(e.eval(&env, &ctx).unwrap(), Value::Num(Num::int(4)));
    }

    #[test]
    fn division_by_zero_is_an_evaluation_error() {
        let env: BTreeMap<String, Value> = [("x".to_string(), Value::int(0))].into();
        let e = Expr::div(Expr::int(1), Expr::var("x"));
        assert_eq!(
            e.eval(&env, &Context::default()),
            Err(EvalError::Num(NumError::DivisionByZero))
        );
    }

    #[test]
    fn calls_need_definitions() {
        let env = BTreeMap::new();
        let mut ctx = Context::default();
        let e = Expr::call("f", vec![Expr::int(2)]);
        assert_eq!(e.eval(&env, &ctx), Err(EvalError::UndefinedSymbol("f".into())));
        ctx.define_function("f", FunDef::uninterpreted(vec!["a".into()]));
        assert_eq!(e.eval(&env, &ctx), Err(EvalError::UndefinedSymbol("f".into())));
        ctx.define_function(
            "f",
            FunDef::defined(vec!["a".into()], Expr::mul(Expr::var("a"), Expr::var("a"))),
        );
        assert_eq!(e.eval(&env, &ctx).unwrap(), Value::int(4));
        let bad = Expr::call("f", vec![]);
        assert!(matches!(bad.eval(&env, &ctx), Err(EvalError::Arity { .. })));
    }

    #[test]
    fn guards_pick_first_true_arm() {
        let env: BTreeMap<String, Value> =
            [("a".to_string(), Value::int(1)), ("b".to_string(), Value::int(1))].into();
        let e = Expr::cond(
            vec![
                (Expr::eq(Expr::var("a"), Expr::int(2)), Expr::int(10)),
                (Expr::eq(Expr::var("a"), Expr::var("b")), Expr::int(20)),
            ],
            Expr::int(30),
        );
        assert_eq!(e.eval(&env, &Context::default()).unwrap(), Value::int(20));
    }

    #[test]
    fn comparing_symbols_with_numbers_is_a_type_error() {
        let env = BTreeMap::new();
        let e = Expr::eq(Expr::sym("red"), Expr::int(1));
        assert!(matches!(
            e.eval(&env, &Context::default()),
            Err(EvalError::TypeMismatch(_))
        ));
    }

    #[test]
    fn substitute_replaces_all_occurrences() {
        let g = Expr::mul(Expr::var("p'"), Expr::add(Expr::int(1), Expr::var("e")));
        let f = Expr::sub(Expr::var("p"), Expr::var("r"));
        let fused = g.substitute("p'", &f);
        assert_eq!(free_vars(&fused), set(&["e", "p", "r"]));
    }
}
