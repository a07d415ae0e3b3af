//! Slot-indexed f64 evaluator for computations containing normal draws.
//!
//! Variables become array slots, function calls are inlined and closed
//! subterms are folded with the exact evaluator. Draws consume the random
//! stream exactly like the interpreter, so switching engines only changes
//! rounding of intermediate arithmetic.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};

use crate::numeric::std_quantile;
use crate::terms::{ArithOp, CmpOp, Comp, Context, Dist, EvalError, Expr, Step, UpdateBody};
use crate::value::{Num, NumError, Value};

use super::SampleError;

/// Inlining budget; larger programs fall back to the interpreter.
const MAX_NODES: usize = 100_000;
const MAX_INLINE_DEPTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
enum V {
    N(f64),
    B(bool),
    S(u32),
}

impl V {
    fn kind(self) -> &'static str {
        match self {
            V::N(_) => "number",
            V::B(_) => "boolean",
            V::S(_) => "symbol",
        }
    }
}

#[derive(Debug, Clone)]
enum CExpr {
    Const(V),
    Slot(usize),
    Neg(Box<CExpr>),
    Arith(ArithOp, Box<CExpr>, Box<CExpr>),
    Cmp(CmpOp, Box<CExpr>, Box<CExpr>),
    And(Box<CExpr>, Box<CExpr>),
    Or(Box<CExpr>, Box<CExpr>),
    Not(Box<CExpr>),
    Cond(Vec<(CExpr, CExpr)>, Box<CExpr>),
}

#[derive(Debug, Clone)]
enum CDist {
    Point(CExpr),
    Normal(CExpr, CExpr),
    /// Merged support with f64 weights, or the error raised when drawn.
    Finite(Result<Vec<(V, f64)>, SampleError>),
    Cond(Vec<(CExpr, CDist)>, Box<CDist>),
}

#[derive(Debug, Clone)]
enum CStep {
    Draw { slot: usize, dist: CDist },
    Scope { slot: usize, body: Vec<CStep>, result: usize, writes: Vec<usize> },
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    steps: Vec<CStep>,
    output: CExpr,
    names: Vec<String>,
}

pub(crate) struct Slots(Vec<Option<V>>);

struct Compiler<'a> {
    ctx: &'a Context,
    slots: BTreeMap<String, usize>,
    syms: BTreeMap<String, u32>,
    nodes: usize,
}

/// Marker for constructs the compiler leaves to the interpreter.
struct Unsupported;

impl Program {
    /// Compile `c` (already linearized) together with an output expression.
    /// Returns `None` when the computation has no normal draw or uses a
    /// construct the fast path does not cover.
    pub(crate) fn compile(c: &Comp, ctx: &Context, output: &Expr) -> Option<Program> {
        if !has_normal(c) {
            return None;
        }
        let mut comp = Compiler {
            ctx,
            slots: BTreeMap::new(),
            syms: BTreeMap::new(),
            nodes: 0,
        };
        let steps = comp.comp(c).ok()?;
        let output = comp.expr(output, &[]).ok()?;
        let mut names = vec![String::new(); comp.slots.len()];
        for (n, i) in comp.slots {
            names[i] = n;
        }
        Some(Program { steps, output, names })
    }

    pub(crate) fn slots(&self) -> Slots {
        Slots(vec![None; self.names.len()])
    }

    fn run(&self, slots: &mut Slots, rng: &mut impl RngCore) -> Result<(), SampleError> {
        slots.0.iter_mut().for_each(|s| *s = None);
        run_steps(&self.steps, &mut slots.0, &self.names, rng)
    }

    pub(crate) fn sample_bool(&self, slots: &mut Slots, rng: &mut impl RngCore) -> Result<bool, SampleError> {
        self.run(slots, rng)?;
        match eval(&self.output, &slots.0, &self.names)? {
            V::B(b) => Ok(b),
            v => Err(mismatch(format!("expected a boolean, found {}", v.kind()))),
        }
    }

    pub(crate) fn sample_f64(&self, slots: &mut Slots, rng: &mut impl RngCore) -> Result<f64, SampleError> {
        self.run(slots, rng)?;
        match eval(&self.output, &slots.0, &self.names)? {
            V::N(x) => Ok(x),
            v => Err(mismatch(format!("arithmetic on {}", v.kind()))),
        }
    }
}

fn has_normal(c: &Comp) -> bool {
    fn dist(d: &Dist) -> bool {
        match d {
            Dist::Normal { .. } => true,
            Dist::Cond { arms, otherwise } => arms.iter().any(|(_, d)| dist(d)) || dist(otherwise),
            _ => false,
        }
    }
    c.updates().any(|u| match &u.body {
        UpdateBody::Dist(d) => dist(d),
        UpdateBody::Scope { comp, .. } => has_normal(comp),
    })
}

impl Compiler<'_> {
    fn slot(&mut self, name: &str) -> usize {
        let next = self.slots.len();
        *self.slots.entry(name.to_string()).or_insert(next)
    }

    fn value(&mut self, v: &Value) -> V {
        match v {
            Value::Num(n) => V::N(n.to_f64()),
            Value::Bool(b) => V::B(*b),
            Value::Sym(s) => {
                let next = self.syms.len() as u32;
                V::S(*self.syms.entry(s.clone()).or_insert(next))
            }
        }
    }

    fn comp(&mut self, c: &Comp) -> Result<Vec<CStep>, Unsupported> {
        let mut out = Vec::with_capacity(c.steps.len());
        for step in &c.steps {
            let Step::Update(u) = step else { return Err(Unsupported) };
            let slot = self.slot(&u.target);
            out.push(match &u.body {
                UpdateBody::Dist(d) => CStep::Draw {
                    slot,
                    dist: self.dist(d, &u.target)?,
                },
                UpdateBody::Scope { comp, result } => {
                    let body = self.comp(comp)?;
                    let result = self.slot(result);
                    let writes: BTreeSet<usize> = comp.defined_vars().iter().map(|v| self.slot(v)).collect();
                    CStep::Scope {
                        slot,
                        body,
                        result,
                        writes: writes.into_iter().collect(),
                    }
                }
            });
        }
        Ok(out)
    }

    fn dist(&mut self, d: &Dist, var: &str) -> Result<CDist, Unsupported> {
        Ok(match d {
            Dist::Point(e) => CDist::Point(self.expr(e, &[])?),
            Dist::Normal { mean, variance } => CDist::Normal(self.expr(mean, &[])?, self.expr(variance, &[])?),
            Dist::Uniform(_) | Dist::Table(_) => {
                // closed, so evaluated once; evaluation errors go to the interpreter
                let items = match d.eval(&BTreeMap::new(), self.ctx) {
                    Ok(crate::terms::DistValue::Finite(items)) => items,
                    _ => return Err(Unsupported),
                };
                let total = Num::sum(items.iter().map(|(_, w)| w));
                let proper = match total.as_rational() {
                    Some(_) => total.num_eq(&Num::one()),
                    None => (total.to_f64() - 1.0).abs() <= crate::exact::MASS_TOLERANCE,
                };
                CDist::Finite(if proper {
                    Ok(items.iter().map(|(v, w)| (self.value(v), w.to_f64())).collect())
                } else {
                    Err(SampleError::ImproperDistribution {
                        var: var.to_string(),
                        mass: total.to_f64(),
                    })
                })
            }
            Dist::Cond { arms, otherwise } => {
                let mut out = Vec::with_capacity(arms.len());
                for (g, d) in arms {
                    out.push((self.expr(g, &[])?, self.dist(d, var)?));
                }
                CDist::Cond(out, Box::new(self.dist(otherwise, var)?))
            }
        })
    }

    /// `frame` maps function parameters to their compiled arguments.
    fn expr(&mut self, e: &Expr, frame: &[(&str, CExpr)]) -> Result<CExpr, Unsupported> {
        self.expr_depth(e, frame, 0)
    }

    fn expr_depth(&mut self, e: &Expr, frame: &[(&str, CExpr)], depth: usize) -> Result<CExpr, Unsupported> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(Unsupported);
        }
        if frame.is_empty() && crate::terms::free_vars(e).is_empty() && !matches!(e, Expr::Const(_)) {
            if let Ok(v) = e.eval(&BTreeMap::new(), self.ctx) {
                return Ok(CExpr::Const(self.value(&v)));
            }
        }
        let sub = |s: &mut Self, x: &Expr| s.expr_depth(x, frame, depth).map(Box::new);
        Ok(match e {
            Expr::Const(v) => CExpr::Const(self.value(v)),
            Expr::Var(name) => match frame.iter().find(|(p, _)| p == name) {
                Some((_, arg)) => arg.clone(),
                // function bodies only see their parameters
                None if depth > 0 => return Err(Unsupported),
                None => CExpr::Slot(self.slot(name)),
            },
            Expr::Neg(a) => CExpr::Neg(sub(self, a)?),
            Expr::Arith(op, a, b) => CExpr::Arith(*op, sub(self, a)?, sub(self, b)?),
            Expr::Cmp(op, a, b) => CExpr::Cmp(*op, sub(self, a)?, sub(self, b)?),
            Expr::And(a, b) => CExpr::And(sub(self, a)?, sub(self, b)?),
            Expr::Or(a, b) => CExpr::Or(sub(self, a)?, sub(self, b)?),
            Expr::Not(a) => CExpr::Not(sub(self, a)?),
            Expr::Cond { arms, otherwise } => {
                let mut out = Vec::with_capacity(arms.len());
                for (g, b) in arms {
                    out.push((*sub(self, g)?, *sub(self, b)?));
                }
                CExpr::Cond(out, sub(self, otherwise)?)
            }
            Expr::Call(name, args) => {
                let def = self.ctx.function(name).ok_or(Unsupported)?;
                let body = def.body.as_ref().ok_or(Unsupported)?;
                if def.params.len() != args.len() || depth >= MAX_INLINE_DEPTH {
                    return Err(Unsupported);
                }
                let mut inner = Vec::with_capacity(args.len());
                for (p, a) in def.params.iter().zip(args) {
                    inner.push((p.as_str(), *sub(self, a)?));
                }
                self.expr_depth(body, &inner, depth + 1)?
            }
        })
    }
}

fn mismatch(msg: String) -> SampleError {
    SampleError::Evaluation(EvalError::TypeMismatch(msg))
}

fn num_err(e: NumError) -> SampleError {
    SampleError::Evaluation(EvalError::Num(e))
}

fn finite(x: f64) -> Result<f64, SampleError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(num_err(NumError::NonFinite))
    }
}

fn eval(e: &CExpr, slots: &[Option<V>], names: &[String]) -> Result<V, SampleError> {
    let num = |x: &CExpr| match eval(x, slots, names)? {
        V::N(v) => Ok(v),
        v => Err(mismatch(format!("arithmetic on {}", v.kind()))),
    };
    let boolean = |x: &CExpr| match eval(x, slots, names)? {
        V::B(b) => Ok(b),
        v => Err(mismatch(format!("expected a boolean, found {}", v.kind()))),
    };
    Ok(match e {
        CExpr::Const(v) => *v,
        CExpr::Slot(i) => slots[*i].ok_or_else(|| EvalError::UnknownVariable(names[*i].clone()))?,
        CExpr::Neg(a) => V::N(-num(a)?),
        CExpr::Arith(op, a, b) => {
            let (x, y) = (num(a)?, num(b)?);
            V::N(match op {
                ArithOp::Add => finite(x + y)?,
                ArithOp::Sub => finite(x - y)?,
                ArithOp::Mul => finite(x * y)?,
                ArithOp::Div if y == 0.0 => return Err(num_err(NumError::DivisionByZero)),
                ArithOp::Div => finite(x / y)?,
            })
        }
        CExpr::Cmp(op, a, b) => {
            let (x, y) = (eval(a, slots, names)?, eval(b, slots, names)?);
            V::B(match (op, x, y) {
                (CmpOp::Eq, _, _) | (CmpOp::Ne, _, _) => {
                    let eq = match (x, y) {
                        (V::N(p), V::N(q)) => p == q,
                        (V::B(p), V::B(q)) => p == q,
                        (V::S(p), V::S(q)) => p == q,
                        _ => return Err(mismatch(format!("cannot compare {} with {}", x.kind(), y.kind()))),
                    };
                    eq == (*op == CmpOp::Eq)
                }
                (CmpOp::Lt, V::N(p), V::N(q)) => p < q,
                (CmpOp::Le, V::N(p), V::N(q)) => p <= q,
                (CmpOp::Gt, V::N(p), V::N(q)) => p > q,
                (CmpOp::Ge, V::N(p), V::N(q)) => p >= q,
                _ => {
                    return Err(mismatch(format!(
                        "ordering comparison between {} and {}",
                        x.kind(),
                        y.kind()
                    )))
                }
            })
        }
        CExpr::And(a, b) => V::B(boolean(a)? && boolean(b)?),
        CExpr::Or(a, b) => V::B(boolean(a)? || boolean(b)?),
        CExpr::Not(a) => V::B(!boolean(a)?),
        CExpr::Cond(arms, otherwise) => {
            for (g, b) in arms {
                if boolean(g)? {
                    return eval(b, slots, names);
                }
            }
            eval(otherwise, slots, names)?
        }
    })
}

fn draw(d: &CDist, slots: &[Option<V>], names: &[String], rng: &mut impl RngCore) -> Result<V, SampleError> {
    let num = |x: &CExpr| match eval(x, slots, names)? {
        V::N(v) => Ok(v),
        v => Err(mismatch(format!("arithmetic on {}", v.kind()))),
    };
    match d {
        CDist::Point(e) => eval(e, slots, names),
        CDist::Normal(m, v) => {
            let (mean, variance) = (num(m)?, num(v)?);
            if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
                return Err(SampleError::Evaluation(EvalError::InvalidDistribution(format!(
                    "normal variance must be positive and finite, got {variance}"
                ))));
            }
            Ok(V::N(mean + variance.sqrt() * std_quantile(super::open_unit(rng))))
        }
        CDist::Finite(items) => {
            let items = items.as_ref().map_err(Clone::clone)?;
            if items.len() == 1 {
                return Ok(items[0].0);
            }
            let u: f64 = rng.random::<f64>();
            let mut acc = 0.0;
            let last = items.len() - 1;
            for (i, (v, w)) in items.iter().enumerate() {
                acc += w;
                if u < acc || i == last {
                    return Ok(*v);
                }
            }
            unreachable!()
        }
        CDist::Cond(arms, otherwise) => {
            for (g, d) in arms {
                match eval(g, slots, names)? {
                    V::B(true) => return draw(d, slots, names, rng),
                    V::B(false) => {}
                    v => return Err(mismatch(format!("expected a boolean, found {}", v.kind()))),
                }
            }
            draw(otherwise, slots, names, rng)
        }
    }
}

fn run_steps(steps: &[CStep], slots: &mut [Option<V>], names: &[String], rng: &mut impl RngCore) -> Result<(), SampleError> {
    for step in steps {
        match step {
            CStep::Draw { slot, dist } => {
                let v = draw(dist, slots, names, rng)?;
                slots[*slot] = Some(v);
            }
            CStep::Scope { slot, body, result, writes } => {
                let saved: Vec<Option<V>> = writes.iter().map(|w| slots[*w]).collect();
                run_steps(body, slots, names, rng)?;
                let v = slots[*result].ok_or_else(|| SampleError::MissingResult(names[*result].clone()))?;
                for (w, old) in writes.iter().zip(saved) {
                    slots[*w] = old;
                }
                slots[*slot] = Some(v);
            }
        }
    }
    Ok(())
}
