//! Inference rules: term rewrites, goal reductions, proof states and scripts.
//!
//! Rules are applied explicitly, by name, path and parameters; there is no
//! search. Every rule checks its side conditions and fails with
//! [`RuleError::PreconditionFailed`] instead of misapplying.

pub mod goal;
pub mod proof;
pub mod rewrite;
pub mod script;

pub use goal::{apply_goal_rule, discrete_step, discrete_value, DiscreteStep, EnvelopeSource, GoalOutcome, GoalRule};
pub use proof::{
    Combine, GoalEntry, GoalStatus, NumericObligation, ObligationRecord, ProofState, TraceEntry, Verdict,
};
pub use rewrite::{apply as apply_term_rule, TermRule};
pub use script::{parse_script, run_script, Invocation, ScriptFailure};

use crate::exact::ExactError;
use crate::numeric::NumericError;
use crate::terms::{ArithOp, EvalError, Expr, IndependenceViolation};
use crate::value::{Num, Value};

/// Address of a step: indices into step lists, descending through scoped
/// updates. `[2, 0]` is the first step inside the scope at top-level step 2.
pub type Path = Vec<usize>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("{rule}: precondition failed: {reason}")]
    PreconditionFailed { rule: String, reason: String },
    #[error("bad path: {0}")]
    BadPath(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("event shape mismatch: {0}")]
    EventShapeMismatch(String),
    #[error("envelope not certified: {0}")]
    EnvelopeNotCertified(String),
    #[error("obligation false: computed bound {value} does not establish {relation} {bound}")]
    ObligationFalse { value: f64, relation: String, bound: f64 },
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("no goal {0}")]
    BadGoal(usize),
    #[error("goal {0} is not open")]
    GoalNotOpen(usize),
    #[error("replay diverged at trace entry {0}")]
    ReplayMismatch(usize),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Independence(#[from] IndependenceViolation),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

/// Evaluate closed numeric sub-terms and drop additive zeros and unit
/// factors. Symbolic parts are left in place.
pub fn fold_constants(e: &Expr) -> Expr {
    e.map(&mut |e| {
        let num = |x: &Expr| match x {
            Expr::Const(Value::Num(n)) => Some(n.clone()),
            _ => None,
        };
        match &e {
            Expr::Neg(a) => match num(a) {
                Some(n) => Expr::num(n.neg()),
                None => e,
            },
            Expr::Arith(op, a, b) => {
                if let (Some(x), Some(y)) = (num(a), num(b)) {
                    let r = match op {
                        ArithOp::Add => x.add(&y),
                        ArithOp::Sub => x.sub(&y),
                        ArithOp::Mul => x.mul(&y),
                        ArithOp::Div => x.div(&y),
                    };
                    if let Ok(r) = r {
                        return Expr::num(r);
                    }
                }
                let is = |x: &Option<Num>, k: i64| x.as_ref().is_some_and(|n| n.num_eq(&Num::int(k)));
                let (na, nb) = (num(a), num(b));
                match op {
                    ArithOp::Add if is(&nb, 0) => (**a).clone(),
                    ArithOp::Add if is(&na, 0) => (**b).clone(),
                    ArithOp::Sub if is(&nb, 0) => (**a).clone(),
                    ArithOp::Mul if is(&nb, 1) => (**a).clone(),
                    ArithOp::Mul if is(&na, 1) => (**b).clone(),
                    ArithOp::Div if is(&nb, 1) => (**a).clone(),
                    _ => e,
                }
            }
            _ => e,
        }
    })
}
