//! Term languages: expressions, distributions, computations, events and goals.

pub mod comp;
pub mod context;
pub mod dist;
pub mod expr;

pub use comp::{
    canonical, check_parallel_independence, first_dependency, linearize, reads_writes, structural_eq,
    unroll_loop, Comp, Event, Goal, IndependenceViolation, Relation, Step, Update, UpdateBody,
};
pub use context::{Carrier, Context, FunDef};
pub use dist::{Dist, DistValue};
pub use expr::{free_vars, ArithOp, CmpOp, Env, EvalError, Expr};
