//! Reasoning about failure probabilities of systems written as monadic
//! computations over distributions.
//!
//! A system is a [`Comp`]: a sequence of updates, each assigning a variable a
//! distribution that may depend on the current values of other variables.
//! Three evaluation routes are provided:
//!
//! * [`exact`] enumerates finite-support computations into a joint table,
//! * [`sampling`] runs any computation (normals included) by Monte-Carlo,
//! * [`rules`] rewrites terms and discharges probability goals with
//!   precondition-checked deduction rules, delegating tail bounds to
//!   [`numeric`].
//!
//! Systems, events, goals and proof scripts have a textual form handled by
//! [`dsl`]; [`cli`] wraps everything into the commands used by the binary.

pub mod cli;
pub mod dsl;
pub mod exact;
pub mod models;
pub mod numeric;
pub mod rules;
pub mod sampling;
pub mod terms;
pub mod value;

pub use terms::{Comp, Context, Dist, Event, Expr, Goal, Relation, Step, Update, UpdateBody};
pub use value::{Num, Value};
