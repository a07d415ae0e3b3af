//! Textual form of systems, events and goals.
//!
//! ```text
//! type Color = {red, blue};
//! var c : Color;
//! fun flip(x) = if x = red then blue else red;
//! system {
//!     c ~ uniform(Color);
//!     d ~ point(flip(c));
//! }
//! ```
//!
//! Events are boolean expressions over the system's variables; goals read
//! `pr(<event>) < 0.1` (also `<=` and `=`). Named distributions declared with
//! `dist` are inlined where they are used.

mod lexer;
mod parser;
mod printer;

use std::collections::BTreeSet;

use crate::terms::{Comp, Context, Dist, Event, Expr, Goal};

pub use printer::{print_comp, print_dist, print_expr, print_goal, print_system, print_value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// A parsed system: its declarations and body.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemFile {
    pub ctx: Context,
    pub comp: Comp,
}

impl SystemFile {
    /// Declared variables plus everything the body assigns or reads.
    pub fn known_vars(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.ctx.vars.keys().cloned().collect();
        out.extend(self.comp.defined_vars());
        out.extend(self.comp.all_mentioned_vars());
        out
    }
}

pub fn parse_system(text: &str) -> Result<SystemFile, ParseError> {
    parser::Parser::new(text, Context::default(), BTreeSet::new())?.system()
}

pub fn parse_expr(text: &str, sys: &SystemFile) -> Result<Expr, ParseError> {
    let mut p = parser::Parser::new(text, sys.ctx.clone(), sys.known_vars())?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

pub fn parse_event(text: &str, sys: &SystemFile) -> Result<Event, ParseError> {
    parse_expr(text, sys).map(Event::new)
}

/// Parse `pr(<event>) <rel> <bound>`; the goal's computation is the system body.
pub fn parse_goal(text: &str, sys: &SystemFile) -> Result<Goal, ParseError> {
    let mut p = parser::Parser::new(text, sys.ctx.clone(), sys.known_vars())?;
    let mut g = p.goal()?;
    p.expect_eof()?;
    g.comp = sys.comp.clone();
    Ok(g)
}

/// Parse a distribution term (a named distribution, a table, ...) against
/// an existing context.
pub fn parse_dist(text: &str, ctx: &Context) -> Result<Dist, ParseError> {
    let mut p = parser::Parser::new(text, ctx.clone(), ctx.vars.keys().cloned().collect())?;
    let d = p.dist()?;
    p.expect_eof()?;
    Ok(d)
}
