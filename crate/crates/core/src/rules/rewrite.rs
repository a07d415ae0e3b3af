//! Term-rewriting rules. Each preserves the probability of every event
//! over the observed variables, and rejects its input when a side
//! condition fails.

use std::collections::BTreeSet;
use std::fmt;

use crate::terms::{linearize, reads_writes, ArithOp, Comp, Dist, Expr, Step, Update, UpdateBody};
use crate::value::{Num, Value};

use super::{fold_constants, Path, RuleError};

/// A rewrite of computation terms, addressed by a [`Path`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermRule {
    Identity,
    Linearize,
    FunctionPropagation,
    OmitUnused,
    Permutation,
    NormalSum,
    VotingAbstraction,
    /// Apply `sub` at `at` inside the `len` steps starting at the path.
    Congruence { len: usize, sub: Box<TermRule>, at: Path },
}

impl TermRule {
    pub fn name(&self) -> &'static str {
        match self {
            TermRule::Identity => "identity",
            TermRule::Linearize => "linearize",
            TermRule::FunctionPropagation => "function-propagation",
            TermRule::OmitUnused => "omit-unused",
            TermRule::Permutation => "permutation",
            TermRule::NormalSum => "normal-sum",
            TermRule::VotingAbstraction => "voting-abstraction",
            TermRule::Congruence { .. } => "congruence",
        }
    }

    pub fn from_name(name: &str) -> Option<TermRule> {
        Some(match name {
            "identity" => TermRule::Identity,
            "linearize" => TermRule::Linearize,
            "function-propagation" => TermRule::FunctionPropagation,
            "omit-unused" => TermRule::OmitUnused,
            "permutation" => TermRule::Permutation,
            "normal-sum" => TermRule::NormalSum,
            "voting-abstraction" => TermRule::VotingAbstraction,
            _ => return None,
        })
    }
}

impl fmt::Display for TermRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Apply `rule` to `c` at `path`. `observed` holds the variables events may
/// refer to after `c` has run; rules that drop a variable refuse to drop one
/// of these.
pub fn apply(rule: &TermRule, c: &Comp, path: &[usize], observed: &BTreeSet<String>) -> Result<Comp, RuleError> {
    match rule {
        TermRule::Identity => Ok(c.clone()),
        TermRule::Linearize => Ok(linearize(c)?),
        TermRule::FunctionPropagation => at_level(c, path, observed, &mut function_propagation),
        TermRule::OmitUnused => at_level(c, path, observed, &mut |l, i, _| omit_unused(l, i)),
        TermRule::Permutation => at_level(c, path, observed, &mut |l, i, _| permutation(l, i)),
        TermRule::NormalSum => at_level(c, path, observed, &mut |l, i, _| normal_sum(l, i)),
        TermRule::VotingAbstraction => at_level(c, path, observed, &mut voting_abstraction),
        TermRule::Congruence { len, sub, at } => at_level(c, path, observed, &mut |level, i, end| {
            congruence(level, i, *len, sub, at, end)
        }),
    }
}

type LevelFn<'a> = dyn FnMut(&Comp, usize, &BTreeSet<String>) -> Result<Comp, RuleError> + 'a;

/// Resolve all but the last path index through scoped updates and hand the
/// addressed step list to `f`, together with the variables observable at
/// the end of that list.
fn at_level(c: &Comp, path: &[usize], level_end: &BTreeSet<String>, f: &mut LevelFn<'_>) -> Result<Comp, RuleError> {
    match path {
        [] => Err(RuleError::BadPath("empty path".into())),
        [i] => {
            if *i >= c.steps.len() {
                return Err(RuleError::BadPath(format!("step {i} out of range (length {})", c.steps.len())));
            }
            f(c, *i, level_end)
        }
        [i, rest @ ..] => {
            let Some(Step::Update(Update {
                target,
                body: UpdateBody::Scope { comp, result },
            })) = c.steps.get(*i)
            else {
                return Err(RuleError::BadPath(format!("step {i} is not a scoped update")));
            };
            let inner_end = BTreeSet::from([result.clone()]);
            let inner = at_level(comp, rest, &inner_end, f)?;
            let mut out = c.clone();
            out.steps[*i] = Step::Update(Update::scope(target.clone(), inner, result.clone()));
            Ok(out)
        }
    }
}

fn precondition(rule: &TermRule, reason: impl Into<String>) -> RuleError {
    RuleError::PreconditionFailed {
        rule: rule.name().to_string(),
        reason: reason.into(),
    }
}

/// Check that the value of `var` is never read again from step `from` on.
fn dead_after(level: &Comp, from: usize, var: &str, level_end: &BTreeSet<String>) -> Result<(), String> {
    for (k, step) in level.steps.iter().enumerate().skip(from) {
        if step.mentions(var) {
            return Err(format!("`{var}` is used again at step {k}"));
        }
        if step.writes().contains(var) {
            return Ok(());
        }
    }
    if level_end.contains(var) {
        return Err(format!("`{var}` is observable after the computation"));
    }
    Ok(())
}

fn single_update<'a>(level: &'a Comp, i: usize, rule: &TermRule) -> Result<&'a Update, RuleError> {
    level
        .steps
        .get(i)
        .ok_or_else(|| precondition(rule, format!("no step at index {i}")))?
        .as_update()
        .ok_or_else(|| precondition(rule, format!("step {i} is a parallel block; linearize first")))
}

fn function_propagation(level: &Comp, i: usize, level_end: &BTreeSet<String>) -> Result<Comp, RuleError> {
    let rule = TermRule::FunctionPropagation;
    let first = single_update(level, i, &rule)?;
    let second = single_update(level, i + 1, &rule)?;
    let Some(Dist::Point(f)) = first.as_dist() else {
        return Err(precondition(&rule, format!("`{}` is not a point-mass update", first.target)));
    };
    let x = &first.target;
    let Some(g) = second.as_dist() else {
        return Err(precondition(&rule, format!("`{}` has a nested computation", second.target)));
    };
    if !g.mentions(x) {
        return Err(precondition(&rule, format!("`{}` does not read `{x}`", second.target)));
    }
    if &second.target != x {
        dead_after(level, i + 2, x, level_end).map_err(|r| precondition(&rule, r))?;
    }
    let fused = Update::dist(second.target.clone(), g.map_exprs(&mut |e| e.substitute(x, f)));
    let mut out = level.clone();
    out.steps[i + 1] = Step::Update(fused);
    out.steps.remove(i);
    Ok(out)
}

fn omit_unused(level: &Comp, i: usize) -> Result<Comp, RuleError> {
    let rule = TermRule::OmitUnused;
    let u = single_update(level, i, &rule)?;
    let x = &u.target;
    if !u.is_proper() {
        return Err(precondition(&rule, format!("update of `{x}` does not have total mass 1")));
    }
    for (k, step) in level.steps.iter().enumerate().skip(i + 1) {
        if step.mentions(x) {
            return Err(precondition(&rule, format!("`{x}` is read at step {k} before being overwritten")));
        }
        if step.writes().contains(x) {
            let mut out = level.clone();
            out.steps.remove(i);
            return Ok(out);
        }
    }
    Err(precondition(&rule, format!("no later update overwrites `{x}`")))
}

fn step_reads_writes(step: &Step) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut reads = BTreeSet::new();
    let mut writes = BTreeSet::new();
    for u in step.updates() {
        let (r, w) = reads_writes(u);
        reads.extend(r);
        writes.extend(w);
    }
    (reads, writes)
}

fn permutation(level: &Comp, i: usize) -> Result<Comp, RuleError> {
    let rule = TermRule::Permutation;
    let (Some(a), Some(b)) = (level.steps.get(i), level.steps.get(i + 1)) else {
        return Err(precondition(&rule, format!("steps {i} and {} do not both exist", i + 1)));
    };
    let (ra, wa) = step_reads_writes(a);
    let (rb, wb) = step_reads_writes(b);
    if let Some(v) = wa.iter().find(|v| rb.contains(*v) || wb.contains(*v)) {
        return Err(precondition(&rule, format!("step {} depends on `{v}` written by step {i}", i + 1)));
    }
    if let Some(v) = wb.iter().find(|v| ra.contains(*v)) {
        return Err(precondition(&rule, format!("step {i} reads `{v}` written by step {}", i + 1)));
    }
    let mut out = level.clone();
    out.steps.swap(i, i + 1);
    Ok(out)
}

fn scope_parts<'a>(level: &'a Comp, i: usize, rule: &TermRule) -> Result<(&'a str, Vec<Update>, &'a str), RuleError> {
    let u = single_update(level, i, rule)?;
    let UpdateBody::Scope { comp, result } = &u.body else {
        return Err(precondition(rule, format!("`{}` is not a scoped update", u.target)));
    };
    let inner = linearize(comp)?;
    let updates = inner.updates().cloned().collect();
    Ok((&u.target, updates, result))
}

/// Flatten a tree of additions into its summands, left to right.
fn summands(e: &Expr) -> Vec<&Expr> {
    match e {
        Expr::Arith(ArithOp::Add, a, b) => {
            let mut out = summands(a);
            out.extend(summands(b));
            out
        }
        _ => vec![e],
    }
}

fn normal_parts(u: &Update) -> Option<(&Expr, &Expr)> {
    match u.as_dist()? {
        Dist::Normal { mean, variance } => Some((mean, variance)),
        _ => None,
    }
}

fn normal_sum(level: &Comp, i: usize) -> Result<Comp, RuleError> {
    let rule = TermRule::NormalSum;
    let (target, updates, result) = scope_parts(level, i, &rule)?;
    let Some((last, normals)) = updates.split_last() else {
        return Err(precondition(&rule, "empty scope"));
    };
    if normals.is_empty() {
        return Err(precondition(&rule, "no normally distributed summands"));
    }
    if last.target != result {
        return Err(precondition(&rule, format!("last update must write the scope result `{result}`")));
    }
    let Some(Dist::Point(sum)) = last.as_dist() else {
        return Err(precondition(&rule, "last update must be a point mass of a sum"));
    };
    let mut names: Vec<&str> = Vec::new();
    let mut params = Vec::new();
    for u in normals {
        let Some((m, v)) = normal_parts(u) else {
            return Err(precondition(&rule, format!("`{}` is not normally distributed", u.target)));
        };
        if names.contains(&u.target.as_str()) || u.target == result {
            return Err(precondition(&rule, format!("`{}` is written twice", u.target)));
        }
        names.push(&u.target);
        params.push((m, v));
    }
    for (m, v) in &params {
        if let Some(n) = names.iter().find(|n| m.mentions(n) || v.mentions(n)) {
            return Err(precondition(&rule, format!("distribution parameters depend on `{n}`")));
        }
    }
    let terms = summands(sum);
    for n in &names {
        let uses = terms.iter().filter(|t| t.as_var() == Some(n)).count();
        if uses != 1 {
            return Err(precondition(&rule, format!("`{n}` must occur exactly once as a summand")));
        }
    }
    for t in &terms {
        if t.as_var().is_some_and(|v| names.contains(&v)) {
            continue;
        }
        if let Some(n) = names.iter().find(|n| t.mentions(n)) {
            return Err(precondition(&rule, format!("`{n}` occurs inside a non-linear term")));
        }
    }
    // Replacing every summand by its mean keeps the offset terms in place.
    let mut mean = sum.clone();
    for (n, (m, _)) in names.iter().zip(&params) {
        mean = mean.substitute(n, m);
    }
    let variance = Expr::sum_of(params.iter().map(|(_, v)| (*v).clone()).collect());
    let mut out = level.clone();
    out.steps[i] = Step::Update(Update::dist(
        target,
        Dist::normal(fold_constants(&mean), fold_constants(&variance)),
    ));
    Ok(out)
}

struct Voting {
    noise: Vec<(String, Expr, Expr)>,
    readings: Vec<String>,
    signal: Expr,
    result: String,
    consumed: usize,
}

/// Match `e_i ~ N(..); v_i ~ point(x + e_i); r ~ point((v_1 + .. + v_n) / n)`
/// at the start of `us`.
fn match_voting(us: &[Update]) -> Result<Voting, String> {
    let n = us.iter().take_while(|u| normal_parts(u).is_some()).count();
    if n == 0 {
        return Err("no normally distributed sensor errors".into());
    }
    if us.len() < 2 * n + 1 {
        return Err(format!("expected {n} readings and a vote after {n} sensor errors"));
    }
    let mut noise = Vec::new();
    for u in &us[..n] {
        let (m, v) = normal_parts(u).expect("counted above");
        if noise.iter().any(|(e, _, _)| e == &u.target) {
            return Err(format!("`{}` is written twice", u.target));
        }
        noise.push((u.target.clone(), m.clone(), v.clone()));
    }
    let is_noise = |e: &Expr| e.as_var().filter(|v| noise.iter().any(|(n, _, _)| n == v)).map(str::to_string);
    let mut signal: Option<Expr> = None;
    let mut used = Vec::new();
    let mut readings = Vec::new();
    for u in &us[n..2 * n] {
        let Some(Dist::Point(Expr::Arith(ArithOp::Add, a, b))) = u.as_dist() else {
            return Err(format!("`{}` is not a reading of the form x + e", u.target));
        };
        let (x, e) = match (is_noise(b), is_noise(a)) {
            (Some(e), _) => (a.as_ref(), e),
            (None, Some(e)) => (b.as_ref(), e),
            _ => return Err(format!("`{}` does not add a sensor error", u.target)),
        };
        if used.contains(&e) {
            return Err(format!("sensor error `{e}` is used twice"));
        }
        match &signal {
            None => signal = Some(x.clone()),
            Some(s) if s == x => {}
            Some(_) => return Err("readings observe different signals".into()),
        }
        if readings.contains(&u.target) || noise.iter().any(|(e, _, _)| e == &u.target) {
            return Err(format!("`{}` is written twice", u.target));
        }
        used.push(e);
        readings.push(u.target.clone());
    }
    let vote = &us[2 * n];
    let Some(Dist::Point(avg)) = vote.as_dist() else {
        return Err(format!("`{}` is not a mean vote", vote.target));
    };
    let sum = match avg {
        Expr::Arith(ArithOp::Div, s, d) if d.as_const() == Some(&Value::Num(Num::int(n as i64))) => s.as_ref(),
        s if n == 1 => s,
        _ => return Err(format!("vote must divide the sum of readings by {n}")),
    };
    let terms = summands(sum);
    if terms.len() != n || !readings.iter().all(|r| terms.iter().filter(|t| t.as_var() == Some(r)).count() == 1) {
        return Err("vote must sum every reading exactly once".into());
    }
    let signal = signal.expect("n >= 1");
    let locals: Vec<&String> = noise.iter().map(|(e, _, _)| e).chain(&readings).chain([&vote.target]).collect();
    if let Some(l) = locals.iter().find(|l| signal.mentions(l)) {
        return Err(format!("signal depends on local `{l}`"));
    }
    for (_, m, v) in &noise {
        if let Some(l) = locals.iter().find(|l| m.mentions(l) || v.mentions(l)) {
            return Err(format!("error distribution depends on local `{l}`"));
        }
    }
    Ok(Voting {
        noise,
        readings,
        signal,
        result: vote.target.clone(),
        consumed: 2 * n + 1,
    })
}

fn has_symbols(e: &Expr) -> bool {
    let mut vars = BTreeSet::new();
    let mut calls = BTreeSet::new();
    e.collect_vars(&mut vars);
    e.collect_calls(&mut calls);
    !vars.is_empty() || !calls.is_empty()
}

fn abstract_vote(v: &Voting) -> Result<Comp, String> {
    let n = v.noise.len();
    let n_expr = Expr::int(n as i64);
    let means: Vec<&Expr> = v.noise.iter().map(|(_, m, _)| m).collect();
    let vars: Vec<&Expr> = v.noise.iter().map(|(_, _, s)| s).collect();
    let mean = if means.iter().all(|m| *m == means[0]) {
        means[0].clone()
    } else {
        fold_constants(&Expr::div(Expr::sum_of(means.into_iter().cloned().collect()), n_expr.clone()))
    };
    let variance = if vars.iter().all(|s| *s == vars[0]) {
        if n == 1 {
            vars[0].clone()
        } else {
            fold_constants(&Expr::div(vars[0].clone(), n_expr))
        }
    } else if vars.iter().any(|s| has_symbols(s)) {
        return Err("symbolic error variances must be syntactically equal".into());
    } else {
        let n2 = Expr::int((n * n) as i64);
        fold_constants(&Expr::div(Expr::sum_of(vars.into_iter().cloned().collect()), n2))
    };
    let e = v.noise[0].0.clone();
    Ok(Comp::seq(vec![
        Update::dist(e.clone(), Dist::normal(mean, variance)),
        Update::point(v.result.clone(), Expr::add(v.signal.clone(), Expr::var(e))),
    ]))
}

fn voting_abstraction(level: &Comp, i: usize, level_end: &BTreeSet<String>) -> Result<Comp, RuleError> {
    let rule = TermRule::VotingAbstraction;
    let step = &level.steps[i];
    if let Some(Update {
        body: UpdateBody::Scope { .. },
        ..
    }) = step.as_update()
    {
        let (target, updates, result) = scope_parts(level, i, &rule)?;
        let v = match_voting(&updates).map_err(|r| precondition(&rule, r))?;
        if v.consumed != updates.len() || v.result != result {
            return Err(precondition(&rule, "scope must end with the vote on its result"));
        }
        let inner = abstract_vote(&v).map_err(|r| precondition(&rule, r))?;
        let mut out = level.clone();
        out.steps[i] = Step::Update(Update::scope(target, inner, result));
        return Ok(out);
    }
    // Unscoped pattern: the matched steps are folded into a new scope, so
    // the errors and readings must be dead afterwards.
    let mut updates = Vec::new();
    let mut ends = Vec::new();
    for s in &level.steps[i..] {
        updates.extend(s.updates().iter().cloned());
        ends.push(updates.len());
    }
    let v = match_voting(&updates).map_err(|r| precondition(&rule, r))?;
    let Some(steps_used) = ends.iter().position(|e| *e == v.consumed).map(|k| k + 1) else {
        return Err(precondition(&rule, "pattern ends inside a parallel block"));
    };
    let end = i + steps_used;
    for local in v.noise.iter().map(|(e, _, _)| e).chain(&v.readings) {
        dead_after(level, end, local, level_end).map_err(|r| precondition(&rule, r))?;
    }
    let inner = abstract_vote(&v).map_err(|r| precondition(&rule, r))?;
    let mut out = level.clone();
    out.steps.splice(
        i..end,
        [Step::Update(Update::scope(v.result.clone(), inner, v.result.clone()))],
    );
    Ok(out)
}

fn congruence(
    level: &Comp,
    i: usize,
    len: usize,
    sub: &TermRule,
    at: &[usize],
    level_end: &BTreeSet<String>,
) -> Result<Comp, RuleError> {
    if len == 0 || i + len > level.steps.len() {
        return Err(RuleError::BadPath(format!("segment {i}..{} out of range", i + len)));
    }
    let segment = Comp::from_steps(level.steps[i..i + len].to_vec());
    let mut live = level_end.clone();
    for s in &level.steps[i + len..] {
        for u in s.updates() {
            live.extend(reads_writes(u).0);
            if let UpdateBody::Scope { comp, .. } = &u.body {
                live.extend(comp.all_mentioned_vars());
            }
        }
    }
    let rewritten = apply(sub, &segment, at, &live)?;
    let mut out = level.clone();
    out.steps.splice(i..i + len, rewritten.steps);
    Ok(out)
}
