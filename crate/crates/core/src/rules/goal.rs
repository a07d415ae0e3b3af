//! Rules that reduce probability goals: exact discrete computation,
//! envelope approximation, range splitting, normal monotonicity and event
//! weakening.

use crate::exact::{update_outcomes, ExactConfig, ExactError, Valuation};
use crate::numeric::{
    build_lower_envelope, build_upper_envelope, cumulative, EnvelopeRole, GridSpec, NormalParams, PiecewiseDensity,
};
use crate::terms::{linearize, CmpOp, Comp, Context, Dist, DistValue, Event, Expr, Goal, Relation, Step, Update};
use crate::value::{Num, Value};

use super::proof::NumericObligation;
use super::RuleError;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeSource {
    Grid(GridSpec),
    Given(PiecewiseDensity),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoalRule {
    /// Eliminate the leading distribution; `ground` recurses to a number.
    DiscreteProb { ground: bool },
    EventApproxUpper(EnvelopeSource),
    EventApproxLower(EnvelopeSource),
    /// Missing bounds default to halves of the goal bound.
    RangeSplit { eps1: Option<Num>, eps2: Option<Num> },
    NormalMonotone { premise_variance: Num },
    EventWeakening { dist: Dist },
}

impl GoalRule {
    pub fn name(&self) -> &'static str {
        match self {
            GoalRule::DiscreteProb { .. } => "discrete-prob",
            GoalRule::EventApproxUpper(_) => "event-approx-upper",
            GoalRule::EventApproxLower(_) => "event-approx-lower",
            GoalRule::RangeSplit { .. } => "range-split",
            GoalRule::NormalMonotone { .. } => "normal-monotone",
            GoalRule::EventWeakening { .. } => "event-weakening",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoalOutcome {
    /// The exact probability of the goal's event.
    Value(Num),
    /// The probability is the weighted sum of the sub-goal probabilities.
    Weighted(Vec<(Num, Goal)>),
    /// Closed by a discharged numeric obligation.
    Discharged(Vec<NumericObligation>),
    /// Closed once every sub-goal is closed.
    Subgoals(Vec<Goal>, Vec<NumericObligation>),
}

pub fn apply_goal_rule(rule: &GoalRule, g: &Goal, ctx: &Context) -> Result<GoalOutcome, RuleError> {
    match rule {
        GoalRule::DiscreteProb { ground: true } => Ok(GoalOutcome::Value(discrete_value(g, ctx)?)),
        GoalRule::DiscreteProb { ground: false } => Ok(match discrete_step(g, ctx)? {
            DiscreteStep::Ground(v) => GoalOutcome::Value(v),
            DiscreteStep::Branch(children) => GoalOutcome::Weighted(children),
        }),
        GoalRule::EventApproxUpper(src) => event_approx(g, ctx, src, EnvelopeRole::Upper),
        GoalRule::EventApproxLower(src) => event_approx(g, ctx, src, EnvelopeRole::Lower),
        GoalRule::RangeSplit { eps1, eps2 } => range_split(g, ctx, eps1.clone(), eps2.clone()),
        GoalRule::NormalMonotone { premise_variance } => normal_monotone(g, ctx, premise_variance),
        GoalRule::EventWeakening { dist } => event_weakening(g, ctx, dist),
    }
}

fn precondition(rule: &str, reason: impl Into<String>) -> RuleError {
    RuleError::PreconditionFailed {
        rule: rule.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteStep {
    Ground(Num),
    Branch(Vec<(Num, Goal)>),
}

/// One application of the discrete computation rule: fix the first update
/// that is not yet a literal point mass to each of its possible values.
pub fn discrete_step(g: &Goal, ctx: &Context) -> Result<DiscreteStep, RuleError> {
    let comp = linearize(&g.comp)?;
    let mut val = Valuation::new();
    for (k, step) in comp.steps.iter().enumerate() {
        let Step::Update(u) = step else { unreachable!("linearized") };
        if let Some(Dist::Point(Expr::Const(v))) = u.as_dist() {
            val.insert(u.target.clone(), v.clone());
            continue;
        }
        let outcomes = match update_outcomes(u, &val, ctx, ExactConfig::default()) {
            Ok(o) => o,
            Err(ExactError::ContinuousDistributionPresent(var)) => {
                return Err(precondition(
                    "discrete-prob",
                    format!("leading distribution of `{var}` is not finite"),
                ))
            }
            Err(e) => return Err(e.into()),
        };
        let children = outcomes
            .into_iter()
            .filter(|(_, w)| !w.is_zero())
            .map(|(v, w)| {
                let mut c = comp.clone();
                c.steps[k] = Step::Update(Update::point(u.target.clone(), Expr::Const(v)));
                (w, Goal::new(c, g.event.clone(), g.relation, g.bound.clone()))
            })
            .collect();
        return Ok(DiscreteStep::Branch(children));
    }
    let hit = g.event.predicate.eval_bool(&val, ctx)?;
    Ok(DiscreteStep::Ground(if hit { Num::one() } else { Num::zero() }))
}

/// Apply [`discrete_step`] until every branch is ground, summing
/// `D(x') * Pr(...)` along the way.
pub fn discrete_value(g: &Goal, ctx: &Context) -> Result<Num, RuleError> {
    match discrete_step(g, ctx)? {
        DiscreteStep::Ground(v) => Ok(v),
        DiscreteStep::Branch(children) => {
            let mut total = Num::zero();
            for (w, child) in children {
                let v = discrete_value(&child, ctx)?;
                total = total.add(&w.mul(&v).map_err(crate::terms::EvalError::from)?).map_err(crate::terms::EvalError::from)?;
            }
            Ok(total)
        }
    }
}

/// The single update `(x, D)` a goal's computation must consist of.
fn single_update<'a>(g: &'a Goal, rule: &str) -> Result<&'a Update, RuleError> {
    let us: Vec<&Update> = g.comp.updates().collect();
    match (us.as_slice(), g.comp.steps.len()) {
        ([u], 1) => Ok(u),
        _ => Err(precondition(rule, "computation must be a single update (x, D)")),
    }
}

fn ground_normal(u: &Update, ctx: &Context, rule: &str) -> Result<NormalParams, RuleError> {
    let Some(d @ Dist::Normal { .. }) = u.as_dist() else {
        return Err(precondition(rule, format!("`{}` is not normally distributed", u.target)));
    };
    match d.eval(&Valuation::new(), ctx)? {
        DistValue::Normal { mean, variance } => Ok(NormalParams::new(mean, variance)?),
        DistValue::Finite(_) => unreachable!("normal evaluates to normal"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    /// `x <= a` or `x < a`
    Below,
    /// `x >= a` or `x > a`
    Above,
}

/// Recognise `x op a` (either operand order) with `a` closed.
fn threshold(pred: &Expr, x: &str, ctx: &Context) -> Option<(Side, Num)> {
    let Expr::Cmp(op, l, r) = pred else { return None };
    let (op, bound) = if l.as_var() == Some(x) {
        (*op, r)
    } else if r.as_var() == Some(x) {
        (op.flipped(), l)
    } else {
        return None;
    };
    let side = match op {
        CmpOp::Le | CmpOp::Lt => Side::Below,
        CmpOp::Ge | CmpOp::Gt => Side::Above,
        _ => return None,
    };
    let a = bound.eval_num(&Valuation::new(), ctx).ok()?;
    Some((side, a))
}

fn check_bound(value: f64, relation: Relation, bound: f64) -> Result<(), RuleError> {
    let ok = match relation {
        Relation::Lt => value < bound,
        Relation::Le => value <= bound,
        Relation::Eq => false,
    };
    if ok {
        Ok(())
    } else {
        Err(RuleError::ObligationFalse {
            value,
            relation: relation.symbol().to_string(),
            bound,
        })
    }
}

fn event_approx(g: &Goal, ctx: &Context, src: &EnvelopeSource, role: EnvelopeRole) -> Result<GoalOutcome, RuleError> {
    let rule = match role {
        EnvelopeRole::Upper => "event-approx-upper",
        EnvelopeRole::Lower => "event-approx-lower",
    };
    if g.relation == Relation::Eq {
        return Err(precondition(rule, "goal must be an upper bound (< or <=)"));
    }
    let u = single_update(g, rule)?;
    let p = ground_normal(u, ctx, rule)?;
    let want = match role {
        EnvelopeRole::Upper => Side::Below,
        EnvelopeRole::Lower => Side::Above,
    };
    let a = match threshold(&g.event.predicate, &u.target, ctx) {
        Some((side, a)) if side == want => a.to_f64(),
        _ => {
            let shape = if want == Side::Below { "x <= a" } else { "x >= a" };
            return Err(RuleError::EventShapeMismatch(format!("{rule} needs an event of the form {shape}")));
        }
    };
    let env = match src {
        EnvelopeSource::Grid(spec) => match role {
            EnvelopeRole::Upper => build_upper_envelope(&p, *spec)?,
            EnvelopeRole::Lower => build_lower_envelope(&p, *spec)?,
        },
        EnvelopeSource::Given(d) => d.clone(),
    };
    env.certify(&p, role)
        .map_err(|e| RuleError::EnvelopeNotCertified(e.to_string()))?;
    let cdf = cumulative(&env, a);
    let value = match role {
        EnvelopeRole::Upper => cdf,
        EnvelopeRole::Lower => 1.0 - cdf,
    };
    let bound = g.bound.to_f64();
    check_bound(value, g.relation, bound)?;
    Ok(GoalOutcome::Discharged(vec![
        NumericObligation::EnvelopePremise {
            role,
            pieces: env.densities.len(),
            integral: env.integral(),
        },
        NumericObligation::CdfBound {
            role,
            threshold: a,
            value,
            relation: g.relation,
            bound,
        },
    ]))
}

fn range_split(g: &Goal, ctx: &Context, eps1: Option<Num>, eps2: Option<Num>) -> Result<GoalOutcome, RuleError> {
    let rule = "range-split";
    if g.relation == Relation::Eq {
        return Err(precondition(rule, "goal must be an upper bound (< or <=)"));
    }
    let Expr::Or(l, r) = &g.event.predicate else {
        return Err(RuleError::EventShapeMismatch("range-split needs x >= a or x <= b".into()));
    };
    let var_of = |e: &Expr| match e {
        Expr::Cmp(_, a, b) => a.as_var().or(b.as_var()).map(str::to_string),
        _ => None,
    };
    let x = var_of(l).ok_or_else(|| RuleError::EventShapeMismatch("left disjunct is not a comparison".into()))?;
    let (above, below) = match (threshold(l, &x, ctx), threshold(r, &x, ctx)) {
        (Some((Side::Above, _)), Some((Side::Below, _))) => (l, r),
        (Some((Side::Below, _)), Some((Side::Above, _))) => (r, l),
        _ => {
            return Err(RuleError::EventShapeMismatch(format!(
                "range-split needs one lower and one upper tail comparison on `{x}`"
            )))
        }
    };
    let half = || g.bound.div(&Num::int(2));
    let sub = |a: &Num, b: &Num| a.sub(b);
    let (e1, e2) = match (eps1, eps2) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => {
            let b = sub(&g.bound, &a).map_err(crate::terms::EvalError::from)?;
            (a, b)
        }
        (None, Some(b)) => (sub(&g.bound, &b).map_err(crate::terms::EvalError::from)?, b),
        (None, None) => {
            let h = half().map_err(crate::terms::EvalError::from)?;
            (h.clone(), h)
        }
    };
    if e1.is_negative() || e2.is_negative() {
        return Err(precondition(rule, "split bounds must be non-negative"));
    }
    let total = e1.add(&e2).map_err(crate::terms::EvalError::from)?;
    if !total.num_eq(&g.bound) {
        return Err(precondition(rule, format!("eps1 + eps2 = {total} differs from the goal bound {}", g.bound)));
    }
    let goals = vec![
        Goal::new(g.comp.clone(), Event::new((**above).clone()), g.relation, e1),
        Goal::new(g.comp.clone(), Event::new((**below).clone()), g.relation, e2),
    ];
    Ok(GoalOutcome::Subgoals(
        goals,
        vec![NumericObligation::Arithmetic {
            description: "eps1 + eps2 = eps".into(),
            holds: true,
        }],
    ))
}

fn normal_monotone(g: &Goal, ctx: &Context, premise_variance: &Num) -> Result<GoalOutcome, RuleError> {
    let rule = "normal-monotone";
    if g.relation == Relation::Eq {
        return Err(precondition(rule, "goal must be an upper bound (< or <=)"));
    }
    let u = single_update(g, rule)?;
    let p = ground_normal(u, ctx, rule)?;
    let Some(Dist::Normal { mean, .. }) = u.as_dist() else { unreachable!() };
    let (side, c) = threshold(&g.event.predicate, &u.target, ctx)
        .ok_or_else(|| RuleError::EventShapeMismatch("normal-monotone needs x <= mu - a or x >= mu + a".into()))?;
    let c = c.to_f64();
    let a = match side {
        Side::Below => p.mean - c,
        Side::Above => c - p.mean,
    };
    if !(a > 0.0) {
        return Err(precondition(rule, format!("distance a = {a} from the mean must be positive")));
    }
    let sigma2 = premise_variance.to_f64();
    if !(p.variance <= sigma2) {
        return Err(precondition(
            rule,
            format!("conclusion variance {} exceeds premise variance {sigma2}", p.variance),
        ));
    }
    let premise = Goal::new(
        Comp::seq(vec![Update::dist(
            u.target.clone(),
            Dist::normal(mean.clone(), Expr::num(premise_variance.clone())),
        )]),
        g.event.clone(),
        g.relation,
        g.bound.clone(),
    );
    Ok(GoalOutcome::Subgoals(
        vec![premise],
        vec![NumericObligation::Arithmetic {
            description: format!("a = {a} > 0 and variance {} <= {sigma2}", p.variance),
            holds: true,
        }],
    ))
}

fn event_weakening(g: &Goal, ctx: &Context, dist: &Dist) -> Result<GoalOutcome, RuleError> {
    let rule = "event-weakening";
    if g.relation == Relation::Eq {
        return Err(precondition(rule, "goal must be an upper bound (< or <=)"));
    }
    let u = single_update(g, rule)?;
    let Some(d) = u.as_dist() else {
        return Err(precondition(rule, "update must be a distribution"));
    };
    let x = &u.target;
    let y = match &g.event.predicate {
        Expr::Cmp(CmpOp::Eq, a, b) if a.as_var() == Some(x) => b,
        Expr::Cmp(CmpOp::Eq, a, b) if b.as_var() == Some(x) => a,
        _ => return Err(RuleError::EventShapeMismatch(format!("event-weakening needs {x} = y"))),
    };
    let y: Value = y.eval(&Valuation::new(), ctx)?;
    let weight = |d: &Dist| -> Result<Num, RuleError> {
        match d.eval(&Valuation::new(), ctx)? {
            DistValue::Finite(items) => Ok(items
                .into_iter()
                .find(|(v, _)| v.semantic_eq(&y) == Some(true))
                .map(|(_, w)| w)
                .unwrap_or_else(Num::zero)),
            DistValue::Normal { .. } => Err(precondition(rule, "distributions must have finite support")),
        }
    };
    let (w, w2) = (weight(d)?, weight(dist)?);
    if w.cmp_num(&w2).is_gt() {
        return Err(precondition(rule, format!("D({y}) = {w} exceeds D'({y}) = {w2}")));
    }
    let premise = Goal::new(
        Comp::seq(vec![Update::dist(x.clone(), dist.clone())]),
        g.event.clone(),
        g.relation,
        g.bound.clone(),
    );
    Ok(GoalOutcome::Subgoals(
        vec![premise],
        vec![NumericObligation::Arithmetic {
            description: format!("D({y}) = {w} <= D'({y}) = {w2}"),
            holds: true,
        }],
    ))
}
