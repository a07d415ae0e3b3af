//! Rule soundness and goal conservatism batteries shared by the acceptance
//! target and the per-rule tests.

use std::collections::BTreeMap;

use probrel::exact::{eval_joint, prob_event_in, Valuation};
use probrel::numeric::{normal_cdf, NormalParams};
use probrel::rules::{
    apply_goal_rule, apply_term_rule, discrete_step, discrete_value, DiscreteStep, GoalOutcome, GoalRule,
    Invocation, ProofState, RuleError, TermRule, Verdict,
};
use probrel::sampling::{estimate_prob, SampleConfig};
use probrel::terms::CmpOp;
use probrel::{Comp, Context, Dist, Event, Expr, Goal, Num, Relation, Step, Update, Value};
use rand::seq::IndexedRandom;
use rand::Rng;

use super::{ctx, joint_on, sub_instance, Gen, Instance};

#[derive(Debug, Default)]
pub struct Tally {
    pub applied: usize,
    pub refused: usize,
    pub failures: Vec<String>,
}

impl Tally {
    pub fn ok(&self, need: usize) -> bool {
        self.failures.is_empty() && self.applied >= need
    }
}

impl std::fmt::Display for Tally {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} applied, {} refused, {} mismatches", self.applied, self.refused, self.failures.len())?;
        if let Some(first) = self.failures.first() {
            write!(f, "; first: {first}")?;
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 20_000;

fn check_rewrite(rule: &TermRule, inst: &Instance, ctx: &Context, tally: &mut Tally) {
    match apply_term_rule(rule, &inst.comp, &inst.path, &inst.observed) {
        Ok(after) => {
            tally.applied += 1;
            let (Some(j1), Some(j2)) = (
                joint_on(&inst.comp, ctx, &inst.observed),
                joint_on(&after, ctx, &inst.observed),
            ) else {
                tally.failures.push(format!("{rule}: cannot compare joints of\n{}", probrel::dsl::print_comp(&inst.comp)));
                return;
            };
            if !j1.approx_eq(&j2, 1e-9) {
                tally.failures.push(format!(
                    "{rule} at {:?} observing {:?}:\n{}=>\n{}",
                    inst.path,
                    inst.observed,
                    probrel::dsl::print_comp(&inst.comp),
                    probrel::dsl::print_comp(&after)
                ));
            }
        }
        Err(RuleError::PreconditionFailed { .. }) | Err(RuleError::BadPath(_)) => tally.refused += 1,
        Err(e) => tally.failures.push(format!("{rule}: unexpected error {e}")),
    }
}

/// Apply `rule` to random instances until `need` applications succeed.
pub fn term_rule(name: &str, need: usize, seed: u64) -> Tally {
    let ctx = ctx();
    let mut g = Gen::new(seed);
    let mut tally = Tally::default();
    let rule = TermRule::from_name(name).expect("term rule");
    for _ in 0..MAX_ATTEMPTS {
        if tally.applied >= need {
            break;
        }
        let inst = sub_instance(&mut g, name);
        if eval_joint(&inst.comp, &ctx).is_err() {
            continue;
        }
        check_rewrite(&rule, &inst, &ctx, &mut tally);
    }
    tally
}

/// Congruence around the other rewrites: either a segment of the level
/// containing the redex, or the whole instance nested inside a scope.
pub fn congruence(need: usize, seed: u64) -> Tally {
    let ctx = ctx();
    let mut g = Gen::new(seed);
    let mut tally = Tally::default();
    let subs = ["function-propagation", "omit-unused", "permutation"];
    for _ in 0..MAX_ATTEMPTS {
        if tally.applied >= need {
            break;
        }
        let name = *subs.choose(&mut g.rng).unwrap();
        let sub = TermRule::from_name(name).unwrap();
        let inner = sub_instance(&mut g, name);
        let i = inner.path[0];
        let inst = if g.chance(0.6) {
            let start = g.rng.random_range(0..=i);
            let end = g.rng.random_range((i + 1).min(inner.comp.steps.len())..=inner.comp.steps.len());
            let len = (end - start).max(1);
            let rule = TermRule::Congruence {
                len,
                sub: Box::new(sub),
                at: vec![i - start],
            };
            (rule, Instance { path: vec![start], ..inner })
        } else {
            let vars: Vec<String> = inner.comp.defined_vars().into_iter().collect();
            let result = g.pick(&vars).clone();
            let mut steps = vec![Step::Update(Update::dist("a", g.table()))];
            let k = steps.len();
            steps.push(Step::Update(Update::scope("r", inner.comp.clone(), result.clone())));
            let comp = Comp::from_steps(steps);
            let observed = g.observed(&comp.defined_vars());
            let rule = TermRule::Congruence {
                len: 1,
                sub: Box::new(TermRule::Congruence {
                    len: inner.comp.steps.len() - i,
                    sub: Box::new(sub),
                    at: vec![0],
                }),
                at: vec![0, i],
            };
            (rule, Instance { comp, path: vec![k], observed })
        };
        let (rule, inst) = inst;
        if eval_joint(&inst.comp, &ctx).is_err() {
            continue;
        }
        check_rewrite(&rule, &inst, &ctx, &mut tally);
    }
    tally
}

fn random_goal(g: &mut Gen) -> Option<Goal> {
    let len = g.rng.random_range(1..=4);
    let comp = g.comp(len);
    let vars: Vec<String> = comp.defined_vars().into_iter().collect();
    let event = g.event(&vars);
    let bound = Num::ratio(g.rng.random_range(1..20), 20);
    let relation = if g.chance(0.5) { Relation::Lt } else { Relation::Le };
    Some(Goal::new(comp, event, relation, bound))
}

fn add_scaled(acc: &mut BTreeMap<Valuation, Num>, w: &Num, comp: &Comp, ctx: &Context) -> Result<(), String> {
    let j = eval_joint(comp, ctx).map_err(|e| e.to_string())?;
    for (v, m) in j.entries() {
        let add = w.mul(m).map_err(|e| e.to_string())?;
        let slot = acc.entry(v.clone()).or_insert_with(Num::zero);
        *slot = slot.add(&add).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn nonzero(m: BTreeMap<Valuation, Num>) -> BTreeMap<Valuation, Num> {
    m.into_iter().filter(|(_, w)| !w.is_zero()).collect()
}

/// Step mode: `sum_v D(v) * joint(child_v)` equals the joint before the
/// step. Ground mode: the value equals the enumerated probability.
pub fn discrete_prob(need: usize, seed: u64) -> Tally {
    let ctx = ctx();
    let mut g = Gen::new(seed);
    let mut tally = Tally::default();
    for _ in 0..MAX_ATTEMPTS {
        if tally.applied >= need {
            break;
        }
        let Some(goal) = random_goal(&mut g) else { continue };
        let Ok(before) = eval_joint(&goal.comp, &ctx) else { continue };
        let expected = prob_event_in(&before, &goal.event, &ctx).expect("event over defined vars");
        tally.applied += 1;
        match discrete_value(&goal, &ctx) {
            Ok(v) if v.num_eq(&expected) => {}
            Ok(v) => tally.failures.push(format!("ground value {v} vs enumeration {expected}")),
            Err(e) => tally.failures.push(format!("ground mode failed: {e}")),
        }
        match discrete_step(&goal, &ctx) {
            Ok(DiscreteStep::Branch(children)) => {
                let mut acc = BTreeMap::new();
                let mut err = None;
                for (w, child) in &children {
                    if let Err(e) = add_scaled(&mut acc, w, &child.comp, &ctx) {
                        err = Some(e);
                    }
                }
                let want: BTreeMap<Valuation, Num> = before.entries().clone();
                match err {
                    Some(e) => tally.failures.push(format!("child enumeration failed: {e}")),
                    None => {
                        let (got, want) = (nonzero(acc), nonzero(want));
                        let same = got.len() == want.len()
                            && got.iter().zip(&want).all(|((k1, a), (k2, b))| {
                                k1 == k2 && (a.to_f64() - b.to_f64()).abs() <= 1e-9
                            });
                        if !same {
                            tally.failures.push(format!(
                                "weighted children differ from the joint of\n{}",
                                probrel::dsl::print_comp(&goal.comp)
                            ));
                        }
                    }
                }
            }
            Ok(DiscreteStep::Ground(_)) => {}
            Err(e) => tally.failures.push(format!("step mode failed: {e}")),
        }
    }
    tally
}

/// `x ~ D` with event `x = y` and `D(y) <= D'(y)`: the premise
/// probability bounds the conclusion's.
pub fn event_weakening(need: usize, seed: u64) -> Tally {
    let ctx = ctx();
    let mut g = Gen::new(seed);
    let mut tally = Tally::default();
    for _ in 0..MAX_ATTEMPTS {
        if tally.applied >= need {
            break;
        }
        let d = g.table();
        let y = Value::int(g.rng.random_range(0..4));
        let event = Event::new(Expr::eq(Expr::var("x"), Expr::Const(y.clone())));
        let goal = Goal::new(
            Comp::seq(vec![Update::dist("x", d)]),
            event.clone(),
            Relation::Lt,
            Num::ratio(1, 2),
        );
        let d2 = g.table();
        let rule = GoalRule::EventWeakening { dist: d2.clone() };
        let p = |c: &Comp| prob_event_in(&eval_joint(c, &ctx).unwrap(), &event, &ctx).unwrap();
        let before = p(&goal.comp);
        let premise_p = p(&Comp::seq(vec![Update::dist("x", d2)]));
        match apply_goal_rule(&rule, &goal, &ctx) {
            Ok(GoalOutcome::Subgoals(children, _)) => {
                tally.applied += 1;
                let via_child = p(&children[0].comp);
                if before.cmp_num(&via_child).is_gt() || !via_child.num_eq(&premise_p) {
                    tally.failures.push(format!("Pr before {before} exceeds premise {via_child}"));
                }
            }
            Ok(other) => tally.failures.push(format!("unexpected outcome {other:?}")),
            Err(RuleError::PreconditionFailed { .. }) => {
                tally.refused += 1;
                if before.cmp_num(&premise_p).is_le() {
                    tally.failures.push(format!("refused although D(y) = {before} <= D'(y) = {premise_p}"));
                }
            }
            Err(e) => tally.failures.push(e.to_string()),
        }
    }
    tally
}

#[derive(Debug, Default)]
pub struct Conservatism {
    pub goals: usize,
    pub closed: usize,
    pub unsound: Vec<String>,
}

impl std::fmt::Display for Conservatism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} goals, {} closed, {} unsound closures", self.goals, self.closed, self.unsound.len())?;
        if let Some(first) = self.unsound.first() {
            write!(f, "; first: {first}")?;
        }
        Ok(())
    }
}

fn run(ps: &ProofState, script: &[Invocation]) -> Option<ProofState> {
    let mut state = ps.clone();
    for inv in script {
        state = state.apply(inv).ok()?;
    }
    Some(state)
}

/// Record a closure; refuted if the exact value violates the bound or a
/// Monte-Carlo interval lies entirely above it.
fn audit(out: &mut Conservatism, goal: &Goal, ctx: &Context, exact: f64, mc: bool, label: &str) {
    out.closed += 1;
    let bound = goal.bound.to_f64();
    let holds = match goal.relation {
        Relation::Lt => exact < bound,
        _ => exact <= bound,
    };
    if !holds {
        out.unsound.push(format!("{label}: true value {exact} vs bound {bound}"));
        return;
    }
    if mc {
        let est = estimate_prob(&goal.comp, ctx, &goal.event, &SampleConfig::new(20_000, out.closed as u64).serial())
            .expect("sampling");
        if est.ci_low() > bound {
            out.unsound.push(format!("{label}: Monte-Carlo interval [{}, {}] above {bound}", est.ci_low(), est.ci_high()));
        }
    }
}

fn discrete_goals(out: &mut Conservatism, g: &mut Gen, count: usize) {
    let ctx = ctx();
    for _ in 0..count {
        let Some(goal) = random_goal(g) else { continue };
        let Ok(j) = eval_joint(&goal.comp, &ctx) else { continue };
        out.goals += 1;
        let exact = prob_event_in(&j, &goal.event, &ctx).unwrap().to_f64();
        let mode = if g.chance(0.5) { "ground" } else { "step" };
        let mut script = vec![Invocation::new("discrete-prob").param("mode", mode)];
        if mode == "step" {
            // finish every child produced by the step
            script.extend((1..=12).map(|k| Invocation::new("discrete-prob").on_goal(k)));
        }
        let mut state = ProofState::new(goal.clone(), ctx.clone());
        for inv in &script {
            if let Ok(next) = state.apply(inv) {
                state = next;
            }
        }
        if state.verdict() == Verdict::Established {
            audit(out, &goal, &ctx, exact, g.chance(0.1), "discrete-prob");
        }
    }
    for _ in 0..count {
        let d = g.table();
        let y = Value::int(g.rng.random_range(0..4));
        let event = Event::new(Expr::eq(Expr::var("x"), Expr::Const(y)));
        let goal = Goal::new(
            Comp::seq(vec![Update::dist("x", d)]),
            event.clone(),
            Relation::Lt,
            Num::ratio(g.rng.random_range(1..20), 20),
        );
        out.goals += 1;
        let exact = prob_event_in(&eval_joint(&goal.comp, &ctx).unwrap(), &event, &ctx).unwrap().to_f64();
        let d2 = probrel::dsl::print_dist(&g.table()).replace(' ', "");
        let script = [
            Invocation::new("event-weakening").param("dist", d2),
            Invocation::new("discrete-prob").on_goal(1),
        ];
        if let Some(state) = run(&ProofState::new(goal.clone(), ctx.clone()), &script) {
            if state.verdict() == Verdict::Established {
                audit(out, &goal, &ctx, exact, false, "event-weakening");
            }
        }
    }
}

fn dec(x: f64) -> Num {
    Num::parse_decimal(&format!("{x:.3}")).unwrap()
}

fn normal_goals(out: &mut Conservatism, g: &mut Gen, count: usize) {
    let ctx = Context::new();
    for _ in 0..count {
        let mu = dec(g.rng.random_range(-2.0..2.0));
        let var = dec(g.rng.random_range(0.2..4.0));
        let p = NormalParams::new(mu.to_f64(), var.to_f64()).unwrap();
        let sd = p.sd();
        let lo = dec(mu.to_f64() - g.rng.random_range(0.5..4.0) * sd);
        let hi = dec(mu.to_f64() + g.rng.random_range(0.5..4.0) * sd);
        let x = Expr::var("x");
        let below = Expr::cmp(CmpOp::Le, x.clone(), Expr::num(lo.clone()));
        let above = Expr::cmp(CmpOp::Ge, x.clone(), Expr::num(hi.clone()));
        let p_below = normal_cdf(lo.to_f64(), &p).unwrap();
        let p_above = 1.0 - normal_cdf(hi.to_f64(), &p).unwrap();
        let width = *[0.01, 0.05, 0.2, 0.5, 1.0].choose(&mut g.rng).unwrap();
        let comp = |v: &Num| Comp::seq(vec![Update::dist("x", Dist::normal(Expr::num(mu.clone()), Expr::num(v.clone())))]);
        let scale = g.rng.random_range(0.6..1.8);
        let (pred, exact, script) = match g.rng.random_range(0..4) {
            0 => (below, p_below, vec![Invocation::new("event-approx-upper").param("width", width)]),
            1 => (above, p_above, vec![Invocation::new("event-approx-lower").param("width", width)]),
            2 => (
                Expr::or(above, below),
                p_below + p_above,
                vec![
                    Invocation::new("range-split"),
                    Invocation::new("event-approx-lower").on_goal(1).param("width", width),
                    Invocation::new("event-approx-upper").on_goal(2).param("width", width),
                ],
            ),
            _ => {
                let wider = dec(var.to_f64() * g.rng.random_range(1.0..2.0));
                let mut s = vec![Invocation::new("normal-monotone").param("premise_variance", wider.to_string())];
                s.push(Invocation::new("event-approx-upper").on_goal(1).param("width", width));
                (below, p_below, s)
            }
        };
        let bound = dec((exact * scale).max(0.001));
        let goal = Goal::new(comp(&var), Event::new(pred), Relation::Lt, bound);
        out.goals += 1;
        if let Some(state) = run(&ProofState::new(goal.clone(), ctx.clone()), &script) {
            if state.verdict() == Verdict::Established {
                audit(out, &goal, &ctx, exact, g.chance(0.2), &script[0].rule);
            }
        }
    }
}

/// Randomized goal battery over every goal rule.
pub fn conservatism(count: usize, seed: u64) -> Conservatism {
    let mut g = Gen::new(seed);
    let mut out = Conservatism::default();
    discrete_goals(&mut out, &mut g, count);
    normal_goals(&mut out, &mut g, count);
    out
}
