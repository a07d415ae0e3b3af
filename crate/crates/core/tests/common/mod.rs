//! Random finite-discrete computations for the rule and semantics batteries.
#![allow(dead_code)]

use std::collections::BTreeSet;

use probrel::exact::{eval_joint, JointTable};
use probrel::terms::CmpOp;
use probrel::{Comp, Context, Dist, Event, Expr, Num, Step, Update, Value};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod battery;
pub mod oracle;

pub const POOL: [&str; 5] = ["a", "b", "c", "d", "t"];

pub fn ctx() -> Context {
    let mut ctx = Context::new();
    ctx.define_type("Small", (0..3).map(Value::int).collect());
    ctx
}

pub struct Gen {
    pub rng: ChaCha8Rng,
}

impl Gen {
    pub fn new(seed: u64) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A random computation length in 1..=5.
    pub fn rng_len(&mut self) -> usize {
        self.rng.random_range(1..=5)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }

    pub fn pick<'a>(&mut self, xs: &'a [String]) -> &'a String {
        xs.choose(&mut self.rng).expect("non-empty")
    }

    /// Positive rational weights summing to one.
    pub fn weights(&mut self, k: usize) -> Vec<Num> {
        let raw: Vec<i64> = (0..k).map(|_| self.rng.random_range(1..=6)).collect();
        let total: i64 = raw.iter().sum();
        raw.into_iter().map(|w| Num::ratio(w, total)).collect()
    }

    /// Proper table over 1..=3 distinct small integers.
    pub fn table(&mut self) -> Dist {
        let mut vals: Vec<i64> = (0..4).collect();
        vals.shuffle(&mut self.rng);
        let k = self.rng.random_range(1..=3);
        let ws = self.weights(k);
        Dist::table(vals[..k].iter().zip(ws).map(|(v, w)| (Value::int(*v), w)).collect())
    }

    pub fn atom(&mut self, avail: &[String]) -> Expr {
        if !avail.is_empty() && self.chance(0.7) {
            Expr::var(self.pick(avail).clone())
        } else {
            Expr::int(self.rng.random_range(0..3))
        }
    }

    pub fn guard(&mut self, avail: &[String]) -> Expr {
        let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le].choose(&mut self.rng).unwrap();
        let l = self.atom(avail);
        let r = Expr::int(self.rng.random_range(0..3));
        Expr::cmp(op, l, r)
    }

    /// Small integer expression over `avail`.
    pub fn expr(&mut self, avail: &[String], depth: usize) -> Expr {
        if depth == 0 {
            return self.atom(avail);
        }
        match self.rng.random_range(0..5) {
            0 => Expr::add(self.expr(avail, depth - 1), self.atom(avail)),
            1 => Expr::sub(self.expr(avail, depth - 1), self.atom(avail)),
            2 => Expr::cond(vec![(self.guard(avail), self.atom(avail))], self.atom(avail)),
            3 => Expr::mul(self.atom(avail), Expr::int(self.rng.random_range(0..3))),
            _ => self.atom(avail),
        }
    }

    pub fn dist(&mut self, avail: &[String]) -> Dist {
        match self.rng.random_range(0..6) {
            0 | 1 => self.table(),
            2 => Dist::point(self.expr(avail, 2)),
            3 => Dist::uniform("Small"),
            4 if !avail.is_empty() => {
                let g = self.guard(avail);
                Dist::cond(vec![(g, self.table())], Dist::point(self.expr(avail, 1)))
            }
            _ => Dist::point(self.atom(avail)),
        }
    }

    /// An update of `target` reading only `avail`; sometimes a scope.
    pub fn update(&mut self, target: &str, avail: &[String]) -> Update {
        if self.chance(0.12) {
            let mut inner_avail = avail.to_vec();
            let s1 = format!("{target}_s");
            let first = Update::dist(s1.clone(), self.dist(avail));
            inner_avail.push(s1.clone());
            let last = Update::dist(target.to_string(), self.dist(&inner_avail));
            return Update::scope(target.to_string(), Comp::seq(vec![first, last]), target.to_string());
        }
        Update::dist(target.to_string(), self.dist(avail))
    }

    /// `len` steps over the variable pool; `defined` is extended with every
    /// written variable. Variables in `avoid_read` are never read.
    pub fn steps(&mut self, len: usize, defined: &mut Vec<String>, avoid_read: &[&str]) -> Vec<Step> {
        let mut out = Vec::new();
        while out.len() < len {
            let avail: Vec<String> = defined
                .iter()
                .filter(|v| !avoid_read.contains(&v.as_str()))
                .cloned()
                .collect();
            if self.chance(0.15) {
                let mut targets: Vec<&str> = POOL.to_vec();
                targets.shuffle(&mut self.rng);
                let block: Vec<Update> = targets[..2]
                    .iter()
                    .map(|t| Update::dist(t.to_string(), self.dist(&avail)))
                    .collect();
                for t in &targets[..2] {
                    push_unique(defined, t);
                }
                out.push(Step::Par(block));
            } else {
                let t = *POOL.choose(&mut self.rng).unwrap();
                out.push(Step::Update(self.update(t, &avail)));
                push_unique(defined, t);
            }
        }
        out
    }

    pub fn comp(&mut self, len: usize) -> Comp {
        let mut defined = Vec::new();
        Comp::from_steps(self.steps(len, &mut defined, &[]))
    }

    /// Each variable kept with probability 0.7.
    pub fn observed(&mut self, vars: &BTreeSet<String>) -> BTreeSet<String> {
        vars.iter().filter(|_| self.chance(0.7)).cloned().collect()
    }

    pub fn event(&mut self, vars: &[String]) -> Event {
        let g = self.guard(vars);
        if self.chance(0.3) {
            let h = self.guard(vars);
            Event::new(Expr::or(g, h))
        } else {
            Event::new(g)
        }
    }
}

pub fn push_unique(defined: &mut Vec<String>, v: &str) {
    if !defined.iter().any(|d| d == v) {
        defined.push(v.to_string());
    }
}

/// A candidate rule application: the computation, the step path and the
/// variables observed after it.
pub struct Instance {
    pub comp: Comp,
    pub path: Vec<usize>,
    pub observed: BTreeSet<String>,
}

/// `prefix; t ~ point(f); y ~ D(t); suffix`.
pub fn function_propagation(g: &mut Gen) -> Instance {
    let mut defined = Vec::new();
    let pre = g.rng.random_range(0..3);
    let mut steps = g.steps(pre, &mut defined, &[]);
    let i = steps.len();
    let f = g.expr(&defined, 2);
    steps.push(Step::Update(Update::point("t", f)));
    push_unique(&mut defined, "t");
    let y = if g.chance(0.2) { "t" } else { *POOL[..4].choose(&mut g.rng).unwrap() };
    let mut with_t = defined.clone();
    with_t.retain(|v| v != "t");
    let reader = match g.rng.random_range(0..3) {
        0 => Dist::point(Expr::add(Expr::var("t"), g.atom(&with_t))),
        1 => Dist::cond(vec![(Expr::eq(Expr::var("t"), Expr::int(1)), g.table())], Dist::point(g.expr(&defined, 1))),
        _ => Dist::point(Expr::cond(vec![(g.guard(&defined), Expr::var("t"))], g.atom(&defined))),
    };
    steps.push(Step::Update(Update::dist(y, reader)));
    push_unique(&mut defined, y);
    let post = g.rng.random_range(0..3);
    let avoid: &[&str] = if g.chance(0.7) { &["t"] } else { &[] };
    steps.extend(g.steps(post, &mut defined, avoid));
    let comp = Comp::from_steps(steps);
    let observed = g.observed(&comp.defined_vars());
    Instance {
        comp,
        path: vec![i],
        observed,
    }
}

/// `prefix; x ~ D; middle (not reading x); x ~ D'; suffix`.
pub fn omit_unused(g: &mut Gen) -> Instance {
    let mut defined = Vec::new();
    let pre = g.rng.random_range(0..3);
    let mut steps = g.steps(pre, &mut defined, &[]);
    let i = steps.len();
    let x = *POOL.choose(&mut g.rng).unwrap();
    steps.push(Step::Update(Update::dist(x, g.dist(&defined))));
    push_unique(&mut defined, x);
    let mid = g.rng.random_range(0..3);
    steps.extend(g.steps(mid, &mut defined, &[x]));
    let avail: Vec<String> = defined.iter().filter(|v| *v != x).cloned().collect();
    steps.push(Step::Update(Update::dist(x, g.dist(&avail))));
    let post = g.rng.random_range(0..2);
    steps.extend(g.steps(post, &mut defined, &[]));
    let comp = Comp::from_steps(steps);
    let observed = g.observed(&comp.defined_vars());
    Instance {
        comp,
        path: vec![i],
        observed,
    }
}

/// Two adjacent steps over disjoint variables.
pub fn permutation(g: &mut Gen) -> Instance {
    let mut defined = Vec::new();
    let pre = g.rng.random_range(0..3);
    let mut steps = g.steps(pre, &mut defined, &[]);
    let i = steps.len();
    let mut fresh: Vec<&str> = POOL.to_vec();
    fresh.shuffle(&mut g.rng);
    let (u, v) = (fresh[0], fresh[1]);
    let avail: Vec<String> = defined.iter().filter(|d| *d != u && *d != v).cloned().collect();
    steps.push(Step::Update(g.update(u, &avail)));
    steps.push(Step::Update(g.update(v, &avail)));
    push_unique(&mut defined, u);
    push_unique(&mut defined, v);
    let post = g.rng.random_range(0..3);
    steps.extend(g.steps(post, &mut defined, &[]));
    let comp = Comp::from_steps(steps);
    let observed = g.observed(&comp.defined_vars());
    Instance {
        comp,
        path: vec![i],
        observed,
    }
}

pub fn sub_instance(g: &mut Gen, rule: &str) -> Instance {
    match rule {
        "function-propagation" => function_propagation(g),
        "omit-unused" => omit_unused(g),
        _ => permutation(g),
    }
}

/// Joint over `keep`, or `None` if enumeration fails.
pub fn joint_on(c: &Comp, ctx: &Context, keep: &BTreeSet<String>) -> Option<JointTable> {
    eval_joint(c, ctx).ok()?.project(keep).ok()
}
