use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::terms::dist::Dist;
use crate::terms::expr::Expr;
use crate::value::Num;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UpdateBody {
    Dist(Dist),
    /// Nested computation; only `result` escapes the scope.
    Scope { comp: Comp, result: String },
}

/// Assignment of a new distribution to one variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Update {
    pub target: String,
    pub body: UpdateBody,
}

impl Update {
    pub fn dist(target: impl Into<String>, dist: Dist) -> Update {
        Update {
            target: target.into(),
            body: UpdateBody::Dist(dist),
        }
    }

    pub fn point(target: impl Into<String>, e: Expr) -> Update {
        Update::dist(target, Dist::Point(e))
    }

    pub fn scope(target: impl Into<String>, comp: Comp, result: impl Into<String>) -> Update {
        Update {
            target: target.into(),
            body: UpdateBody::Scope {
                comp,
                result: result.into(),
            },
        }
    }

    pub fn as_dist(&self) -> Option<&Dist> {
        match &self.body {
            UpdateBody::Dist(d) => Some(d),
            UpdateBody::Scope { .. } => None,
        }
    }

    /// Whether any expression in the body (nested bodies included) names `var`.
    pub fn mentions(&self, var: &str) -> bool {
        match &self.body {
            UpdateBody::Dist(d) => d.mentions(var),
            UpdateBody::Scope { comp, result } => result == var || comp.mentions(var),
        }
    }

    pub fn is_proper(&self) -> bool {
        match &self.body {
            UpdateBody::Dist(d) => d.is_proper(),
            UpdateBody::Scope { comp, .. } => comp.is_proper(),
        }
    }

    pub fn is_continuous(&self) -> bool {
        match &self.body {
            UpdateBody::Dist(d) => d.is_continuous(),
            UpdateBody::Scope { comp, .. } => comp.updates().any(|u| u.is_continuous()),
        }
    }
}

/// One step of a computation: a single update or a block of updates
/// declared independent (parallel composition).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    Update(Update),
    Par(Vec<Update>),
}

impl Step {
    pub fn updates(&self) -> &[Update] {
        match self {
            Step::Update(u) => std::slice::from_ref(u),
            Step::Par(us) => us,
        }
    }

    pub fn as_update(&self) -> Option<&Update> {
        match self {
            Step::Update(u) => Some(u),
            Step::Par(_) => None,
        }
    }

    pub fn writes(&self) -> BTreeSet<String> {
        self.updates().iter().map(|u| u.target.clone()).collect()
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.updates().iter().any(|u| u.mentions(var))
    }
}

/// Abstract computation: `unit` followed by a chain of binds.
///
/// Bind chains are kept flat (`A, (B, C)` and `(A, B), C` are the same
/// step list), so monadic associativity holds by construction. An empty
/// step list is the identity computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Comp {
    pub steps: Vec<Step>,
}

impl Comp {
    pub fn empty() -> Comp {
        Comp::default()
    }

    pub fn from_steps(steps: Vec<Step>) -> Comp {
        Comp { steps }
    }

    /// Sequence of single updates.
    pub fn seq(updates: Vec<Update>) -> Comp {
        Comp {
            steps: updates.into_iter().map(Step::Update).collect(),
        }
    }

    /// `unit`: independent initial distributions for each variable.
    pub fn unit(env: Vec<(String, Dist)>) -> Comp {
        Comp {
            steps: vec![Step::Par(
                env.into_iter().map(|(v, d)| Update::dist(v, d)).collect(),
            )],
        }
    }

    /// `bind`: run `inner`, then the given updates in order.
    pub fn bind(inner: Comp, updates: Vec<Update>) -> Comp {
        inner.then(Comp::seq(updates))
    }

    /// A parallel block appended to `inner`.
    pub fn par(inner: Comp, block: Vec<Update>) -> Comp {
        let mut c = inner;
        c.steps.push(Step::Par(block));
        c
    }

    /// Sequential composition `self, other`.
    pub fn then(mut self, other: Comp) -> Comp {
        self.steps.extend(other.steps);
        self
    }

    pub fn push(&mut self, step: Step) -> &mut Self {
        self.steps.push(step);
        self
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Top-level updates, par members included, in order.
    pub fn updates(&self) -> impl Iterator<Item = &Update> {
        self.steps.iter().flat_map(|s| s.updates().iter())
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.steps.iter().any(|s| s.mentions(var))
    }

    pub fn is_proper(&self) -> bool {
        self.updates().all(|u| u.is_proper())
    }

    pub fn has_par(&self) -> bool {
        self.steps.iter().any(|s| match s {
            Step::Par(_) => true,
            Step::Update(u) => match &u.body {
                UpdateBody::Scope { comp, .. } => comp.has_par(),
                UpdateBody::Dist(_) => false,
            },
        })
    }

    /// Variables visible after the computation (top-level writes).
    pub fn defined_vars(&self) -> BTreeSet<String> {
        self.updates().map(|u| u.target.clone()).collect()
    }

    /// Every expression-level variable occurrence, nested bodies included.
    pub fn all_mentioned_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for u in self.updates() {
            match &u.body {
                UpdateBody::Dist(d) => out.extend(d.free_vars()),
                UpdateBody::Scope { comp, .. } => out.extend(comp.all_mentioned_vars()),
            }
        }
        out
    }

    /// Variables the computation reads from its starting state: every read
    /// not preceded by a write at the same scope level.
    pub fn external_inputs(&self) -> BTreeSet<String> {
        self.inputs_with_defined(&BTreeSet::new())
    }

    fn inputs_with_defined(&self, defined_before: &BTreeSet<String>) -> BTreeSet<String> {
        let mut defined = defined_before.clone();
        let mut inputs = BTreeSet::new();
        for step in &self.steps {
            for u in step.updates() {
                let (reads, _) = reads_writes(u);
                inputs.extend(reads.into_iter().filter(|r| !defined.contains(r)));
            }
            defined.extend(step.writes());
        }
        inputs
    }

    pub fn rename_vars(&self, map: &BTreeMap<String, String>) -> Comp {
        Comp {
            steps: self
                .steps
                .iter()
                .map(|s| match s {
                    Step::Update(u) => Step::Update(rename_update(u, map)),
                    Step::Par(us) => Step::Par(us.iter().map(|u| rename_update(u, map)).collect()),
                })
                .collect(),
        }
    }
}

fn rename_update(u: &Update, map: &BTreeMap<String, String>) -> Update {
    let target = map.get(&u.target).cloned().unwrap_or_else(|| u.target.clone());
    let body = match &u.body {
        UpdateBody::Dist(d) => UpdateBody::Dist(d.rename_vars(map)),
        UpdateBody::Scope { comp, result } => UpdateBody::Scope {
            comp: comp.rename_vars(map),
            result: map.get(result).cloned().unwrap_or_else(|| result.clone()),
        },
    };
    Update { target, body }
}

/// Boolean predicate over variable values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub predicate: Expr,
}

impl Event {
    pub fn new(predicate: Expr) -> Event {
        Event { predicate }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        crate::terms::expr::free_vars(&self.predicate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "=",
        }
    }

    pub fn holds(self, value: &Num, bound: &Num) -> bool {
        let ord = value.cmp_num(bound);
        match self {
            Relation::Lt => ord.is_lt(),
            Relation::Le => ord.is_le(),
            Relation::Eq => ord.is_eq(),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Obligation `Pr([comp] event) ⋈ bound`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Goal {
    pub comp: Comp,
    pub event: Event,
    pub relation: Relation,
    pub bound: Num,
}

impl Goal {
    pub fn new(comp: Comp, event: Event, relation: Relation, bound: Num) -> Goal {
        Goal {
            comp,
            event,
            relation,
            bound,
        }
    }
}

/// Read and write sets of an update. Nested computations contribute their
/// external inputs; a scope whose result is never written inside reads the
/// outer value of that variable.
pub fn reads_writes(u: &Update) -> (BTreeSet<String>, BTreeSet<String>) {
    let writes = BTreeSet::from([u.target.clone()]);
    let reads = match &u.body {
        UpdateBody::Dist(d) => d.free_vars(),
        UpdateBody::Scope { comp, result } => {
            let mut r = comp.external_inputs();
            if !comp.defined_vars().contains(result) {
                r.insert(result.clone());
            }
            r
        }
    };
    (reads, writes)
}

/// True iff no update of the block writes a variable another one reads or writes.
pub fn check_parallel_independence(block: &[Update]) -> bool {
    first_dependency(block).is_none()
}

/// The first variable that makes the block dependent, if any.
pub fn first_dependency(block: &[Update]) -> Option<String> {
    let rw: Vec<_> = block.iter().map(reads_writes).collect();
    for (i, (_, wi)) in rw.iter().enumerate() {
        for (j, (rj, wj)) in rw.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(v) = wi.iter().find(|v| rj.contains(*v) || wj.contains(*v)) {
                return Some(v.clone());
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parallel block is not independent: variable `{var}` is shared")]
pub struct IndependenceViolation {
    pub var: String,
}

/// Replace every parallel block by its updates in declaration order,
/// recursively through nested scopes.
pub fn linearize(c: &Comp) -> Result<Comp, IndependenceViolation> {
    let mut steps = Vec::with_capacity(c.steps.len());
    for step in &c.steps {
        match step {
            Step::Update(u) => steps.push(Step::Update(linearize_update(u)?)),
            Step::Par(block) => {
                if let Some(var) = first_dependency(block) {
                    return Err(IndependenceViolation { var });
                }
                for u in block {
                    steps.push(Step::Update(linearize_update(u)?));
                }
            }
        }
    }
    Ok(Comp { steps })
}

fn linearize_update(u: &Update) -> Result<Update, IndependenceViolation> {
    Ok(match &u.body {
        UpdateBody::Dist(_) => u.clone(),
        UpdateBody::Scope { comp, result } => Update::scope(u.target.clone(), linearize(comp)?, result.clone()),
    })
}

/// `body` composed with itself `n` times; `n = 0` is the identity.
pub fn unroll_loop(body: &Comp, n: usize) -> Comp {
    let mut out = Comp::empty();
    for _ in 0..n {
        out.steps.extend(body.steps.iter().cloned());
    }
    out
}

/// Equality up to consistent renaming of scope-local variables.
pub fn structural_eq(a: &Comp, b: &Comp) -> bool {
    canonical(a) == canonical(b)
}

/// Rename scope-local variables to positional names (`$0`, `$1`, ...).
/// Top-level names are observable and stay as they are.
pub fn canonical(c: &Comp) -> Comp {
    let mut counter = 0usize;
    canon_steps(c, &BTreeMap::new(), false, &mut counter).0
}

/// Returns the renamed computation and the name map in force at its end.
fn canon_steps(
    c: &Comp,
    outer: &BTreeMap<String, String>,
    local: bool,
    counter: &mut usize,
) -> (Comp, BTreeMap<String, String>) {
    let mut map = outer.clone();
    let mut steps = Vec::with_capacity(c.steps.len());
    for step in &c.steps {
        // members of a block all read the state before the block
        let read_map = map.clone();
        let mut out = Vec::with_capacity(step.updates().len());
        for u in step.updates() {
            let body = match &u.body {
                UpdateBody::Dist(d) => UpdateBody::Dist(d.rename_vars(&read_map)),
                UpdateBody::Scope { comp, result } => {
                    let (inner, inner_map) = canon_steps(comp, &read_map, true, counter);
                    let result = inner_map.get(result).cloned().unwrap_or_else(|| result.clone());
                    UpdateBody::Scope { comp: inner, result }
                }
            };
            let target = if local {
                // a first local write shadows any outer name
                if outer.get(&u.target) == map.get(&u.target) {
                    let name = format!("${counter}");
                    *counter += 1;
                    map.insert(u.target.clone(), name);
                }
                map[&u.target].clone()
            } else {
                u.target.clone()
            };
            out.push(Update { target, body });
        }
        steps.push(match step {
            Step::Update(_) => Step::Update(out.pop().expect("one update")),
            Step::Par(_) => Step::Par(out),
        });
    }
    (Comp { steps }, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn std_normal() -> Dist {
        Dist::normal(Expr::int(0), Expr::int(1))
    }

    #[test]
    fn reads_writes_examples() {
        let u = Update::point("v1", Expr::add(Expr::var("x"), Expr::var("e1")));
        assert_eq!(reads_writes(&u), (set(&["e1", "x"]), set(&["v1"])));
        let n = Update::dist("e1", std_normal());
        assert_eq!(reads_writes(&n), (set(&[]), set(&["e1"])));
        let self_update = Update::point("v", Expr::call("f", vec![Expr::var("v")]));
        assert_eq!(reads_writes(&self_update).0, set(&["v"]));
    }

    #[test]
    fn nested_reads_are_external_inputs_only() {
        let inner = Comp::seq(vec![
            Update::point("v1", Expr::add(Expr::var("x"), Expr::var("e1"))),
            Update::point("v2", Expr::add(Expr::var("x"), Expr::var("e2"))),
            Update::point("r", Expr::div(Expr::add(Expr::var("v1"), Expr::var("v2")), Expr::int(2))),
        ]);
        let u = Update::scope("r", inner, "r");
        // v1, v2 are bound locally; x, e1, e2 come from outside
        assert_eq!(reads_writes(&u), (set(&["e1", "e2", "x"]), set(&["r"])));
    }

    #[test]
    fn independence_examples() {
        let noises: Vec<_> = ["e1", "e2", "e3"].iter().map(|e| Update::dist(*e, std_normal())).collect();
        assert!(check_parallel_independence(&noises));
        let cyclic = vec![Update::point("v", Expr::var("x")), Update::point("x", Expr::var("v"))];
        assert!(!check_parallel_independence(&cyclic));
        let shared = vec![
            Update::point("v1", Expr::add(Expr::var("x"), Expr::var("e1"))),
            Update::point("v2", Expr::add(Expr::var("x"), Expr::var("e2"))),
        ];
        assert!(check_parallel_independence(&shared));
        let same_target = vec![Update::point("v", Expr::int(1)), Update::point("v", Expr::int(2))];
        assert!(!check_parallel_independence(&same_target));
    }

    #[test]
    fn linearize_in_declaration_order() {
        let c = Comp::par(Comp::empty(), vec![Update::dist("e1", std_normal()), Update::dist("e2", std_normal())]);
        let l = linearize(&c).unwrap();
        assert_eq!(
            l,
            Comp::seq(vec![Update::dist("e1", std_normal()), Update::dist("e2", std_normal())])
        );
        let bad = Comp::par(
            Comp::empty(),
            vec![Update::point("v", Expr::var("x")), Update::point("x", Expr::var("v"))],
        );
        assert!(linearize(&bad).is_err());
    }

    #[test]
    fn unroll_zero_is_identity_and_three_matches_manual() {
        let body = Comp::seq(vec![Update::point("x", Expr::add(Expr::var("x"), Expr::int(1)))]);
        assert!(unroll_loop(&body, 0).is_empty());
        let manual = body.clone().then(body.clone()).then(body.clone());
        assert!(structural_eq(&unroll_loop(&body, 3), &manual));
    }

    #[test]
    fn scope_local_renaming_is_invisible() {
        let mk = |local: &str| {
            Comp::seq(vec![Update::scope(
                "v",
                Comp::seq(vec![
                    Update::dist("v", Dist::table(vec![(Value::int(1), Num::one())])),
                    Update::point(local, Expr::var("v")),
                ]),
                "v",
            )])
        };
        assert!(structural_eq(&mk("v'"), &mk("w'")));
        // top-level names are observable
        let a = Comp::seq(vec![Update::point("a", Expr::int(1))]);
        let b = Comp::seq(vec![Update::point("b", Expr::int(1))]);
        assert!(!structural_eq(&a, &b));
    }

    #[test]
    fn renamed_scope_result_is_equal() {
        let mk = |inner: &str| {
            Comp::seq(vec![Update::scope(
                "r",
                Comp::seq(vec![Update::dist("e", std_normal()), Update::point(inner, Expr::add(Expr::var("x"), Expr::var("e")))]),
                inner,
            )])
        };
        assert!(structural_eq(&mk("r"), &mk("q")));
    }
}
