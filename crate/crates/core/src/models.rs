//! Bundled case studies: systems, proof scripts and the terms the scripts
//! are expected to produce.

use crate::dsl::{parse_system, SystemFile};
use crate::rules::{parse_script, Invocation};
use crate::terms::{Comp, Dist, Expr, Update};
use crate::value::Num;

/// `(name, source)` of every bundled system.
pub const SYSTEMS: [(&str, &str); 7] = [
    ("coin", include_str!("../assets/coin.sys")),
    ("voter_mean", include_str!("../assets/voter_mean.sys")),
    ("voter2", include_str!("../assets/voter2.sys")),
    ("vote2", include_str!("../assets/vote2.sys")),
    ("conv_belt", include_str!("../assets/conv_belt.sys")),
    ("discrete_sort_red", include_str!("../assets/discrete_sort_red.sys")),
    ("discrete_sort_blue", include_str!("../assets/discrete_sort_blue.sys")),
];

pub const SCRIPTS: [(&str, &str); 2] = [
    ("conv_belt", include_str!("../assets/conv_belt.script")),
    ("discrete_sort", include_str!("../assets/discrete_sort.script")),
];

pub fn source(name: &str) -> Option<&'static str> {
    SYSTEMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parse a bundled system. Panics on an unknown name; the assets are
/// checked by the test suite.
pub fn system(name: &str) -> SystemFile {
    let text = source(name).unwrap_or_else(|| panic!("no bundled system `{name}`"));
    parse_system(text).unwrap_or_else(|e| panic!("bundled system `{name}`: {e}"))
}

pub fn script(name: &str) -> Vec<Invocation> {
    let text = SCRIPTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .unwrap_or_else(|| panic!("no bundled script `{name}`"));
    parse_script(text).unwrap_or_else(|e| panic!("bundled script `{name}`: {e}"))
}

/// Discrete sort for a work piece of the given colour (`red` or `blue`).
pub fn discrete_sort(color: &str) -> SystemFile {
    system(&format!("discrete_sort_{color}"))
}

fn nullary(name: &str) -> Expr {
    Expr::call(name, vec![])
}

/// One simplified conveyor-belt round:
/// `r ~ N(x + muE, sigmaE2(x) / 2); e ~ N(muE', varE'); x ~ point((p - r) * (1 + e))`.
fn simplified_round() -> Vec<Update> {
    let x = Expr::var("x");
    vec![
        Update::dist(
            "r",
            Dist::normal(
                Expr::add(x.clone(), nullary("muE")),
                Expr::div(Expr::call("sigmaE2", vec![x]), Expr::int(2)),
            ),
        ),
        Update::dist("e", Dist::normal(nullary("muE'"), nullary("varE'"))),
        Update::point(
            "x",
            Expr::mul(
                Expr::sub(Expr::var("p"), Expr::var("r")),
                Expr::add(Expr::int(1), Expr::var("e")),
            ),
        ),
    ]
}

/// The conveyor belt after the bundled script: both sensor votes collapsed
/// into one normal reading and the repositioning request inlined.
pub fn conv_belt_simplified() -> Comp {
    let mut us = vec![Update::point("x", Expr::int(1)), Update::point("p", Expr::int(2))];
    us.extend(simplified_round());
    us.extend(simplified_round());
    Comp::seq(us)
}

/// `x1 ~ N(1, 4); x2 ~ N(2, 9); s ~ point(x1 + x2)` wrapped in a scope on `s`.
pub fn normal_pair() -> Comp {
    Comp::seq(vec![Update::scope(
        "s",
        Comp::seq(vec![
            Update::dist("x1", Dist::normal(Expr::int(1), Expr::int(4))),
            Update::dist("x2", Dist::normal(Expr::int(2), Expr::int(9))),
            Update::point("s", Expr::add(Expr::var("x1"), Expr::var("x2"))),
        ]),
        "s",
    )])
}

/// Exact values of the discrete sort case study.
pub fn discrete_sort_expected(color: &str) -> Option<Num> {
    match color {
        "red" => Some(Num::ratio(97, 1000)),
        "blue" => Some(Num::ratio(57, 1000)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::print_system;

    #[test]
    fn assets_parse_and_round_trip() {
        for (name, _) in SYSTEMS {
            let s = system(name);
            let again = parse_system(&print_system(&s)).unwrap();
            assert_eq!(again, s, "{name}");
        }
        for (name, _) in SCRIPTS {
            assert!(!script(name).is_empty());
        }
    }

    #[test]
    fn voter_mean_linearizes_to_seven_updates() {
        let s = system("voter_mean");
        let lin = crate::terms::linearize(&s.comp).unwrap();
        // the leading step fixes the input x
        assert_eq!(lin.steps.len(), 8);
        assert!(!lin.has_par());
    }

    #[test]
    fn conv_belt_script_reaches_simplified_form() {
        use crate::rules::{run_script, ProofState};
        let s = system("conv_belt");
        let goal = crate::dsl::parse_goal("pr(l <= p - x) < 0.1", &s).unwrap();
        let ps = ProofState::new(goal, s.ctx.clone());
        let out = run_script(&ps, &script("conv_belt")).unwrap_or_else(|e| panic!("{e}"));
        let got = &out.root().comp;
        assert!(
            crate::terms::structural_eq(got, &conv_belt_simplified()),
            "{}",
            crate::dsl::print_comp(got)
        );
    }
}
