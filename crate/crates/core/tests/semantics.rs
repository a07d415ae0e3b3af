mod common;

use probrel::exact::{eval_joint, eval_joint_with, marginal, prob_event_in, total_mass, ExactConfig, ExactError};
use probrel::sampling::{estimate_prob, SampleConfig};
use probrel::terms::linearize;
use probrel::{Comp, Dist, Event, Expr, Num, Update, Value};

use common::{ctx, Gen};

#[test]
fn random_proper_computations_have_mass_one() {
    let mut g = Gen::new(1);
    let mut checked = 0;
    for _ in 0..300 {
        let len = g.rng_len();
        let c = g.comp(len);
        // parallel blocks are drawn without an independence check
        let Ok(j) = eval_joint(&c, &ctx()) else { continue };
        assert_eq!(total_mass(&j), Num::one(), "{}", probrel::dsl::print_comp(&c));
        for v in j.vars() {
            let m = marginal(&j, v).unwrap();
            assert_eq!(Num::sum(m.iter().map(|(_, w)| w)), Num::one());
        }
        checked += 1;
    }
    assert!(checked > 200, "{checked}");
}

#[test]
fn linearizing_keeps_the_joint() {
    let mut g = Gen::new(2);
    for _ in 0..300 {
        let len = g.rng_len();
        let c = g.comp(len);
        let Ok(lin) = linearize(&c) else { continue };
        assert!(!lin.has_par());
        assert_eq!(eval_joint(&c, &ctx()).unwrap(), eval_joint(&lin, &ctx()).unwrap());
    }
}

#[test]
fn bind_is_associative_and_empty_is_neutral() {
    let mut g = Gen::new(3);
    for _ in 0..100 {
        let (a, b, c) = (g.comp(2), g.comp(2), g.comp(2));
        let left = a.clone().then(b.clone()).then(c.clone());
        let right = a.clone().then(b.then(c));
        assert_eq!(left, right);
        assert_eq!(Comp::empty().then(a.clone()), a);
        assert_eq!(a.clone().then(Comp::empty()), a);
    }
}

#[test]
fn improper_tables_scale_every_event() {
    let c = Comp::seq(vec![
        Update::dist("a", Dist::table(vec![(Value::int(0), Num::ratio(3, 10)), (Value::int(1), Num::ratio(6, 10))])),
        Update::dist("b", Dist::uniform("Small")),
    ]);
    let j = eval_joint(&c, &ctx()).unwrap();
    assert_eq!(total_mass(&j), Num::ratio(9, 10));
    let e = Event::new(Expr::eq(Expr::var("a"), Expr::int(1)));
    assert_eq!(prob_event_in(&j, &e, &ctx()).unwrap(), Num::ratio(6, 10));
    assert!(estimate_prob(&c, &ctx(), &e, &SampleConfig::new(10, 0)).is_err());
}

/// Every value of every top-level variable: exact probability inside the
/// Monte-Carlo interval.
fn eval_and_simulate_agree(c: &Comp, ctx: &probrel::Context, n: u64, seed: u64) -> Result<usize, String> {
    let j = eval_joint(c, ctx).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for v in j.vars() {
        for (value, w) in marginal(&j, v).unwrap() {
            let e = Event::new(Expr::eq(Expr::var(v.clone()), Expr::Const(value.clone())));
            let est = estimate_prob(c, ctx, &e, &SampleConfig::new(n, seed).with_gamma(0.999)).unwrap();
            if !est.contains(w.to_f64()) {
                return Err(format!("Pr({v} = {value}) = {w} outside [{}, {}]", est.ci_low(), est.ci_high()));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[test]
fn eval_and_simulate_agree_on_bundled_discrete_assets() {
    for name in ["coin", "voter2", "discrete_sort_red", "discrete_sort_blue"] {
        let sys = probrel::models::system(name);
        let checked = eval_and_simulate_agree(&sys.comp, &sys.ctx, 50_000, 7).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(checked >= 2, "{name}");
    }
}

#[test]
fn eval_and_simulate_agree_on_random_computations() {
    let mut g = Gen::new(4);
    for k in 0..25 {
        let c = g.comp(3);
        if linearize(&c).is_err() {
            continue;
        }
        eval_and_simulate_agree(&c, &ctx(), 5_000, k).unwrap_or_else(|e| panic!("{e}\n{}", probrel::dsl::print_comp(&c)));
    }
}

#[test]
fn simulation_is_reproducible_and_thread_independent() {
    let sys = probrel::models::system("conv_belt");
    let e = probrel::dsl::parse_event("l <= p - x", &sys).unwrap();
    let cfg = SampleConfig::new(30_000, 99);
    let a = estimate_prob(&sys.comp, &sys.ctx, &e, &cfg).unwrap();
    let b = estimate_prob(&sys.comp, &sys.ctx, &e, &cfg.serial()).unwrap();
    assert_eq!(a, b);
    let c = estimate_prob(&sys.comp, &sys.ctx, &e, &SampleConfig::new(30_000, 100)).unwrap();
    assert_ne!(a.hits, c.hits);
}

#[test]
fn enumeration_respects_the_size_limit() {
    let c = Comp::seq(["a", "b", "c", "d"].iter().map(|v| Update::dist(*v, Dist::uniform("Small"))).collect());
    let ok = eval_joint_with(&c, &ctx(), ExactConfig { size_limit: 81 }).unwrap();
    assert_eq!(ok.len(), 81);
    let err = eval_joint_with(&c, &ctx(), ExactConfig { size_limit: 80 }).unwrap_err();
    assert_eq!(err, ExactError::SizeLimitExceeded { limit: 80 });
}

#[test]
fn continuous_updates_are_not_enumerated() {
    let c = Comp::seq(vec![Update::dist("x", Dist::normal(Expr::int(0), Expr::int(1)))]);
    assert!(matches!(eval_joint(&c, &ctx()), Err(ExactError::ContinuousDistributionPresent(v)) if v == "x"));
}

#[test]
fn intervals_cover_the_exact_value_across_seeds() {
    let cases = [
        ("coin", "b"),
        ("voter2", "r = 1"),
        ("discrete_sort_red", "s = stack2"),
        ("discrete_sort_blue", "s = stack1"),
    ];
    for (name, event) in cases {
        let sys = probrel::models::system(name);
        let e = probrel::dsl::parse_event(event, &sys).unwrap();
        let exact = prob_event_in(&eval_joint(&sys.comp, &sys.ctx).unwrap(), &e, &sys.ctx).unwrap().to_f64();
        let covered = (0..100)
            .filter(|seed| {
                let est = estimate_prob(&sys.comp, &sys.ctx, &e, &SampleConfig::new(2000, *seed).with_gamma(0.99)).unwrap();
                (est.p_hat - exact).abs() <= est.half_width
            })
            .count();
        assert!(covered >= 95, "{name}: {covered}/100");
    }
}
