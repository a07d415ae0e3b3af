//! Monte-Carlo execution of computations.
//!
//! Sample `i` draws from its own ChaCha stream (`stream = i`) of the
//! configured seed, and work is split into fixed-size chunks reduced in
//! index order, so serial and parallel runs produce bit-identical results.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::exact::Valuation;
use crate::numeric::std_quantile;
use crate::terms::{linearize, Comp, Context, DistValue, Event, EvalError, Expr, IndependenceViolation, Step, UpdateBody};
use crate::value::{Num, Value};

mod compiled;
use compiled::Program;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("improper distribution for `{var}`: total mass {mass} (sampling requires mass 1)")]
    ImproperDistribution { var: String, mass: f64 },
    #[error("evaluation error: {0}")]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Independence(#[from] IndependenceViolation),
    #[error("invalid sampling configuration: {0}")]
    InvalidConfig(String),
    #[error("scope result `{0}` is never assigned")]
    MissingResult(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n: u64,
    pub seed: u64,
    /// Confidence level of the reported interval.
    pub gamma: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl SampleConfig {
    pub fn new(n: u64, seed: u64) -> Self {
        SampleConfig {
            n,
            seed,
            gamma: 0.99,
            execution: Execution::Parallel,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn serial(mut self) -> Self {
        self.execution = Execution::Serial;
        self
    }

    fn validate(&self) -> Result<(), SampleError> {
        if self.n == 0 {
            return Err(SampleError::InvalidConfig("sample count must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SampleError::InvalidConfig(format!("confidence level {} not in (0,1)", self.gamma)));
        }
        Ok(())
    }
}

/// Hit-fraction estimate with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    pub half_width: f64,
    /// Centre of the Wilson interval (differs from `p_hat` for small `n`).
    pub center: f64,
    pub hits: u64,
    pub n: u64,
    pub seed: u64,
    pub gamma: f64,
}

impl Estimate {
    // the Wilson bounds are exactly 0 and 1 at the extremes; float rounding
    // would otherwise exclude them
    pub fn ci_low(&self) -> f64 {
        if self.hits == 0 {
            return 0.0;
        }
        (self.center - self.half_width).max(0.0)
    }

    pub fn ci_high(&self) -> f64 {
        if self.hits == self.n {
            return 1.0;
        }
        (self.center + self.half_width).min(1.0)
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low() <= p && p <= self.ci_high()
    }

    /// Whether two estimates agree within their combined interval widths.
    pub fn agrees_with(&self, other: &Estimate) -> bool {
        (self.p_hat - other.p_hat).abs() <= self.half_width + other.half_width
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "p_hat": self.p_hat,
            "half_width": self.half_width,
            "n": self.n,
            "seed": self.seed,
            "gamma": self.gamma,
            "hits": self.hits,
            "ci_low": self.ci_low(),
            "ci_high": self.ci_high(),
        })
    }
}

/// Wilson score interval: (centre, half-width).
pub fn wilson(hits: u64, n: u64, gamma: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z = std_quantile(1.0 - (1.0 - gamma) / 2.0);
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    (center, half)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub n: u64,
}

impl Moments {
    pub fn mean_within(&self, expected: f64, k: f64) -> bool {
        (self.mean - expected).abs() <= k * self.se_mean
    }

    pub fn variance_within(&self, expected: f64, k: f64) -> bool {
        (self.variance - expected).abs() <= k * self.se_variance
    }
}

/// A computation prepared for repeated sampling.
pub struct Sampler<'a> {
    comp: Comp,
    ctx: &'a Context,
}

impl<'a> Sampler<'a> {
    pub fn new(c: &Comp, ctx: &'a Context) -> Result<Self, SampleError> {
        let comp = if c.has_par() { linearize(c)? } else { c.clone() };
        Ok(Sampler { comp, ctx })
    }

    /// Draw one valuation.
    pub fn run(&self, rng: &mut impl RngCore) -> Result<Valuation, SampleError> {
        let mut val = Valuation::new();
        run_steps(&self.comp, &mut val, self.ctx, rng)?;
        Ok(val)
    }

}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_steps(c: &Comp, val: &mut Valuation, ctx: &Context, rng: &mut impl RngCore) -> Result<(), SampleError> {
    for step in &c.steps {
        let Step::Update(u) = step else {
            unreachable!("sampler linearizes parallel blocks")
        };
        let value = match &u.body {
            UpdateBody::Dist(d) => draw(d.eval(&*val, ctx)?, &u.target, rng)?,
            UpdateBody::Scope { comp, result } => {
                let mut inner = val.clone();
                run_steps(comp, &mut inner, ctx, rng)?;
                inner
                    .remove(result)
                    .ok_or_else(|| SampleError::MissingResult(result.clone()))?
            }
        };
        val.insert(u.target.clone(), value);
    }
    Ok(())
}

/// Uniform draw in the open interval (0, 1).
fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn draw(d: DistValue, var: &str, rng: &mut impl RngCore) -> Result<Value, SampleError> {
    match d {
        DistValue::Normal { mean, variance } => {
            Ok(Value::Num(Num::real(mean + variance.sqrt() * std_quantile(open_unit(rng)))))
        }
        DistValue::Finite(items) => {
            let total = Num::sum(items.iter().map(|(_, w)| w));
            let proper = match total.as_rational() {
                Some(_) => total.num_eq(&Num::one()),
                None => (total.to_f64() - 1.0).abs() <= crate::exact::MASS_TOLERANCE,
            };
            if !proper {
                return Err(SampleError::ImproperDistribution {
                    var: var.to_string(),
                    mass: total.to_f64(),
                });
            }
            if items.len() == 1 {
                return Ok(items.into_iter().next().expect("one item").0);
            }
            let u: f64 = rng.random::<f64>();
            let mut acc = 0.0;
            let last = items.len() - 1;
            for (i, (v, w)) in items.into_iter().enumerate() {
                acc += w.to_f64();
                if u < acc || i == last {
                    return Ok(v);
                }
            }
            unreachable!()
        }
    }
}

/// Draw one valuation by running every update in order.
pub fn sample_run(c: &Comp, ctx: &Context, rng: &mut impl RngCore) -> Result<Valuation, SampleError> {
    Sampler::new(c, ctx)?.run(rng)
}

/// Evaluate `per_sample` on every sample index, chunked and in index order.
/// `per_sample` gets the sample's own random stream and a scratch value.
fn map_samples<T: Send, S>(
    cfg: &SampleConfig,
    scratch: impl Fn() -> S + Sync,
    per_sample: impl Fn(&mut S, &mut ChaCha8Rng) -> Result<T, SampleError> + Sync,
) -> Result<Vec<Vec<T>>, SampleError> {
    cfg.validate()?;
    let chunks = cfg.n.div_ceil(CHUNK);
    let work = |chunk: u64| -> Result<Vec<T>, SampleError> {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(cfg.n);
        let mut s = scratch();
        (start..end)
            .map(|i| {
                let mut rng = rng_for(cfg.seed, i);
                per_sample(&mut s, &mut rng)
            })
            .collect()
    };
    let results: Vec<Result<Vec<T>, SampleError>> = match cfg.execution {
        Execution::Serial => (0..chunks).map(work).collect(),
        Execution::Parallel => (0..chunks).into_par_iter().map(work).collect(),
    };
    results.into_iter().collect()
}

/// Fraction of samples satisfying `e`, with a Wilson interval at `cfg.gamma`.
pub fn estimate_prob(c: &Comp, ctx: &Context, e: &Event, cfg: &SampleConfig) -> Result<Estimate, SampleError> {
    let sampler = Sampler::new(c, ctx)?;
    let chunks = match Program::compile(&sampler.comp, ctx, &e.predicate) {
        Some(prog) => map_samples(cfg, || prog.slots(), |s, rng| prog.sample_bool(s, rng))?,
        None => map_samples(cfg, || (), |_, rng| Ok(e.predicate.eval_bool(&sampler.run(rng)?, ctx)?))?,
    };
    let hits = chunks.iter().flatten().filter(|h| **h).count() as u64;
    let (center, half_width) = wilson(hits, cfg.n, cfg.gamma);
    Ok(Estimate {
        p_hat: hits as f64 / cfg.n as f64,
        half_width,
        center,
        hits,
        n: cfg.n,
        seed: cfg.seed,
        gamma: cfg.gamma,
    })
}

/// Sample mean and variance of a numeric expression, with standard errors.
pub fn estimate_moments(c: &Comp, ctx: &Context, target: &Expr, cfg: &SampleConfig) -> Result<Moments, SampleError> {
    let sampler = Sampler::new(c, ctx)?;
    let chunks = match Program::compile(&sampler.comp, ctx, target) {
        Some(prog) => map_samples(cfg, || prog.slots(), |s, rng| prog.sample_f64(s, rng))?,
        None => map_samples(cfg, || (), |_, rng| Ok(target.eval_num(&sampler.run(rng)?, ctx)?.to_f64()))?,
    };
    let xs: Vec<f64> = chunks.into_iter().flatten().collect();
    Ok(moments_of(&xs))
}

pub fn moments_of(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let len = xs.len() as u64;
    if len < 2 {
        return Moments {
            mean,
            variance: 0.0,
            se_mean: f64::INFINITY,
            se_variance: f64::INFINITY,
            n: len,
        };
    }
    let variance = m2 / (n - 1.0);
    let pop_var = m2 / n;
    let m4 = m4 / n;
    Moments {
        mean,
        variance,
        se_mean: (variance / n).sqrt(),
        se_variance: ((m4 - pop_var * pop_var).max(0.0) / n).sqrt(),
        n: len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::{Dist, Update};

    fn coin() -> Comp {
        Comp::unit(vec![("b".into(), Dist::uniform("bool"))])
    }

    fn b_true() -> Event {
        Event::new(Expr::eq(Expr::var("b"), Expr::bool(true)))
    }

    #[test]
    fn point_mass_always_same() {
        let c = Comp::seq(vec![Update::point("v", Expr::int(7))]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let val = sample_run(&c, &Context::default(), &mut rng).unwrap();
            assert_eq!(val["v"], Value::int(7));
        }
    }

    #[test]
    fn coin_draws_are_booleans() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [false; 2];
        for _ in 0..64 {
            let v = sample_run(&coin(), &Context::default(), &mut rng).unwrap();
            seen[v["b"].as_bool().unwrap() as usize] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn coin_estimate_covers_half() {
        let cfg = SampleConfig::new(100_000, 42);
        let est = estimate_prob(&coin(), &Context::default(), &b_true(), &cfg).unwrap();
        assert!(est.contains(0.5), "{est:?}");
        assert!(est.p_hat >= 0.0 && est.p_hat <= 1.0 && est.half_width >= 0.0);
    }

    #[test]
    fn serial_and_parallel_are_identical() {
        let c = Comp::seq(vec![
            Update::dist("x", Dist::normal(Expr::int(1), Expr::int(4))),
            Update::dist("b", Dist::uniform("bool")),
        ]);
        let ctx = Context::default();
        let cfg = SampleConfig::new(20_000, 9);
        let par = estimate_moments(&c, &ctx, &Expr::var("x"), &cfg).unwrap();
        let ser = estimate_moments(&c, &ctx, &Expr::var("x"), &cfg.serial()).unwrap();
        assert_eq!(par.mean.to_bits(), ser.mean.to_bits());
        assert_eq!(par.variance.to_bits(), ser.variance.to_bits());
        let e1 = estimate_prob(&c, &ctx, &b_true(), &cfg).unwrap();
        let e2 = estimate_prob(&c, &ctx, &b_true(), &cfg).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn quadrupling_n_halves_half_width() {
        let ctx = Context::default();
        let h1 = estimate_prob(&coin(), &ctx, &b_true(), &SampleConfig::new(10_000, 3)).unwrap().half_width;
        let h4 = estimate_prob(&coin(), &ctx, &b_true(), &SampleConfig::new(40_000, 3)).unwrap().half_width;
        assert!(h4 <= 0.5 * h1 * 1.1, "h1={h1} h4={h4}");
    }

    #[test]
    fn improper_tables_are_rejected() {
        let c = Comp::seq(vec![Update::dist(
            "x",
            Dist::table(vec![(Value::int(0), Num::ratio(6, 10)), (Value::int(1), Num::ratio(3, 10))]),
        )]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_run(&c, &Context::default(), &mut rng),
            Err(SampleError::ImproperDistribution { .. })
        ));
    }

    #[test]
    fn point_mass_moments() {
        let c = Comp::seq(vec![Update::point("v", Expr::int(3))]);
        let m = estimate_moments(&c, &Context::default(), &Expr::var("v"), &SampleConfig::new(1000, 1)).unwrap();
        assert_eq!(m.mean, 3.0);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn normal_sum_moments() {
        let c = Comp::seq(vec![
            Update::dist("x1", Dist::normal(Expr::int(1), Expr::int(4))),
            Update::dist("x2", Dist::normal(Expr::int(2), Expr::int(9))),
        ]);
        let target = Expr::add(Expr::var("x1"), Expr::var("x2"));
        let m = estimate_moments(&c, &Context::default(), &target, &SampleConfig::new(200_000, 11)).unwrap();
        assert!(m.mean_within(3.0, 4.0), "{m:?}");
        assert!(m.variance_within(13.0, 4.0), "{m:?}");
    }

    #[test]
    fn bad_config() {
        let e = estimate_prob(&coin(), &Context::default(), &b_true(), &SampleConfig::new(0, 1));
        assert!(matches!(e, Err(SampleError::InvalidConfig(_))));
        let e = estimate_prob(&coin(), &Context::default(), &b_true(), &SampleConfig::new(10, 1).with_gamma(1.0));
        assert!(matches!(e, Err(SampleError::InvalidConfig(_))));
    }

    #[test]
    fn wilson_known_value() {
        // hits=0, n=10, gamma=0.95: upper = z^2/(n+z^2) with z=1.959964
        let (c, h) = wilson(0, 10, 0.95);
        let z2 = 1.959_963_984_540_054f64.powi(2);
        assert!((c + h - z2 / (10.0 + z2)).abs() < 1e-12);
        assert!((c - h).abs() < 1e-12);
    }
}
