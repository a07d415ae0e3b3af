//! Piecewise-constant density envelopes for normal distributions.
//!
//! An upper envelope dominates the density pointwise, so its cumulative
//! over-approximates the true CDF at every point; a lower envelope is
//! dominated pointwise, so one minus its cumulative over-approximates the
//! upper tail. Outside the grid the upper envelope uses the Gaussian tail
//! density `f(v) * (1 + sd^2 / (v - mean)^2)`, whose tail integral is the
//! Mills-ratio bound `sd * pdf(v) / |v - mean|`; the lower envelope is zero
//! there.

use serde::{Deserialize, Serialize};

use super::normal::{std_pdf, NormalParams};
use super::NumericError;

/// Relative inflation (deflation) applied to upper (lower) piece heights so
/// that pointwise dominance survives rounding in the density evaluation.
const ROUNDING_MARGIN: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeRole {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailPolicy {
    /// No mass outside the grid.
    Zero,
    /// Gaussian tail bound for the given normal distribution.
    GaussianMills { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    pub breakpoints: Vec<f64>,
    pub densities: Vec<f64>,
    pub role: EnvelopeRole,
    pub tail: TailPolicy,
}

/// Uniform grid over `mean ± k·sd` split into `pieces` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: f64,
    pub pieces: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { k: 8.0, pieces: 320 }
    }
}

impl GridSpec {
    pub const MAX_PIECES: usize = 10_000_000;

    /// Grid with pieces of width `width` (in standard deviations).
    pub fn with_width(k: f64, width: f64) -> Result<GridSpec, NumericError> {
        if !(width > 0.0) || !width.is_finite() || !(k > 0.0) || !k.is_finite() {
            return Err(NumericError::BadGrid(format!("k={k}, width={width}")));
        }
        let pieces = (2.0 * k / width).round();
        if pieces < 1.0 || pieces > GridSpec::MAX_PIECES as f64 {
            return Err(NumericError::BadGrid(format!("{pieces} pieces")));
        }
        Ok(GridSpec {
            k,
            pieces: pieces as usize,
        })
    }

    fn validate(&self) -> Result<(), NumericError> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(NumericError::BadGrid(format!("half-width k={} must be positive", self.k)));
        }
        if self.pieces == 0 || self.pieces > GridSpec::MAX_PIECES {
            return Err(NumericError::BadGrid(format!("{} pieces", self.pieces)));
        }
        Ok(())
    }

    fn breakpoints(&self, p: &NormalParams) -> Vec<f64> {
        let sd = p.sd();
        let lo = p.mean - self.k * sd;
        let hi = p.mean + self.k * sd;
        let n = self.pieces;
        (0..=n)
            .map(|i| {
                if i == n {
                    hi
                } else {
                    lo + (hi - lo) * (i as f64) / (n as f64)
                }
            })
            .collect()
    }
}

/// Largest and smallest density value on `[a, b]` for a unimodal normal.
fn density_range(a: f64, b: f64, p: &NormalParams) -> (f64, f64) {
    let sd = p.sd();
    let f = |x: f64| std_pdf((x - p.mean) / sd) / sd;
    let max = if a <= p.mean && p.mean <= b {
        f(p.mean)
    } else if b < p.mean {
        f(b)
    } else {
        f(a)
    };
    let min = f(a).min(f(b));
    (max, min)
}

pub fn build_upper_envelope(p: &NormalParams, grid: GridSpec) -> Result<PiecewiseDensity, NumericError> {
    NormalParams::new(p.mean, p.variance)?;
    grid.validate()?;
    let breakpoints = grid.breakpoints(p);
    let densities = breakpoints
        .windows(2)
        .map(|w| density_range(w[0], w[1], p).0 * (1.0 + ROUNDING_MARGIN))
        .collect();
    Ok(PiecewiseDensity {
        breakpoints,
        densities,
        role: EnvelopeRole::Upper,
        tail: TailPolicy::GaussianMills {
            mean: p.mean,
            sd: p.sd(),
        },
    })
}

pub fn build_lower_envelope(p: &NormalParams, grid: GridSpec) -> Result<PiecewiseDensity, NumericError> {
    NormalParams::new(p.mean, p.variance)?;
    grid.validate()?;
    let breakpoints = grid.breakpoints(p);
    let densities = breakpoints
        .windows(2)
        .map(|w| density_range(w[0], w[1], p).1 * (1.0 - ROUNDING_MARGIN))
        .collect();
    Ok(PiecewiseDensity {
        breakpoints,
        densities,
        role: EnvelopeRole::Lower,
        tail: TailPolicy::Zero,
    })
}

/// Mass of a Mills tail beyond `x` (towards the nearer infinity).
fn mills_tail(x: f64, mean: f64, sd: f64) -> f64 {
    let t = ((x - mean) / sd).abs();
    if t == 0.0 {
        return f64::INFINITY;
    }
    std_pdf(t) / t
}

impl PiecewiseDensity {
    pub fn lower_edge(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper_edge(&self) -> f64 {
        *self.breakpoints.last().expect("non-empty grid")
    }

    fn left_tail_to(&self, a: f64) -> f64 {
        match self.tail {
            TailPolicy::Zero => 0.0,
            TailPolicy::GaussianMills { mean, sd } => mills_tail(a.min(self.lower_edge()), mean, sd),
        }
    }

    fn right_tail_between(&self, a: f64) -> f64 {
        match self.tail {
            TailPolicy::Zero => 0.0,
            TailPolicy::GaussianMills { mean, sd } => {
                let edge = self.upper_edge();
                if a <= edge {
                    0.0
                } else {
                    mills_tail(edge, mean, sd) - mills_tail(a, mean, sd)
                }
            }
        }
    }

    fn right_tail_total(&self) -> f64 {
        match self.tail {
            TailPolicy::Zero => 0.0,
            TailPolicy::GaussianMills { mean, sd } => mills_tail(self.upper_edge(), mean, sd),
        }
    }

    /// Total integral of the envelope.
    pub fn integral(&self) -> f64 {
        let body: f64 = self
            .breakpoints
            .windows(2)
            .zip(&self.densities)
            .map(|(w, d)| (w[1] - w[0]) * d)
            .sum();
        self.left_tail_to(self.lower_edge()) + body + self.right_tail_total()
    }

    /// Structural checks: increasing breakpoints, one density per piece,
    /// finite non-negative heights.
    pub fn validate(&self) -> Result<(), NumericError> {
        if self.breakpoints.len() < 2 || self.densities.len() + 1 != self.breakpoints.len() {
            return Err(NumericError::BadGrid("need k+1 breakpoints for k densities".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) || self.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(NumericError::BadGrid("breakpoints must be finite and strictly increasing".into()));
        }
        if self.densities.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(NumericError::BadGrid("densities must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Check analytically that this is an envelope of the given role for
    /// `N(p.mean, p.variance)`.
    pub fn certify(&self, p: &NormalParams, role: EnvelopeRole) -> Result<(), NumericError> {
        let fail = |why: String| Err(NumericError::EnvelopeNotCertified(why));
        if let Err(e) = self.validate() {
            return fail(e.to_string());
        }
        if self.role != role {
            return fail(format!("expected a {role:?} envelope, got {:?}", self.role));
        }
        for (i, (w, d)) in self.breakpoints.windows(2).zip(&self.densities).enumerate() {
            let (max, min) = density_range(w[0], w[1], p);
            let ok = match role {
                EnvelopeRole::Upper => *d >= max,
                EnvelopeRole::Lower => *d <= min,
            };
            if !ok {
                return fail(format!("piece {i} on [{}, {}] does not bound the density", w[0], w[1]));
            }
        }
        match (role, self.tail) {
            (EnvelopeRole::Lower, _) => {}
            (EnvelopeRole::Upper, TailPolicy::GaussianMills { mean, sd }) => {
                let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
                if !same(mean, p.mean) || !same(sd, p.sd()) {
                    return fail("tail bound is for a different normal distribution".into());
                }
                if !(self.lower_edge() < p.mean && p.mean < self.upper_edge()) {
                    return fail("grid must contain the mean for the tail bound".into());
                }
            }
            (EnvelopeRole::Upper, TailPolicy::Zero) => {
                return fail("upper envelope needs a tail bound".into());
            }
        }
        Ok(())
    }
}

/// Integral of the envelope over `(-inf, a]`.
pub fn cumulative(d: &PiecewiseDensity, a: f64) -> f64 {
    if a <= d.lower_edge() {
        return d.left_tail_to(a);
    }
    let mut acc = d.left_tail_to(d.lower_edge());
    for (w, h) in d.breakpoints.windows(2).zip(&d.densities) {
        if a <= w[0] {
            break;
        }
        acc += (a.min(w[1]) - w[0]) * h;
    }
    acc + d.right_tail_between(a)
}
