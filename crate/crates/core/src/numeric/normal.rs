use serde::{Deserialize, Serialize};

use super::NumericError;

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Mean and variance of a normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub variance: f64,
}

impl NormalParams {
    pub fn new(mean: f64, variance: f64) -> Result<Self, NumericError> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(NumericError::InvalidVariance(variance));
        }
        Ok(NormalParams { mean, variance })
    }

    pub fn standard() -> Self {
        NormalParams {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    fn validate(&self) -> Result<(), NumericError> {
        NormalParams::new(self.mean, self.variance).map(|_| ())
    }
}

/// Standard normal density at `z`.
pub fn std_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF, via the complementary error function.
pub fn std_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64, p: &NormalParams) -> Result<f64, NumericError> {
    p.validate()?;
    let sd = p.sd();
    Ok(std_pdf((x - p.mean) / sd) / sd)
}

pub fn normal_cdf(x: f64, p: &NormalParams) -> Result<f64, NumericError> {
    p.validate()?;
    Ok(std_cdf((x - p.mean) / p.sd()))
}

/// Standard normal quantile for `u` in (0, 1).
///
/// Rational approximation (Acklam) refined by one Halley step against
/// [`std_cdf`], giving close to full double precision.
pub fn std_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;
    let x = if u < LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement; the upper tail is refined through the lower one to
    // avoid cancellation in `std_cdf(x) - u`.
    let (x, flip) = if x > 0.0 { (-x, true) } else { (x, false) };
    let target = if flip { 1.0 - u } else { u };
    let e = std_cdf(x) - target;
    let d = e / std_pdf(x);
    let refined = x - d / (1.0 + 0.5 * x * d);
    if flip {
        -refined
    } else {
        refined
    }
}

pub fn normal_quantile(u: f64, p: &NormalParams) -> Result<f64, NumericError> {
    p.validate()?;
    Ok(p.mean + p.sd() * std_quantile(u))
}
