//! Independent reference values computed only in test code.

/// Standard normal CDF by the Taylor series
/// `Phi(z) = 1/2 + phi(z) * sum_n z^(2n+1) / (1 * 3 * ... * (2n+1))`,
/// summed until the terms stop contributing. Negative arguments use
/// `Phi(z) = 1 - Phi(-z)` so the series never cancels.
pub fn phi_series(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - phi_series(-z);
    }
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (mut term, mut sum, mut n) = (z, z, 1.0);
    while term > sum * 1e-18 {
        term *= z * z / (2.0 * n + 1.0);
        sum += term;
        n += 1.0;
    }
    0.5 + pdf * sum
}
