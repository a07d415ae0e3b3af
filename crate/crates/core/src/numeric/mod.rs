//! Normal-distribution kernels and certified density envelopes.

pub mod envelope;
pub mod normal;

pub use envelope::{
    build_lower_envelope, build_upper_envelope, cumulative, EnvelopeRole, GridSpec, PiecewiseDensity, TailPolicy,
};
pub use normal::{normal_cdf, normal_pdf, normal_quantile, std_cdf, std_pdf, std_quantile, NormalParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("variance must be positive and finite, got {0}")]
    InvalidVariance(f64),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("envelope not certified: {0}")]
    EnvelopeNotCertified(String),
}
