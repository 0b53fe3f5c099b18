//! Special functions and log-normal distribution fitting.

mod fit;
pub mod special;

pub use fit::{
    mle_fit, qq_diagnostics, sigma_ci, sigma_ci_factors, ConfidenceInterval, LogNormalFit,
    QqDiagnostics,
};
pub use special::{chi2_quantile, erf, erfc, ln_erfc, qnorm};
