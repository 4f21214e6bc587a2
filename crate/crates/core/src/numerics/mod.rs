//! Numerical kernels shared by the rest of the crate.

mod linalg;
mod rng;
mod sampling;
mod stats;

pub use linalg::{cosine_similarity, dot, weighted_ridge, RidgeFit};
pub use rng::Rng;
pub use sampling::{normal_cdf, normal_sf, truncated_normal, truncated_normal_quantile};
pub use stats::{
    minmax_normalize, paired_t_test, regularized_incomplete_beta, student_t_cdf,
    two_sample_t_test, TTestKind, TTestResult,
};
