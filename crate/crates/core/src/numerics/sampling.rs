//! Truncated normal sampling by inversion.
//!
//! One uniform draw per sample, regardless of how narrow or remote the
//! interval is, so seeded streams stay aligned across configurations.

use std::f64::consts::SQRT_2;

use statrs::function::erf::{erfc, erfc_inv};

use super::Rng;
use crate::error::{Error, Result};

/// Standard normal lower-tail probability.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper-tail probability.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn normal_ppf(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

fn normal_isf(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Inverse CDF of the standard normal truncated to `[a, b]`, evaluated at `u`.
///
/// Works in whichever tail keeps the probabilities away from 1 so that narrow
/// intervals far from the mean keep full precision. When even that underflows
/// the truncated density is replaced by its exponential limit at the near
/// endpoint.
fn standard_truncated_ppf(a: f64, b: f64, u: f64) -> f64 {
    if a >= 0.0 {
        let (qa, qb) = (normal_sf(a), normal_sf(b));
        if qa - qb > f64::MIN_POSITIVE && qa > 1e-300 {
            return normal_isf(qa - u * (qa - qb)).clamp(a, b);
        }
        exponential_tail(a, b, u)
    } else if b <= 0.0 {
        -standard_truncated_ppf(-b, -a, 1.0 - u)
    } else {
        let (pa, pb) = (normal_cdf(a), normal_cdf(b));
        normal_ppf(pa + u * (pb - pa)).clamp(a, b)
    }
}

fn exponential_tail(a: f64, b: f64, u: f64) -> f64 {
    // Density proportional to exp(-a (x - a)) on [a, b] for large a.
    let rate = a.max(1e-12);
    let span = b - a;
    let mass = -(-rate * span).exp_m1();
    (a - (-u * mass).ln_1p() / rate).clamp(a, b)
}

/// Draws from Normal(`mu`, `sigma`) restricted to `[lo, hi]`.
pub fn truncated_normal(mu: f64, sigma: f64, lo: f64, hi: f64, rng: &mut Rng) -> Result<f64> {
    // Validate before drawing, then always consume exactly one uniform.
    truncated_normal_quantile(mu, sigma, lo, hi, 0.5)?;
    let u = rng.uniform_open();
    truncated_normal_quantile(mu, sigma, lo, hi, u)
}

/// Quantile function of Normal(`mu`, `sigma`) restricted to `[lo, hi]`.
pub fn truncated_normal_quantile(mu: f64, sigma: f64, lo: f64, hi: f64, u: f64) -> Result<f64> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidRange { lo, hi });
    }
    if !(sigma >= 0.0) || !mu.is_finite() {
        return Err(Error::Config(format!(
            "truncated normal needs finite mu and sigma >= 0 (mu={mu}, sigma={sigma})"
        )));
    }
    if lo == hi {
        return Ok(lo);
    }
    if sigma == 0.0 {
        return if (lo..=hi).contains(&mu) {
            Ok(mu)
        } else {
            Err(Error::Config(format!(
                "sigma = 0 with mu={mu} outside [{lo}, {hi}]"
            )))
        };
    }
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let z = standard_truncated_ppf(a, b, u.clamp(0.0, 1.0));
    Ok((mu + sigma * z).clamp(lo, hi))
}
