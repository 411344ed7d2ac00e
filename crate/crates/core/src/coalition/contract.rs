//! Shortfall probability and the largest contract meeting a reliability bound.

use std::f64::consts::SQRT_2;

use super::special::{erfc, erfc_inv};
use crate::error::{Error, Result};

/// `Pr[P <= contract]` for `P ~ N(mu, sigma^2)`.
///
/// With `sigma = 0` the production is deterministic: 0 below the mean,
/// 1 above it and 1/2 exactly at it.
pub fn shortfall_probability(mu: f64, sigma: f64, contract: f64) -> f64 {
    if sigma == 0.0 {
        return match contract.partial_cmp(&mu) {
            Some(std::cmp::Ordering::Less) => 0.0,
            Some(std::cmp::Ordering::Greater) => 1.0,
            _ => 0.5,
        };
    }
    0.5 * erfc((mu - contract) / (sigma * SQRT_2))
}

/// The contract whose shortfall probability is exactly `phi`:
/// `mu - sigma * sqrt(2) * erfinv(1 - 2 phi)`.
pub fn max_contract(mu: f64, sigma: f64, phi: f64) -> Result<f64> {
    if phi.is_nan() || phi <= 0.0 || phi >= 1.0 {
        return Err(Error::PhiBoundary(phi));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(mu);
    }
    // erfinv(1 - 2 phi) = erfcinv(2 phi), without rounding 1 - 2 phi
    Ok(mu - sigma * SQRT_2 * erfc_inv(2.0 * phi))
}

/// Index of the lower `phi`-quantile in a sorted sample of length `n`.
pub(crate) fn quantile_index(n: usize, phi: f64) -> usize {
    ((phi * (n - 1) as f64).floor() as usize).min(n - 1)
}

/// Lower empirical `phi`-quantile (no interpolation). `phi = 0` gives the
/// series minimum.
pub fn empirical_max_contract(series: &[f64], phi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!("phi must be in [0, 1], got {phi}")));
    }
    let needed = if phi > 0.0 { (1.0 / phi).ceil() as usize } else { 1 };
    if series.len() < needed.max(1) {
        return Err(Error::Length {
            needed: needed.max(1),
            actual: series.len(),
        });
    }
    let mut buf = series.to_vec();
    Ok(select_quantile(&mut buf, phi))
}

/// Quantile by partial selection; reorders `buf`.
pub(crate) fn select_quantile(buf: &mut [f64], phi: f64) -> f64 {
    let k = quantile_index(buf.len(), phi);
    *buf.select_nth_unstable_by(k, f64::total_cmp).1
}
