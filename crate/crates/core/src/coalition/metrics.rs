//! Structure-level metrics.

use super::{Coalition, CoalitionStructure};
use crate::error::{Error, Result};
use crate::timeseries::{CorrelationMatrix, SeriesSet};

/// Sum of coalition utilities.
pub fn social_welfare(cs: &CoalitionStructure) -> f64 {
    cs.coalitions.iter().map(|c| c.utility).sum()
}

/// Fraction of coalitions that may enter the market.
pub fn acceptance_percentage(cs: &CoalitionStructure) -> Result<f64> {
    if cs.coalitions.is_empty() {
        return Err(Error::InvalidArgument("structure has no coalitions".into()));
    }
    Ok(cs.valid_count() as f64 / cs.coalitions.len() as f64)
}

/// Fraction of held-out hours in which the coalition's aggregate falls
/// strictly below its contract.
pub fn empirical_reliability(c: &Coalition, held_out: &SeriesSet) -> Result<f64> {
    let contract = c
        .contract
        .ok_or_else(|| Error::InvalidArgument("coalition has no contract".into()))?;
    if held_out.is_empty() {
        return Err(Error::Length { needed: 1, actual: 0 });
    }
    let agg = crate::timeseries::aggregate(&c.members, held_out)?;
    let below = agg.values.iter().filter(|&&v| v < contract).count();
    Ok(below as f64 / agg.values.len() as f64)
}

/// Mean `rho^2` over all within-coalition pairs (0 when there are none).
/// Agents absent from `corr` are skipped.
pub fn mean_within_rho2(cs: &CoalitionStructure, corr: &CorrelationMatrix) -> f64 {
    let index = |id| corr.ids().binary_search(&id).ok();
    let (mut sum, mut count) = (0.0, 0usize);
    for c in &cs.coalitions {
        let idx: Vec<usize> = c.members.iter().filter_map(|&id| index(id)).collect();
        for (k, &a) in idx.iter().enumerate() {
            for &b in &idx[k + 1..] {
                let r = corr.get(a, b);
                sum += r * r;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
