//! Benjamini–Hochberg step-up on plain or group-weighted p-values.

use rayon::prelude::*;

use crate::error::{check_level, Error, Result};
use crate::types::{GroupPartition, PValues, RejectionSet, WeightVector};

const PARALLEL_SORT_MIN: usize = 100_000;

/// Step-up on arbitrary nonnegative values (weighted p-values may exceed 1).
///
/// Finite values are sorted ascending with the hypothesis index as secondary
/// key; `theta = max{k : v_(k) <= k * alpha / denom}` and every finite value
/// `<= v_(theta)` is rejected. Infinite entries are never rejected.
pub fn step_up(values: &[f64], alpha: f64, denom: usize) -> Result<RejectionSet> {
    check_level("alpha", alpha)?;
    let mut order: Vec<usize> = Vec::with_capacity(values.len());
    for (index, &v) in values.iter().enumerate() {
        if v.is_nan() || v < 0.0 {
            return Err(Error::InvalidPValue { index, value: v });
        }
        if v.is_finite() {
            order.push(index);
        }
    }
    if denom == 0 || denom < order.len() {
        return Err(Error::Denominator { denom, finite: order.len() });
    }
    // `order` is built in index order, so a stable sort on value alone keeps
    // the index as the secondary key.
    let by_value = |a: &usize, b: &usize| values[*a].total_cmp(&values[*b]);
    if order.len() >= PARALLEL_SORT_MIN {
        order.par_sort_by(by_value);
    } else {
        order.sort_by(by_value);
    }

    let denom = denom as f64;
    let theta = order
        .iter()
        .enumerate()
        .rev()
        .find(|(k, &i)| values[i] <= (*k + 1) as f64 * alpha / denom)
        .map_or(0, |(k, _)| k + 1);
    if theta == 0 {
        return Ok(RejectionSet::none(values.to_vec()));
    }
    let cutoff = values[order[theta - 1]];
    let mut rejected: Vec<usize> =
        order.iter().copied().take_while(|&i| values[i] <= cutoff).collect();
    rejected.sort_unstable();
    Ok(RejectionSet { theta: rejected.len(), rejected, weighted: values.to_vec() })
}

/// Plain BH with an explicit denominator.
pub fn bh_step_up(pvals: &PValues, alpha: f64, denom: usize) -> Result<RejectionSet> {
    step_up(pvals.as_slice(), alpha, denom)
}

/// Multiplies each p-value by its group's weight. A `+inf` p-value or weight
/// gives `+inf`.
pub fn weight_pvalues(
    pvals: &PValues,
    partition: &GroupPartition,
    weights: &WeightVector,
) -> Result<Vec<f64>> {
    if pvals.len() != partition.m() {
        return Err(Error::LengthMismatch { expected: partition.m(), found: pvals.len() });
    }
    if weights.len() != partition.l() {
        return Err(Error::LengthMismatch { expected: partition.l(), found: weights.len() });
    }
    pvals
        .as_slice()
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            let w = weights.get(partition.group_of(index));
            if p == f64::INFINITY || w == f64::INFINITY {
                if p == 0.0 {
                    return Err(Error::ZeroTimesInfinity { index });
                }
                Ok(f64::INFINITY)
            } else {
                Ok(p * w)
            }
        })
        .collect()
}

/// Step-up on `p_i * w_{group(i)}`.
pub fn weighted_step_up(
    pvals: &PValues,
    partition: &GroupPartition,
    weights: &WeightVector,
    alpha: f64,
    denom: usize,
) -> Result<RejectionSet> {
    let weighted = weight_pvalues(pvals, partition, weights)?;
    step_up(&weighted, alpha, denom)
}
