//! Domain types shared by every procedure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value substituted for a p-value of exactly zero.
pub const ZERO_PVALUE_FLOOR: f64 = f64::MIN_POSITIVE;

/// A vector of p-values in `(0, 1]`, with `+inf` marking hypotheses that are
/// accepted without being tested.
#[derive(Debug, Clone, PartialEq)]
pub struct PValues {
    values: Vec<f64>,
    clamped: Vec<usize>,
}

impl PValues {
    /// Validates the values. Exact zeros are replaced by [`ZERO_PVALUE_FLOOR`]
    /// and their positions recorded in [`PValues::clamped`].
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut clamped = Vec::new();
        for (index, p) in values.iter_mut().enumerate() {
            if *p == f64::INFINITY {
                continue;
            }
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidPValue { index, value: *p });
            }
            if *p == 0.0 {
                *p = ZERO_PVALUE_FLOOR;
                clamped.push(index);
            }
        }
        Ok(Self { values, clamped })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices whose input value was 0 and got clamped.
    pub fn clamped(&self) -> &[usize] {
        &self.clamped
    }

    pub fn finite_count(&self) -> usize {
        self.values.iter().filter(|p| p.is_finite()).count()
    }

    /// The p-values of one group, in the group's index order.
    pub fn group_values(&self, partition: &GroupPartition, group: usize) -> Vec<f64> {
        partition.group(group).iter().map(|&i| self.values[i]).collect()
    }
}

/// A flat partition of `{0, .., m-1}` into `l` non-empty disjoint groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

/// Checks that `groups` is a disjoint exact cover of `{0, .., m-1}` with
/// non-empty groups.
pub fn validate_partition(groups: &[Vec<usize>], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    for (group, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyGroup { group });
        }
        for &index in members {
            if index >= m {
                return Err(Error::IndexOutOfRange { index, group, m });
            }
            if std::mem::replace(&mut seen[index], true) {
                return Err(Error::Overlap { index, group });
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(index) => Err(Error::Gap { index }),
        None => Ok(()),
    }
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        validate_partition(&groups, m)?;
        let mut group_of = vec![0; m];
        for (j, members) in groups.iter().enumerate() {
            for &i in members {
                group_of[i] = j;
            }
        }
        Ok(Self { groups, group_of })
    }

    /// Builds a partition from per-hypothesis 0-based group labels. Every
    /// label in `0..l` must be used, where `l` is one past the largest label.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        let l = labels.iter().max().map_or(0, |&x| x + 1);
        let mut groups = vec![Vec::new(); l];
        for (i, &g) in labels.iter().enumerate() {
            groups[g].push(i);
        }
        Self::new(groups, labels.len())
    }

    /// `l` consecutive blocks of equal size.
    pub fn contiguous(m: usize, l: usize) -> Result<Self> {
        if l == 0 || m == 0 || !m.is_multiple_of(l) {
            return Err(Error::Config(format!("m = {m} is not divisible into {l} equal groups")));
        }
        let size = m / l;
        let groups = (0..l).map(|j| (j * size..(j + 1) * size).collect()).collect();
        Self::new(groups, m)
    }

    pub fn m(&self) -> usize {
        self.group_of.len()
    }

    pub fn l(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Number of hypotheses in the selected groups (`m_S`).
    pub fn selected_size(&self, selection: &GroupSelection) -> usize {
        selection.iter().map(|j| self.groups[j].len()).sum()
    }
}

/// Ground-truth labels, known only in simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthAssignment {
    is_true_null: Vec<bool>,
}

impl TruthAssignment {
    pub fn new(is_true_null: Vec<bool>) -> Self {
        Self { is_true_null }
    }

    pub fn is_true_null(&self, i: usize) -> bool {
        self.is_true_null[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.is_true_null
    }

    pub fn m(&self) -> usize {
        self.is_true_null.len()
    }

    pub fn m0(&self) -> usize {
        self.is_true_null.iter().filter(|&&b| b).count()
    }

    pub fn pi0(&self) -> f64 {
        self.m0() as f64 / self.m() as f64
    }

    /// Number of true nulls in each group.
    pub fn null_counts(&self, partition: &GroupPartition) -> Vec<usize> {
        partition
            .groups()
            .iter()
            .map(|g| g.iter().filter(|&&i| self.is_true_null[i]).count())
            .collect()
    }
}

/// Per-group true-null proportions, stored as exact counts so that the
/// proportion identities hold without rounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTruthSummary {
    null_counts: Vec<usize>,
    sizes: Vec<usize>,
}

impl GroupTruthSummary {
    pub fn from_counts(null_counts: Vec<usize>, sizes: Vec<usize>) -> Result<Self> {
        if null_counts.len() != sizes.len() {
            return Err(Error::LengthMismatch { expected: sizes.len(), found: null_counts.len() });
        }
        if sizes.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (group, (&a, &n)) in null_counts.iter().zip(&sizes).enumerate() {
            if n == 0 {
                return Err(Error::EmptyGroup { group });
            }
            if a > n {
                return Err(Error::Domain(format!(
                    "group {} has {a} true nulls but only {n} hypotheses",
                    group + 1
                )));
            }
        }
        Ok(Self { null_counts, sizes })
    }

    pub fn from_truth(truth: &TruthAssignment, partition: &GroupPartition) -> Result<Self> {
        if truth.m() != partition.m() {
            return Err(Error::LengthMismatch { expected: partition.m(), found: truth.m() });
        }
        Self::from_counts(truth.null_counts(partition), partition.sizes())
    }

    /// Converts proportions to counts; each `pi_j0 * n_j` must be an integer
    /// up to 1e-9.
    pub fn from_proportions(pi_j0: &[f64], sizes: &[usize]) -> Result<Self> {
        let counts = pi_j0
            .iter()
            .zip(sizes)
            .enumerate()
            .map(|(j, (&p, &n))| {
                let exact = p * n as f64;
                let rounded = exact.round();
                if !(0.0..=1.0).contains(&p) || (exact - rounded).abs() > 1e-9 {
                    Err(Error::Domain(format!(
                        "proportion {p} for group {} is not a multiple of 1/{n}",
                        j + 1
                    )))
                } else {
                    Ok(rounded as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(counts, sizes.to_vec())
    }

    pub fn l(&self) -> usize {
        self.sizes.len()
    }

    pub fn m(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn m0(&self) -> usize {
        self.null_counts.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn null_counts(&self) -> &[usize] {
        &self.null_counts
    }

    pub fn pi_j0(&self, j: usize) -> f64 {
        self.null_counts[j] as f64 / self.sizes[j] as f64
    }

    pub fn pi_j1(&self, j: usize) -> f64 {
        1.0 - self.pi_j0(j)
    }

    pub fn pi0(&self) -> f64 {
        self.m0() as f64 / self.m() as f64
    }

    /// `(true nulls, hypotheses)` summed over the selected groups.
    pub fn selected_counts(&self, selection: &GroupSelection) -> (usize, usize) {
        selection
            .iter()
            .fold((0, 0), |(a, n), j| (a + self.null_counts[j], n + self.sizes[j]))
    }

    /// Groups containing at least one false null.
    pub fn interesting_groups(&self) -> GroupSelection {
        let selected = (0..self.l()).filter(|&j| self.null_counts[j] < self.sizes[j]).collect();
        GroupSelection { selected }
    }

    /// True when every group outside `selection` is fully null and every
    /// group inside has at least one false null.
    pub fn is_sparse_for(&self, selection: &GroupSelection) -> bool {
        (0..self.l()).all(|j| (self.null_counts[j] < self.sizes[j]) == selection.contains(j))
    }
}

/// The true-null proportion among the selected groups.
pub fn tilde_pi0(summary: &GroupTruthSummary, selection: &GroupSelection) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let (a, n) = summary.selected_counts(selection);
    Ok(a as f64 / n as f64)
}

/// Size-weighted average of per-group proportions over the selected groups.
pub fn pooled_proportion(
    pi_j0: &[f64],
    sizes: &[usize],
    selection: &GroupSelection,
) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let (num, den) = selection
        .iter()
        .fold((0.0, 0usize), |(num, den), j| (num + pi_j0[j] * sizes[j] as f64, den + sizes[j]));
    Ok(num / den as f64)
}

/// A set of group indices, kept sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupSelection {
    selected: Vec<usize>,
}

impl GroupSelection {
    pub fn new(mut indices: Vec<usize>, l: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&group) = indices.iter().find(|&&j| j >= l) {
            return Err(Error::GroupOutOfRange { group, l });
        }
        Ok(Self { selected: indices })
    }

    pub fn all(l: usize) -> Self {
        Self { selected: (0..l).collect() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.selected.binary_search(&j).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.selected
    }

    /// The complement within `0..l`.
    pub fn complement(&self, l: usize) -> Self {
        Self { selected: (0..l).filter(|&j| !self.contains(j)).collect() }
    }
}

/// Per-group weights in `[0, +inf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((group, &value)) =
            weights.iter().enumerate().find(|(_, w)| w.is_nan() || **w < 0.0)
        {
            return Err(Error::InvalidWeight { group, value });
        }
        Ok(Self(weights))
    }

    pub fn uniform(l: usize, value: f64) -> Self {
        Self(vec![value; l])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}

/// Output of a step-up pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSet {
    /// Rejected hypothesis indices, ascending.
    pub rejected: Vec<usize>,
    /// Number of rejections.
    pub theta: usize,
    /// The (weighted) p-values the step-up was run on.
    pub weighted: Vec<f64>,
}

impl RejectionSet {
    pub fn none(weighted: Vec<f64>) -> Self {
        Self { rejected: Vec::new(), theta: 0, weighted }
    }

    pub fn is_rejected(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }

    /// Rejected true nulls (`V`).
    pub fn false_discoveries(&self, truth: &TruthAssignment) -> usize {
        self.rejected.iter().filter(|&&i| truth.is_true_null(i)).count()
    }

    /// Rejected false nulls.
    pub fn true_discoveries(&self, truth: &TruthAssignment) -> usize {
        self.rejected.len() - self.false_discoveries(truth)
    }
}

/// False and true discovery proportions of a rejection set.
pub fn fdp_tdp(rejections: &RejectionSet, truth: &TruthAssignment) -> (f64, f64) {
    let v = rejections.false_discoveries(truth);
    let s = rejections.rejected.len() - v;
    let m1 = truth.m() - truth.m0();
    let fdp = v as f64 / rejections.rejected.len().max(1) as f64;
    let tdp = if m1 == 0 { 0.0 } else { s as f64 / m1 as f64 };
    (fdp, tdp)
}
