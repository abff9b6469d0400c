//! The sGBH/GBH procedure family.
//!
//! Every procedure reduces to a [`WeightPlan`]: per-group weights (with
//! `+inf` for groups that are never tested), the groups deemed interesting,
//! and the step-up denominator. The plan does not depend on the FDR level, so
//! a simulation can build it once per replication and apply it at several
//! levels.

use serde::{Deserialize, Serialize};

use crate::error::{check_level, Error, Result};
use crate::estimators::{estimate_groups, Estimator, ZScores, UNIT_PROPORTION_TOL};
use crate::selection::{Selector, TestOutcome};
use crate::stepup::{step_up, weight_pvalues};
use crate::types::{
    pooled_proportion, GroupPartition, GroupSelection, GroupTruthSummary, PValues, RejectionSet,
    WeightVector,
};

/// Everything a procedure produced, including the weights and estimates it
/// actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureReport {
    pub rejections: RejectionSet,
    pub weights: WeightVector,
    pub selection: GroupSelection,
    /// Per-group selection test outcomes, when a test was run.
    pub selection_tests: Vec<Option<TestOutcome>>,
    /// Per-group true-null proportions used for the weights (estimated or
    /// oracle), `None` for groups that were not estimated.
    pub group_estimates: Vec<Option<f64>>,
    /// Pooled proportion over the selection (`pi0_hat_S`, `pi0_hat` or the
    /// oracle `tilde_pi0`).
    pub pooled_estimate: Option<f64>,
    pub denom: usize,
}

/// Level-independent part of a procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPlan {
    pub weights: WeightVector,
    pub selection: GroupSelection,
    pub selection_tests: Vec<Option<TestOutcome>>,
    pub group_estimates: Vec<Option<f64>>,
    pub pooled_estimate: Option<f64>,
    pub denom: usize,
    /// False when the procedure makes no rejections regardless of level.
    pub active: bool,
}

impl WeightPlan {
    fn inactive(l: usize, selection: GroupSelection, denom: usize) -> Self {
        Self {
            weights: WeightVector::uniform(l, f64::INFINITY),
            selection_tests: vec![None; l],
            group_estimates: vec![None; l],
            selection,
            pooled_estimate: None,
            denom,
            active: false,
        }
    }

    pub fn apply(
        &self,
        pvals: &PValues,
        partition: &GroupPartition,
        alpha: f64,
    ) -> Result<ProcedureReport> {
        check_level("alpha", alpha)?;
        let weighted = weight_pvalues(pvals, partition, &self.weights)?;
        let rejections = if self.active {
            step_up(&weighted, alpha, self.denom)?
        } else {
            RejectionSet::none(weighted)
        };
        Ok(ProcedureReport {
            rejections,
            weights: self.weights.clone(),
            selection: self.selection.clone(),
            selection_tests: self.selection_tests.clone(),
            group_estimates: self.group_estimates.clone(),
            pooled_estimate: self.pooled_estimate,
            denom: self.denom,
        })
    }
}

fn check_summary(summary: &GroupTruthSummary, partition: &GroupPartition) -> Result<()> {
    if summary.sizes() != partition.sizes().as_slice() {
        return Err(Error::Config("truth summary does not match the partition".into()));
    }
    Ok(())
}

/// `pi_j0 (1 - pooled) / (1 - pi_j0)`, promoted to `+inf` when either
/// proportion is within [`UNIT_PROPORTION_TOL`] of 1.
pub fn plug_in_weight(pi_j0: f64, pooled: f64) -> f64 {
    if 1.0 - pi_j0 <= UNIT_PROPORTION_TOL || 1.0 - pooled <= UNIT_PROPORTION_TOL {
        f64::INFINITY
    } else {
        pi_j0 * (1.0 - pooled) / (1.0 - pi_j0)
    }
}

/// Oracle weight from counts: `a (M - A) / ((n - a) M)`, where `a` of the `n`
/// hypotheses in the group are true nulls and `A` of the `M` selected ones.
fn oracle_weight(a: usize, n: usize, selected_nulls: usize, selected: usize) -> f64 {
    if a == n || selected_nulls == selected {
        return f64::INFINITY;
    }
    let num = a as u128 * (selected - selected_nulls) as u128;
    let den = (n - a) as u128 * selected as u128;
    num as f64 / den as f64
}

/// Oracle weights over `selection`, `+inf` elsewhere.
pub fn oracle_plan(summary: &GroupTruthSummary, selection: &GroupSelection) -> WeightPlan {
    let l = summary.l();
    let (a_s, m_s) = summary.selected_counts(selection);
    if selection.is_empty() || a_s == m_s {
        let mut plan = WeightPlan::inactive(l, selection.clone(), m_s);
        if !selection.is_empty() {
            plan.pooled_estimate = Some(1.0);
        }
        return plan;
    }
    let weights = (0..l)
        .map(|j| {
            if selection.contains(j) {
                oracle_weight(summary.null_counts()[j], summary.sizes()[j], a_s, m_s)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    WeightPlan {
        weights: WeightVector::new(weights).expect("oracle weights are nonnegative"),
        selection: selection.clone(),
        selection_tests: vec![None; l],
        group_estimates: (0..l)
            .map(|j| selection.contains(j).then(|| summary.pi_j0(j)))
            .collect(),
        pooled_estimate: Some(a_s as f64 / m_s as f64),
        denom: m_s,
        active: true,
    }
}

/// Oracle sGBH: hypotheses outside `selection` are accepted, the rest are
/// weighted by the oracle weights and stepped up with denominator `m_S`.
pub fn oracle_sgbh(
    pvals: &PValues,
    partition: &GroupPartition,
    selection: &GroupSelection,
    summary: &GroupTruthSummary,
    alpha: f64,
) -> Result<ProcedureReport> {
    check_summary(summary, partition)?;
    oracle_plan(summary, selection).apply(pvals, partition, alpha)
}

/// Oracle GBH: the oracle sGBH with every group selected.
pub fn oracle_gbh(
    pvals: &PValues,
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    alpha: f64,
) -> Result<ProcedureReport> {
    oracle_sgbh(pvals, partition, &GroupSelection::all(partition.l()), summary, alpha)
}

/// Quasi-adaptive sGBH: groups are selected from the data but the true
/// proportions are kept.
pub fn quasi_adaptive_sgbh(
    pvals: &PValues,
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    selector: &Selector,
    alpha: f64,
) -> Result<ProcedureReport> {
    quasi_adaptive_plan(pvals, partition, summary, selector)?.apply(pvals, partition, alpha)
}

pub fn quasi_adaptive_plan(
    pvals: &PValues,
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    selector: &Selector,
) -> Result<WeightPlan> {
    check_summary(summary, partition)?;
    let report = selector.select(pvals, partition)?;
    let mut plan = oracle_plan(summary, &report.selection);
    plan.selection_tests = report.tests;
    Ok(plan)
}

/// Plug-in weights from estimated groupwise proportions on the selected
/// groups.
pub fn plugin_plan(
    pvals: &PValues,
    zscores: Option<&ZScores>,
    partition: &GroupPartition,
    selector: &Selector,
    estimator: &Estimator,
) -> Result<WeightPlan> {
    if pvals.len() != partition.m() {
        return Err(Error::LengthMismatch { expected: partition.m(), found: pvals.len() });
    }
    if let Some(z) = zscores {
        if z.len() != partition.m() {
            return Err(Error::LengthMismatch { expected: partition.m(), found: z.len() });
        }
    }
    let l = partition.l();
    let report = selector.select(pvals, partition)?;
    let selection = report.selection;
    let denom = partition.selected_size(&selection);
    if selection.is_empty() {
        let mut plan = WeightPlan::inactive(l, selection, denom);
        plan.selection_tests = report.tests;
        return Ok(plan);
    }
    let mut group_estimates = vec![None; l];
    let mut dense = vec![0.0; l];
    for (j, est) in estimate_groups(estimator, pvals, zscores, partition, selection.iter())? {
        group_estimates[j] = Some(est);
        dense[j] = est;
    }
    let pooled = pooled_proportion(&dense, &partition.sizes(), &selection)?;
    let active = 1.0 - pooled > UNIT_PROPORTION_TOL;
    let weights = (0..l)
        .map(|j| {
            if active && selection.contains(j) {
                plug_in_weight(dense[j], pooled)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(WeightPlan {
        weights: WeightVector::new(weights)?,
        selection,
        selection_tests: report.tests,
        group_estimates,
        pooled_estimate: Some(pooled),
        denom,
        active,
    })
}

/// Plug-in adaptive sGBH.
pub fn plugin_adaptive_sgbh(
    pvals: &PValues,
    zscores: Option<&ZScores>,
    partition: &GroupPartition,
    selector: &Selector,
    estimator: &Estimator,
    alpha: f64,
) -> Result<ProcedureReport> {
    plugin_plan(pvals, zscores, partition, selector, estimator)?.apply(pvals, partition, alpha)
}

/// Plug-in adaptive GBH: every group estimated and weighted, denominator `m`.
pub fn plugin_adaptive_gbh(
    pvals: &PValues,
    zscores: Option<&ZScores>,
    partition: &GroupPartition,
    estimator: &Estimator,
    alpha: f64,
) -> Result<ProcedureReport> {
    plugin_adaptive_sgbh(pvals, zscores, partition, &Selector::All, estimator, alpha)
}

/// Which `m`, `l` and `R(lambda)` enter the generic weights of a selective
/// procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenericScope {
    /// `m_S`, `|S|` and `sum_{j in S} R_j(lambda)`.
    #[default]
    SelectionLocal,
    /// `m`, `l` and `R(lambda)` over all hypotheses.
    Global,
}

/// Generic weights
/// `(n_j - R_j + 1)(R + l - 1) / (m (1 - lambda) R_j)` for selected groups,
/// with `R_j(lambda) = #{i in G_j : p_i <= lambda}`; `+inf` when `R_j = 0`
/// and outside the selection.
pub fn generic_weights(
    pvals: &PValues,
    partition: &GroupPartition,
    selection: &GroupSelection,
    lambda: f64,
    scope: GenericScope,
) -> Result<WeightVector> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    if pvals.len() != partition.m() {
        return Err(Error::LengthMismatch { expected: partition.m(), found: pvals.len() });
    }
    let l = partition.l();
    let counts: Vec<usize> = (0..l)
        .map(|j| partition.group(j).iter().filter(|&&i| pvals.as_slice()[i] <= lambda).count())
        .collect();
    let (m, groups, r_total) = match scope {
        GenericScope::SelectionLocal => (
            partition.selected_size(selection),
            selection.len(),
            selection.iter().map(|j| counts[j]).sum::<usize>(),
        ),
        GenericScope::Global => (partition.m(), l, counts.iter().sum()),
    };
    let weights = (0..l)
        .map(|j| {
            let r_j = counts[j];
            if !selection.contains(j) || r_j == 0 {
                return f64::INFINITY;
            }
            let n_j = partition.group(j).len();
            ((n_j - r_j + 1) as f64 * (r_total + groups - 1) as f64)
                / (m as f64 * (1.0 - lambda) * r_j as f64)
        })
        .collect();
    WeightVector::new(weights)
}

pub fn generic_plan(
    pvals: &PValues,
    partition: &GroupPartition,
    selector: &Selector,
    lambda: f64,
    scope: GenericScope,
) -> Result<WeightPlan> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let l = partition.l();
    let report = selector.select(pvals, partition)?;
    let selection = report.selection;
    let denom = partition.selected_size(&selection);
    if selection.is_empty() {
        let mut plan = WeightPlan::inactive(l, selection, denom);
        plan.selection_tests = report.tests;
        return Ok(plan);
    }
    let weights = generic_weights(pvals, partition, &selection, lambda, scope)?;
    Ok(WeightPlan {
        weights,
        selection,
        selection_tests: report.tests,
        group_estimates: vec![None; l],
        pooled_estimate: None,
        denom,
        active: true,
    })
}

/// Generic adaptive sGBH.
pub fn generic_adaptive_sgbh(
    pvals: &PValues,
    partition: &GroupPartition,
    selector: &Selector,
    lambda: f64,
    scope: GenericScope,
    alpha: f64,
) -> Result<ProcedureReport> {
    generic_plan(pvals, partition, selector, lambda, scope)?.apply(pvals, partition, alpha)
}

/// Generic adaptive GBH: all groups, denominator `m`.
pub fn generic_adaptive_gbh(
    pvals: &PValues,
    partition: &GroupPartition,
    lambda: f64,
    alpha: f64,
) -> Result<ProcedureReport> {
    generic_adaptive_sgbh(pvals, partition, &Selector::All, lambda, GenericScope::Global, alpha)
}

/// Weights of the unit-weight variant: oracle weights on `selection` and 1
/// elsewhere, stepped up over all `m` hypotheses.
pub fn variant_plan(summary: &GroupTruthSummary, selection: &GroupSelection) -> WeightPlan {
    let l = summary.l();
    let (a_s, m_s) = summary.selected_counts(selection);
    let weights = (0..l)
        .map(|j| {
            if selection.contains(j) {
                oracle_weight(summary.null_counts()[j], summary.sizes()[j], a_s, m_s)
            } else {
                1.0
            }
        })
        .collect();
    WeightPlan {
        weights: WeightVector::new(weights).expect("variant weights are nonnegative"),
        selection: selection.clone(),
        selection_tests: vec![None; l],
        group_estimates: (0..l)
            .map(|j| selection.contains(j).then(|| summary.pi_j0(j)))
            .collect(),
        pooled_estimate: (m_s > 0).then(|| a_s as f64 / m_s as f64),
        denom: summary.m(),
        active: true,
    }
}

pub fn variant_sgbh(
    pvals: &PValues,
    partition: &GroupPartition,
    selection: &GroupSelection,
    summary: &GroupTruthSummary,
    alpha: f64,
) -> Result<ProcedureReport> {
    check_summary(summary, partition)?;
    variant_plan(summary, selection).apply(pvals, partition, alpha)
}

/// `rho0` (null proportion of the unselected groups) and
/// `varsigma = min_{j not in S} pi_j0 (1 - pi0) / (1 - pi_j0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantDominance {
    pub rho0: f64,
    pub varsigma: f64,
}

fn check_boundary(summary: &GroupTruthSummary, selection: &GroupSelection) -> Result<()> {
    if selection.is_empty() || selection.len() == summary.l() {
        Err(Error::SelectionBoundary)
    } else {
        Ok(())
    }
}

pub fn variant_dominance_quantities(
    summary: &GroupTruthSummary,
    selection: &GroupSelection,
) -> Result<VariantDominance> {
    check_boundary(summary, selection)?;
    let rest = selection.complement(summary.l());
    let (a_q, q) = summary.selected_counts(&rest);
    let (m, a) = (summary.m(), summary.m0());
    let varsigma = rest
        .iter()
        .map(|j| {
            let (a_j, n_j) = (summary.null_counts()[j], summary.sizes()[j]);
            if a_j == n_j {
                f64::INFINITY
            } else {
                (a_j as u128 * (m - a) as u128) as f64 / ((n_j - a_j) as u128 * m as u128) as f64
            }
        })
        .fold(f64::INFINITY, f64::min);
    Ok(VariantDominance { rho0: a_q as f64 / q as f64, varsigma })
}

/// Exact check of `varsigma >= 1 && tilde_pi0 >= rho0` in integer arithmetic.
pub fn variant_dominance_holds(
    summary: &GroupTruthSummary,
    selection: &GroupSelection,
) -> Result<bool> {
    check_boundary(summary, selection)?;
    let rest = selection.complement(summary.l());
    let (m, a) = (summary.m() as u128, summary.m0() as u128);
    let varsigma_ge_one = rest.iter().all(|j| {
        let (a_j, n_j) = (summary.null_counts()[j] as u128, summary.sizes()[j] as u128);
        a_j == n_j || a_j * (m - a) >= (n_j - a_j) * m
    });
    let (a_s, m_s) = summary.selected_counts(selection);
    let (a_q, q) = summary.selected_counts(&rest);
    let tilde_ge_rho = a_s as u128 * q as u128 >= a_q as u128 * m_s as u128;
    Ok(varsigma_ge_one && tilde_ge_rho)
}

/// Upper bound on the FDR of the plug-in adaptive sGBH:
/// `alpha / m_S / (1 - check_pi0) * sum_{j in S} n_j (1 - pi_j0)` plus the
/// two supplied slack probabilities.
pub fn fdr_bound_diagnostic(
    summary: &GroupTruthSummary,
    selection: &GroupSelection,
    alpha: f64,
    check_pi0: f64,
    prob_selection_wrong: f64,
    prob_pi_exceeds: f64,
) -> Result<f64> {
    check_level("alpha", alpha)?;
    if !(0.0..1.0).contains(&check_pi0) {
        return Err(Error::Domain(format!("check_pi0 must lie in [0, 1), got {check_pi0}")));
    }
    for p in [prob_selection_wrong, prob_pi_exceeds] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probabilities must lie in [0, 1], got {p}")));
        }
    }
    let (a_s, m_s) = summary.selected_counts(selection);
    if m_s == 0 {
        return Err(Error::Domain("the bound needs a non-empty selection".into()));
    }
    let false_nulls = (m_s - a_s) as f64;
    Ok(alpha / m_s as f64 / (1.0 - check_pi0) * false_nulls + prob_selection_wrong + prob_pi_exceeds)
}

/// Inputs shared by all procedures in one analysis or replication.
#[derive(Debug, Clone, Copy)]
pub struct ProcedureInput<'a> {
    pub pvals: &'a PValues,
    pub zscores: Option<&'a ZScores>,
    pub partition: &'a GroupPartition,
    /// Ground truth; required by the oracle, quasi-adaptive and variant
    /// procedures.
    pub truth: Option<&'a GroupTruthSummary>,
}

/// A procedure together with its tuning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "procedure", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcedureSpec {
    Bh,
    OracleGbh,
    OracleSgbh,
    VariantSgbh,
    QuasiAdaptiveSgbh {
        selector: Selector,
    },
    PluginSgbh {
        selector: Selector,
        estimator: Estimator,
    },
    PluginGbh {
        estimator: Estimator,
    },
    GenericSgbh {
        selector: Selector,
        lambda: f64,
        #[serde(default)]
        scope: GenericScope,
    },
    GenericGbh {
        lambda: f64,
    },
}

impl ProcedureSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProcedureSpec::Bh => "bh",
            ProcedureSpec::OracleGbh => "oracle_gbh",
            ProcedureSpec::OracleSgbh => "oracle_sgbh",
            ProcedureSpec::VariantSgbh => "variant_sgbh",
            ProcedureSpec::QuasiAdaptiveSgbh { .. } => "quasi_adaptive_sgbh",
            ProcedureSpec::PluginSgbh { .. } => "plugin_sgbh",
            ProcedureSpec::PluginGbh { .. } => "plugin_gbh",
            ProcedureSpec::GenericSgbh { .. } => "generic_sgbh",
            ProcedureSpec::GenericGbh { .. } => "generic_gbh",
        }
    }

    pub fn estimator(&self) -> Option<&Estimator> {
        match self {
            ProcedureSpec::PluginSgbh { estimator, .. } | ProcedureSpec::PluginGbh { estimator } => {
                Some(estimator)
            }
            _ => None,
        }
    }

    pub fn selector(&self) -> Option<&Selector> {
        match self {
            ProcedureSpec::QuasiAdaptiveSgbh { selector }
            | ProcedureSpec::PluginSgbh { selector, .. }
            | ProcedureSpec::GenericSgbh { selector, .. } => Some(selector),
            _ => None,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            ProcedureSpec::GenericSgbh { lambda, .. } | ProcedureSpec::GenericGbh { lambda } => {
                Some(*lambda)
            }
            _ => None,
        }
    }

    pub fn needs_truth(&self) -> bool {
        matches!(
            self,
            ProcedureSpec::OracleGbh
                | ProcedureSpec::OracleSgbh
                | ProcedureSpec::VariantSgbh
                | ProcedureSpec::QuasiAdaptiveSgbh { .. }
        )
    }

    /// Procedures that estimate the set of interesting groups from data.
    pub fn selects_from_data(&self) -> bool {
        matches!(self.selector(), Some(Selector::Test { .. }))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(Selector::Test { level, .. }) = self.selector() {
            check_level("selector level", *level)?;
        }
        if let Some(e) = self.estimator() {
            e.validate()?;
        }
        if let Some(lambda) = self.lambda() {
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(Error::InvalidLambda(lambda));
            }
        }
        Ok(())
    }

    pub fn plan(&self, input: &ProcedureInput<'_>) -> Result<WeightPlan> {
        let ProcedureInput { pvals, zscores, partition, truth } = *input;
        let truth = || {
            let t = truth.ok_or_else(|| {
                Error::Config(format!("procedure `{}` needs the true proportions", self.name()))
            })?;
            check_summary(t, partition)?;
            Ok::<_, Error>(t)
        };
        match self {
            ProcedureSpec::Bh => {
                let l = partition.l();
                Ok(WeightPlan {
                    weights: WeightVector::uniform(l, 1.0),
                    selection: GroupSelection::all(l),
                    selection_tests: vec![None; l],
                    group_estimates: vec![None; l],
                    pooled_estimate: None,
                    denom: partition.m(),
                    active: true,
                })
            }
            ProcedureSpec::OracleGbh => Ok(oracle_plan(truth()?, &GroupSelection::all(partition.l()))),
            ProcedureSpec::OracleSgbh => {
                let t = truth()?;
                Ok(oracle_plan(t, &t.interesting_groups()))
            }
            ProcedureSpec::VariantSgbh => {
                let t = truth()?;
                Ok(variant_plan(t, &t.interesting_groups()))
            }
            ProcedureSpec::QuasiAdaptiveSgbh { selector } => {
                quasi_adaptive_plan(pvals, partition, truth()?, selector)
            }
            ProcedureSpec::PluginSgbh { selector, estimator } => {
                plugin_plan(pvals, zscores, partition, selector, estimator)
            }
            ProcedureSpec::PluginGbh { estimator } => {
                plugin_plan(pvals, zscores, partition, &Selector::All, estimator)
            }
            ProcedureSpec::GenericSgbh { selector, lambda, scope } => {
                generic_plan(pvals, partition, selector, *lambda, *scope)
            }
            ProcedureSpec::GenericGbh { lambda } => {
                generic_plan(pvals, partition, &Selector::All, *lambda, GenericScope::Global)
            }
        }
    }

    pub fn run(&self, input: &ProcedureInput<'_>, alpha: f64) -> Result<ProcedureReport> {
        self.plan(input)?.apply(input.pvals, input.partition, alpha)
    }
}
