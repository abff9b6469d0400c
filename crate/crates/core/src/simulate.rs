//! Seeded Monte Carlo harness: Gaussian z-scores with block AR(1) or identity
//! correlation, four equal groups with a single interesting group, and
//! FDR/power aggregation over replications.
//!
//! Random streams are derived by SplitMix64 mixing: master seed, then
//! replication index, then stage. Each stage seeds its own `ChaCha8Rng`, so a
//! replication's draws do not depend on which worker runs it.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_level, Error, Result};
use crate::estimators::{normal_sf, ZScores};
use crate::procedures::{
    fdr_bound_diagnostic, oracle_plan, ProcedureInput, ProcedureSpec, WeightPlan,
};
use crate::selection::Selector;
use crate::estimators::Estimator;
use crate::types::{
    fdp_tdp, GroupPartition, GroupSelection, GroupTruthSummary, PValues, TruthAssignment,
};

/// Large-study sample sizes, enabled by `GridConfig::full_grid`.
pub const FULL_GRID_M: [usize; 6] = [4000, 10_000, 20_000, 40_000, 80_000, 100_000];
/// Desk-scale default sample sizes.
pub const DESK_GRID_M: [usize; 2] = [4000, 10_000];

const STAGE_POSITIONS: u64 = 1;
const STAGE_MAGNITUDES: u64 = 2;
const STAGE_NOISE: u64 = 3;
const FIXED_POSITIONS_REP: u64 = u64::MAX;
/// Quantile of the pooled selected-group estimate used as the bound's
/// `check_pi0`.
const BOUND_QUANTILE: f64 = 0.9;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `stage` of replication `rep` under `master`.
pub fn stream_seed(master: u64, rep: u64, stage: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ rep) ^ stage)
}

fn stream(master: u64, rep: u64, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, rep, stage))
}

fn default_rhos() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4]
}

/// Correlation structure of the z-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Identity,
    /// Equal contiguous blocks, block `k` with correlation
    /// `block_rhos[k]^|i - j|`.
    ArBlocks {
        #[serde(default = "default_rhos")]
        block_rhos: Vec<f64>,
    },
}

impl SigmaSpec {
    pub fn autoregressive() -> Self {
        SigmaSpec::ArBlocks { block_rhos: default_rhos() }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SigmaSpec::Identity => "identity",
            SigmaSpec::ArBlocks { .. } => "ar_blocks",
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if let SigmaSpec::ArBlocks { block_rhos } = self {
            if block_rhos.is_empty() || !m.is_multiple_of(block_rhos.len()) {
                return Err(Error::Config(format!(
                    "{} AR blocks do not split m = {m} evenly",
                    block_rhos.len()
                )));
            }
            if let Some(r) = block_rhos.iter().find(|r| !(0.0..1.0).contains(*r)) {
                return Err(Error::Config(format!("block correlation {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    One,
    Two,
}

impl Sided {
    pub fn label(self) -> &'static str {
        match self {
            Sided::One => "one",
            Sided::Two => "two",
        }
    }
}

/// One simulated experiment: data settings shared by every level and
/// procedure in the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub alphas: Vec<f64>,
    pub m: usize,
    pub groups: usize,
    /// Null proportion of the single interesting group; the other groups are
    /// fully null.
    pub pi_tilde0: f64,
    pub sigma: SigmaSpec,
    pub sided: Sided,
    pub reps: usize,
    pub seed: u64,
    pub procedures: Vec<ProcedureSpec>,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Draw the nonzero-mean positions once and reuse them in every rep.
    pub fixed_positions: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("no FDR levels".into()));
        }
        for &a in &self.alphas {
            check_level("alpha", a)?;
        }
        if self.groups == 0 || self.m == 0 || !self.m.is_multiple_of(self.groups) {
            return Err(Error::Config(format!(
                "m = {} is not divisible into {} groups",
                self.m, self.groups
            )));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pi_tilde0) {
            return Err(Error::Config(format!("pi_tilde0 = {} outside [0, 1]", self.pi_tilde0)));
        }
        if !(self.mu_min >= 0.0 && self.mu_min <= self.mu_max && self.mu_max.is_finite()) {
            return Err(Error::Config(format!(
                "mean magnitudes [{}, {}] are not a valid interval",
                self.mu_min, self.mu_max
            )));
        }
        if self.procedures.is_empty() {
            return Err(Error::Config("empty procedure roster".into()));
        }
        for p in &self.procedures {
            p.validate()?;
        }
        self.sigma.validate(self.m)?;
        self.truth_summary().map(|_| ())
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        GroupPartition::contiguous(self.m, self.groups)
    }

    /// Exact per-group null counts: the first group has
    /// `n - round(n (1 - pi_tilde0))` nulls, the rest are fully null.
    pub fn truth_summary(&self) -> Result<GroupTruthSummary> {
        let n = self.m / self.groups;
        let false_nulls = (n as f64 * (1.0 - self.pi_tilde0)).round() as usize;
        let mut nulls = vec![n; self.groups];
        nulls[0] = n - false_nulls.min(n);
        GroupTruthSummary::from_counts(nulls, vec![n; self.groups])
    }

    pub fn interesting(&self) -> Result<GroupSelection> {
        Ok(self.truth_summary()?.interesting_groups())
    }
}

/// Picks `n_j - a_j` nonzero-mean positions uniformly without replacement in
/// every group.
pub fn draw_positions(
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    rng: &mut impl Rng,
) -> TruthAssignment {
    let mut is_null = vec![true; partition.m()];
    for j in 0..partition.l() {
        let group = partition.group(j);
        let k = summary.sizes()[j] - summary.null_counts()[j];
        for pos in sample(rng, group.len(), k) {
            is_null[group[pos]] = false;
        }
    }
    TruthAssignment::new(is_null)
}

/// Means for a fixed truth: `|mu| ~ U[mu_min, mu_max]` with a fair random
/// sign on false nulls, zero elsewhere.
pub fn draw_magnitudes(
    truth: &TruthAssignment,
    mu_min: f64,
    mu_max: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    truth
        .as_slice()
        .iter()
        .map(|&null| {
            if null {
                0.0
            } else {
                let mag = rng.random_range(mu_min..=mu_max);
                if rng.random_bool(0.5) {
                    -mag
                } else {
                    mag
                }
            }
        })
        .collect()
}

pub fn draw_means(
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    mu_min: f64,
    mu_max: f64,
    rng: &mut impl Rng,
) -> (Vec<f64>, TruthAssignment) {
    let truth = draw_positions(partition, summary, rng);
    (draw_magnitudes(&truth, mu_min, mu_max, rng), truth)
}

/// `z = mu + x` with `x` standard Gaussian under `sigma`. AR blocks use the
/// stationary recursion `x_t = rho x_{t-1} + sqrt(1 - rho^2) e_t`.
pub fn sample_gaussian(mu: &[f64], sigma: &SigmaSpec, rng: &mut impl Rng) -> Result<ZScores> {
    sigma.validate(mu.len())?;
    let mut z = Vec::with_capacity(mu.len());
    match sigma {
        SigmaSpec::Identity => {
            for &m in mu {
                let e: f64 = rng.sample(StandardNormal);
                z.push(m + e);
            }
        }
        SigmaSpec::ArBlocks { block_rhos } => {
            let block = mu.len() / block_rhos.len();
            for (k, &rho) in block_rhos.iter().enumerate() {
                let scale = (1.0 - rho * rho).sqrt();
                let mut x = 0.0;
                for (t, &m) in mu[k * block..(k + 1) * block].iter().enumerate() {
                    let e: f64 = rng.sample(StandardNormal);
                    x = if t == 0 { e } else { rho * x + scale * e };
                    z.push(m + x);
                }
            }
        }
    }
    ZScores::new(z)
}

/// Two-sided `erfc(|z| / sqrt 2)` or one-sided `1 - Phi(z)`.
pub fn z_to_p(z: &[f64], sided: Sided) -> Result<PValues> {
    let p = z
        .iter()
        .map(|&x| match sided {
            Sided::Two => libm::erfc(x.abs() / std::f64::consts::SQRT_2).min(1.0),
            Sided::One => normal_sf(x),
        })
        .collect();
    PValues::new(p)
}

/// Aggregated metrics of one procedure at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub m: usize,
    pub sigma: String,
    pub sided: String,
    pub pi_tilde0: f64,
    pub alpha: f64,
    pub procedure: String,
    pub estimator: Option<String>,
    pub selector: Option<String>,
    pub lambda: Option<f64>,
    pub level: Option<f64>,
    pub fdr: f64,
    pub sd_fdp: f64,
    pub power: f64,
    pub sd_tdp: f64,
    pub sel_correct_rate: Option<f64>,
    #[serde(rename = "mean_pi0_hat_S")]
    pub mean_pi0_hat_s: Option<f64>,
    pub mean_pi0_hat: Option<f64>,
    pub fdr_bound: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    /// Fraction of reps whose selection contains every interesting group.
    #[serde(skip)]
    pub sel_contains_rate: Option<f64>,
}

impl MetricRow {
    /// Monte Carlo standard error of `fdr`.
    pub fn se_fdr(&self) -> f64 {
        self.sd_fdp / (self.reps as f64).sqrt()
    }

    /// Monte Carlo standard error of `power`.
    pub fn se_power(&self) -> f64 {
        self.sd_tdp / (self.reps as f64).sqrt()
    }
}

pub const CSV_HEADER: &str = "m,sigma,sided,pi_tilde0,alpha,procedure,estimator,selector,lambda,level,fdr,sd_fdp,power,sd_tdp,sel_correct_rate,mean_pi0_hat_S,mean_pi0_hat,fdr_bound,reps,seed";

#[derive(Debug, Clone)]
struct ProcedureRep {
    /// `(fdp, tdp)` per level.
    metrics: Vec<(f64, f64)>,
    selection: GroupSelection,
    pooled: Option<f64>,
}

fn check_oracle_pair(
    pvals: &PValues,
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    interesting: &GroupSelection,
    alphas: &[f64],
) -> Result<()> {
    let sgbh = oracle_plan(summary, interesting);
    let gbh = oracle_plan(summary, &GroupSelection::all(partition.l()));
    for &alpha in alphas {
        let a = sgbh.apply(pvals, partition, alpha)?.rejections.rejected;
        let b = gbh.apply(pvals, partition, alpha)?.rejections.rejected;
        if a != b {
            let only_s: Vec<_> = a.iter().filter(|i| b.binary_search(i).is_err()).collect();
            let only_g: Vec<_> = b.iter().filter(|i| a.binary_search(i).is_err()).collect();
            return Err(Error::OracleMismatch {
                alpha,
                detail: format!(
                    "{} vs {} rejections; only sGBH: {only_s:?}; only GBH: {only_g:?}",
                    a.len(),
                    b.len()
                ),
            });
        }
    }
    Ok(())
}

fn run_rep(
    config: &ScenarioConfig,
    partition: &GroupPartition,
    summary: &GroupTruthSummary,
    interesting: &GroupSelection,
    fixed_truth: Option<&TruthAssignment>,
    rep: u64,
) -> Result<Vec<ProcedureRep>> {
    let truth = match fixed_truth {
        Some(t) => t.clone(),
        None => draw_positions(partition, summary, &mut stream(config.seed, rep, STAGE_POSITIONS)),
    };
    let mu = draw_magnitudes(
        &truth,
        config.mu_min,
        config.mu_max,
        &mut stream(config.seed, rep, STAGE_MAGNITUDES),
    );
    let z = sample_gaussian(&mu, &config.sigma, &mut stream(config.seed, rep, STAGE_NOISE))?;
    let pvals = z_to_p(z.z(), config.sided)?;
    check_oracle_pair(&pvals, partition, summary, interesting, &config.alphas)?;

    let input = ProcedureInput {
        pvals: &pvals,
        zscores: Some(&z),
        partition,
        truth: Some(summary),
    };
    config
        .procedures
        .iter()
        .map(|spec| {
            let plan: WeightPlan = spec.plan(&input)?;
            let metrics = config
                .alphas
                .iter()
                .map(|&a| Ok(fdp_tdp(&plan.apply(&pvals, partition, a)?.rejections, &truth)))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProcedureRep { metrics, selection: plan.selection, pooled: plan.pooled_estimate })
        })
        .collect()
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn quantile(mut values: Vec<f64>, q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(values[lo] + (pos - lo as f64) * (values[hi] - values[lo]))
}

fn selector_columns(spec: &ProcedureSpec) -> (Option<String>, Option<f64>) {
    match spec.selector() {
        Some(s @ Selector::Test { .. }) => (Some(s.method_name().to_string()), s.level()),
        _ => (None, None),
    }
}

fn estimator_column(spec: &ProcedureSpec) -> Option<String> {
    spec.estimator().map(Estimator::to_string)
}

/// Runs every replication of one scenario and aggregates one row per
/// (level, procedure), levels outermost.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<MetricRow>> {
    config.validate()?;
    let partition = config.partition()?;
    let summary = config.truth_summary()?;
    let interesting = summary.interesting_groups();
    let fixed_truth = config.fixed_positions.then(|| {
        draw_positions(
            &partition,
            &summary,
            &mut stream(config.seed, FIXED_POSITIONS_REP, STAGE_POSITIONS),
        )
    });

    let reps: Vec<Vec<ProcedureRep>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| {
            run_rep(config, &partition, &summary, &interesting, fixed_truth.as_ref(), rep)
                .map_err(|e| e.in_rep(rep as usize))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(config.alphas.len() * config.procedures.len());
    for (ai, &alpha) in config.alphas.iter().enumerate() {
        for (pi, spec) in config.procedures.iter().enumerate() {
            let per = || reps.iter().map(move |r| &r[pi]);
            let (fdr, sd_fdp) = mean_sd(per().map(|r| r.metrics[ai].0));
            let (power, sd_tdp) = mean_sd(per().map(|r| r.metrics[ai].1));
            let selective = spec.selects_from_data();
            let rate = |f: &dyn Fn(&GroupSelection) -> bool| {
                per().filter(|r| f(&r.selection)).count() as f64 / config.reps as f64
            };
            let sel_correct_rate = selective.then(|| rate(&|s| *s == interesting));
            let sel_contains_rate =
                selective.then(|| rate(&|s| interesting.iter().all(|j| s.contains(j))));
            let pooled: Vec<f64> = per().filter_map(|r| r.pooled).collect();
            let mean_pooled = (!pooled.is_empty())
                .then(|| pooled.iter().sum::<f64>() / pooled.len() as f64);
            let is_sgbh = spec.selector().is_some() || matches!(spec, ProcedureSpec::OracleSgbh);
            let estimated = spec.estimator().is_some();
            let (mean_pi0_hat_s, mean_pi0_hat) = match (estimated, is_sgbh) {
                (true, true) => (mean_pooled, None),
                (true, false) => (None, mean_pooled),
                _ => (None, None),
            };
            let fdr_bound = match spec {
                ProcedureSpec::PluginSgbh { .. } if !interesting.is_empty() => {
                    let check = quantile(pooled.clone(), BOUND_QUANTILE).unwrap_or(0.0).min(1.0 - 1e-12);
                    let wrong = rate(&|s| *s != interesting);
                    let exceeds = per()
                        .filter(|r| r.pooled.is_none_or(|p| p > check))
                        .count() as f64
                        / config.reps as f64;
                    Some(fdr_bound_diagnostic(&summary, &interesting, alpha, check, wrong, exceeds)?)
                }
                _ => None,
            };
            let (selector, level) = selector_columns(spec);
            rows.push(MetricRow {
                m: config.m,
                sigma: config.sigma.label().to_string(),
                sided: config.sided.label().to_string(),
                pi_tilde0: config.pi_tilde0,
                alpha,
                procedure: spec.name().to_string(),
                estimator: estimator_column(spec),
                selector,
                lambda: spec.lambda(),
                level,
                fdr,
                sd_fdp,
                power,
                sd_tdp,
                sel_correct_rate,
                mean_pi0_hat_s,
                mean_pi0_hat,
                fdr_bound,
                reps: config.reps,
                seed: config.seed,
                sel_contains_rate,
            });
        }
    }
    Ok(rows)
}

/// Serializes rows under [`CSV_HEADER`].
pub fn rows_to_csv(rows: &[MetricRow]) -> Result<String> {
    let mut out = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        for row in rows {
            w.serialize(row).map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let mut doc = String::with_capacity(out.len() + CSV_HEADER.len() + 1);
    doc.push_str(CSV_HEADER);
    doc.push('\n');
    doc.push_str(std::str::from_utf8(&out).expect("csv output is UTF-8"));
    Ok(doc)
}

/// Runs scenarios in order on a pool of `workers` threads (0 means rayon's
/// default) and returns the CSV document.
pub fn run_grid(configs: &[ScenarioConfig], workers: usize) -> Result<String> {
    if configs.is_empty() {
        return Err(Error::Config("empty scenario grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        configs.iter().map(run_scenario).collect::<Result<Vec<_>>>()
    })?;
    rows_to_csv(&rows.concat())
}

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2]
}
fn default_m() -> Vec<usize> {
    DESK_GRID_M.to_vec()
}
fn default_pi() -> Vec<f64> {
    vec![0.7, 0.8, 0.9]
}
fn default_sigmas() -> Vec<SigmaSpec> {
    vec![SigmaSpec::Identity, SigmaSpec::autoregressive()]
}
fn default_sided() -> Vec<Sided> {
    vec![Sided::One, Sided::Two]
}
fn default_groups() -> usize {
    4
}
fn default_reps() -> usize {
    200
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_mu_min() -> f64 {
    0.6
}
fn default_mu_max() -> f64 {
    3.6
}

/// Master seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_190_601;

/// Default roster: plug-in (Jin, KS) and generic (lambda 0.5, KS) pairs, the
/// oracle pair and plain BH.
pub fn default_procedures() -> Vec<ProcedureSpec> {
    let jin = Estimator::Jin { gamma: 0.5 };
    let ks = Selector::ks(0.025);
    vec![
        ProcedureSpec::PluginSgbh { selector: ks, estimator: jin.clone() },
        ProcedureSpec::PluginGbh { estimator: jin },
        ProcedureSpec::GenericSgbh { selector: ks, lambda: 0.5, scope: Default::default() },
        ProcedureSpec::GenericGbh { lambda: 0.5 },
        ProcedureSpec::OracleSgbh,
        ProcedureSpec::OracleGbh,
        ProcedureSpec::Bh,
    ]
}

/// Cartesian experiment grid, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
    #[serde(default = "default_pi")]
    pub pi_tilde0: Vec<f64>,
    #[serde(default = "default_alphas")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_sigmas")]
    pub sigma: Vec<SigmaSpec>,
    #[serde(default = "default_sided")]
    pub sided: Vec<Sided>,
    #[serde(default = "default_groups")]
    pub groups: usize,
    #[serde(default = "default_mu_min")]
    pub mu_min: f64,
    #[serde(default = "default_mu_max")]
    pub mu_max: f64,
    #[serde(default)]
    pub fixed_positions: bool,
    #[serde(default = "default_procedures")]
    pub procedures: Vec<ProcedureSpec>,
}

impl Default for GridConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl GridConfig {
    /// Replaces the sample sizes with [`FULL_GRID_M`].
    pub fn full_grid(mut self) -> Self {
        self.m = FULL_GRID_M.to_vec();
        self
    }

    /// Scenario seed from the master seed and the data settings other than
    /// the correlation, so identity and AR scenarios share random streams.
    fn scenario_seed(&self, m: usize, pi: f64, sided: Sided) -> u64 {
        let s = splitmix64(self.seed ^ splitmix64(m as u64));
        let s = splitmix64(s ^ pi.to_bits());
        splitmix64(s ^ sided as u64)
    }

    /// Expands the grid in `m`, `pi_tilde0`, `sigma`, `sided` order.
    pub fn scenarios(&self) -> Result<Vec<ScenarioConfig>> {
        let mut out = Vec::new();
        for &m in &self.m {
            for &pi in &self.pi_tilde0 {
                for sigma in &self.sigma {
                    for &sided in &self.sided {
                        let c = ScenarioConfig {
                            alphas: self.alpha.clone(),
                            m,
                            groups: self.groups,
                            pi_tilde0: pi,
                            sigma: sigma.clone(),
                            sided,
                            reps: self.reps,
                            seed: self.scenario_seed(m, pi, sided),
                            procedures: self.procedures.clone(),
                            mu_min: self.mu_min,
                            mu_max: self.mu_max,
                            fixed_positions: self.fixed_positions,
                        };
                        c.validate()?;
                        out.push(c);
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty scenario grid".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::normal_cdf;

    fn scenario(m: usize, pi: f64, reps: usize) -> ScenarioConfig {
        ScenarioConfig {
            alphas: vec![0.05, 0.1],
            m,
            groups: 4,
            pi_tilde0: pi,
            sigma: SigmaSpec::Identity,
            sided: Sided::Two,
            reps,
            seed: 11,
            procedures: vec![ProcedureSpec::Bh, ProcedureSpec::OracleGbh],
            mu_min: 0.6,
            mu_max: 3.6,
            fixed_positions: false,
        }
    }

    #[test]
    fn all_null_means_are_zero() {
        let part = GroupPartition::contiguous(40, 4).unwrap();
        let summary = GroupTruthSummary::from_counts(vec![10; 4], vec![10; 4]).unwrap();
        let (mu, truth) = draw_means(&part, &summary, 0.6, 3.6, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(mu.iter().all(|&x| x == 0.0));
        assert_eq!(truth.m0(), 40);
    }

    #[test]
    fn exact_false_null_count_and_support() {
        let c = scenario(4000, 0.7, 1);
        let part = c.partition().unwrap();
        let summary = c.truth_summary().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (mu, truth) = draw_means(&part, &summary, 0.6, 3.6, &mut rng);
            let nonzero: Vec<usize> = (0..4000).filter(|&i| mu[i] != 0.0).collect();
            assert_eq!(nonzero.len(), 300);
            assert!(nonzero.iter().all(|&i| i < 1000 && !truth.is_true_null(i)));
            assert!(nonzero.iter().all(|&i| (0.6..=3.6).contains(&mu[i].abs())));
        }
    }

    #[test]
    fn zero_correlation_recursion_matches_identity() {
        let mu = vec![0.5; 400];
        let a = sample_gaussian(&mu, &SigmaSpec::Identity, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let b = sample_gaussian(
            &mu,
            &SigmaSpec::ArBlocks { block_rhos: vec![0.0; 4] },
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_eq!(a.z(), b.z());
    }

    #[test]
    fn ar_blocks_must_divide_m() {
        let spec = SigmaSpec::ArBlocks { block_rhos: vec![0.1, 0.2, 0.3] };
        assert!(sample_gaussian(&[0.0; 10], &spec, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let spec = SigmaSpec::ArBlocks { block_rhos: vec![1.0] };
        assert!(spec.validate(10).is_err());
    }

    #[test]
    fn pvalue_conversion() {
        let two = z_to_p(&[0.0, 1.959964, -1.959964], Sided::Two).unwrap();
        assert_eq!(two.as_slice()[0], 1.0);
        assert!((two.as_slice()[1] - 0.05).abs() < 1e-5);
        assert_eq!(two.as_slice()[1], two.as_slice()[2]);
        let one = z_to_p(&[0.0, 2.0], Sided::One).unwrap();
        assert_eq!(one.as_slice()[0], 0.5);
        assert!((one.as_slice()[1] - (1.0 - normal_cdf(2.0))).abs() < 1e-16);
        let far = z_to_p(&[60.0], Sided::Two).unwrap();
        assert!(far.as_slice()[0] > 0.0);
    }

    #[test]
    fn stream_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for rep in 0..100 {
            for stage in [STAGE_POSITIONS, STAGE_MAGNITUDES, STAGE_NOISE] {
                assert!(seen.insert(stream_seed(42, rep, stage)));
            }
        }
    }

    #[test]
    fn all_null_scenario_has_zero_power() {
        let c = scenario(400, 1.0, 1);
        let rows = run_scenario(&c).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.power == 0.0));
        assert!(rows.iter().filter(|r| r.procedure == "oracle_gbh").all(|r| r.fdr == 0.0));
    }

    #[test]
    fn single_scenario_grid_has_one_row_per_procedure_and_level() {
        let csv = run_grid(&[scenario(400, 0.8, 3)], 2).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.split(',').count());
        assert!(lines[1].contains(",bh,,,,,"));
    }

    #[test]
    fn grid_output_is_independent_of_worker_count() {
        let mut c = scenario(400, 0.8, 6);
        c.procedures = default_procedures();
        c.sigma = SigmaSpec::autoregressive();
        let a = run_grid(&[c.clone()], 1).unwrap();
        let b = run_grid(&[c], 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_positions_share_truth_across_reps() {
        let mut c = scenario(400, 0.8, 4);
        c.fixed_positions = true;
        let part = c.partition().unwrap();
        let summary = c.truth_summary().unwrap();
        let s = summary.interesting_groups();
        let fixed = draw_positions(&part, &summary, &mut stream(c.seed, FIXED_POSITIONS_REP, STAGE_POSITIONS));
        // every rep must succeed with the shared truth
        for rep in 0..4 {
            run_rep(&c, &part, &summary, &s, Some(&fixed), rep).unwrap();
        }
        assert!(run_scenario(&c).is_ok());
    }

    #[test]
    fn grid_defaults_and_unknown_keys() {
        let g = GridConfig::default();
        assert_eq!(g.m, vec![4000, 10_000]);
        assert_eq!(g.reps, 200);
        assert_eq!(g.sigma.len(), 2);
        assert_eq!(g.scenarios().unwrap().len(), 2 * 3 * 2 * 2);
        assert_eq!(g.clone().full_grid().m.len(), 6);
        assert!(serde_json::from_str::<GridConfig>(r#"{"mm": [4000]}"#).is_err());
    }

    #[test]
    fn sigma_choice_only_changes_sampling() {
        let g: GridConfig = serde_json::from_str(r#"{"m":[400],"pi_tilde0":[0.8],"sided":["two"]}"#).unwrap();
        let s = g.scenarios().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].seed, s[1].seed);
        assert_ne!(s[0].sigma, s[1].sigma);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(vec![3.0, 1.0, 2.0], 0.5), Some(2.0));
        assert_eq!(quantile(vec![0.0, 1.0], 0.9), Some(0.9));
        assert_eq!(quantile(vec![], 0.9), None);
    }
}
