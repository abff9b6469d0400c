//! Group-level tests that decide which groups are interesting.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_level, Error, Result};
use crate::types::{GroupPartition, GroupSelection, PValues};

/// Result of a single goodness-of-fit or global-null test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub pvalue: f64,
    pub reject: bool,
}

fn sorted_finite(pvals: &[f64]) -> Result<Vec<f64>> {
    if pvals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((index, &value)) =
        pvals.iter().enumerate().find(|(_, p)| !(p.is_finite() && (0.0..=1.0).contains(*p)))
    {
        return Err(Error::InvalidPValue { index, value });
    }
    let mut sorted = pvals.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// `D_n = sup_t |F_n(t) - t|` against the uniform distribution.
pub fn ks_statistic(pvals: &[f64]) -> Result<f64> {
    let sorted = sorted_finite(pvals)?;
    let n = sorted.len() as f64;
    Ok(sorted.iter().enumerate().fold(0.0, |d, (i, &p)| {
        let above = (i + 1) as f64 / n - p;
        let below = p - i as f64 / n;
        d.max(above).max(below)
    }))
}

/// The Kolmogorov distribution function `K(x) = P(sup |B(t)| <= x)`.
///
/// Uses the alternating series `1 - 2 sum (-1)^{k-1} exp(-2 k^2 x^2)` for
/// `x >= 1` and the equivalent theta-function form
/// `sqrt(2 pi) / x * sum exp(-(2k-1)^2 pi^2 / (8 x^2))` below, where the
/// alternating series converges slowly. Terms are summed until they drop
/// below 1e-12.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let value = if x >= 1.0 {
        let mut sum = 0.0;
        for k in 1.. {
            let term = (-2.0 * (k * k) as f64 * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 {
                break;
            }
        }
        1.0 - 2.0 * sum
    } else {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1.. {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-12 {
                break;
            }
        }
        (2.0 * std::f64::consts::PI).sqrt() / x * sum
    };
    value.clamp(0.0, 1.0)
}

/// Two-sided one-sample KS test of uniformity with the asymptotic p-value
/// `1 - K(sqrt(n) D_n)`.
pub fn ks_test(pvals: &[f64], beta: f64) -> Result<TestOutcome> {
    check_level("beta", beta)?;
    let d = ks_statistic(pvals)?;
    let pvalue = 1.0 - kolmogorov_cdf((pvals.len() as f64).sqrt() * d);
    Ok(TestOutcome { statistic: d, pvalue, reject: pvalue <= beta })
}

/// Simes' test of the global null: `min_j n p_(j) / j`, capped at 1.
pub fn simes_test(pvals: &[f64], xi: f64) -> Result<TestOutcome> {
    check_level("xi", xi)?;
    let sorted = sorted_finite(pvals)?;
    let n = sorted.len() as f64;
    let pvalue = sorted
        .iter()
        .enumerate()
        .map(|(j, &p)| n * p / (j + 1) as f64)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    Ok(TestOutcome { statistic: pvalue, pvalue, reject: pvalue <= xi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Ks,
    Simes,
}

impl TestMethod {
    pub fn run(self, pvals: &[f64], level: f64) -> Result<TestOutcome> {
        match self {
            TestMethod::Ks => ks_test(pvals, level),
            TestMethod::Simes => simes_test(pvals, level),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestMethod::Ks => "ks",
            TestMethod::Simes => "simes",
        }
    }
}

impl FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ks" => Ok(TestMethod::Ks),
            "simes" => Ok(TestMethod::Simes),
            other => Err(Error::Config(format!("unknown test method `{other}`"))),
        }
    }
}

/// The selected groups together with every group's test outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub selection: GroupSelection,
    /// One entry per group; `None` when no test was run.
    pub tests: Vec<Option<TestOutcome>>,
}

/// Runs `method` on each group independently; groups whose test rejects form
/// the selection.
pub fn select_groups(
    pvals: &PValues,
    partition: &GroupPartition,
    method: TestMethod,
    level: f64,
) -> Result<SelectionReport> {
    if pvals.len() != partition.m() {
        return Err(Error::LengthMismatch { expected: partition.m(), found: pvals.len() });
    }
    let outcomes = (0..partition.l())
        .into_par_iter()
        .map(|j| method.run(&pvals.group_values(partition, j), level).map_err(|e| e.in_group(j)))
        .collect::<Result<Vec<_>>>()?;
    let selected = outcomes.iter().enumerate().filter(|(_, o)| o.reject).map(|(j, _)| j).collect();
    Ok(SelectionReport {
        selection: GroupSelection::new(selected, partition.l())?,
        tests: outcomes.into_iter().map(Some).collect(),
    })
}

/// How a procedure obtains its set of interesting groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Test { method: TestMethod, level: f64 },
    /// Every group, without testing.
    All,
}

impl Selector {
    pub fn ks(beta: f64) -> Self {
        Selector::Test { method: TestMethod::Ks, level: beta }
    }

    pub fn simes(xi: f64) -> Self {
        Selector::Test { method: TestMethod::Simes, level: xi }
    }

    pub fn select(&self, pvals: &PValues, partition: &GroupPartition) -> Result<SelectionReport> {
        match *self {
            Selector::Test { method, level } => select_groups(pvals, partition, method, level),
            Selector::All => Ok(SelectionReport {
                selection: GroupSelection::all(partition.l()),
                tests: vec![None; partition.l()],
            }),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Selector::Test { method, .. } => method.name(),
            Selector::All => "all",
        }
    }

    pub fn level(&self) -> Option<f64> {
        match self {
            Selector::Test { level, .. } => Some(*level),
            Selector::All => None,
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Test { method, level } => write!(f, "{}:{level}", method.name()),
            Selector::All => write!(f, "all"),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    /// Accepts `ks:<beta>`, `simes:<xi>` and `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(Selector::All);
        }
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("selector `{s}` needs a level, e.g. ks:0.025")))?;
        let method: TestMethod = name.parse()?;
        let level: f64 =
            arg.trim().parse().map_err(|_| Error::Config(format!("bad selector level in `{s}`")))?;
        check_level("selector level", level)?;
        Ok(Selector::Test { method, level })
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Vec<f64> {
        (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect()
    }

    #[test]
    fn ks_statistic_examples() {
        assert_eq!(ks_statistic(&[0.5]).unwrap(), 0.5);
        assert!((ks_statistic(&grid(10)).unwrap() - 0.05).abs() < 1e-15);
        assert!((ks_statistic(&[0.9, 0.95]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(ks_statistic(&[]), Err(Error::EmptyInput));
    }

    #[test]
    fn kolmogorov_cdf_values() {
        assert_eq!(kolmogorov_cdf(0.0), 0.0);
        // alternating-series oracle evaluated to many terms
        let oracle: f64 = 1.0
            - 2.0
                * (1..200)
                    .map(|k| {
                        let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                        s * (-2.0 * (k * k) as f64 * 1.358f64.powi(2)).exp()
                    })
                    .sum::<f64>();
        assert!((kolmogorov_cdf(1.358) - oracle).abs() < 1e-12);
        assert!((kolmogorov_cdf(1.358) - 0.95).abs() < 1e-3);
        let values: Vec<f64> = (1..=30).map(|k| kolmogorov_cdf(k as f64 * 0.1)).collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn kolmogorov_forms_agree_at_switch() {
        let below = kolmogorov_cdf(1.0 - 1e-12);
        let above = kolmogorov_cdf(1.0);
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn ks_test_on_uniform_grid() {
        let out = ks_test(&grid(1000), 0.025).unwrap();
        assert!(out.pvalue > 0.999_999);
        assert!(!out.reject);
        assert!(matches!(ks_test(&grid(10), 0.0), Err(Error::InvalidLevel { .. })));
    }

    #[test]
    fn ks_test_detects_mass_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rejections = 0;
        for _ in 0..200 {
            let p: Vec<f64> = (0..1000)
                .map(|i| {
                    if i < 300 {
                        rng.random_range(0.0..0.02)
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect();
            rejections += ks_test(&p, 0.025).unwrap().reject as usize;
        }
        assert!(rejections >= 190);
    }

    #[test]
    fn simes_examples() {
        assert_eq!(simes_test(&[0.3], 0.1).unwrap().pvalue, 0.3);
        let out = simes_test(&[0.01, 0.5], 0.1).unwrap();
        assert!((out.pvalue - 0.02).abs() < 1e-15);
        assert!(out.reject);
        assert_eq!(simes_test(&[], 0.1), Err(Error::EmptyInput));
    }

    #[test]
    fn simes_level_under_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 5000;
        let xi = 0.1;
        let rejections = (0..reps)
            .filter(|_| {
                let p: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
                simes_test(&p, xi).unwrap().reject
            })
            .count();
        let rate = rejections as f64 / reps as f64;
        let se = (xi * (1.0 - xi) / reps as f64).sqrt();
        assert!(rate <= xi + 3.0 * se, "rate {rate}");
    }

    #[test]
    fn uniform_groups_select_nothing() {
        let mut values = grid(500);
        values.extend(grid(500));
        let p = PValues::new(values).unwrap();
        let part = GroupPartition::contiguous(1000, 2).unwrap();
        let report = select_groups(&p, &part, TestMethod::Ks, 0.025).unwrap();
        assert!(report.selection.is_empty());
        assert_eq!(report.tests.len(), 2);
    }

    #[test]
    fn single_group_matches_single_test() {
        let values = vec![0.001, 0.2, 0.03, 0.7, 0.004];
        let p = PValues::new(values.clone()).unwrap();
        let part = GroupPartition::contiguous(5, 1).unwrap();
        let report = select_groups(&p, &part, TestMethod::Simes, 0.05).unwrap();
        let single = simes_test(&values, 0.05).unwrap();
        assert_eq!(report.tests[0], Some(single));
        assert_eq!(report.selection.contains(0), single.reject);
    }

    #[test]
    fn infinite_group_value_is_reported_with_group() {
        let p = PValues::new(vec![0.1, 0.2, f64::INFINITY, 0.3]).unwrap();
        let part = GroupPartition::contiguous(4, 2).unwrap();
        let err = select_groups(&p, &part, TestMethod::Ks, 0.1).unwrap_err();
        assert!(matches!(err, Error::InGroup { group: 1, .. }));
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("ks:0.025".parse::<Selector>().unwrap(), Selector::ks(0.025));
        assert_eq!("simes:0.1".parse::<Selector>().unwrap(), Selector::simes(0.1));
        assert_eq!("all".parse::<Selector>().unwrap(), Selector::All);
        assert!("hc:0.1".parse::<Selector>().is_err());
        assert!("ks".parse::<Selector>().is_err());
        assert!("ks:0".parse::<Selector>().is_err());
        assert_eq!(Selector::simes(0.1).to_string(), "simes:0.1");
    }

    proptest! {
        #[test]
        fn ks_statistic_permutation_invariant_and_bounded(
            mut p in proptest::collection::vec(0.0f64..=1.0, 1..60)
        ) {
            let a = ks_statistic(&p).unwrap();
            p.reverse();
            let b = ks_statistic(&p).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.5 / p.len() as f64 - 1e-15 && a <= 1.0);
        }

        #[test]
        fn simes_at_most_bonferroni(p in proptest::collection::vec(1e-9f64..=1.0, 1..60)) {
            let simes = simes_test(&p, 0.5).unwrap().pvalue;
            let min = p.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(simes <= (p.len() as f64 * min).min(1.0) + 1e-15);
        }
    }
}
