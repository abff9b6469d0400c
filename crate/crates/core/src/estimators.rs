//! Null-proportion estimators and the standard normal kernel.
//!
//! Two families are provided. Storey's thresholding estimator works on
//! p-values and is non-increasing in each of them. The characteristic-function
//! estimator of Jin, extended to heteroscedastic z-scores, works on z-scores
//! and is consistent under weak dependence.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::types::PValues;

/// Largest double below 1; upper clamp when mapping p-values to z-scores.
const ONE_MINUS_EPS: f64 = 1.0 - f64::EPSILON / 2.0;

/// Estimates closer than this to 1 are treated as exactly 1 by callers that
/// divide by `1 - pi0`.
pub const UNIT_PROPORTION_TOL: f64 = 1e-15;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile requires p in (0, 1), got {p}")));
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    // one Newton step against the accurate CDF
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        let err = if x < 0.0 { normal_cdf(x) - p } else { (1.0 - p) - normal_sf(x) };
        Ok(x - err / density)
    } else {
        Ok(x)
    }
}

/// Z-scores with per-entry variances `s_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScores {
    z: Vec<f64>,
    variances: Vec<f64>,
}

impl ZScores {
    /// Unit-variance z-scores.
    pub fn new(z: Vec<f64>) -> Result<Self> {
        let variances = vec![1.0; z.len()];
        Self::with_variances(z, variances)
    }

    pub fn with_variances(z: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if z.len() != variances.len() {
            return Err(Error::LengthMismatch { expected: z.len(), found: variances.len() });
        }
        if let Some(bad) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("variances must be positive, got {bad}")));
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("z-scores must be finite, got {bad}")));
        }
        Ok(Self { z, variances })
    }

    /// `z_i = Phi^{-1}(p_i)`, with `p_i` clamped into the open unit interval.
    pub fn from_pvalues(pvals: &[f64]) -> Result<Self> {
        let z = pvals
            .iter()
            .map(|&p| {
                if !p.is_finite() {
                    return Err(Error::Domain("z-scores need finite p-values".into()));
                }
                normal_quantile(p.clamp(f64::MIN_POSITIVE, ONE_MINUS_EPS))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(z)
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// The entries at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            z: indices.iter().map(|&i| self.z[i]).collect(),
            variances: indices.iter().map(|&i| self.variances[i]).collect(),
        }
    }
}

/// Storey's estimate before and after clamping to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreyEstimate {
    pub raw: f64,
    pub clamped: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

fn storey_raw(pvals: &[f64], lambda: f64) -> f64 {
    let m = pvals.len() as f64;
    let above = pvals.iter().filter(|&&p| p > lambda).count() as f64;
    (1.0 + above) / (m * (1.0 - lambda))
}

/// `(1 + #{p_i > lambda}) / (m (1 - lambda))` and its clamp to `[0, 1]`.
pub fn storey_pi0(pvals: &[f64], lambda: f64) -> Result<StoreyEstimate> {
    check_lambda(lambda)?;
    if pvals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pvals.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain("Storey's estimator needs finite p-values".into()));
    }
    let raw = storey_raw(pvals, lambda);
    Ok(StoreyEstimate { raw, clamped: raw.min(1.0) })
}

/// The default smoothing grid `0.05, 0.10, .., 0.95`.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Storey's estimate extrapolated along a lambda grid.
///
/// Raw estimates over the grid are fitted by a least-squares cubic in lambda
/// and the fit is read off at the largest grid point, then clamped to
/// `[0, 1]`.
pub fn storey_pi0_smooth(pvals: &[f64], lambda_grid: &[f64]) -> Result<f64> {
    if lambda_grid.len() < 4 {
        return Err(Error::Grid(format!("need at least 4 points, got {}", lambda_grid.len())));
    }
    if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Grid("grid must be strictly ascending".into()));
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Grid("grid points must lie in (0, 1)".into()));
    }
    let raw = lambda_grid
        .iter()
        .map(|&l| storey_pi0(pvals, l).map(|e| e.raw))
        .collect::<Result<Vec<_>>>()?;
    let fit = cubic_fit_at(lambda_grid, &raw, *lambda_grid.last().unwrap());
    Ok(fit.clamp(0.0, 1.0))
}

/// Least-squares cubic through `(xs, ys)`, evaluated at `at`.
fn cubic_fit_at(xs: &[f64], ys: &[f64], at: f64) -> f64 {
    let n = xs.len() as f64;
    let centre = xs.iter().sum::<f64>() / n;
    let scale = xs.iter().map(|x| (x - centre).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut a = [[0.0f64; 5]; 4];
    for (&x, &y) in xs.iter().zip(ys) {
        let u = (x - centre) / scale;
        let basis = [1.0, u, u * u, u * u * u];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] += basis[r] * basis[c];
            }
            a[r][4] += basis[r] * y;
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (v, &pv) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * pv;
            }
        }
    }
    let mut coef = [0.0f64; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * coef[k]).sum();
        coef[row] = (a[row][4] - tail) / a[row][row];
    }
    let u = (at - centre) / scale;
    coef[0] + u * (coef[1] + u * (coef[2] + u * coef[3]))
}

/// The even weight function integrated against in the kappa kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `1 - |zeta|` on (-1, 1).
    #[default]
    Triangular,
    /// `1/2` on (-1, 1).
    Uniform,
}

impl Kernel {
    pub fn eval(self, zeta: f64) -> f64 {
        match self {
            Kernel::Triangular => 1.0 - zeta.abs(),
            Kernel::Uniform => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JinConfig {
    pub gamma: f64,
    pub quadrature_nodes: usize,
    pub kernel: Kernel,
}

impl JinConfig {
    pub const DEFAULT_NODES: usize = 256;

    pub fn new(gamma: f64) -> Result<Self> {
        let config = Self { gamma, quadrature_nodes: Self::DEFAULT_NODES, kernel: Kernel::Triangular };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.quadrature_nodes < 64 {
            return Err(Error::Domain(format!(
                "at least 64 quadrature nodes required, got {}",
                self.quadrature_nodes
            )));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on (-1, 1).
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, pm1) = legendre(n, x);
                dp = nf * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (p, pm1) = legendre(n, x);
            dp = if p.is_finite() { nf * (x * p - pm1) / (x * x - 1.0) } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Quadrature coefficients of `kappa_sigma(t; .)` for fixed `t` and `sigma`:
/// `kappa(x) = sum_k c_k cos(a_k x)`.
struct KappaTerms {
    freq: Vec<f64>,
    coef: Vec<f64>,
}

impl KappaTerms {
    fn new(rule: &GaussLegendre, kernel: Kernel, t: f64, sigma: f64) -> Self {
        // the integrand is even in zeta, so integrate over (0, 1) where it is
        // smooth: zeta = (u + 1) / 2 and the factor 2 cancels the Jacobian
        let (freq, coef) = rule
            .nodes()
            .iter()
            .zip(rule.weights())
            .map(|(&u, &w)| {
                let zeta = 0.5 * (u + 1.0);
                let growth = (0.5 * t * t * zeta * zeta * sigma * sigma).exp();
                (t * zeta, w * kernel.eval(zeta) * growth)
            })
            .unzip();
        Self { freq, coef }
    }

    fn eval(&self, x: f64) -> f64 {
        self.freq.iter().zip(&self.coef).map(|(&a, &c)| c * (a * x).cos()).sum()
    }
}

/// `int_{(-1,1)} omega(zeta) exp(t^2 zeta^2 sigma^2 / 2) cos(t zeta x) d zeta`.
pub fn kappa_sigma(t: f64, x: f64, sigma: f64, config: &JinConfig) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    config.validate()?;
    let rule = GaussLegendre::new(config.quadrature_nodes);
    Ok(KappaTerms::new(&rule, config.kernel, t, sigma).eval(x))
}

/// Jin's estimate of the non-null proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JinEstimate {
    /// `phi_n(t; y)` before clamping.
    pub raw: f64,
    /// `raw` clamped to `[0, 1]`.
    pub pi1: f64,
}

impl JinEstimate {
    pub fn pi0(&self) -> f64 {
        1.0 - self.pi1
    }
}

/// `n^{-1} sum_i (1 - kappa_{sqrt(s_ii)}(t; y_i))` at `t = sqrt(2 gamma ln n)`.
pub fn jin_pi1(zscores: &ZScores, config: &JinConfig) -> Result<JinEstimate> {
    config.validate()?;
    let n = zscores.len();
    if n < 2 {
        return Err(Error::Domain(format!("Jin's estimator needs n >= 2, got {n}")));
    }
    let t = (2.0 * config.gamma * (n as f64).ln()).sqrt();
    let rule = GaussLegendre::new(config.quadrature_nodes);
    let mut terms: Option<(f64, KappaTerms)> = None;
    let mut total = 0.0;
    for (&y, &var) in zscores.z().iter().zip(zscores.variances()) {
        let sigma = var.sqrt();
        let current = match &terms {
            Some((s, k)) if *s == sigma => k,
            _ => &terms.insert((sigma, KappaTerms::new(&rule, config.kernel, t, sigma))).1,
        };
        total += 1.0 - current.eval(y);
    }
    let raw = total / n as f64;
    Ok(JinEstimate { raw, pi1: raw.clamp(0.0, 1.0) })
}

/// `n^{-2} sum_{i,j} |S(i, j)|`.
pub fn pcs_index_mass(cov: ArrayView2<'_, f64>) -> Result<f64> {
    let (rows, cols) = cov.dim();
    if rows != cols || rows == 0 {
        return Err(Error::Shape(format!("expected a non-empty square matrix, got {rows}x{cols}")));
    }
    let n = rows as f64;
    Ok(cov.iter().map(|v| v.abs()).sum::<f64>() / (n * n))
}

/// A groupwise null-proportion estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Storey { lambda: f64 },
    StoreySmooth { grid: Vec<f64> },
    Jin { gamma: f64 },
}

impl Estimator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Estimator::Storey { lambda } => check_lambda(*lambda),
            Estimator::StoreySmooth { grid } => {
                storey_pi0_smooth(&[0.5, 0.5], grid).map(|_| ())
            }
            Estimator::Jin { gamma } => JinConfig::new(*gamma).map(|_| ()),
        }
    }

    /// True-null proportion of one group. Jin's estimator uses `zscores` when
    /// given and `Phi^{-1}(p)` otherwise.
    pub fn estimate(&self, pvals: &[f64], zscores: Option<&ZScores>) -> Result<f64> {
        match self {
            Estimator::Storey { lambda } => storey_pi0(pvals, *lambda).map(|e| e.clamped),
            Estimator::StoreySmooth { grid } => storey_pi0_smooth(pvals, grid),
            Estimator::Jin { gamma } => {
                let config = JinConfig::new(*gamma)?;
                let owned;
                let z = match zscores {
                    Some(z) => z,
                    None => {
                        owned = ZScores::from_pvalues(pvals)?;
                        &owned
                    }
                };
                jin_pi1(z, &config).map(|e| e.pi0())
            }
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Storey { lambda } => write!(f, "storey:{lambda}"),
            Estimator::StoreySmooth { .. } => write!(f, "storey-smooth"),
            Estimator::Jin { gamma } => write!(f, "jin:{gamma}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// Accepts `storey:<lambda>`, `storey-smooth` and `jin:<gamma>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |arg: Option<&str>| -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("estimator `{s}` needs a parameter")))?
                .parse()
                .map_err(|_| Error::Config(format!("bad estimator parameter in `{s}`")))
        };
        let est = match name {
            "storey" => Estimator::Storey { lambda: number(arg)? },
            "storey-smooth" | "storey_smooth" => {
                Estimator::StoreySmooth { grid: default_lambda_grid() }
            }
            "jin" => Estimator::Jin { gamma: number(arg)? },
            _ => return Err(Error::Config(format!("unknown estimator `{s}`"))),
        };
        est.validate()?;
        Ok(est)
    }
}

impl Serialize for Estimator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Estimator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Estimates every group's null proportion from the full p-value vector.
pub fn estimate_groups(
    estimator: &Estimator,
    pvals: &PValues,
    zscores: Option<&ZScores>,
    partition: &crate::types::GroupPartition,
    groups: impl Iterator<Item = usize>,
) -> Result<Vec<(usize, f64)>> {
    groups
        .map(|j| {
            let p = pvals.group_values(partition, j);
            let z = zscores.map(|z| z.subset(partition.group(j)));
            estimator.estimate(&p, z.as_ref()).map(|e| (j, e)).map_err(|e| e.in_group(j))
        })
        .collect()
}
