//! Group summaries, Tukey-Kramer pairwise comparisons and dummy-coded OLS.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;
/// 0.05 split over four comparisons.
pub const BONFERRONI_LEVEL: f64 = 0.0125;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("group {0:?} has no values")]
    EmptyGroup(String),
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("no residual degrees of freedom")]
    NoDegreesOfFreedom,
    #[error("reference group {0:?} is not among the groups")]
    UnknownReference(String),
    #[error("design matrix is singular")]
    SingularDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub group_id: String,
    pub values: Vec<f64>,
}

impl GroupSample {
    pub fn new(group_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self { group_id: group_id.into(), values }
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    /// Absent for a single observation.
    pub se: Option<f64>,
}

pub fn group_summary(values: &[f64]) -> Result<GroupSummary, StatsError> {
    let n = values.len();
    if n == 0 {
        return Err(StatsError::EmptyGroup(String::new()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = (n > 1).then(|| {
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Ok(GroupSummary { n, mean, se })
}

const GAUSS_POINTS: usize = 20;

/// Gauss-Legendre nodes and weights on [-1, 1], found by Newton iteration on
/// the Legendre polynomial.
fn gauss_legendre() -> &'static [(f64, f64); GAUSS_POINTS] {
    static RULE: OnceLock<[(f64, f64); GAUSS_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut rule = [(0.0, 0.0); GAUSS_POINTS];
        for (i, slot) in rule.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

/// Splits `[a, b]` into equal panels and applies the Gauss-Legendre rule to
/// each one.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre();
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * h;
            rule.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// P(Z in (lo, hi]) for a standard normal, computed on the tail that keeps
/// precision.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    let r = std::f64::consts::SQRT_2;
    if lo > 0.0 {
        0.5 * (erfc(lo / r) - erfc(hi / r))
    } else {
        0.5 * (erfc(-hi / r) - erfc(-lo / r))
    }
}

/// CDF of the range of `k` standard normals.
fn range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let v = integrate(|z| phi(z) * normal_mass(z - w, z).powi(km1), -8.5, 8.5, 16);
    (k as f64 * v).clamp(0.0, 1.0)
}

/// CDF of the studentized range distribution with `k` groups and `df`
/// error degrees of freedom.
pub fn ptukey(q: f64, k: usize, df: f64) -> f64 {
    assert!(k >= 2, "studentized range needs k >= 2");
    if q <= 0.0 {
        return 0.0;
    }
    if !q.is_finite() {
        return 1.0;
    }
    if df > 50_000.0 {
        return range_cdf(q, k);
    }
    let h = df / 2.0;
    let log_norm = std::f64::consts::LN_2 + h * h.ln() - ln_gamma(h);
    let density = |s: f64| {
        if s <= 0.0 {
            return if df == 1.0 { (2.0 / std::f64::consts::PI).sqrt() } else { 0.0 };
        }
        (log_norm + (df - 1.0) * s.ln() - df * s * s / 2.0).exp()
    };
    let spread = 10.0 / df.sqrt();
    let (lo, hi) = ((1.0 - spread).max(0.0), 1.0 + spread);
    integrate(|s| density(s) * range_cdf(q * s, k), lo, hi, 16).clamp(0.0, 1.0)
}

/// Quantile of the studentized range distribution.
pub fn qtukey(p: f64, k: usize, df: f64) -> f64 {
    assert!((0.0..1.0).contains(&p), "probability must be in [0, 1)");
    let (mut lo, mut hi) = (0.0, 4.0);
    let mut f_hi = ptukey(hi, k, df) - p;
    while f_hi < 0.0 {
        lo = hi;
        hi *= 2.0;
        f_hi = ptukey(hi, k, df) - p;
    }
    let mut f_lo = ptukey(lo, k, df) - p;
    // Illinois variant of regula falsi: keeps the bracket, converges fast.
    let mut side = 0;
    for _ in 0..100 {
        let x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let fx = ptukey(x, k, df) - p;
        if fx.abs() < 1e-14 || hi - lo < 1e-10 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi /= 2.0;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo /= 2.0;
            }
            side = 1;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub group_a: String,
    pub group_b: String,
    /// mean(a) - mean(b).
    pub mean_difference: f64,
    /// Infinite when both groups are constant but differ; JSON has no
    /// infinity, so it is written as null.
    #[serde(deserialize_with = "null_as_infinity")]
    pub q: f64,
    pub p_value: f64,
    pub significant: bool,
}

fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub alpha: f64,
    pub df: f64,
    pub mse: f64,
    pub critical_q: f64,
    pub pairs: Vec<PairComparison>,
}

impl TukeyResult {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.pairs
            .iter()
            .find(|p| (p.group_a == a && p.group_b == b) || (p.group_a == b && p.group_b == a))
    }
}

fn check_groups(groups: &[GroupSample]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(g) = groups.iter().find(|g| g.values.is_empty()) {
        return Err(StatsError::EmptyGroup(g.group_id.clone()));
    }
    Ok(())
}

/// Pairwise comparisons with the Kramer adjustment for unequal group sizes.
pub fn tukey_kramer(groups: &[GroupSample], alpha: f64) -> Result<TukeyResult, StatsError> {
    check_groups(groups)?;
    let k = groups.len();
    let total: usize = groups.iter().map(|g| g.values.len()).sum();
    if total <= k {
        return Err(StatsError::NoDegreesOfFreedom);
    }
    let df = (total - k) as f64;
    let means: Vec<f64> = groups.iter().map(GroupSample::mean).collect();
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.values.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let mse = ssw / df;
    let critical_q = qtukey(1.0 - alpha, k, df);
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[i] - means[j];
            let (q, p_value) = if mse > 0.0 {
                let se = (mse / 2.0 * (1.0 / groups[i].values.len() as f64 + 1.0 / groups[j].values.len() as f64)).sqrt();
                let q = diff.abs() / se;
                (q, 1.0 - ptukey(q, k, df))
            } else if diff != 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                (0.0, 1.0)
            };
            pairs.push(PairComparison {
                group_a: groups[i].group_id.clone(),
                group_b: groups[j].group_id.clone(),
                mean_difference: diff,
                q,
                p_value,
                significant: q > critical_q,
            });
        }
    }
    Ok(TukeyResult { alpha, df, mse, critical_q, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsGroup {
    pub group_id: String,
    /// Intercept plus the group's beta.
    pub fitted: f64,
    pub fitted_se: Option<f64>,
    /// Effect relative to the reference; absent for the reference itself.
    pub beta: Option<f64>,
    pub beta_se: Option<f64>,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    pub significant_vs_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsResult {
    pub reference: String,
    pub correction_level: f64,
    pub df_resid: usize,
    pub sigma: Option<f64>,
    pub groups: Vec<OlsGroup>,
}

/// Regresses the values on an intercept plus one indicator per
/// non-reference group and t-tests each indicator.
pub fn ols_dummy(groups: &[GroupSample], reference: &str, correction_level: f64) -> Result<OlsResult, StatsError> {
    check_groups(groups)?;
    let r = groups
        .iter()
        .position(|g| g.group_id == reference)
        .ok_or_else(|| StatsError::UnknownReference(reference.to_string()))?;
    let others: Vec<usize> = (0..groups.len()).filter(|&i| i != r).collect();
    let p = groups.len();
    let n: usize = groups.iter().map(|g| g.values.len()).sum();

    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    let mut row = 0;
    for (gi, g) in groups.iter().enumerate() {
        for &v in &g.values {
            x[(row, 0)] = 1.0;
            if let Some(col) = others.iter().position(|&o| o == gi) {
                x[(row, col + 1)] = 1.0;
            }
            y[row] = v;
            row += 1;
        }
    }
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().ok_or(StatsError::SingularDesign)?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let df_resid = n - p;
    let sigma2 = (df_resid > 0).then(|| resid.norm_squared() / df_resid as f64);
    let t_dist = (df_resid > 0).then(|| StudentsT::new(0.0, 1.0, df_resid as f64).expect("df is positive"));

    let mut out = Vec::with_capacity(p);
    for (gi, g) in groups.iter().enumerate() {
        let col = others.iter().position(|&o| o == gi).map(|c| c + 1);
        let fitted = beta[0] + col.map_or(0.0, |c| beta[c]);
        let fitted_var = col.map_or(inv[(0, 0)], |c| inv[(0, 0)] + inv[(c, c)] + 2.0 * inv[(0, c)]);
        let fitted_se = sigma2.map(|s2| (s2 * fitted_var).sqrt());
        let (b, b_se, t, pv) = match col {
            None => (None, None, None, None),
            Some(c) => {
                let b_se = sigma2.map(|s2| (s2 * inv[(c, c)]).sqrt());
                let t = b_se.map(|se| if se > 0.0 { beta[c] / se } else if beta[c] == 0.0 { 0.0 } else { f64::INFINITY.copysign(beta[c]) });
                let pv = t.zip(t_dist.as_ref()).map(|(t, d)| 2.0 * (1.0 - d.cdf(t.abs())));
                (Some(beta[c]), b_se, t, pv)
            }
        };
        out.push(OlsGroup {
            group_id: g.group_id.clone(),
            fitted,
            fitted_se,
            beta: b,
            beta_se: b_se,
            t,
            p_value: pv,
            significant_vs_reference: pv.is_some_and(|p| p < correction_level),
        });
    }
    Ok(OlsResult {
        reference: reference.to_string(),
        correction_level,
        df_resid,
        sigma: sigma2.map(f64::sqrt),
        groups: out,
    })
}
