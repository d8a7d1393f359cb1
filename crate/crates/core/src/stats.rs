//! Nonparametric cohort statistics: Kruskal-Wallis, Wilcoxon rank-sum,
//! Wilcoxon signed-rank, chi-square for two proportions and McNemar.
//!
//! All p-values are two-sided. Rank tests use mid-ranks for ties with the
//! matching variance correction. Exact null distributions are enumerated
//! over doubled mid-ranks (always integers) for small samples: rank-sum when
//! both groups have at most 10 values, signed-rank up to 15 non-zero
//! differences, McNemar up to 25 discordant pairs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const RANK_SUM_EXACT_MAX: usize = 10;
pub const SIGNED_RANK_EXACT_MAX: usize = 15;
pub const MCNEMAR_EXACT_MAX: u64 = 25;
pub const SIGNED_RANK_MIN_PAIRS: usize = 5;

/// One group's per-subject values in one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub group_label: String,
    pub condition_label: String,
    pub values: Vec<f64>,
}

impl GroupSample {
    pub fn new(
        group_label: impl Into<String>,
        condition_label: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let s = Self {
            group_label: group_label.into(),
            condition_label: condition_label.into(),
            values,
        };
        if s.values.is_empty() {
            return Err(Error::EmptyInput(format!(
                "group '{}' has no values",
                s.group_label
            )));
        }
        if s.group_label.is_empty() || s.condition_label.is_empty() {
            return Err(Error::InvalidInput(
                "group and condition labels must be non-empty".into(),
            ));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "group '{}' has non-finite values",
                s.group_label
            )));
        }
        Ok(s)
    }

    /// Unlabeled sample, for direct use of the tests.
    pub fn unlabeled(values: Vec<f64>) -> Result<Self> {
        Self::new("group", "condition", values)
    }
}

/// How a p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Asymptotic,
    /// No variation to test; p is 1 by convention.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: Vec<usize>,
    pub method: PMethod,
}

impl TestOutcome {
    fn new(name: &str, statistic: f64, p_value: f64, n: Vec<usize>, method: PMethod) -> Self {
        Self {
            test_name: name.to_string(),
            // an empty f64 sum is -0.0; report it as 0
            statistic: statistic + 0.0,
            p_value: p_value.clamp(0.0, 1.0),
            n,
            method,
        }
    }

    fn degenerate(name: &str, n: Vec<usize>) -> Self {
        Self::new(name, 0.0, 1.0, n, PMethod::Degenerate)
    }
}

/// Mid-ranks (1-based) and the tie term `sum (t^3 - t)`.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df).expect("positive df").cdf(x)
}

fn normal_two_sided(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0)
}

/// Kruskal-Wallis H with tie correction; chi-square(g - 1) p-value.
pub fn kruskal_wallis(groups: &[GroupSample]) -> Result<TestOutcome> {
    const NAME: &str = "kruskal_wallis";
    if groups.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: groups.len(),
        });
    }
    if let Some(g) = groups.iter().find(|g| g.values.len() < 2) {
        return Err(Error::InsufficientData {
            needed: 2,
            got: g.values.len(),
        });
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.values.len()).collect();
    let pooled: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.values.iter().copied())
        .collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(TestOutcome::degenerate(NAME, sizes));
    }
    let mut offset = 0;
    let mut weighted = 0.0;
    for &size in &sizes {
        let r: f64 = ranks[offset..offset + size].iter().sum();
        weighted += r * r / size as f64;
        offset += size;
    }
    let h = ((12.0 / (n * (n + 1.0)) * weighted - 3.0 * (n + 1.0)) / correction).max(0.0);
    let p = chi2_sf(h, (groups.len() - 1) as f64);
    Ok(TestOutcome::new(NAME, h, p, sizes, PMethod::Asymptotic))
}

/// Number of ways to pick `k` of `items` (doubled ranks) with each total.
fn subset_sum_counts(items: &[u32], k: usize) -> Vec<f64> {
    let max: usize = items.iter().map(|&v| v as usize).sum();
    let mut dp = vec![vec![0.0f64; max + 1]; k + 1];
    dp[0][0] = 1.0;
    for &v in items {
        let v = v as usize;
        for j in (1..=k).rev() {
            for s in (v..=max).rev() {
                let add = dp[j - 1][s - v];
                if add != 0.0 {
                    dp[j][s] += add;
                }
            }
        }
    }
    dp.swap_remove(k)
}

fn doubled(ranks: &[f64]) -> Vec<u32> {
    ranks.iter().map(|r| (2.0 * r).round() as u32).collect()
}

/// Two-sided p from an integer-valued null distribution, symmetric about `center2 / 2`.
fn two_sided_from_counts(counts: &[f64], observed2: i64, center2: i64) -> f64 {
    let total: f64 = counts.iter().sum();
    let dist = (2 * observed2 - center2).abs();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - center2).abs() >= dist)
        .map(|(_, c)| c)
        .sum();
    extreme / total
}

pub(crate) fn rank_sum_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let d = doubled(&ranks);
    let observed: i64 = d[..a.len()].iter().map(|&v| v as i64).sum();
    let total: i64 = d.iter().map(|&v| v as i64).sum();
    let counts = subset_sum_counts(&d, a.len());
    // E[sum] = n_a / N * total; compare on the 2*sum scale
    let n = pooled.len() as i64;
    let center2 = 2 * a.len() as i64 * total / n;
    two_sided_from_counts(&counts, observed, center2)
}

pub(crate) fn rank_sum_normal_p(a: &[f64], b: &[f64]) -> Option<f64> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return None;
    }
    let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    Some(normal_two_sided(z))
}

/// Wilcoxon rank-sum (Mann-Whitney U). The statistic is `U_a`.
pub fn rank_sum(a: &GroupSample, b: &GroupSample) -> Result<TestOutcome> {
    const NAME: &str = "wilcoxon_rank_sum";
    let (x, y) = (&a.values, &b.values);
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len().min(y.len()),
        });
    }
    let sizes = vec![x.len(), y.len()];
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let n = pooled.len() as f64;
    if ties >= n * n * n - n {
        return Ok(TestOutcome::degenerate(NAME, sizes));
    }
    let na = x.len() as f64;
    let u = ranks[..x.len()].iter().sum::<f64>() - na * (na + 1.0) / 2.0;
    if x.len() <= RANK_SUM_EXACT_MAX && y.len() <= RANK_SUM_EXACT_MAX {
        let p = rank_sum_exact_p(x, y);
        Ok(TestOutcome::new(NAME, u, p, sizes, PMethod::Exact))
    } else {
        let p = rank_sum_normal_p(x, y).unwrap_or(1.0);
        Ok(TestOutcome::new(NAME, u, p, sizes, PMethod::Asymptotic))
    }
}

fn nonzero_differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect())
}

pub(crate) fn signed_rank_exact_p(diffs: &[f64]) -> f64 {
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, _) = midranks(&abs);
    let d = doubled(&ranks);
    let total: i64 = d.iter().map(|&v| v as i64).sum();
    let observed: i64 = d
        .iter()
        .zip(diffs)
        .filter(|(_, x)| **x > 0.0)
        .map(|(&v, _)| v as i64)
        .sum();
    // every sign pattern is equally likely: subset sums over any size
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    for &v in &d {
        let v = v as usize;
        for s in (v..counts.len()).rev() {
            counts[s] += counts[s - v];
        }
    }
    two_sided_from_counts(&counts, observed, total)
}

pub(crate) fn signed_rank_normal_p(diffs: &[f64]) -> Option<f64> {
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let n = diffs.len() as f64;
    let w_plus: f64 = ranks
        .iter()
        .zip(diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return None;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Some(normal_two_sided(z))
}

/// Paired Wilcoxon signed-rank test. Zero differences are dropped; the
/// statistic is `min(W+, W-)`.
pub fn signed_rank(paired_a: &[f64], paired_b: &[f64]) -> Result<TestOutcome> {
    const NAME: &str = "wilcoxon_signed_rank";
    let diffs = nonzero_differences(paired_a, paired_b)?;
    if diffs.is_empty() {
        return Ok(TestOutcome::degenerate(NAME, vec![0]));
    }
    if diffs.len() < SIGNED_RANK_MIN_PAIRS {
        return Err(Error::InsufficientData {
            needed: SIGNED_RANK_MIN_PAIRS,
            got: diffs.len(),
        });
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, _) = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;
    let statistic = w_plus.min(w_minus);
    if n <= SIGNED_RANK_EXACT_MAX {
        Ok(TestOutcome::new(
            NAME,
            statistic,
            signed_rank_exact_p(&diffs),
            vec![n],
            PMethod::Exact,
        ))
    } else {
        match signed_rank_normal_p(&diffs) {
            Some(p) => Ok(TestOutcome::new(
                NAME,
                statistic,
                p,
                vec![n],
                PMethod::Asymptotic,
            )),
            None => Ok(TestOutcome::degenerate(NAME, vec![n])),
        }
    }
}

/// Pearson chi-square for a 2x2 table of successes/failures, no continuity
/// correction.
pub fn chi_square_proportions(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<TestOutcome> {
    const NAME: &str = "chi_square_proportions";
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::Parameter(format!(
            "invalid proportions {k1}/{n1} vs {k2}/{n2}"
        )));
    }
    let sizes = vec![n1 as usize, n2 as usize];
    let (k1f, n1f, k2f, n2f) = (k1 as f64, n1 as f64, k2 as f64, n2 as f64);
    let n = n1f + n2f;
    let successes = k1f + k2f;
    let failures = n - successes;
    if successes == 0.0 || failures == 0.0 {
        return Ok(TestOutcome::degenerate(NAME, sizes));
    }
    let cross = k1f * (n2f - k2f) - k2f * (n1f - k1f);
    let statistic = n * cross * cross / (n1f * n2f * successes * failures);
    Ok(TestOutcome::new(
        NAME,
        statistic,
        chi2_sf(statistic, 1.0),
        sizes,
        PMethod::Asymptotic,
    ))
}

fn binomial_half_cdf(k: u64, n: u64) -> f64 {
    // P(X <= k), X ~ Binomial(n, 1/2); n <= MCNEMAR_EXACT_MAX keeps this exact
    let mut coef: u64 = 1;
    let mut total: u64 = 1;
    for i in 1..=k {
        coef = coef * (n - i + 1) / i;
        total += coef;
    }
    total as f64 / (1u64 << n) as f64
}

/// McNemar test on discordant counts `b` (first only) and `c` (second only).
pub fn mcnemar(b: u64, c: u64) -> Result<TestOutcome> {
    const NAME: &str = "mcnemar";
    let n = b + c;
    let sizes = vec![b as usize, c as usize];
    if n == 0 {
        return Ok(TestOutcome::degenerate(NAME, sizes));
    }
    if n <= MCNEMAR_EXACT_MAX {
        let p = (2.0 * binomial_half_cdf(b.min(c), n)).min(1.0);
        Ok(TestOutcome::new(
            NAME,
            b.min(c) as f64,
            p,
            sizes,
            PMethod::Exact,
        ))
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let statistic = diff.max(0.0).powi(2) / n as f64;
        Ok(TestOutcome::new(
            NAME,
            statistic,
            chi2_sf(statistic, 1.0),
            sizes,
            PMethod::Asymptotic,
        ))
    }
}
