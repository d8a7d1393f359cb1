//! Kernel conditional-entropy estimators: sample entropy and its local
//! variant, whose value on a unit-variance series is the normalized
//! complexity index (NCI).
//!
//! Both estimators share [`neighborhood_counts`]: for every reference pattern
//! the number of other patterns within tolerance `r`, once in the history
//! space and once in the joint (history, target) space. Self-matches are never
//! counted and the neighborhood is the closed ball `distance <= r`.

use crate::error::{Error, Result};
use crate::series::{embed, AnalysisParams, DistanceNorm, EmbeddedPatterns, NormalizedSeries};

/// Per-reference match counts; `joint_matches[i] <= history_matches[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodCounts {
    pub history_matches: Vec<usize>,
    pub joint_matches: Vec<usize>,
}

impl NeighborhoodCounts {
    pub fn references(&self) -> usize {
        self.history_matches.len()
    }
}

/// Counts neighbors of each embedded pattern.
///
/// Patterns are swept in order of their most recent history sample; a pair
/// whose first coordinates differ by more than `r` cannot match under either
/// norm, so each reference only scans a band of the sorted order.
pub fn neighborhood_counts(
    patterns: &EmbeddedPatterns,
    r: f64,
    norm: DistanceNorm,
) -> NeighborhoodCounts {
    let count = patterns.count();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| patterns.history(a)[0].total_cmp(&patterns.history(b)[0]));

    let mut history_matches = vec![0usize; count];
    let mut joint_matches = vec![0usize; count];
    let r2 = r * r;

    for (pos, &i) in order.iter().enumerate() {
        let hi = patterns.history(i);
        let ti = patterns.target(i);
        for &j in &order[pos + 1..] {
            let hj = patterns.history(j);
            if hj[0] - hi[0] > r {
                break;
            }
            let (in_history, in_joint) = match norm {
                DistanceNorm::Euclidean => {
                    let d2: f64 = hi.iter().zip(hj).map(|(a, b)| (a - b) * (a - b)).sum();
                    let dt = ti - patterns.target(j);
                    (d2 <= r2, d2 + dt * dt <= r2)
                }
                DistanceNorm::Chebyshev => {
                    let d = hi
                        .iter()
                        .zip(hj)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    let dt = (ti - patterns.target(j)).abs();
                    (d <= r, d.max(dt) <= r)
                }
            };
            if in_history {
                history_matches[i] += 1;
                history_matches[j] += 1;
                if in_joint {
                    joint_matches[i] += 1;
                    joint_matches[j] += 1;
                }
            }
        }
    }
    NeighborhoodCounts {
        history_matches,
        joint_matches,
    }
}

fn checked_patterns(values: &[f64], m: usize, r: f64) -> Result<EmbeddedPatterns> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!(
            "tolerance r must be positive, got {r}"
        )));
    }
    if values.len() <= m + 1 {
        return Err(Error::InsufficientData {
            needed: m + 2,
            got: values.len(),
        });
    }
    embed(values, m)
}

/// Global sample entropy (nats), Euclidean norm.
pub fn sample_entropy(values: &[f64], m: usize, r: f64) -> Result<f64> {
    sample_entropy_with(values, m, r, DistanceNorm::Euclidean)
}

pub fn sample_entropy_with(values: &[f64], m: usize, r: f64, norm: DistanceNorm) -> Result<f64> {
    let patterns = checked_patterns(values, m, r)?;
    let counts = neighborhood_counts(&patterns, r, norm);
    sample_entropy_from_counts(&counts)
}

/// `-ln <p(joint)> + ln <p(history)>`; the common pair-count normalization cancels.
pub fn sample_entropy_from_counts(counts: &NeighborhoodCounts) -> Result<f64> {
    let history: usize = counts.history_matches.iter().sum();
    let joint: usize = counts.joint_matches.iter().sum();
    if history == 0 || joint == 0 {
        return Err(Error::UndefinedEntropy(format!(
            "no matching pattern pairs (history {history}, joint {joint})"
        )));
    }
    Ok(-(joint as f64).ln() + (history as f64).ln())
}

/// Local sample entropy (nats), Euclidean norm.
pub fn local_sample_entropy(values: &[f64], m: usize, r: f64) -> Result<f64> {
    local_sample_entropy_with(values, m, r, DistanceNorm::Euclidean)
}

pub fn local_sample_entropy_with(
    values: &[f64],
    m: usize,
    r: f64,
    norm: DistanceNorm,
) -> Result<f64> {
    let patterns = checked_patterns(values, m, r)?;
    let counts = neighborhood_counts(&patterns, r, norm);
    local_sample_entropy_from_counts(&counts, values.len(), m)
}

/// Averages per-reference conditional probabilities before taking the log.
///
/// A reference whose history has no neighbor besides itself contributes
/// `1 / (N - m + 1)`.
pub fn local_sample_entropy_from_counts(
    counts: &NeighborhoodCounts,
    n: usize,
    m: usize,
) -> Result<f64> {
    let singleton = 1.0 / (n - m + 1) as f64;
    let total: f64 = counts
        .history_matches
        .iter()
        .zip(&counts.joint_matches)
        .map(|(&h, &j)| {
            if h == 0 {
                singleton
            } else {
                j as f64 / h as f64
            }
        })
        .sum();
    let mean = total / counts.references() as f64;
    if mean <= 0.0 {
        return Err(Error::UndefinedEntropy(
            "every conditional probability is zero".into(),
        ));
    }
    Ok(-mean.ln())
}

/// Normalized complexity index: local sample entropy of the unit-variance
/// series with the configured norm (Euclidean by default).
pub fn nci(series: &NormalizedSeries, params: &AnalysisParams) -> Result<f64> {
    local_sample_entropy_with(series, params.m, params.r, params.distance)
}
