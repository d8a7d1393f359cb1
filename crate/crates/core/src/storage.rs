//! Information storage: mutual information between the present sample and
//! its m-sample past, estimated with a k-nearest-neighbor search in the joint
//! space and range searches projected onto the marginal spaces.
//!
//! With `d_n` the maximum-norm distance from joint point `n` to its k-th
//! nearest neighbor (`epsilon_n = 2 d_n`), the estimate is
//!
//! ```text
//! IS = psi(N') + psi(k) - <psi(n_history)> - <psi(n_target)>
//! ```
//!
//! where the range counts are the points strictly closer than `d_n` in the
//! respective subspace, reference point included.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, JITTER_STREAM};
use crate::series::{
    embed, AnalysisParams, EmbeddedPatterns, NormalizedSeries, StorageSampleCount,
};

/// Amplitude (in units of the series standard deviation) of the tie-breaking jitter.
pub const TIE_JITTER: f64 = 1e-10;
const JITTER_SEED: u64 = 0x1A5E_ED00;

/// Digamma function for positive arguments.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::digamma(x))
}

// ψ on the positive integers, where every call of this module lands.
fn digamma_int(n: usize) -> f64 {
    statrs::function::gamma::digamma(n as f64)
}

/// Neighbor-search output for every embedded point.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnQueryResult {
    /// Twice the maximum-norm distance to the k-th nearest joint neighbor.
    pub epsilon: Vec<f64>,
    /// Points with history distance `< epsilon / 2`, reference included.
    pub n_history: Vec<usize>,
    /// Points with target distance `< epsilon / 2`, reference included.
    pub n_target: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StorageOptions {
    pub sample_count: StorageSampleCount,
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Bounded max-heap holding the k smallest distances seen so far.
struct KSmallest {
    k: usize,
    items: Vec<f64>,
}

impl KSmallest {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst(&self) -> f64 {
        self.items[0]
    }

    fn push(&mut self, d: f64) {
        if self.items.len() < self.k {
            self.items.push(d);
            let mut i = self.items.len() - 1;
            while i > 0 {
                let parent = (i - 1) / 2;
                if self.items[parent] >= self.items[i] {
                    break;
                }
                self.items.swap(parent, i);
                i = parent;
            }
        } else if d < self.items[0] {
            self.items[0] = d;
            let n = self.items.len();
            let mut i = 0;
            loop {
                let (l, r) = (2 * i + 1, 2 * i + 2);
                let mut largest = i;
                if l < n && self.items[l] > self.items[largest] {
                    largest = l;
                }
                if r < n && self.items[r] > self.items[largest] {
                    largest = r;
                }
                if largest == i {
                    break;
                }
                self.items.swap(i, largest);
                i = largest;
            }
        }
    }
}

/// k-th neighbor distances and projected range counts.
///
/// Points are sorted by target value. The joint distance is bounded below by
/// the target distance, so the k-nearest search expands outward from each
/// reference and stops once the target gap reaches the current k-th distance.
/// History counts use a second ordering by the most recent history sample.
pub fn knn_query(patterns: &EmbeddedPatterns, k: usize) -> Result<KnnQueryResult> {
    let count = patterns.count();
    if count <= k {
        return Err(Error::InsufficientData {
            needed: k + 1,
            got: count,
        });
    }
    let targets = patterns.targets();

    let mut by_target: Vec<usize> = (0..count).collect();
    by_target.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    let sorted_t: Vec<f64> = by_target.iter().map(|&i| targets[i]).collect();

    let mut by_history: Vec<usize> = (0..count).collect();
    by_history.sort_by(|&a, &b| patterns.history(a)[0].total_cmp(&patterns.history(b)[0]));
    let sorted_h0: Vec<f64> = by_history.iter().map(|&i| patterns.history(i)[0]).collect();

    let mut epsilon = vec![0.0; count];
    let mut n_history = vec![0usize; count];
    let mut n_target = vec![0usize; count];
    let mut heap = KSmallest::new(k);

    for (pos, &i) in by_target.iter().enumerate() {
        let ti = targets[i];
        let hi = patterns.history(i);
        heap.items.clear();
        let (mut lo, mut up) = (pos, pos + 1);
        loop {
            let left = (lo > 0).then(|| ti - sorted_t[lo - 1]);
            let right = (up < count).then(|| sorted_t[up] - ti);
            let (gap, take_left) = match (left, right) {
                (None, None) => break,
                (Some(g), None) => (g, true),
                (None, Some(g)) => (g, false),
                (Some(l), Some(r)) => (l.min(r), l <= r),
            };
            if heap.full() && gap >= heap.worst() {
                break;
            }
            let j = if take_left {
                lo -= 1;
                by_target[lo]
            } else {
                up += 1;
                by_target[up - 1]
            };
            heap.push(max_dist(hi, patterns.history(j)).max((ti - targets[j]).abs()));
        }
        let d = heap.worst();
        epsilon[i] = 2.0 * d;

        // target range count: |t_j - t_i| < d, reference included
        let below = sorted_t[..pos].partition_point(|&t| !(ti - t < d));
        let above = pos + 1 + sorted_t[pos + 1..].partition_point(|&t| t - ti < d);
        n_target[i] = above - below;
    }

    for (pos, &i) in by_history.iter().enumerate() {
        let hi = patterns.history(i);
        let d = epsilon[i] / 2.0;
        let h0 = hi[0];
        let below = sorted_h0[..pos].partition_point(|&v| !(h0 - v < d));
        let above = pos + 1 + sorted_h0[pos + 1..].partition_point(|&v| v - h0 < d);
        let mut within = 1;
        for &j in by_history[below..pos]
            .iter()
            .chain(&by_history[pos + 1..above])
        {
            if max_dist(hi, patterns.history(j)) < d {
                within += 1;
            }
        }
        n_history[i] = within;
    }

    Ok(KnnQueryResult {
        epsilon,
        n_history,
        n_target,
    })
}

/// Combines neighbor counts into the storage estimate.
pub fn storage_from_counts(query: &KnnQueryResult, k: usize, sample_count: usize) -> f64 {
    let points = query.n_target.len() as f64;
    let history: f64 = query.n_history.iter().map(|&c| digamma_int(c.max(1))).sum();
    let target: f64 = query.n_target.iter().map(|&c| digamma_int(c.max(1))).sum();
    digamma_int(sample_count) + digamma_int(k) - history / points - target / points
}

/// Information storage (nats) with `N' = N - m` in the leading digamma term.
pub fn information_storage(values: &[f64], m: usize, k: usize) -> Result<f64> {
    information_storage_with(values, m, k, StorageOptions::default())
}

pub fn information_storage_with(
    values: &[f64],
    m: usize,
    k: usize,
    options: StorageOptions,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if values.len() < m + k + 1 {
        return Err(Error::InsufficientData {
            needed: m + k + 1,
            got: values.len(),
        });
    }
    let mut patterns = embed(values, m)?;
    let mut query = knn_query(&patterns, k)?;
    if query.epsilon.contains(&0.0) {
        let jittered = jitter(values);
        patterns = embed(&jittered, m)?;
        query = knn_query(&patterns, k)?;
    }
    let sample_count = match options.sample_count {
        StorageSampleCount::Embedded => patterns.count(),
        StorageSampleCount::SeriesLength => values.len(),
    };
    Ok(storage_from_counts(&query, k, sample_count))
}

/// Storage of a normalized series under the analysis parameters.
pub fn storage_index(series: &NormalizedSeries, params: &AnalysisParams) -> Result<f64> {
    information_storage_with(
        series,
        params.m,
        params.k,
        StorageOptions {
            sample_count: params.storage_count,
        },
    )
}

fn jitter(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let amplitude = TIE_JITTER * if sd > 0.0 { sd } else { 1.0 };
    let mut rng = rng_from_seed(derive_seed(JITTER_SEED, JITTER_STREAM));
    values
        .iter()
        .map(|v| v + amplitude * (rng.random::<f64>() - 0.5))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::normalize;
    use crate::synth::{generate, ProcessSpec};

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_reference_values() {
        assert!((digamma(1.0).unwrap() + 0.577_215_664_9).abs() < 1e-10);
        assert!((digamma(2.0).unwrap() - 0.422_784_335_1).abs() < 1e-10);
        assert!((digamma(10.0).unwrap() - 2.251_752_589_1).abs() < 1e-10);
    }

    #[test]
    fn digamma_matches_harmonic_numbers() {
        let mut harmonic = 0.0;
        for n in 1..200usize {
            let expected = harmonic - EULER_GAMMA;
            assert!(
                (digamma(n as f64).unwrap() - expected).abs() < 1e-10,
                "n = {n}"
            );
            harmonic += 1.0 / n as f64;
        }
    }

    #[test]
    fn digamma_recurrence() {
        for x in [0.1, 0.5, 1.3, 4.7, 11.9, 12.1, 57.25] {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            assert!((lhs - rhs).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn digamma_domain() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn counts_are_at_least_k() {
        let x = generate(&ProcessSpec::ar1(0.5, 300, 4)).unwrap();
        let p = embed(&x, 2).unwrap();
        let q = knn_query(&p, 10).unwrap();
        assert!(q.epsilon.iter().all(|&e| e > 0.0));
        assert!(q.n_history.iter().all(|&c| c >= 10));
        assert!(q.n_target.iter().all(|&c| c >= 10));
    }

    #[test]
    fn duplicated_patterns_do_not_crash() {
        // quantized series with many exact duplicates
        let raw: Vec<f64> = (0..300).map(|i| ((i * 7919) % 5) as f64).collect();
        let s = normalize(&raw).unwrap();
        let v = information_storage(&s, 2, 10).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn affine_maps_leave_storage_bit_identical() {
        let x = generate(&ProcessSpec::ar1(0.6, 300, 8)).unwrap();
        let y: Vec<f64> = x.iter().map(|v| 812.0 + 45.5 * v).collect();
        let a = information_storage(&normalize(&x).unwrap(), 2, 10).unwrap();
        let b = information_storage(&normalize(&y).unwrap(), 2, 10).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn series_length_flag_shifts_by_digamma_difference() {
        let x = normalize(&generate(&ProcessSpec::ar1(0.3, 300, 1)).unwrap()).unwrap();
        let embedded = information_storage(&x, 2, 10).unwrap();
        let full = information_storage_with(
            &x,
            2,
            10,
            StorageOptions {
                sample_count: StorageSampleCount::SeriesLength,
            },
        )
        .unwrap();
        let shift = digamma(300.0).unwrap() - digamma(298.0).unwrap();
        assert!((full - embedded - shift).abs() < 1e-12);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            information_storage(&x, 2, 10),
            Err(Error::InsufficientData { .. })
        ));
    }
}
