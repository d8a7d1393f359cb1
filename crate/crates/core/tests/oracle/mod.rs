//! Direct O(N^2) reference implementations of the estimators. They share no
//! code with the library: every pair of patterns is compared explicitly.

#![allow(dead_code)]

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// psi(n) = -gamma + sum_{i<n} 1/i for integer n >= 1.
pub fn digamma_int(n: usize) -> f64 {
    -EULER_GAMMA + (1..n).map(|i| 1.0 / i as f64).sum::<f64>()
}

/// Pattern `i`: `[s[i+m-1], ..., s[i]]`, optionally followed by the target `s[i+m]`.
fn pattern(s: &[f64], i: usize, m: usize, with_target: bool) -> Vec<f64> {
    let mut p: Vec<f64> = (0..m).map(|lag| s[i + m - 1 - lag]).collect();
    if with_target {
        p.push(s[i + m]);
    }
    p
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cheb(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Per-reference counts of other patterns within `r` (history, joint).
pub fn match_counts(s: &[f64], m: usize, r: f64) -> (Vec<usize>, Vec<usize>) {
    let n = s.len() - m;
    let mut hist = vec![0; n];
    let mut joint = vec![0; n];
    for i in 0..n {
        let hi = pattern(s, i, m, false);
        let ji = pattern(s, i, m, true);
        for j in 0..n {
            if i == j {
                continue;
            }
            if euclid(&hi, &pattern(s, j, m, false)) <= r {
                hist[i] += 1;
            }
            if euclid(&ji, &pattern(s, j, m, true)) <= r {
                joint[i] += 1;
            }
        }
    }
    (hist, joint)
}

pub fn sample_entropy(s: &[f64], m: usize, r: f64) -> f64 {
    let (hist, joint) = match_counts(s, m, r);
    let h: usize = hist.iter().sum();
    let j: usize = joint.iter().sum();
    -(j as f64).ln() + (h as f64).ln()
}

pub fn local_sample_entropy(s: &[f64], m: usize, r: f64) -> f64 {
    let (hist, joint) = match_counts(s, m, r);
    let fallback = 1.0 / (s.len() - m + 1) as f64;
    let mean = hist
        .iter()
        .zip(&joint)
        .map(|(&h, &j)| {
            if h == 0 {
                fallback
            } else {
                j as f64 / h as f64
            }
        })
        .sum::<f64>()
        / hist.len() as f64;
    -mean.ln()
}

/// Nearest-neighbor information storage with the maximum norm; marginal
/// counts are points strictly closer than the k-th joint neighbor, the
/// reference itself included.
pub fn information_storage(s: &[f64], m: usize, k: usize) -> f64 {
    let n = s.len() - m;
    let mut sum_h = 0.0;
    let mut sum_t = 0.0;
    for i in 0..n {
        let ji = pattern(s, i, m, true);
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| cheb(&ji, &pattern(s, j, m, true)))
            .collect();
        d.sort_by(f64::total_cmp);
        let eps = d[k - 1];
        let hi = pattern(s, i, m, false);
        let nh = (0..n)
            .filter(|&j| cheb(&hi, &pattern(s, j, m, false)) < eps)
            .count();
        let nt = (0..n)
            .filter(|&j| (s[i + m] - s[j + m]).abs() < eps)
            .count();
        sum_h += digamma_int(nh);
        sum_t += digamma_int(nt);
    }
    digamma_int(n) + digamma_int(k) - sum_h / n as f64 - sum_t / n as f64
}
