//! Series containers, preprocessing and delay embedding.
//!
//! The pipeline applied to every RR recording is
//! `window -> detrend_highpass -> normalize`; all estimators consume the
//! resulting [`NormalizedSeries`] through [`embed`], which fixes the
//! most-recent-first ordering of history vectors for the whole crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on mean and standard deviation accepted by [`NormalizedSeries::from_normalized`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

/// RR intervals in milliseconds, as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub label: String,
    values: Vec<f64>,
}

impl RawSeries {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("series has no samples".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v <= 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "RR interval #{} is {v}; intervals must be finite and positive",
                i + 1
            )));
        }
        Ok(Self {
            label: label.into(),
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Zero-mean, unit-variance (divisor N-1) series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedSeries(Vec<f64>);

impl NormalizedSeries {
    /// Wraps values that are already standardized, e.g. a permutation of a
    /// normalized series. Fails if mean or standard deviation are off by more
    /// than [`NORMALIZATION_TOLERANCE`].
    pub fn from_normalized(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: values.len(),
            });
        }
        let (mean, sd) = mean_and_sd(&values);
        if mean.abs() > NORMALIZATION_TOLERANCE || (sd - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "series is not normalized (mean {mean:e}, sd {sd})"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for NormalizedSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Distance used by the kernel (sample entropy) estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceNorm {
    #[default]
    Euclidean,
    Chebyshev,
}

/// Which sample count enters the leading digamma term of information storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StorageSampleCount {
    /// Number of embedded (history, target) points, N - m.
    #[default]
    Embedded,
    /// Full series length N.
    SeriesLength,
}

/// Monte-Carlo settings of the GLC transfer-function calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Number of AR1 coefficients on the uniform grid over (-0.99, 0.99).
    pub n_phi: usize,
    /// Realizations per coefficient.
    pub reps: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n_phi: 199,
            reps: 25,
        }
    }
}

/// Estimator and test parameters shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    /// Embedding order (past-history length).
    pub m: usize,
    /// Tolerance in units of the series standard deviation.
    pub r: f64,
    /// Neighbor count of the information-storage estimator.
    pub k: usize,
    /// Largest autocorrelation lag entering GLC.
    pub l_max: usize,
    /// Surrogates per test.
    pub n_s: usize,
    pub alpha: f64,
    pub seed: u64,
    pub iaaft_max_iter: usize,
    pub calibration: CalibrationSettings,
    pub distance: DistanceNorm,
    pub storage_count: StorageSampleCount,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            m: 2,
            r: 0.2,
            k: 10,
            l_max: 2,
            n_s: 100,
            alpha: 0.05,
            seed: 0,
            iaaft_max_iter: 1000,
            calibration: CalibrationSettings::default(),
            distance: DistanceNorm::Euclidean,
            storage_count: StorageSampleCount::Embedded,
        }
    }
}

impl AnalysisParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Parameter(msg));
        if self.m < 1 {
            return fail("m must be >= 1".into());
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return fail(format!("r must be positive, got {}", self.r));
        }
        if self.k < 1 {
            return fail("k must be >= 1".into());
        }
        if self.l_max < 1 {
            return fail("l_max must be >= 1".into());
        }
        if self.n_s < 20 {
            return fail(format!("n_s must be >= 20, got {}", self.n_s));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return fail(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if self.iaaft_max_iter < 1 {
            return fail("iaaft_max_iter must be >= 1".into());
        }
        let cal = &self.calibration;
        if cal.n_phi < 2 || cal.reps < 1 {
            return fail("calibration needs n_phi >= 2 and reps >= 1".into());
        }
        Ok(())
    }
}

/// Aligned (history, target) pairs of a delay embedding.
///
/// `history(i)` is `[s[i+m-1], s[i+m-2], ..., s[i]]` (most recent first) and
/// `target(i)` is `s[i+m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPatterns {
    m: usize,
    histories: Vec<f64>,
    targets: Vec<f64>,
}

impl EmbeddedPatterns {
    pub fn order(&self) -> usize {
        self.m
    }

    pub fn count(&self) -> usize {
        self.targets.len()
    }

    pub fn history(&self, i: usize) -> &[f64] {
        &self.histories[i * self.m..(i + 1) * self.m]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn histories(&self) -> impl Iterator<Item = &[f64]> {
        self.histories.chunks_exact(self.m)
    }
}

pub(crate) fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Subtracts the mean and divides by the sample standard deviation.
pub fn normalize(values: &[f64]) -> Result<NormalizedSeries> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    let (mean, sd) = mean_and_sd(values);
    if !(sd > 0.0) || sd <= mean.abs() * f64::EPSILON * 4.0 {
        return Err(Error::DegenerateInput("series has zero variance".into()));
    }
    Ok(NormalizedSeries(
        values.iter().map(|v| (v - mean) / sd).collect(),
    ))
}

/// Contiguous `length`-sample window starting at `start`.
pub fn window(values: &[f64], start: usize, length: usize) -> Result<&[f64]> {
    let end = start.checked_add(length).ok_or(Error::Bounds {
        start,
        end: usize::MAX,
        len: values.len(),
    })?;
    if end > values.len() {
        return Err(Error::Bounds {
            start,
            end,
            len: values.len(),
        });
    }
    Ok(&values[start..end])
}

/// Delay embedding of order `m`.
pub fn embed(values: &[f64], m: usize) -> Result<EmbeddedPatterns> {
    if m == 0 {
        return Err(Error::Parameter("embedding order must be >= 1".into()));
    }
    if values.len() <= m {
        return Err(Error::InsufficientData {
            needed: m + 1,
            got: values.len(),
        });
    }
    let count = values.len() - m;
    let mut histories = Vec::with_capacity(count * m);
    for i in 0..count {
        histories.extend((0..m).map(|lag| values[i + m - 1 - lag]));
    }
    Ok(EmbeddedPatterns {
        m,
        histories,
        targets: values[m..].to_vec(),
    })
}

const MIN_DETREND_LEN: usize = 8;
const FILTFILT_PAD: usize = 9;

/// Second-order Butterworth high-pass section (bilinear transform).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butterworth_highpass(cutoff: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff).tan();
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k * k);
        Self {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - sqrt2 * k + k * k) * norm],
        }
    }

    /// Transposed direct form II, state initialized to the steady state of a
    /// constant input equal to the first sample.
    fn filter_in_place(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = x[0];
        // steady state of a constant input; y_ss is zero for a high-pass
        let y_ss = (b0 + b1 + b2) / (1.0 + a1 + a2) * x0;
        let mut z2 = b2 * x0 - a2 * y_ss;
        let mut z1 = b1 * x0 - a1 * y_ss + z2;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase high-pass detrending.
///
/// A second-order Butterworth high-pass with corner `cutoff_fraction`
/// (cycles per beat) is run forward and backward over an odd-extended copy of
/// the series, then the residual mean is removed.
pub fn detrend_highpass(values: &[f64], cutoff_fraction: f64) -> Result<Vec<f64>> {
    if values.len() < MIN_DETREND_LEN {
        return Err(Error::InsufficientData {
            needed: MIN_DETREND_LEN,
            got: values.len(),
        });
    }
    if !(cutoff_fraction > 0.0 && cutoff_fraction < 0.5) {
        return Err(Error::Parameter(format!(
            "cutoff fraction must lie in (0, 0.5), got {cutoff_fraction}"
        )));
    }
    let n = values.len();
    let pad = FILTFILT_PAD.min(n - 1);
    let first = values[0];
    let last = values[n - 1];
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - values[i]));
    ext.extend_from_slice(values);
    ext.extend((1..=pad).map(|i| 2.0 * last - values[n - 1 - i]));

    let section = Biquad::butterworth_highpass(cutoff_fraction);
    section.filter_in_place(&mut ext);
    ext.reverse();
    section.filter_in_place(&mut ext);
    ext.reverse();

    let mut out = ext[pad..pad + n].to_vec();
    let mean = out.iter().sum::<f64>() / n as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    Ok(out)
}
