//! Surrogate-data test for nonlinearity.
//!
//! An index is computed on the original series and on an ensemble of IAAFT
//! surrogates. NCI is expected to drop under nonlinear dynamics, so it is
//! tested on the lower tail (`NI_o < NI_alpha`, the 100*alpha percentile);
//! IS and GLC are tested on the upper tail (`NI_o > NI_alpha`, the
//! 100*(1-alpha) percentile). The strength of nonlinearity is the signed gap
//! to the surrogate median.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::nci;
use crate::error::{Error, Result};
use crate::glc::{calibrate_with, glc_index, CalibrationCurve};
use crate::rng::{derive_seed, CALIBRATION_STREAM};
use crate::series::{AnalysisParams, NormalizedSeries};
use crate::storage::storage_index;
use crate::surrogates::{make_labeled_ensemble, SurrogateEnsemble};

/// Surrogate failures tolerated before a test is declared invalid.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "NCI")]
    Nci,
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "GLC")]
    Glc,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Nci, Measure::Is, Measure::Glc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nci => "NCI",
            Self::Is => "IS",
            Self::Glc => "GLC",
        }
    }

    pub fn tail(self) -> Tail {
        match self {
            Self::Nci => Tail::Lower,
            Self::Is | Self::Glc => Tail::Upper,
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NCI" => Ok(Self::Nci),
            "IS" => Ok(Self::Is),
            "GLC" => Ok(Self::Glc),
            _ => Err(Error::Parameter(format!("unknown measure '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Lower,
    Upper,
}

/// Outcome of one surrogate test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityResult {
    pub measure: Measure,
    pub ni_original: f64,
    pub surrogate_values: Vec<f64>,
    /// Surrogates on which the estimator failed (excluded from the values).
    pub failed_surrogates: usize,
    pub threshold: f64,
    pub tail: Tail,
    pub rejected: bool,
    pub ni_median: f64,
    pub delta_ni: f64,
    pub alpha: f64,
    pub seed: u64,
}

/// Nearest-rank percentile: the `ceil(p n / 100)`-th smallest value.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Shape("percentile of an empty set".into()));
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::Parameter(format!(
            "percentile must lie in (0, 100), got {p}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against p * n / 100 landing a hair above an integer
    let rank = ((p * n as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Shape("median of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Threshold, rejection flag, surrogate median and delta for one test.
/// Pure in its arguments, so stored results can be re-decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub threshold: f64,
    pub rejected: bool,
    pub median: f64,
    pub delta: f64,
}

pub fn decide(
    measure: Measure,
    ni_original: f64,
    surrogate_values: &[f64],
    alpha: f64,
) -> Result<Decision> {
    let median = median(surrogate_values)?;
    let (threshold, rejected, delta) = match measure.tail() {
        Tail::Lower => {
            let t = percentile(surrogate_values, 100.0 * alpha)?;
            (t, ni_original < t, median - ni_original)
        }
        Tail::Upper => {
            let t = percentile(surrogate_values, 100.0 * (1.0 - alpha))?;
            (t, ni_original > t, ni_original - median)
        }
    };
    Ok(Decision {
        threshold,
        rejected,
        median,
        delta,
    })
}

impl NonlinearityResult {
    /// Recomputes the decision from the stored values.
    pub fn redecide(&self) -> Result<Decision> {
        decide(
            self.measure,
            self.ni_original,
            &self.surrogate_values,
            self.alpha,
        )
    }
}

/// Computes `measure` on one series; GLC needs the calibration curve.
pub fn index_value(
    series: &NormalizedSeries,
    measure: Measure,
    params: &AnalysisParams,
    curve: Option<&CalibrationCurve>,
) -> Result<f64> {
    match measure {
        Measure::Nci => nci(series, params),
        Measure::Is => storage_index(series, params),
        Measure::Glc => {
            let curve =
                curve.ok_or_else(|| Error::Parameter("GLC needs a calibration curve".into()))?;
            glc_index(series, params, curve)
        }
    }
}

/// GLC calibration of a series' own marginal, seeded from the test seed.
pub fn calibration_for(
    series: &NormalizedSeries,
    params: &AnalysisParams,
) -> Result<CalibrationCurve> {
    calibrate_with(
        series,
        params.calibration,
        params.l_max,
        derive_seed(params.seed, CALIBRATION_STREAM),
    )
}

/// Surrogate ensemble of a test, seeded from `params.seed`.
pub fn ensemble_for(
    series: &NormalizedSeries,
    params: &AnalysisParams,
) -> Result<SurrogateEnsemble> {
    make_labeled_ensemble(
        series,
        "series",
        params.n_s,
        params.iaaft_max_iter,
        params.seed,
    )
}

/// Runs the test for `measure` against a prepared ensemble.
///
/// Surrogates share the original's value multiset, so one calibration curve
/// serves the original and every surrogate.
pub fn detect_with(
    series: &NormalizedSeries,
    measure: Measure,
    params: &AnalysisParams,
    ensemble: &SurrogateEnsemble,
    curve: Option<&CalibrationCurve>,
) -> Result<NonlinearityResult> {
    let ni_original = index_value(series, measure, params, curve)?;
    let outcomes: Vec<Option<f64>> = ensemble
        .surrogates
        .par_iter()
        .map(|s| {
            NormalizedSeries::from_normalized(s.clone())
                .and_then(|s| index_value(&s, measure, params, curve))
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();
    let total = outcomes.len();
    let surrogate_values: Vec<f64> = outcomes.into_iter().flatten().collect();
    let failed = total - surrogate_values.len();
    if surrogate_values.is_empty() || failed as f64 >= MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::TestInvalid { failed, total });
    }
    let d = decide(measure, ni_original, &surrogate_values, params.alpha)?;
    Ok(NonlinearityResult {
        measure,
        ni_original,
        surrogate_values,
        failed_surrogates: failed,
        threshold: d.threshold,
        tail: measure.tail(),
        rejected: d.rejected,
        ni_median: d.median,
        delta_ni: d.delta,
        alpha: params.alpha,
        seed: params.seed,
    })
}

/// Surrogate test of one index on a normalized series.
pub fn detect(
    series: &NormalizedSeries,
    measure: Measure,
    params: &AnalysisParams,
) -> Result<NonlinearityResult> {
    params.validate()?;
    let ensemble = ensemble_for(series, params)?;
    let curve = match measure {
        Measure::Glc => Some(calibration_for(series, params)?),
        _ => None,
    };
    detect_with(series, measure, params, &ensemble, curve.as_ref())
}

/// All three tests on one series, sharing one surrogate ensemble and one
/// calibration. Each entry equals what [`detect`] returns for that measure.
pub fn detect_all(
    series: &NormalizedSeries,
    params: &AnalysisParams,
) -> Result<Vec<(Measure, Result<NonlinearityResult>)>> {
    params.validate()?;
    let ensemble = ensemble_for(series, params)?;
    Ok(Measure::ALL
        .iter()
        .map(|&m| {
            let result = match m {
                Measure::Glc => calibration_for(series, params)
                    .and_then(|c| detect_with(series, m, params, &ensemble, Some(&c))),
                _ => detect_with(series, m, params, &ensemble, None),
            };
            (m, result)
        })
        .collect())
}
