//! Gaussian linear contrast (GLC).
//!
//! A series that is a static, monotone distortion of a linear Gaussian
//! process has autocorrelations fully determined by the autocorrelations of
//! its gaussianized version through a transfer function `C(C_G)` that depends
//! only on the marginal distribution. The transfer function is estimated by
//! pushing AR1 realizations of the same length through the series' own
//! marginal ([`calibrate`]); GLC is the summed gap between the observed
//! autocorrelations and the ones the transfer function predicts.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::series::{normalize, AnalysisParams, CalibrationSettings, NormalizedSeries};
use crate::synth::ar1_path;

pub const BIN_WIDTH: f64 = 0.01;
pub const BIN_COUNT: usize = 200;
pub const MIN_POPULATED_BINS: usize = 10;
pub const MIN_CALIBRATION_LEN: usize = 50;
const PHI_LIMIT: f64 = 0.99;

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Autocorrelations at lags `1..=l_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocorrProfile {
    pub values: Vec<f64>,
}

impl AutocorrProfile {
    pub fn l_max(&self) -> usize {
        self.values.len()
    }

    /// Value at `lag`; lag 0 is 1 by construction.
    pub fn at(&self, lag: usize) -> f64 {
        if lag == 0 {
            1.0
        } else {
            self.values[lag - 1]
        }
    }
}

fn lagged_products(values: &[f64], lag: usize) -> f64 {
    let n = values.len();
    let s: f64 = values[..n - lag]
        .iter()
        .zip(&values[lag..])
        .map(|(a, b)| a * b)
        .sum();
    s / (n - lag) as f64
}

/// `(1 / (N - l)) * sum s[n] s[n+l]` for `l = 1..=l_max`.
pub fn autocorrelation(values: &[f64], l_max: usize) -> Result<AutocorrProfile> {
    if l_max < 1 {
        return Err(Error::Parameter("l_max must be >= 1".into()));
    }
    if values.len() <= l_max + 1 {
        return Err(Error::InsufficientData {
            needed: l_max + 2,
            got: values.len(),
        });
    }
    Ok(AutocorrProfile {
        values: (1..=l_max).map(|l| lagged_products(values, l)).collect(),
    })
}

/// Stable ranks: `ranks[i]` is the 0-based rank of `values[i]`, ties broken
/// by position.
fn stable_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Standard normal quantiles at `(i - 0.5) / n`, `i = 1..=n`.
pub fn normal_scores(n: usize) -> Vec<f64> {
    let normal = standard_normal();
    (1..=n)
        .map(|i| normal.inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect()
}

/// Rank-based inverse normal transform.
pub fn gaussianize(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let scores = normal_scores(values.len());
    let mut out = vec![0.0; values.len()];
    for (rank, idx) in stable_order(values).into_iter().enumerate() {
        out[idx] = scores[rank];
    }
    Ok(out)
}

/// Replaces the sample of rank `i` by the `i`-th smallest target value.
pub fn remap_to_marginal(gaussian: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if gaussian.len() != target.len() {
        return Err(Error::Shape(format!(
            "series has {} samples but target multiset has {}",
            gaussian.len(),
            target.len()
        )));
    }
    let mut sorted = target.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0.0; gaussian.len()];
    remap_sorted_into(gaussian, &sorted, &mut out, &mut Vec::new());
    Ok(out)
}

fn remap_sorted_into(source: &[f64], sorted: &[f64], out: &mut [f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..source.len());
    order.sort_by(|&a, &b| source[a].total_cmp(&source[b]));
    for (&idx, &v) in order.iter().zip(sorted) {
        out[idx] = v;
    }
}

fn bin_center(i: usize) -> f64 {
    (i as f64 + 0.5) * BIN_WIDTH - 1.0
}

fn bin_of(c: f64) -> usize {
    (((c + 1.0) / BIN_WIDTH).floor().max(0.0) as usize).min(BIN_COUNT - 1)
}

/// Tabulated transfer function `C(C_G)` on 0.01-wide bins over (-1, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCurve {
    pub bin_centers: Vec<f64>,
    /// Monotone transfer value per bin; `None` outside the populated range.
    pub c_values: Vec<Option<f64>>,
    /// Plain mean of the deposited images per bin.
    pub raw_means: Vec<Option<f64>>,
    pub support_counts: Vec<usize>,
    /// Length of the series the curve was calibrated for.
    pub series_len: usize,
    pub seed: u64,
    pub settings: CalibrationSettings,
}

impl CalibrationCurve {
    pub fn populated_bins(&self) -> impl Iterator<Item = usize> + '_ {
        (0..BIN_COUNT).filter(|&i| self.support_counts[i] > 0)
    }

    fn populated_range(&self) -> (usize, usize) {
        let first = self.c_values.iter().position(Option::is_some).unwrap_or(0);
        let last = self.c_values.iter().rposition(Option::is_some).unwrap_or(0);
        (first, last)
    }

    /// Gaussian-correlation interval on which [`evaluate`](Self::evaluate) is defined.
    pub fn support(&self) -> (f64, f64) {
        let (first, last) = self.populated_range();
        (
            bin_center(first) - BIN_WIDTH / 2.0,
            bin_center(last) + BIN_WIDTH / 2.0,
        )
    }

    /// Linear interpolation between bin centers. The outer half bins use the
    /// adjacent segment; anything beyond is an extrapolation error.
    pub fn evaluate(&self, c_g: f64) -> Result<f64> {
        let (low, high) = self.support();
        if !(c_g >= low && c_g <= high) {
            return Err(Error::Extrapolation {
                value: c_g,
                low,
                high,
            });
        }
        let (first, last) = self.populated_range();
        let left =
            (((c_g - bin_center(0)) / BIN_WIDTH).floor().max(0.0) as usize).clamp(first, last - 1);
        let (x0, x1) = (bin_center(left), bin_center(left + 1));
        let (y0, y1) = (
            self.c_values[left].expect("interior bin"),
            self.c_values[left + 1].expect("interior bin"),
        );
        Ok(y0 + (y1 - y0) * (c_g - x0) / (x1 - x0))
    }

    /// Two-column `bin_center<TAB>c_value` table of the supported bins.
    pub fn to_table(&self) -> String {
        let mut out = String::from("bin_center\tc_value\n");
        for (c, v) in self.bin_centers.iter().zip(&self.c_values) {
            if let Some(v) = v {
                out.push_str(&format!("{c:.3}\t{v}\n"));
            }
        }
        out
    }
}

/// Weighted pool-adjacent-violators fit (non-decreasing).
fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (v2, w2, n2) = blocks[blocks.len() - 1];
            let (v1, w1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((v1 * w1 + v2 * w2) / w, w, n1 + n2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, n)| std::iter::repeat_n(v, n))
        .collect()
}

/// AR1 coefficient grid, uniform over [-0.99, 0.99].
pub fn phi_grid(n_phi: usize) -> Vec<f64> {
    (0..n_phi)
        .map(|i| -PHI_LIMIT + 2.0 * PHI_LIMIT * i as f64 / (n_phi - 1) as f64)
        .collect()
}

/// Calibrates `C(C_G)` for the marginal of `target`, depositing lags
/// `1..=l_max` of every realization.
pub fn calibrate(
    target: &[f64],
    n_phi: usize,
    reps: usize,
    l_max: usize,
    seed: u64,
) -> Result<CalibrationCurve> {
    calibrate_with(target, CalibrationSettings { n_phi, reps }, l_max, seed)
}

/// Monte-Carlo calibration of the transfer function.
///
/// Each `(phi, repetition)` cell draws a stationary AR1 path of the target's
/// length from its own stream `derive_seed(seed, cell)`, remaps it onto the
/// standardized target values, and deposits one `(C_G, C)` pair for each lag
/// in `1..=l_max`. Only the lags the index uses are deposited: the finite-sample
/// bias of the autocorrelation depends on the whole path, so pairs from
/// distant lags of more persistent paths would not match the index. Bin
/// means are made monotone with a support-weighted isotonic fit and empty
/// interior bins are filled by linear interpolation.
pub fn calibrate_with(
    target: &[f64],
    settings: CalibrationSettings,
    l_max: usize,
    seed: u64,
) -> Result<CalibrationCurve> {
    let n = target.len();
    if n < MIN_CALIBRATION_LEN {
        return Err(Error::InsufficientData {
            needed: MIN_CALIBRATION_LEN,
            got: n,
        });
    }
    if settings.n_phi < 2 || settings.reps < 1 || l_max < 1 {
        return Err(Error::Parameter(
            "calibration needs n_phi >= 2, reps >= 1, l_max >= 1".into(),
        ));
    }
    let lags = l_max.min(n - 2);
    let standardized = normalize(target)?;
    let mut sorted = standardized.into_inner();
    sorted.sort_by(f64::total_cmp);

    let scores = normalize(&normal_scores(n))?.into_inner();
    let phis = phi_grid(settings.n_phi);
    let cells = settings.n_phi * settings.reps;
    let deposits: Vec<Vec<(usize, f64)>> = (0..cells)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(n), vec![0.0; n], Vec::with_capacity(n)),
            |(path, remapped, order), cell| {
                let phi = phis[cell / settings.reps];
                let mut rng = rng_from_seed(derive_seed(seed, cell as u64));
                ar1_path(&mut rng, phi, n, path);
                remap_sorted_into(path, &sorted, remapped, order);
                // Gaussian coordinate measured as in use: on the gaussianized path
                for (&idx, &g) in order.iter().zip(&scores) {
                    path[idx] = g;
                }
                (1..=lags)
                    .map(|l| {
                        (
                            bin_of(lagged_products(path, l)),
                            lagged_products(remapped, l),
                        )
                    })
                    .collect()
            },
        )
        .collect();

    let mut sums = vec![0.0; BIN_COUNT];
    let mut counts = vec![0usize; BIN_COUNT];
    for (bin, c) in deposits.into_iter().flatten() {
        sums[bin] += c;
        counts[bin] += 1;
    }
    finalize_curve(sums, counts, n, seed, settings)
}

fn finalize_curve(
    sums: Vec<f64>,
    counts: Vec<usize>,
    series_len: usize,
    seed: u64,
    settings: CalibrationSettings,
) -> Result<CalibrationCurve> {
    let raw_means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let populated: Vec<usize> = (0..BIN_COUNT).filter(|&i| counts[i] > 0).collect();
    if populated.len() < MIN_POPULATED_BINS {
        return Err(Error::CalibrationFailure {
            populated: populated.len(),
            required: MIN_POPULATED_BINS,
        });
    }

    let means: Vec<f64> = populated.iter().map(|&i| raw_means[i].unwrap()).collect();
    let weights: Vec<f64> = populated.iter().map(|&i| counts[i] as f64).collect();
    let fitted = isotonic(&means, &weights);

    let mut c_values = vec![None; BIN_COUNT];
    for (&i, &v) in populated.iter().zip(&fitted) {
        c_values[i] = Some(v);
    }
    for pair in populated.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ya, yb) = (c_values[a].unwrap(), c_values[b].unwrap());
        for (i, slot) in c_values.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (i - a) as f64 / (b - a) as f64;
            *slot = Some(ya + t * (yb - ya));
        }
    }

    Ok(CalibrationCurve {
        bin_centers: (0..BIN_COUNT).map(bin_center).collect(),
        c_values,
        raw_means,
        support_counts: counts,
        series_len,
        seed,
        settings,
    })
}

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)`.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PI_M4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 3e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const QUADRATURE_NODES: usize = 64;

/// Transfer value `C(c_g)` by Gauss-Hermite quadrature of the bivariate
/// normal integral, for a marginal given by its quantile function.
///
/// The map `F^-1(Phi(x))` is standardized with the same rule, so the result
/// is a correlation whatever the location and scale of the marginal.
pub fn c_of_cg_integral<F>(quantile: F, c_g: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(c_g.abs() < 1.0) {
        return Err(Error::Domain(format!("c_g must lie in (-1, 1), got {c_g}")));
    }
    let normal = standard_normal();
    let upper = 1.0 - f64::EPSILON / 2.0;
    let transfer = |x: f64| -> Result<f64> {
        let u = normal.cdf(x).clamp(f64::MIN_POSITIVE, upper);
        let v = quantile(u);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Integration(format!("quantile({u}) = {v}")))
        }
    };

    let (t, wt) = gauss_hermite(QUADRATURE_NODES);
    let nodes: Vec<f64> = t.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights: Vec<f64> = wt.iter().map(|v| v / std::f64::consts::PI.sqrt()).collect();
    let g: Vec<f64> = nodes.iter().map(|&x| transfer(x)).collect::<Result<_>>()?;

    let mean: f64 = g.iter().zip(&weights).map(|(v, w)| v * w).sum();
    let var: f64 = g
        .iter()
        .zip(&weights)
        .map(|(v, w)| (v - mean) * (v - mean) * w)
        .sum();
    if !(var > 0.0) {
        return Err(Error::Integration("marginal has zero variance".into()));
    }
    let s = (1.0 - c_g * c_g).sqrt();
    let mut cross = 0.0;
    for (i, &x) in nodes.iter().enumerate() {
        let mut inner = 0.0;
        for (j, &w) in nodes.iter().enumerate() {
            inner += weights[j] * (transfer(c_g * x + s * w)? - mean);
        }
        cross += weights[i] * (g[i] - mean) * inner;
    }
    Ok(cross / var)
}

/// Per-lag ingredients of the GLC index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlcComponents {
    pub observed: Vec<f64>,
    pub gaussian: Vec<f64>,
    pub linear: Vec<f64>,
    pub index: f64,
}

pub fn glc_components(
    series: &NormalizedSeries,
    l_max: usize,
    curve: &CalibrationCurve,
) -> Result<GlcComponents> {
    if curve.series_len != series.len() {
        return Err(Error::Shape(format!(
            "curve calibrated for {} samples, series has {}",
            curve.series_len,
            series.len()
        )));
    }
    let observed = autocorrelation(series, l_max)?.values;
    let gaussian = autocorrelation(&normalize(&gaussianize(series)?)?, l_max)?.values;
    let linear: Vec<f64> = gaussian
        .iter()
        .map(|&c| curve.evaluate(c))
        .collect::<Result<_>>()?;
    let index = observed
        .iter()
        .zip(&linear)
        .map(|(o, l)| (o - l).abs())
        .sum();
    Ok(GlcComponents {
        observed,
        gaussian,
        linear,
        index,
    })
}

/// `sum_{l=1}^{l_max} |C_obs(l) - C(C_G'(l))|`.
pub fn glc_index(
    series: &NormalizedSeries,
    params: &AnalysisParams,
    curve: &CalibrationCurve,
) -> Result<f64> {
    Ok(glc_components(series, params.l_max, curve)?.index)
}
