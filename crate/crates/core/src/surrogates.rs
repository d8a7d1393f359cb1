//! Fourier-transform (FT) and iteratively refined amplitude-adjusted FT
//! (IAAFT) surrogates.
//!
//! IAAFT surrogates keep the exact value multiset of the original series and
//! approximately its power spectrum. The loop alternates spectrum matching
//! with rank remapping and stops at a rank-order fixed point or after
//! `max_iter` rounds; the amplitude-adjusted candidate is always returned.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, GENERATOR_ID};

pub const MIN_SURROGATE_LEN: usize = 8;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Forward and inverse transforms of one length, shareable across threads.
#[derive(Clone)]
pub struct SpectralPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl SpectralPlan {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    fn forward_real(&self, values: &[f64], buf: &mut Vec<Complex<f64>>) {
        buf.clear();
        buf.extend(values.iter().map(|&v| Complex::new(v, 0.0)));
        self.forward.process(buf);
    }

    fn inverse_real(&self, buf: &mut [Complex<f64>], out: &mut [f64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re * scale;
        }
    }
}

/// `|X_k|^2` for `k = 0..=N/2`.
pub fn periodogram(values: &[f64]) -> Vec<f64> {
    let plan = SpectralPlan::new(values.len());
    let mut buf = Vec::with_capacity(values.len());
    plan.forward_real(values, &mut buf);
    buf[..values.len() / 2 + 1]
        .iter()
        .map(|c| c.norm_sqr())
        .collect()
}

fn check_len(values: &[f64]) -> Result<()> {
    if values.len() < MIN_SURROGATE_LEN {
        return Err(Error::InsufficientData {
            needed: MIN_SURROGATE_LEN,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Phase-randomized surrogate: amplitudes kept, phases of the positive
/// frequencies drawn uniformly on [0, 2pi), conjugate symmetry enforced. The
/// DC and (even lengths) Nyquist bins are left untouched.
pub fn ft_surrogate(values: &[f64], seed: u64) -> Result<Vec<f64>> {
    check_len(values)?;
    let n = values.len();
    let plan = SpectralPlan::new(n);
    let mut rng = rng_from_seed(seed);
    let mut buf = Vec::with_capacity(n);
    plan.forward_real(values, &mut buf);
    for k in 1..=(n - 1) / 2 {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let c = Complex::from_polar(buf[k].norm(), theta);
        buf[k] = c;
        buf[n - k] = c.conj();
    }
    let mut out = vec![0.0; n];
    plan.inverse_real(&mut buf, &mut out);
    Ok(out)
}

/// One IAAFT surrogate and its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct IaaftSurrogate {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn argsort_into(values: &[f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..values.len());
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
}

pub fn iaaft_surrogate(values: &[f64], max_iter: usize, seed: u64) -> Result<IaaftSurrogate> {
    check_len(values)?;
    iaaft_with_plan(values, max_iter, seed, &SpectralPlan::new(values.len()))
}

fn iaaft_with_plan(
    values: &[f64],
    max_iter: usize,
    seed: u64,
    plan: &SpectralPlan,
) -> Result<IaaftSurrogate> {
    if max_iter < 1 {
        return Err(Error::Parameter("max_iter must be >= 1".into()));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut buf = Vec::with_capacity(n);
    plan.forward_real(values, &mut buf);
    let amplitudes: Vec<f64> = buf.iter().map(|c| c.norm()).collect();

    let mut rng = rng_from_seed(seed);
    let mut candidate = values.to_vec();
    candidate.shuffle(&mut rng);

    let mut filtered = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut previous = Vec::with_capacity(n);
    argsort_into(&candidate, &mut previous);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        plan.forward_real(&candidate, &mut buf);
        for (c, &amp) in buf.iter_mut().zip(&amplitudes) {
            let norm = c.norm();
            *c = if norm > 0.0 {
                *c * (amp / norm)
            } else {
                Complex::new(amp, 0.0)
            };
        }
        plan.inverse_real(&mut buf, &mut filtered);

        argsort_into(&filtered, &mut order);
        for (&idx, &v) in order.iter().zip(&sorted) {
            candidate[idx] = v;
        }
        if order == previous {
            converged = true;
            break;
        }
        std::mem::swap(&mut order, &mut previous);
    }
    Ok(IaaftSurrogate {
        values: candidate,
        iterations,
        converged,
    })
}

/// `n_s` IAAFT surrogates of one series; surrogate `i` uses seed
/// `derive_seed(seed, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEnsemble {
    pub original_ref: String,
    pub seed: u64,
    pub max_iter: usize,
    pub generator: String,
    pub iterations_used: Vec<usize>,
    pub converged: Vec<bool>,
    #[serde(skip)]
    pub surrogates: Vec<Vec<f64>>,
}

impl SurrogateEnsemble {
    pub fn len(&self) -> usize {
        self.surrogates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surrogates.is_empty()
    }

    /// Writes `surrogate_NNN.csv` files plus `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let width = self
            .surrogates
            .len()
            .saturating_sub(1)
            .to_string()
            .len()
            .max(3);
        for (i, s) in self.surrogates.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("surrogate_{i:0width$}.csv")))?;
            w.write_record(["value"])?;
            for v in s {
                w.write_record([format!("{v}")])?;
            }
            w.flush()?;
        }
        let manifest = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
        Ok(())
    }
}

pub fn make_ensemble(
    values: &[f64],
    n_s: usize,
    max_iter: usize,
    master_seed: u64,
) -> Result<SurrogateEnsemble> {
    make_labeled_ensemble(values, "series", n_s, max_iter, master_seed)
}

pub fn make_labeled_ensemble(
    values: &[f64],
    label: &str,
    n_s: usize,
    max_iter: usize,
    master_seed: u64,
) -> Result<SurrogateEnsemble> {
    check_len(values)?;
    if n_s < 1 {
        return Err(Error::Parameter("n_s must be >= 1".into()));
    }
    let plan = SpectralPlan::new(values.len());
    let members: Vec<IaaftSurrogate> = (0..n_s)
        .into_par_iter()
        .map(|i| iaaft_with_plan(values, max_iter, derive_seed(master_seed, i as u64), &plan))
        .collect::<Result<_>>()?;

    let mut ensemble = SurrogateEnsemble {
        original_ref: label.to_string(),
        seed: master_seed,
        max_iter,
        generator: GENERATOR_ID.to_string(),
        iterations_used: Vec::with_capacity(n_s),
        converged: Vec::with_capacity(n_s),
        surrogates: Vec::with_capacity(n_s),
    };
    for m in members {
        ensemble.iterations_used.push(m.iterations);
        ensemble.converged.push(m.converged);
        ensemble.surrogates.push(m.values);
    }
    Ok(ensemble)
}

/// `sum |P_surrogate - P_original| / sum P_original` over the periodogram.
pub fn relative_spectrum_mismatch(original: &[f64], surrogate: &[f64]) -> f64 {
    let po = periodogram(original);
    let ps = periodogram(surrogate);
    let diff: f64 = po.iter().zip(&ps).map(|(a, b)| (a - b).abs()).sum();
    diff / po.iter().sum::<f64>()
}
