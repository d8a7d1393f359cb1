//! Seeded synthetic processes used as ground truth for the estimators.
//!
//! Every generator returns a standardized series (zero mean, unit sample
//! variance) and is a pure function of its [`ProcessSpec`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::series::normalize;

pub const MIN_LENGTH: usize = 50;
pub const BILINEAR_BURN_IN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticTransform {
    Square,
    Cube,
    Exp,
}

impl StaticTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Square => x * x,
            Self::Cube => x * x * x,
            Self::Exp => x.exp(),
        }
    }

    pub fn is_monotone(self) -> bool {
        !matches!(self, Self::Square)
    }
}

impl std::str::FromStr for StaticTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Self::Square),
            "cube" => Ok(Self::Cube),
            "exp" => Ok(Self::Exp),
            other => Err(Error::Parameter(format!("unknown transform '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    WhiteGaussian,
    /// `z[n] = phi * z[n-1] + eta[n]`, started from the stationary law.
    Ar1 {
        phi: f64,
    },
    /// Pointwise transform of an AR1 base series.
    StaticTransform {
        phi: f64,
        transform: StaticTransform,
    },
    /// `x[n] = a * x[n-1] + b * x[n-1] * eta[n-1] + eta[n]`.
    Bilinear {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    pub n: usize,
    pub seed: u64,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }

    pub fn white_gaussian(n: usize, seed: u64) -> Self {
        Self::new(ProcessKind::WhiteGaussian, n, seed)
    }

    pub fn ar1(phi: f64, n: usize, seed: u64) -> Self {
        Self::new(ProcessKind::Ar1 { phi }, n, seed)
    }

    pub fn bilinear(a: f64, b: f64, n: usize, seed: u64) -> Self {
        Self::new(ProcessKind::Bilinear { a, b }, n, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_LENGTH {
            return Err(Error::Parameter(format!(
                "process length must be >= {MIN_LENGTH}, got {}",
                self.n
            )));
        }
        match self.kind {
            ProcessKind::WhiteGaussian => Ok(()),
            ProcessKind::Ar1 { phi } | ProcessKind::StaticTransform { phi, .. } => {
                if phi.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("AR1 needs |phi| < 1, got {phi}")))
                }
            }
            ProcessKind::Bilinear { a, b } => {
                if a.abs() >= 1.0 || a * a + b * b >= 1.0 {
                    Err(Error::Parameter(format!(
                        "bilinear process with a = {a}, b = {b} is not stationary"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Stationary AR1 path (not standardized).
pub(crate) fn ar1_path<R: Rng>(rng: &mut R, phi: f64, n: usize, out: &mut Vec<f64>) {
    out.clear();
    let first: f64 = rng.sample(StandardNormal);
    let mut z = first / (1.0 - phi * phi).sqrt();
    out.push(z);
    for _ in 1..n {
        let eta: f64 = rng.sample(StandardNormal);
        z = phi * z + eta;
        out.push(z);
    }
}

/// Draws one realization of `spec`, standardized.
pub fn generate(spec: &ProcessSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.n;
    let raw: Vec<f64> = match spec.kind {
        ProcessKind::WhiteGaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        ProcessKind::Ar1 { phi } => {
            let mut path = Vec::with_capacity(n);
            ar1_path(&mut rng, phi, n, &mut path);
            path
        }
        ProcessKind::StaticTransform { phi, transform } => {
            let mut path = Vec::with_capacity(n);
            ar1_path(&mut rng, phi, n, &mut path);
            // standardize the base so exp() stays in a sane range
            normalize(&path)?
                .iter()
                .map(|&v| transform.apply(v))
                .collect()
        }
        ProcessKind::Bilinear { a, b } => {
            let mut x = 0.0;
            let mut prev_eta = 0.0;
            let mut out = Vec::with_capacity(n);
            for step in 0..BILINEAR_BURN_IN + n {
                let eta: f64 = rng.sample(StandardNormal);
                x = a * x + b * x * prev_eta + eta;
                prev_eta = eta;
                if step >= BILINEAR_BURN_IN {
                    out.push(x);
                }
            }
            out
        }
    };
    Ok(normalize(&raw)?.into_inner())
}
