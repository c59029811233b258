//! Covariance functions and kernel matrices.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, Cholesky, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaternSmoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternSmoothness {
    pub fn value(self) -> f64 {
        match self {
            MaternSmoothness::Half => 0.5,
            MaternSmoothness::ThreeHalves => 1.5,
            MaternSmoothness::FiveHalves => 2.5,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        [Self::Half, Self::ThreeHalves, Self::FiveHalves]
            .into_iter()
            .find(|s| s.value() == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelFamily {
    SquaredExpIso,
    SquaredExpArd,
    /// Accepts either one shared length scale or one per dimension.
    Matern {
        smoothness: MaternSmoothness,
    },
}

/// Full parameterization of the zero-mean GP prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Length scales, in input units.
    pub theta: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn squared_exp(length_scale: f64, signal_variance: f64) -> Self {
        KernelSpec {
            family: KernelFamily::SquaredExpIso,
            theta: alloc::vec![length_scale],
            signal_variance,
            noise_variance: 0.0,
        }
    }

    pub fn squared_exp_ard(length_scales: Vec<f64>, signal_variance: f64) -> Self {
        KernelSpec {
            family: KernelFamily::SquaredExpArd,
            theta: length_scales,
            signal_variance,
            noise_variance: 0.0,
        }
    }

    pub fn matern(smoothness: MaternSmoothness, length_scale: f64, signal_variance: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern { smoothness },
            theta: alloc::vec![length_scale],
            signal_variance,
            noise_variance: 0.0,
        }
    }

    pub fn with_noise(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::invalid("theta must not be empty"));
        }
        if matches!(self.family, KernelFamily::SquaredExpIso) && self.theta.len() != 1 {
            return Err(Error::invalid(
                "isotropic kernel takes a single length scale",
            ));
        }
        if self.theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::invalid("length scales must be positive and finite"));
        }
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(Error::invalid("signal variance must be positive"));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::invalid("noise variance must be nonnegative"));
        }
        Ok(())
    }

    /// Number of input dimensions the spec is tied to, if any.
    fn fixed_dim(&self) -> Option<usize> {
        if self.theta.len() > 1 || matches!(self.family, KernelFamily::SquaredExpArd) {
            Some(self.theta.len())
        } else {
            None
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(expected) if expected != d => Err(Error::DimensionMismatch { expected, found: d }),
            _ => Ok(()),
        }
    }

    /// Length-scale-normalized squared distance.
    fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.theta.len() == 1 {
            let t = self.theta[0];
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    let u = (x - y) / t;
                    u * u
                })
                .sum()
        } else {
            a.iter()
                .zip(b)
                .zip(&self.theta)
                .map(|((x, y), t)| {
                    let u = (x - y) / t;
                    u * u
                })
                .sum()
        }
    }

    /// Correlation in (0, 1]; symmetric in its arguments.
    fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2 = self.scaled_sq_dist(a, b);
        match self.family {
            KernelFamily::SquaredExpIso | KernelFamily::SquaredExpArd => libm::exp(-0.5 * r2),
            KernelFamily::Matern { smoothness } => {
                // Argument of the Bessel form is 2·sqrt(ς)·r.
                let s = 2.0 * libm::sqrt(smoothness.value()) * libm::sqrt(r2);
                let poly = match smoothness {
                    MaternSmoothness::Half => 1.0,
                    MaternSmoothness::ThreeHalves => 1.0 + s,
                    MaternSmoothness::FiveHalves => 1.0 + s + s * s / 3.0,
                };
                poly * libm::exp(-s)
            }
        }
    }

    /// `k(a, b)` without the noise term.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        self.check_dim(a.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance * self.correlation(a, b)
    }

    /// Cross-covariance vector between `x` and every point.
    pub(crate) fn cross(&self, points: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        points.iter().map(|p| self.eval_unchecked(p, x)).collect()
    }

    /// `K + σ²_noise I` without jitter.
    pub fn noisy_gram(&self, points: &[Vec<f64>]) -> Result<Matrix> {
        self.validate()?;
        let d = points.first().map(Vec::len).unwrap_or(0);
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        self.check_dim(d)?;
        let n = points.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_variance + self.noise_variance;
            for j in 0..i {
                let v = self.eval_unchecked(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Factored `K + σ²_noise I + jitter·I`, together with the jitter used.
    pub fn factor(&self, points: &[Vec<f64>]) -> Result<(Cholesky, f64)> {
        let k = self.noisy_gram(points)?;
        cholesky_with_jitter(&k, self.signal_variance)
    }
}

/// `K + σ²_noise I + jitter·I`, where jitter is the smallest escalation step
/// for which the matrix factors.
pub fn kernel_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<Matrix> {
    if points.is_empty() {
        return Err(Error::invalid("kernel matrix needs at least one point"));
    }
    let mut k = spec.noisy_gram(points)?;
    let (_, jitter) = cholesky_with_jitter(&k, spec.signal_variance)?;
    k.add_diagonal(jitter);
    Ok(k)
}
