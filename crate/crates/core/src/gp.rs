//! Exact Gaussian-process regression with a zero prior mean.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{dot, Cholesky};

/// Axis-aligned search box, one `(lo, hi)` pair per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Bounds(Vec<(f64, f64)>);

impl Bounds {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::invalid("bounds need at least one dimension"));
        }
        for (i, (lo, hi)) in ranges.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "bounds[{i}]: lower bound {lo} must be finite and below upper bound {hi}"
                )));
            }
        }
        Ok(Bounds(ranges))
    }

    pub fn unit(dim: usize) -> Self {
        Bounds(alloc::vec![(0.0, 1.0); dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.0[i].0
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.0[i].1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.0[i].1 - self.0[i].0
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.0)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.0) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.0)
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.0)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::InvalidArgument(alloc::format!(
                "point {x:?} lies outside the bounds"
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<(f64, f64)>> for Bounds {
    type Error = Error;

    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Bounds::new(v)
    }
}

impl From<Bounds> for Vec<(f64, f64)> {
    fn from(b: Bounds) -> Self {
        b.0
    }
}

/// Sampled inputs with their (possibly noisy) responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    bounds: Bounds,
}

impl ObservationSet {
    pub fn new(bounds: Bounds) -> Self {
        ObservationSet {
            points: Vec::new(),
            values: Vec::new(),
            bounds,
        }
    }

    pub fn from_data(bounds: Bounds, points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::invalid("points and values differ in length"));
        }
        let mut set = ObservationSet::new(bounds);
        for (x, y) in points.into_iter().zip(values) {
            set.push(x, y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        self.bounds.check_point(&x)?;
        if !y.is_finite() {
            return Err(Error::invalid("observed value must be finite"));
        }
        self.points.push(x);
        self.values.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }
}

/// Predictive mean and variance at a single query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
    pub includes_observation_noise: bool,
}

impl PosteriorSummary {
    pub fn std_dev(&self) -> f64 {
        libm::sqrt(self.variance.max(0.0))
    }
}

/// A GP conditioned on an observation set, with the Cholesky factor of the
/// training covariance cached for repeated queries.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    spec: KernelSpec,
    points: Vec<Vec<f64>>,
    chol: Option<Cholesky>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GaussianProcess {
    pub fn fit(spec: &KernelSpec, data: &ObservationSet) -> Result<Self> {
        spec.validate()?;
        spec.check_dim(data.dim())?;
        if data.is_empty() {
            return Ok(GaussianProcess {
                spec: spec.clone(),
                points: Vec::new(),
                chol: None,
                alpha: Vec::new(),
                jitter: 0.0,
            });
        }
        let (chol, jitter) = spec.factor(data.points())?;
        let alpha = chol.solve(data.values());
        Ok(GaussianProcess {
            spec: spec.clone(),
            points: data.points().to_vec(),
            chol: Some(chol),
            alpha,
            jitter,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Latent posterior `f(x) | D`.
    pub fn predict(&self, x: &[f64]) -> Result<PosteriorSummary> {
        self.predict_impl(x, false)
    }

    /// Posterior of a fresh noisy observation `y(x) = f(x) + ε`.
    pub fn predict_observation(&self, x: &[f64]) -> Result<PosteriorSummary> {
        self.predict_impl(x, true)
    }

    fn predict_impl(&self, x: &[f64], with_noise: bool) -> Result<PosteriorSummary> {
        if let Some(p) = self.points.first() {
            if p.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    found: x.len(),
                });
            }
        }
        self.spec.check_dim(x.len())?;
        Ok(self.predict_unchecked(x, with_noise))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64], with_noise: bool) -> PosteriorSummary {
        let prior = self.spec.signal_variance;
        let (mean, variance) = match &self.chol {
            None => (0.0, prior),
            Some(chol) => {
                let k = self.spec.cross(&self.points, x);
                let mean = dot(&k, &self.alpha);
                let v = chol.solve_lower(&k);
                (mean, (prior - dot(&v, &v)).max(0.0))
            }
        };
        let variance = if with_noise {
            variance + self.spec.noise_variance
        } else {
            variance
        };
        PosteriorSummary {
            mean,
            variance,
            includes_observation_noise: with_noise,
        }
    }

    /// `log N(y | 0, K + σ²_noise I)` of the training data.
    pub fn log_marginal_likelihood(&self, values: &[f64]) -> f64 {
        match &self.chol {
            None => 0.0,
            Some(chol) => {
                let n = values.len() as f64;
                -0.5 * dot(values, &self.alpha)
                    - 0.5 * chol.log_det()
                    - 0.5 * n * libm::log(2.0 * PI)
            }
        }
    }
}

/// Posterior at a single query point; with no data this is the prior.
pub fn posterior(
    spec: &KernelSpec,
    data: &ObservationSet,
    query: &[f64],
    includes_observation_noise: bool,
) -> Result<PosteriorSummary> {
    let gp = GaussianProcess::fit(spec, data)?;
    gp.predict_impl(query, includes_observation_noise)
}

pub fn log_marginal_likelihood(spec: &KernelSpec, data: &ObservationSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid(
            "marginal likelihood needs at least one observation",
        ));
    }
    let gp = GaussianProcess::fit(spec, data)?;
    Ok(gp.log_marginal_likelihood(data.values()))
}

/// One draw from `N(0, K)` at the given points.
pub fn sample_prior(spec: &KernelSpec, points: &[Vec<f64>], rng_seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut draws = sample_prior_many(spec, points, 1, &mut rng)?;
    Ok(draws.pop().unwrap_or_default())
}

/// Several independent draws sharing one factorization.
pub fn sample_prior_many<R: rand::Rng>(
    spec: &KernelSpec,
    points: &[Vec<f64>],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Err(Error::invalid("prior sample needs at least one point"));
    }
    let (chol, _) = spec.factor(points)?;
    let n = points.len();
    let lower = chol.lower();
    let draws = (0..count)
        .map(|_| {
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            (0..n)
                .map(|i| (0..=i).map(|k| lower[(i, k)] * z[k]).sum())
                .collect()
        })
        .collect();
    Ok(draws)
}
