//! Acquisition functions and incumbent selection.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GaussianProcess, ObservationSet, PosteriorSummary};
use crate::kernel::KernelSpec;
use crate::special::{norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[serde(rename = "pi")]
    ProbabilityOfImprovement,
    #[serde(rename = "ei")]
    ExpectedImprovement,
    #[serde(rename = "ucb")]
    UpperConfidenceBound,
}

/// Relative ξ used when none is configured: `0.01 × signal variance`.
pub const DEFAULT_XI_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Improvement margin ξ in output units; `None` means
    /// [`DEFAULT_XI_SCALE`] times the kernel's signal variance.
    pub xi: Option<f64>,
    pub nu: f64,
    pub delta: f64,
    /// Iteration counter `t ≥ 1` feeding the UCB schedule.
    pub iteration: u64,
    pub dim: usize,
}

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind, dim: usize) -> Self {
        AcquisitionSpec {
            kind,
            xi: None,
            nu: 1.0,
            delta: 0.1,
            iteration: 1,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(xi) = self.xi {
            if !(xi >= 0.0) || !xi.is_finite() {
                return Err(Error::invalid("xi must be nonnegative"));
            }
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::invalid("nu must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if self.iteration == 0 {
            return Err(Error::invalid("iteration must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn xi_for(&self, signal_variance: f64) -> f64 {
        self.xi.unwrap_or(DEFAULT_XI_SCALE * signal_variance)
    }

    pub fn kappa(&self) -> f64 {
        libm::sqrt(self.nu * ucb_tau(self.iteration, self.dim, self.delta))
    }

    /// Utility of sampling at a point with posterior `post`.
    pub fn evaluate(
        &self,
        post: &PosteriorSummary,
        incumbent_value: f64,
        signal_variance: f64,
    ) -> f64 {
        match self.kind {
            AcquisitionKind::ProbabilityOfImprovement => {
                probability_of_improvement(post, incumbent_value, self.xi_for(signal_variance))
            }
            AcquisitionKind::ExpectedImprovement => {
                expected_improvement(post, incumbent_value, self.xi_for(signal_variance))
            }
            AcquisitionKind::UpperConfidenceBound => gp_ucb(post, self),
        }
    }
}

/// `Φ((μ − f⁺ − ξ)/σ)`; at σ = 0 this is the σ → 0⁺ limit.
pub fn probability_of_improvement(post: &PosteriorSummary, incumbent_value: f64, xi: f64) -> f64 {
    let improvement = post.mean - incumbent_value - xi;
    let sigma = post.std_dev();
    if sigma > 0.0 {
        norm_cdf(improvement / sigma)
    } else if improvement > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Closed-form expected improvement over `incumbent_value + xi`.
pub fn expected_improvement(post: &PosteriorSummary, incumbent_value: f64, xi: f64) -> f64 {
    let sigma = post.std_dev();
    if !(sigma > 0.0) {
        return 0.0;
    }
    let improvement = post.mean - incumbent_value - xi;
    let z = improvement / sigma;
    (improvement * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

/// `τ_t = 2 log(t^{d/2+2} π² / 3δ)`, clamped at zero.
pub fn ucb_tau(t: u64, dim: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    let exponent = dim as f64 / 2.0 + 2.0;
    let tau = 2.0 * (exponent * libm::log(t) + libm::log(PI * PI / (3.0 * delta)));
    tau.max(0.0)
}

pub fn gp_ucb(post: &PosteriorSummary, spec: &AcquisitionSpec) -> f64 {
    post.mean + spec.kappa() * post.std_dev()
}

/// Current best point among the sampled ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub index: usize,
    pub location: Vec<f64>,
    pub value: f64,
}

/// Best observation, or the sampled point of highest posterior mean when
/// `noisy`. Ties go to the lowest index.
pub fn select_incumbent(
    data: &ObservationSet,
    model: &KernelSpec,
    noisy: bool,
) -> Result<Incumbent> {
    if data.is_empty() {
        return Err(Error::invalid("incumbent needs at least one observation"));
    }
    if noisy {
        let gp = GaussianProcess::fit(model, data)?;
        incumbent_from_model(data, &gp)
    } else {
        Ok(argmax_first(data.points(), data.values()))
    }
}

pub(crate) fn incumbent_from_model(
    data: &ObservationSet,
    gp: &GaussianProcess,
) -> Result<Incumbent> {
    let means: Vec<f64> = data
        .points()
        .iter()
        .map(|x| gp.predict_unchecked(x, false).mean)
        .collect();
    Ok(argmax_first(data.points(), &means))
}

pub(crate) fn argmax_first(points: &[Vec<f64>], values: &[f64]) -> Incumbent {
    let mut index = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[index] {
            index = i;
        }
    }
    Incumbent {
        index,
        location: points[index].clone(),
        value: values[index],
    }
}
