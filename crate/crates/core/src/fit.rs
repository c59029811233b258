//! Type-II maximum likelihood for kernel hyperparameters.
//!
//! Hyperparameters are searched in log-space inside a box, with one
//! Nelder–Mead descent per random start. The best start wins.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GaussianProcess, ObservationSet};
use crate::kernel::KernelSpec;
use crate::simplex::{self, SimplexOptions};

/// Log-normal hyperprior on the length scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalPrior {
    fn log_density(&self, value: f64) -> f64 {
        let z = (libm::log(value) - libm::log(self.median)) / self.sigma;
        -libm::log(value) - libm::log(self.sigma) - 0.5 * libm::log(2.0 * PI) - 0.5 * z * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Box in natural units, applied to every searched hyperparameter.
    pub search_lower: f64,
    pub search_upper: f64,
    pub seeds: usize,
    pub rng_seed: u64,
    /// Fit the noise variance too; otherwise it is held at the template's value.
    pub fit_noise: bool,
    pub hyperprior: Option<LogNormalPrior>,
    /// Adds the template's own hyperparameters as an extra start.
    pub warm_start: bool,
    pub max_evaluations_per_start: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            search_lower: 1e-3,
            search_upper: 1e3,
            seeds: 3,
            rng_seed: 0,
            fit_noise: false,
            hyperprior: None,
            warm_start: false,
            max_evaluations_per_start: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub spec: KernelSpec,
    /// Objective at `spec`: log marginal likelihood plus hyperprior.
    pub log_likelihood: f64,
    pub evaluations: usize,
    /// Set when no start produced a factorable kernel matrix.
    pub fallback: bool,
}

/// Maps between a kernel spec and its log-space parameter vector.
struct Parameterization<'a> {
    template: &'a KernelSpec,
    fit_noise: bool,
}

impl Parameterization<'_> {
    fn len(&self) -> usize {
        self.template.theta.len() + 1 + usize::from(self.fit_noise)
    }

    fn encode(&self, spec: &KernelSpec) -> Vec<f64> {
        let mut v: Vec<f64> = spec.theta.iter().map(|t| libm::log(*t)).collect();
        v.push(libm::log(spec.signal_variance));
        if self.fit_noise {
            v.push(libm::log(spec.noise_variance.max(1e-300)));
        }
        v
    }

    fn decode(&self, v: &[f64]) -> KernelSpec {
        let m = self.template.theta.len();
        let mut spec = self.template.clone();
        spec.theta = v[..m].iter().map(|x| libm::exp(*x)).collect();
        spec.signal_variance = libm::exp(v[m]);
        if self.fit_noise {
            spec.noise_variance = libm::exp(v[m + 1]);
        }
        spec
    }
}

fn objective(spec: &KernelSpec, data: &ObservationSet, prior: Option<&LogNormalPrior>) -> f64 {
    let Ok(gp) = GaussianProcess::fit(spec, data) else {
        return f64::NEG_INFINITY;
    };
    let mut ll = gp.log_marginal_likelihood(data.values());
    if let Some(p) = prior {
        ll += spec.theta.iter().map(|t| p.log_density(*t)).sum::<f64>();
    }
    if ll.is_finite() {
        ll
    } else {
        f64::NEG_INFINITY
    }
}

fn check_inputs(data: &ObservationSet, template: &KernelSpec, options: &FitOptions) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::invalid(
            "hyperparameter fitting needs at least two observations",
        ));
    }
    template.validate()?;
    template.check_dim(data.dim())?;
    if !(options.search_lower > 0.0 && options.search_lower < options.search_upper) {
        return Err(Error::invalid(
            "hyperparameter search box must satisfy 0 < lower < upper",
        ));
    }
    Ok(())
}

/// One local search from `start` (natural units; clamped into the box).
pub fn fit_from(
    data: &ObservationSet,
    template: &KernelSpec,
    options: &FitOptions,
    start: &KernelSpec,
) -> Result<FitOutcome> {
    check_inputs(data, template, options)?;
    let param = Parameterization {
        template,
        fit_noise: options.fit_noise,
    };
    Ok(local_search(data, &param, options, &param.encode(start)))
}

fn local_search(
    data: &ObservationSet,
    param: &Parameterization<'_>,
    options: &FitOptions,
    start: &[f64],
) -> FitOutcome {
    let n = param.len();
    let lower = alloc::vec![libm::log(options.search_lower); n];
    let upper = alloc::vec![libm::log(options.search_upper); n];
    let simplex_options = SimplexOptions {
        max_evaluations: options.max_evaluations_per_start,
        relative_tolerance: 1e-6,
        initial_step: 0.1,
    };
    let result = simplex::minimize(
        |v| -objective(&param.decode(v), data, options.hyperprior.as_ref()),
        start,
        &lower,
        &upper,
        &simplex_options,
    );
    FitOutcome {
        spec: param.decode(&result.point),
        log_likelihood: -result.value,
        evaluations: result.evaluations,
        fallback: false,
    }
}

/// Multi-start maximization of the (hyperprior-weighted) log marginal
/// likelihood. `template` fixes the kernel family and the number of length
/// scales; its values only matter with `warm_start` or a fixed noise.
pub fn fit_hyperparameters(
    data: &ObservationSet,
    template: &KernelSpec,
    options: &FitOptions,
) -> Result<FitOutcome> {
    check_inputs(data, template, options)?;
    let param = Parameterization {
        template,
        fit_noise: options.fit_noise,
    };
    let (lo, hi) = (
        libm::log(options.search_lower),
        libm::log(options.search_upper),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let mut starts: Vec<KernelSpec> = Vec::new();
    if options.warm_start {
        let clamped: Vec<f64> = param
            .encode(template)
            .iter()
            .map(|v| v.clamp(lo, hi))
            .collect();
        starts.push(param.decode(&clamped));
    }
    for _ in 0..options.seeds.max(1) {
        let draw: Vec<f64> = (0..param.len()).map(|_| rng.random_range(lo..hi)).collect();
        starts.push(param.decode(&draw));
    }

    let mut best: Option<FitOutcome> = None;
    let mut evaluations = 0;
    for start in &starts {
        let outcome = local_search(data, &param, options, &param.encode(start));
        evaluations += outcome.evaluations;
        if outcome.log_likelihood.is_finite()
            && best
                .as_ref()
                .is_none_or(|b| outcome.log_likelihood > b.log_likelihood)
        {
            best = Some(outcome);
        }
    }

    Ok(match best {
        Some(mut b) => {
            b.evaluations = evaluations;
            b
        }
        None => {
            let mut spec = template.clone();
            spec.theta
                .iter_mut()
                .for_each(|t| *t = options.search_upper);
            FitOutcome {
                log_likelihood: objective(&spec, data, options.hyperprior.as_ref()),
                spec,
                evaluations,
                fallback: true,
            }
        }
    })
}
