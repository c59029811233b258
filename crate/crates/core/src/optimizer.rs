//! The sequential loop for scalar objectives: propose, observe, refit.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::acquisition::{
    argmax_first, incumbent_from_model, AcquisitionKind, AcquisitionSpec, Incumbent,
};
use crate::design::{seed_count, seed_points, SeedDesign};
use crate::direct::{self, MaximizerBudget};
use crate::error::{Error, Result};
use crate::fit::{fit_hyperparameters, FitOptions};
use crate::gp::{Bounds, GaussianProcess, ObservationSet};
use crate::kernel::KernelSpec;

/// Two proposals closer than this (per coordinate) are duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;
/// Size of the nudge applied to a duplicate, as a fraction of each side.
pub const DUPLICATE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub bounds: Bounds,
    /// Starting kernel; refits replace its hyperparameters.
    pub kernel: KernelSpec,
    pub acquisition: AcquisitionSpec,
    /// Use the posterior-mean incumbent instead of the best observation.
    pub noisy: bool,
    /// Refit every this many observations; `0` disables refitting.
    pub refit_period: usize,
    pub fit: FitOptions,
    pub maximizer: MaximizerBudget,
    pub seed_design: SeedDesign,
    /// Defaults to `max(2, d + 1)`.
    pub n_seed: Option<usize>,
    pub rng_seed: u64,
}

impl OptimizerConfig {
    pub fn new(bounds: Bounds, kind: AcquisitionKind) -> Self {
        let d = bounds.dim();
        let mean_width = (0..d).map(|i| bounds.width(i)).sum::<f64>() / d as f64;
        OptimizerConfig {
            kernel: KernelSpec::squared_exp(0.2 * mean_width, 1.0),
            acquisition: AcquisitionSpec::new(kind, d),
            bounds,
            noisy: false,
            refit_period: 1,
            fit: FitOptions {
                warm_start: true,
                ..FitOptions::default()
            },
            maximizer: MaximizerBudget::default(),
            seed_design: SeedDesign::Stratified,
            n_seed: None,
            rng_seed: 0,
        }
    }

    pub fn n_seed(&self) -> usize {
        self.n_seed.unwrap_or_else(|| seed_count(self.bounds.dim()))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.kernel.check_dim(self.bounds.dim())?;
        self.acquisition.validate()?;
        if self.acquisition.dim != self.bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.bounds.dim(),
                found: self.acquisition.dim,
            });
        }
        if self.n_seed() == 0 {
            return Err(Error::invalid("n_seed must be positive"));
        }
        Ok(())
    }
}

/// Deterministic state machine behind a scalar optimization session.
#[derive(Debug, Clone)]
pub struct ScalarOptimizer {
    config: OptimizerConfig,
    data: ObservationSet,
    kernel: KernelSpec,
    seeds: Vec<Vec<f64>>,
}

impl ScalarOptimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let seeds = seed_points(&config.bounds, config.n_seed(), config.seed_design);
        Ok(ScalarOptimizer {
            data: ObservationSet::new(config.bounds.clone()),
            kernel: config.kernel.clone(),
            seeds,
            config,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn data(&self) -> &ObservationSet {
        &self.data
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Completed observations.
    pub fn iteration(&self) -> usize {
        self.data.len()
    }

    pub fn model(&self) -> Result<GaussianProcess> {
        GaussianProcess::fit(&self.kernel, &self.data)
    }

    /// Acquisition spec as used for the next proposal.
    pub fn acquisition_spec(&self) -> AcquisitionSpec {
        let mut spec = self.config.acquisition.clone();
        spec.iteration = self.data.len() as u64 + 1;
        spec
    }

    /// Acquisition surface for the next proposal; `None` while seeding.
    pub fn acquisition(&self) -> Result<Option<AcquisitionSurface>> {
        if self.data.len() < self.config.n_seed() {
            return Ok(None);
        }
        let gp = self.model()?;
        let incumbent = self.incumbent_with(&gp)?;
        Ok(Some(AcquisitionSurface {
            spec: self.acquisition_spec(),
            incumbent_value: incumbent.value,
            gp,
        }))
    }

    /// Next point to evaluate. Does not change any state.
    pub fn propose(&self) -> Result<Vec<f64>> {
        let t = self.data.len();
        let raw = match self.acquisition()? {
            None => self.seeds[t].clone(),
            Some(surface) => {
                let best = direct::maximize(
                    |x| surface.eval(x),
                    &self.config.bounds,
                    &self.config.maximizer,
                )?;
                best.point
            }
        };
        Ok(if self.config.noisy {
            raw
        } else {
            self.dedup(raw)
        })
    }

    fn is_duplicate(&self, x: &[f64]) -> bool {
        self.data.points().iter().any(|p| {
            p.iter()
                .zip(x)
                .all(|(a, b)| libm::fabs(a - b) <= DUPLICATE_TOLERANCE)
        })
    }

    /// Nudges `x` towards the domain center until it matches no sampled point.
    fn dedup(&self, mut x: Vec<f64>) -> Vec<f64> {
        let bounds = &self.config.bounds;
        let center = bounds.center();
        for _ in 0..64 {
            if !self.is_duplicate(&x) {
                break;
            }
            for (i, v) in x.iter_mut().enumerate() {
                let step = DUPLICATE_STEP * bounds.width(i);
                *v += if *v < center[i] { step } else { -step };
            }
            bounds.clamp(&mut x);
        }
        x
    }

    /// Adds an observation and refits on schedule.
    pub fn observe(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::invalid("observed value must be finite"));
        }
        self.data.push(x, y)?;
        let t = self.data.len();
        let period = self.config.refit_period;
        if period > 0 && t >= 2 && t.is_multiple_of(period) {
            self.refit()?;
        }
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let mut options = self.config.fit.clone();
        // Distinct but reproducible stream per refit.
        options.rng_seed = self
            .config
            .rng_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.data.len() as u64);
        let outcome = fit_hyperparameters(&self.data, &self.kernel, &options)?;
        if !outcome.fallback {
            self.kernel = outcome.spec;
        }
        Ok(())
    }

    fn incumbent_with(&self, gp: &GaussianProcess) -> Result<Incumbent> {
        if self.config.noisy {
            incumbent_from_model(&self.data, gp)
        } else {
            Ok(argmax_first(self.data.points(), self.data.values()))
        }
    }

    pub fn best(&self) -> Result<Incumbent> {
        crate::acquisition::select_incumbent(&self.data, &self.kernel, self.config.noisy)
    }
}

/// The acquisition function frozen at one iteration.
#[derive(Debug, Clone)]
pub struct AcquisitionSurface {
    pub spec: AcquisitionSpec,
    pub incumbent_value: f64,
    pub gp: GaussianProcess,
}

impl AcquisitionSurface {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let post = self.gp.predict_unchecked(x, false);
        self.spec
            .evaluate(&post, self.incumbent_value, self.gp.spec().signal_variance)
    }
}
