//! The preference-gallery loop: present a pair, record the choice, refit the
//! probit model, choose the next pair.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{argmax_first, expected_improvement, Incumbent, DEFAULT_XI_SCALE};
use crate::design::{seed_count, seed_points, SeedDesign};
use crate::direct::{self, MaximizerBudget};
use crate::error::{Error, Result};
use crate::gp::{Bounds, PosteriorSummary};
use crate::kernel::KernelSpec;
use crate::probit::{same_point, PreferenceDataset, PreferenceModel};

/// How the second member of a pair is chosen; the first is always the
/// incumbent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    Random,
    MaxVariance,
    MaxEi,
}

/// Pairs closer than this are re-drawn or pushed apart.
pub const PAIR_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceConfig {
    pub bounds: Bounds,
    pub kernel: KernelSpec,
    /// Probit noise σ; defaults to 0.1 of the latent signal standard deviation.
    pub sigma_noise: Option<f64>,
    /// EI margin; defaults to `0.01 × signal variance`.
    pub xi: Option<f64>,
    pub maximizer: MaximizerBudget,
    pub seed_design: SeedDesign,
    /// Restricts every proposal to this finite gallery when set.
    pub candidates: Option<Vec<Vec<f64>>>,
    /// Smallest distance between the two members of a pair, measured in
    /// coordinates scaled to the unit cube.
    #[serde(default = "default_separation")]
    pub min_separation: f64,
}

fn default_separation() -> f64 {
    PAIR_SEPARATION
}

impl PreferenceConfig {
    pub fn new(bounds: Bounds) -> Self {
        let d = bounds.dim();
        let mean_width = (0..d).map(|i| bounds.width(i)).sum::<f64>() / d as f64;
        PreferenceConfig {
            kernel: KernelSpec::squared_exp(0.2 * mean_width, 1.0),
            bounds,
            sigma_noise: None,
            xi: None,
            maximizer: MaximizerBudget::default(),
            seed_design: SeedDesign::Stratified,
            candidates: None,
            min_separation: PAIR_SEPARATION,
        }
    }

    pub fn sigma_noise(&self) -> f64 {
        self.sigma_noise
            .unwrap_or_else(|| 0.1 * libm::sqrt(self.kernel.signal_variance))
    }

    pub fn xi(&self) -> f64 {
        self.xi
            .unwrap_or(DEFAULT_XI_SCALE * self.kernel.signal_variance)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.kernel.check_dim(self.bounds.dim())?;
        if !(self.sigma_noise() > 0.0) {
            return Err(Error::invalid("sigma_noise must be positive"));
        }
        if !(self.xi() >= 0.0) {
            return Err(Error::invalid("xi must be nonnegative"));
        }
        if !(self.min_separation >= 0.0) || self.min_separation >= 1.0 {
            return Err(Error::invalid("min_separation must lie in [0, 1)"));
        }
        if let Some(c) = &self.candidates {
            if c.len() < 2 {
                return Err(Error::invalid("a gallery needs at least two candidates"));
            }
            for p in c {
                self.bounds.check_point(p)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PreferenceLoop {
    config: PreferenceConfig,
    data: PreferenceDataset,
    model: Option<PreferenceModel>,
}

impl PreferenceLoop {
    pub fn new(config: PreferenceConfig) -> Result<Self> {
        config.validate()?;
        Ok(PreferenceLoop {
            data: PreferenceDataset::new(config.bounds.clone()),
            config,
            model: None,
        })
    }

    pub fn config(&self) -> &PreferenceConfig {
        &self.config
    }

    pub fn data(&self) -> &PreferenceDataset {
        &self.data
    }

    pub fn model(&self) -> Option<&PreferenceModel> {
        self.model.as_ref()
    }

    /// Number of recorded preferences.
    pub fn iteration(&self) -> usize {
        self.data.pairs().len()
    }

    pub fn record_preference(&mut self, winner: Vec<f64>, loser: Vec<f64>) -> Result<()> {
        let mut data = self.data.clone();
        data.record(winner, loser)?;
        let model = PreferenceModel::fit(&self.config.kernel, &data, self.config.sigma_noise())?;
        self.data = data;
        self.model = Some(model);
        Ok(())
    }

    /// Posterior of the latent valuation; the prior before any preference.
    pub fn posterior(&self, x: &[f64]) -> Result<PosteriorSummary> {
        match &self.model {
            Some(m) => m.predict(x),
            None => {
                self.config.bounds.check_point(x)?;
                Ok(PosteriorSummary {
                    mean: 0.0,
                    variance: self.config.kernel.signal_variance,
                    includes_observation_noise: false,
                })
            }
        }
    }

    /// Item with the highest posterior mean; lowest index wins ties.
    pub fn incumbent(&self) -> Option<Incumbent> {
        let model = self.model.as_ref()?;
        let means: Vec<f64> = self
            .data
            .items()
            .iter()
            .map(|x| model.predict_unchecked(x).mean)
            .collect();
        Some(argmax_first(self.data.items(), &means))
    }

    fn seed_pair(&self) -> (Vec<f64>, Vec<f64>) {
        if let Some(c) = &self.config.candidates {
            return (c[0].clone(), c[1].clone());
        }
        let n = seed_count(self.config.bounds.dim());
        let mut seeds = seed_points(&self.config.bounds, n, self.config.seed_design);
        let second = seeds.swap_remove(1);
        (seeds.swap_remove(0), second)
    }

    /// The next pair to show: `(incumbent, challenger)`.
    pub fn select_pair(
        &self,
        strategy: PairStrategy,
        rng_seed: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (Some(model), Some(incumbent)) = (&self.model, self.incumbent()) else {
            return Ok(self.seed_pair());
        };
        let first = incumbent.location;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let xi = self.config.xi();
        let bounds = &self.config.bounds;
        let too_close = |x: &[f64]| {
            same_point(x, &first, PAIR_SEPARATION)
                || unit_distance(bounds, x, &first) < self.config.min_separation
        };
        let score = |x: &[f64]| -> f64 {
            if too_close(x) {
                return -1.0;
            }
            let post = model.predict_unchecked(x);
            match strategy {
                PairStrategy::Random => 0.0,
                PairStrategy::MaxVariance => post.variance,
                PairStrategy::MaxEi => expected_improvement(&post, incumbent.value, xi),
            }
        };

        if let Some(candidates) = &self.config.candidates {
            let mut pool: Vec<&Vec<f64>> = candidates.iter().filter(|c| !too_close(c)).collect();
            if pool.is_empty() {
                pool = candidates
                    .iter()
                    .filter(|c| !same_point(c, &first, PAIR_SEPARATION))
                    .collect();
            }
            let second = match strategy {
                PairStrategy::Random => pool[rng.random_range(0..pool.len())].clone(),
                _ => {
                    let mut best = 0;
                    let mut best_score = f64::NEG_INFINITY;
                    for (i, c) in pool.iter().enumerate() {
                        let s = score(c);
                        if s > best_score {
                            best_score = s;
                            best = i;
                        }
                    }
                    pool[best].clone()
                }
            };
            return Ok((first, second));
        }

        let mut second = match strategy {
            PairStrategy::Random => uniform(bounds, &mut rng),
            _ => direct::maximize(score, bounds, &self.config.maximizer)?.point,
        };
        for _ in 0..100 {
            if !too_close(&second) {
                break;
            }
            second = match strategy {
                PairStrategy::Random => uniform(bounds, &mut rng),
                _ => self.push_apart(&first),
            };
        }
        Ok((first, second))
    }

    /// A point a step from `x` towards the domain center.
    fn push_apart(&self, x: &[f64]) -> Vec<f64> {
        let bounds = &self.config.bounds;
        let center = bounds.center();
        let reach = self.config.min_separation.max(1e-3);
        let mut y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let step = reach * bounds.width(i);
                if *v <= center[i] {
                    v + step
                } else {
                    v - step
                }
            })
            .collect();
        bounds.clamp(&mut y);
        y
    }
}

fn unit_distance(bounds: &Bounds, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = (0..bounds.dim())
        .map(|i| {
            let d = (a[i] - b[i]) / bounds.width(i);
            d * d
        })
        .sum();
    libm::sqrt(sq)
}

fn uniform<R: Rng>(bounds: &Bounds, rng: &mut R) -> Vec<f64> {
    bounds
        .ranges()
        .iter()
        .map(|(lo, hi)| rng.random_range(*lo..=*hi))
        .collect()
}
