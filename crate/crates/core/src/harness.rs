//! Benchmark objectives, a simulated preference user, and the benchmark
//! drivers that produce per-iteration traces.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionKind;
use crate::design::SeedDesign;
use crate::direct::MaximizerBudget;
use crate::error::{Error, Result};
use crate::gp::Bounds;
use crate::kernel::KernelSpec;
use crate::optimizer::{OptimizerConfig, ScalarOptimizer};
use crate::preference::{PairStrategy, PreferenceConfig, PreferenceLoop};
use crate::simplex::{self, SimplexOptions};

/// A function to maximize over a box.
pub trait Objective {
    fn name(&self) -> &str;
    fn bounds(&self) -> &Bounds;
    fn evaluate(&self, x: &[f64]) -> f64;
}

/// Built-in objective backed by a plain function.
#[derive(Debug, Clone)]
pub struct TestObjective {
    name: String,
    bounds: Bounds,
    evaluator: fn(&[f64]) -> f64,
}

impl TestObjective {
    pub fn new(name: impl Into<String>, bounds: Bounds, evaluator: fn(&[f64]) -> f64) -> Self {
        TestObjective {
            name: name.into(),
            bounds,
            evaluator,
        }
    }

    /// Two Gaussian bumps on [0, 1]: a broad local one and a narrower, taller
    /// global one.
    pub fn bumps_1d() -> Self {
        Self::new("bumps1d", Bounds::unit(1), bumps_1d)
    }

    /// Negated Branin on [−5, 10] × [0, 15] (three global maxima).
    pub fn branin() -> Self {
        Self::new(
            "branin",
            Bounds::new(alloc::vec![(-5.0, 10.0), (0.0, 15.0)]).expect("valid bounds"),
            neg_branin,
        )
    }

    /// Negated squared distance to the origin on [−2, 1]².
    pub fn sphere_2d() -> Self {
        Self::new(
            "sphere2d",
            Bounds::new(alloc::vec![(-2.0, 1.0), (-2.0, 1.0)]).expect("valid bounds"),
            neg_sphere,
        )
    }

    /// Single smooth peak off-center on the unit square.
    pub fn peak_2d() -> Self {
        Self::new("peak2d", Bounds::unit(2), peak_2d)
    }

    /// Negated distance to a target at (0.7, 0.3) on the unit square: the
    /// valuation of a user looking for one particular item.
    pub fn target_2d() -> Self {
        Self::new("target2d", Bounds::unit(2), target_2d)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "bumps1d" => Some(Self::bumps_1d()),
            "branin" => Some(Self::branin()),
            "sphere2d" => Some(Self::sphere_2d()),
            "peak2d" => Some(Self::peak_2d()),
            "target2d" => Some(Self::target_2d()),
            _ => None,
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 5] =
        ["bumps1d", "branin", "sphere2d", "peak2d", "target2d"];
}

impl Objective for TestObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.evaluator)(x)
    }
}

/// Negated Euclidean distance to a target point: a user looking for one
/// particular item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistance {
    bounds: Bounds,
    target: Vec<f64>,
}

impl TargetDistance {
    pub fn new(bounds: Bounds, target: Vec<f64>) -> Result<Self> {
        bounds.check_point(&target)?;
        Ok(TargetDistance { bounds, target })
    }

    /// Target drawn uniformly from the box.
    pub fn random(bounds: Bounds, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = bounds
            .ranges()
            .iter()
            .map(|(lo, hi)| rng.random_range(*lo..=*hi))
            .collect();
        TargetDistance { bounds, target }
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

impl Objective for TargetDistance {
    fn name(&self) -> &str {
        "target-distance"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        -libm::sqrt(sq)
    }
}

fn gauss(x: f64, center: f64, width: f64) -> f64 {
    let u = (x - center) / width;
    libm::exp(-0.5 * u * u)
}

fn bumps_1d(x: &[f64]) -> f64 {
    0.6 * gauss(x[0], 0.25, 0.1) + gauss(x[0], 0.75, 0.04)
}

fn neg_branin(x: &[f64]) -> f64 {
    let (a, b, c) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI);
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * PI));
    let u = x[1] - b * x[0] * x[0] + c * x[0] - r;
    -(a * u * u + s * (1.0 - t) * libm::cos(x[0]) + s)
}

fn neg_sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

fn peak_2d(x: &[f64]) -> f64 {
    let dx = x[0] - 0.7;
    let dy = x[1] - 0.3;
    libm::exp(-(dx * dx + dy * dy) / (2.0 * 0.2 * 0.2))
}

fn target_2d(x: &[f64]) -> f64 {
    let dx = x[0] - 0.7;
    let dy = x[1] - 0.3;
    -libm::sqrt(dx * dx + dy * dy)
}

/// Location and value of the maximum found by a dense grid followed by a
/// simplex polish from the best grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownOptimum {
    pub location: Vec<f64>,
    pub value: f64,
}

pub fn grid_optimum(objective: &dyn Objective, per_dim: usize) -> KnownOptimum {
    let bounds = objective.bounds();
    let d = bounds.dim();
    let per_dim = per_dim.max(2);
    let mut index = alloc::vec![0usize; d];
    let mut best = KnownOptimum {
        location: bounds.center(),
        value: f64::NEG_INFINITY,
    };
    loop {
        let unit: Vec<f64> = index
            .iter()
            .map(|i| *i as f64 / (per_dim - 1) as f64)
            .collect();
        let x = bounds.from_unit(&unit);
        let v = objective.evaluate(&x);
        if v > best.value {
            best = KnownOptimum {
                location: x,
                value: v,
            };
        }
        let mut k = 0;
        while k < d {
            index[k] += 1;
            if index[k] < per_dim {
                break;
            }
            index[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let lower: Vec<f64> = bounds.ranges().iter().map(|r| r.0).collect();
    let upper: Vec<f64> = bounds.ranges().iter().map(|r| r.1).collect();
    let options = SimplexOptions {
        max_evaluations: 2000,
        relative_tolerance: 1e-15,
        initial_step: 1.0 / per_dim as f64,
    };
    let polished = simplex::minimize(
        |x| -objective.evaluate(x),
        &best.location,
        &lower,
        &upper,
        &options,
    );
    if -polished.value > best.value {
        best = KnownOptimum {
            location: polished.point,
            value: -polished.value,
        };
    }
    best
}

/// Grid resolution giving roughly 10⁴–10⁵ nodes for low dimensions.
pub fn default_grid(dim: usize) -> usize {
    match dim {
        1 => 10_001,
        2 => 401,
        3 => 41,
        _ => 11,
    }
}

/// A user whose choices follow the probit model on a latent objective.
pub struct SimulatedUser<'a> {
    pub latent: &'a dyn Objective,
    pub decision_noise: f64,
}

impl SimulatedUser<'_> {
    /// Probability that `a` is chosen over `b`.
    pub fn win_probability(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff = self.latent.evaluate(a) - self.latent.evaluate(b);
        crate::special::norm_cdf(diff / (SQRT_2 * self.decision_noise))
    }

    /// `true` when `a` wins. Each item's perceived value carries independent
    /// Gaussian noise; with zero noise the better item always wins (`a` on ties).
    pub fn choose<R: Rng>(&self, a: &[f64], b: &[f64], rng: &mut R) -> bool {
        let (fa, fb) = (self.latent.evaluate(a), self.latent.evaluate(b));
        if !(self.decision_noise > 0.0) {
            return fa >= fb;
        }
        let noise = Normal::new(0.0, self.decision_noise).expect("positive noise");
        let va = fa + noise.sample(rng);
        let vb = fb + noise.sample(rng);
        va > vb
    }

    pub fn choose_seeded(&self, a: &[f64], b: &[f64], rng_seed: u64) -> bool {
        self.choose(a, b, &mut ChaCha8Rng::seed_from_u64(rng_seed))
    }
}

fn trial_seed(rng_seed: u64, repetition: usize) -> u64 {
    rng_seed
        .wrapping_mul(0x2545_F491_4F6C_DD1D)
        .wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(repetition as u64 + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarStrategy {
    Acquisition(AcquisitionKind),
    RandomSearch,
}

/// One row of a scalar benchmark trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub repetition: usize,
    /// Number of evaluations so far, seeds included.
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_value: f64,
    /// `f* − y` for this sample.
    pub regret: f64,
    pub simple_regret: f64,
    pub cumulative_regret: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrial {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

impl ScalarTrial {
    pub fn final_gap(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.gap)
    }

    pub fn gap_at(&self, iteration: usize) -> f64 {
        if iteration == 0 {
            return 0.0;
        }
        self.records
            .get(iteration.min(self.records.len()) - 1)
            .map_or(0.0, |r| r.gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarBenchmark {
    pub objective: String,
    pub strategy: ScalarStrategy,
    pub optimum: KnownOptimum,
    pub trials: Vec<ScalarTrial>,
}

impl ScalarBenchmark {
    pub fn mean_gap_at(&self, iteration: usize) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.trials.iter().map(|t| t.gap_at(iteration)).sum::<f64>() / self.trials.len() as f64
    }
}

/// Settings shared by every repetition of a scalar benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSettings {
    pub kernel: Option<KernelSpec>,
    pub maximizer: MaximizerBudget,
    pub refit_period: usize,
    pub fit_seeds: usize,
    pub grid_per_dim: Option<usize>,
}

impl Default for ScalarSettings {
    fn default() -> Self {
        ScalarSettings {
            kernel: None,
            maximizer: MaximizerBudget::default(),
            refit_period: 1,
            fit_seeds: 2,
            grid_per_dim: None,
        }
    }
}

/// Gap `(best − seed_best)/(f* − seed_best)`, clamped to [0, 1].
pub fn gap(best: f64, seed_best: f64, optimum: f64) -> f64 {
    let span = optimum - seed_best;
    if !(span > 0.0) {
        return 1.0;
    }
    ((best - seed_best) / span).clamp(0.0, 1.0)
}

pub fn run_scalar_trial(
    objective: &dyn Objective,
    strategy: ScalarStrategy,
    iterations: usize,
    seed: u64,
    optimum: &KnownOptimum,
    settings: &ScalarSettings,
    repetition: usize,
) -> Result<ScalarTrial> {
    let bounds = objective.bounds().clone();
    let kind = match strategy {
        ScalarStrategy::Acquisition(k) => k,
        ScalarStrategy::RandomSearch => AcquisitionKind::ExpectedImprovement,
    };
    let mut config = OptimizerConfig::new(bounds.clone(), kind);
    if let Some(k) = &settings.kernel {
        config.kernel = k.clone();
    }
    config.maximizer = settings.maximizer;
    config.refit_period = match strategy {
        ScalarStrategy::RandomSearch => 0,
        _ => settings.refit_period,
    };
    config.fit.seeds = settings.fit_seeds;
    config.seed_design = SeedDesign::Randomized { seed };
    config.rng_seed = seed;
    let n_seed = config.n_seed();
    let mut optimizer = ScalarOptimizer::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5);

    let mut records: Vec<TraceRecord> = Vec::with_capacity(iterations);
    let mut best = f64::NEG_INFINITY;
    let mut seed_best = f64::NEG_INFINITY;
    let mut cumulative = 0.0;
    for t in 1..=iterations {
        let x = match strategy {
            ScalarStrategy::RandomSearch if t > n_seed => bounds
                .ranges()
                .iter()
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect(),
            _ => optimizer.propose()?,
        };
        let y = objective.evaluate(&x);
        if !y.is_finite() {
            return Err(Error::InvalidObjective { point: x });
        }
        optimizer.observe(x.clone(), y)?;
        best = best.max(y);
        if t <= n_seed {
            seed_best = best;
        }
        let regret = (optimum.value - y).max(0.0);
        cumulative += regret;
        records.push(TraceRecord {
            repetition,
            iteration: t,
            x,
            y,
            best_value: best,
            regret,
            simple_regret: (optimum.value - best).max(0.0),
            cumulative_regret: cumulative,
            gap: if t < n_seed {
                0.0
            } else {
                gap(best, seed_best, optimum.value)
            },
        });
    }
    Ok(ScalarTrial { seed, records })
}

/// Runs `repetitions` independent trials with seeds derived from `rng_seed`.
pub fn run_scalar_benchmark(
    objective: &dyn Objective,
    strategy: ScalarStrategy,
    iterations: usize,
    repetitions: usize,
    rng_seed: u64,
    settings: &ScalarSettings,
) -> Result<ScalarBenchmark> {
    let grid = settings
        .grid_per_dim
        .unwrap_or_else(|| default_grid(objective.bounds().dim()));
    let optimum = grid_optimum(objective, grid);
    let trials = (0..repetitions)
        .map(|r| {
            run_scalar_trial(
                objective,
                strategy,
                iterations,
                trial_seed(rng_seed, r),
                &optimum,
                settings,
                r,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarBenchmark {
        objective: String::from(objective.name()),
        strategy,
        optimum,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSettings {
    pub config: PreferenceConfig,
    pub decision_noise: f64,
    pub target_tolerance: f64,
    pub max_queries: usize,
    pub grid_per_dim: Option<usize>,
}

impl PreferenceSettings {
    pub fn new(bounds: Bounds) -> Self {
        PreferenceSettings {
            config: PreferenceConfig::new(bounds),
            decision_noise: 0.05,
            target_tolerance: 0.05,
            max_queries: 50,
            grid_per_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTrial {
    pub seed: u64,
    pub optimum: KnownOptimum,
    /// Queries until the incumbent was within tolerance, or `max_queries`.
    pub queries: usize,
    pub reached: bool,
    /// Latent value of the incumbent after each query.
    pub incumbent_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceBenchmark {
    pub strategy: PairStrategy,
    pub trials: Vec<PreferenceTrial>,
}

impl PreferenceBenchmark {
    pub fn mean_queries(&self) -> f64 {
        self.trials.iter().map(|t| t.queries as f64).sum::<f64>() / self.trials.len().max(1) as f64
    }

    /// Sample standard deviation of the query counts.
    pub fn std_queries(&self) -> f64 {
        let n = self.trials.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_queries();
        let ss: f64 = self
            .trials
            .iter()
            .map(|t| {
                let d = t.queries as f64 - mean;
                d * d
            })
            .sum();
        libm::sqrt(ss / (n - 1) as f64)
    }
}

pub fn run_preference_trial(
    user: &SimulatedUser<'_>,
    strategy: PairStrategy,
    settings: &PreferenceSettings,
    optimum: &KnownOptimum,
    seed: u64,
) -> Result<PreferenceTrial> {
    let mut config = settings.config.clone();
    if config.candidates.is_none() {
        config.seed_design = SeedDesign::Randomized { seed };
    }
    let mut lp = PreferenceLoop::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for q in 1..=settings.max_queries {
        let (a, b) = lp.select_pair(strategy, rng.random())?;
        let (winner, loser) = if user.choose(&a, &b, &mut rng) {
            (a, b)
        } else {
            (b, a)
        };
        lp.record_preference(winner, loser)?;
        let incumbent = lp.incumbent().expect("model exists after a preference");
        let value = user.latent.evaluate(&incumbent.location);
        values.push(value);
        if optimum.value - value <= settings.target_tolerance {
            return Ok(PreferenceTrial {
                seed,
                optimum: optimum.clone(),
                queries: q,
                reached: true,
                incumbent_values: values,
            });
        }
    }
    Ok(PreferenceTrial {
        seed,
        optimum: optimum.clone(),
        queries: settings.max_queries,
        reached: false,
        incumbent_values: values,
    })
}

fn latent_optimum(latent: &dyn Objective, settings: &PreferenceSettings) -> Result<KnownOptimum> {
    match &settings.config.candidates {
        Some(c) => c
            .iter()
            .map(|x| KnownOptimum {
                location: x.clone(),
                value: latent.evaluate(x),
            })
            .fold(None::<KnownOptimum>, |best, k| match best {
                Some(b) if b.value >= k.value => Some(b),
                _ => Some(k),
            })
            .ok_or_else(|| Error::invalid("empty gallery")),
        None => {
            let grid = settings
                .grid_per_dim
                .unwrap_or_else(|| default_grid(latent.bounds().dim()));
            Ok(grid_optimum(latent, grid))
        }
    }
}

/// Trials of the gallery loop against one simulated user. The latent optimum
/// is the best candidate when the gallery is finite, otherwise a grid optimum.
pub fn run_preference_benchmark(
    user: &SimulatedUser<'_>,
    strategy: PairStrategy,
    settings: &PreferenceSettings,
    repetitions: usize,
    rng_seed: u64,
) -> Result<PreferenceBenchmark> {
    let optimum = latent_optimum(user.latent, settings)?;
    let trials = (0..repetitions)
        .map(|r| run_preference_trial(user, strategy, settings, &optimum, trial_seed(rng_seed, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreferenceBenchmark { strategy, trials })
}

/// Like [`run_preference_benchmark`], but every trial gets its own latent
/// valuation from `make_latent`, called with a seed that depends only on
/// `rng_seed` and the trial index. Strategies run with the same `rng_seed`
/// therefore face the same sequence of latents. The user's decision noise
/// comes from `settings`.
pub fn run_preference_study<O, F>(
    make_latent: F,
    strategy: PairStrategy,
    settings: &PreferenceSettings,
    repetitions: usize,
    rng_seed: u64,
) -> Result<PreferenceBenchmark>
where
    O: Objective,
    F: Fn(u64) -> Result<O>,
{
    let trials = (0..repetitions)
        .map(|r| {
            let seed = trial_seed(rng_seed, r);
            let latent = make_latent(seed ^ LATENT_STREAM)?;
            let optimum = latent_optimum(&latent, settings)?;
            let user = SimulatedUser {
                latent: &latent,
                decision_noise: settings.decision_noise,
            };
            run_preference_trial(&user, strategy, settings, &optimum, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreferenceBenchmark { strategy, trials })
}

/// Keeps latent draws apart from the trial's own random stream.
const LATENT_STREAM: u64 = 0xD1B5_4A32_D192_ED03;
