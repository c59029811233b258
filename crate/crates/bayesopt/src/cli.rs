//! Command-line front end. Every option can also come from a `BAYESOPT_*`
//! environment variable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use bayesopt_core::fit::fit_hyperparameters;
use bayesopt_core::harness::{
    run_preference_study, run_scalar_benchmark, Objective, PreferenceBenchmark, PreferenceSettings,
    ScalarBenchmark, ScalarSettings, ScalarStrategy, TargetDistance, TestObjective,
};
use bayesopt_core::{
    AcquisitionKind, Bounds, FitOptions, KernelSpec, MaternSmoothness, ObservationSet,
    OptimizerConfig, PairStrategy, ScalarOptimizer,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::command::CommandObjective;
use crate::trace::{self, EvaluationLine, TraceLine};

#[derive(Debug, Parser)]
#[command(
    name = "bayesopt",
    version,
    about = "Bayesian optimization from the command line"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximize a built-in objective or an external program.
    Optimize(OptimizeArgs),
    /// Run the preference loop against a simulated user.
    PrefSim(PrefSimArgs),
    /// Fit kernel hyperparameters to a CSV of observations.
    Fit(FitArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Acquisition {
    Ei,
    Pi,
    Ucb,
    Random,
}

impl Acquisition {
    fn strategy(self) -> ScalarStrategy {
        match self {
            Acquisition::Ei => ScalarStrategy::Acquisition(AcquisitionKind::ExpectedImprovement),
            Acquisition::Pi => {
                ScalarStrategy::Acquisition(AcquisitionKind::ProbabilityOfImprovement)
            }
            Acquisition::Ucb => ScalarStrategy::Acquisition(AcquisitionKind::UpperConfidenceBound),
            Acquisition::Random => ScalarStrategy::RandomSearch,
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Built-in objective: bumps1d, branin, sphere2d, peak2d, target2d.
    #[arg(
        long,
        env = "BAYESOPT_OBJECTIVE",
        default_value = "bumps1d",
        conflicts_with = "command"
    )]
    pub objective: String,
    /// External program; receives the coordinates as arguments and prints the value.
    #[arg(long, env = "BAYESOPT_COMMAND", requires = "bounds")]
    pub command: Option<String>,
    /// Box for --command, as `lo:hi,lo:hi,...`.
    #[arg(long, env = "BAYESOPT_BOUNDS")]
    pub bounds: Option<String>,
    #[arg(long, env = "BAYESOPT_ACQUISITION", value_enum, default_value = "ei")]
    pub acquisition: Acquisition,
    /// Evaluations per run, seed design included.
    #[arg(long, env = "BAYESOPT_ITERATIONS", default_value_t = 30)]
    pub iterations: usize,
    #[arg(long, env = "BAYESOPT_REPETITIONS", default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long, env = "BAYESOPT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write one JSON line per evaluation here.
    #[arg(long, env = "BAYESOPT_TRACE")]
    pub trace: Option<PathBuf>,
    /// Also run random search with the same seeds and report both.
    #[arg(long, env = "BAYESOPT_RANDOM_BASELINE")]
    pub random_baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Random,
    MaxVariance,
    MaxEi,
}

impl From<Strategy> for PairStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Random => PairStrategy::Random,
            Strategy::MaxVariance => PairStrategy::MaxVariance,
            Strategy::MaxEi => PairStrategy::MaxEi,
        }
    }
}

#[derive(Debug, Args)]
pub struct PrefSimArgs {
    #[arg(long, env = "BAYESOPT_STRATEGY", value_enum, default_value = "max-ei")]
    pub strategy: Strategy,
    #[arg(long, env = "BAYESOPT_TRIALS", default_value_t = 20)]
    pub trials: usize,
    /// Standard deviation of the simulated user's judgement noise.
    #[arg(long, env = "BAYESOPT_NOISE", default_value_t = 0.05)]
    pub noise: f64,
    /// A trial succeeds once the incumbent is this close to the best value.
    #[arg(long, env = "BAYESOPT_TOLERANCE", default_value_t = 0.12)]
    pub tolerance: f64,
    #[arg(long, env = "BAYESOPT_MAX_QUERIES", default_value_t = 100)]
    pub max_queries: usize,
    /// Smallest distance between the two members of a pair, in unit-cube units.
    #[arg(long, env = "BAYESOPT_MIN_SEPARATION", default_value_t = 0.1)]
    pub min_separation: f64,
    #[arg(long, env = "BAYESOPT_SEED", default_value_t = 7)]
    pub seed: u64,
    /// `target` draws a fresh 2-D target per trial; otherwise a built-in objective.
    #[arg(long, env = "BAYESOPT_LATENT", default_value = "target")]
    pub latent: String,
    #[arg(long, env = "BAYESOPT_TRACE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kernel {
    Se,
    Matern12,
    Matern32,
    Matern52,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with a header row; the last column is the observed value.
    pub data: PathBuf,
    #[arg(long, env = "BAYESOPT_KERNEL", value_enum, default_value = "se")]
    pub kernel: Kernel,
    /// One length scale per input column.
    #[arg(long, env = "BAYESOPT_ARD")]
    pub ard: bool,
    /// Fixed noise variance; omit to fit it.
    #[arg(long, env = "BAYESOPT_NOISE")]
    pub noise: Option<f64>,
    #[arg(long, env = "BAYESOPT_RESTARTS", default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, env = "BAYESOPT_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "BAYESOPT_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Where session documents are kept.
    #[arg(long, env = "BAYESOPT_DATA_DIR", default_value = "bayesopt-data")]
    pub data_dir: PathBuf,
}

pub type CliResult<T> = Result<T, String>;

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Optimize(a) => optimize(&a, out),
        Command::PrefSim(a) => pref_sim(&a, out),
        Command::Fit(a) => fit(&a, out),
        Command::Serve(a) => serve(&a),
    }
}

fn print(out: &mut dyn Write, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    writeln!(out, "{text}").map_err(|e| e.to_string())
}

fn trace_file(path: &Option<PathBuf>) -> CliResult<Option<BufWriter<File>>> {
    path.as_ref()
        .map(|p| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| format!("cannot create {}: {e}", p.display()))
        })
        .transpose()
}

/// Parses `lo:hi,lo:hi`.
pub fn parse_bounds(text: &str) -> CliResult<Bounds> {
    let ranges = text
        .split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| format!("bounds entry {part:?} is not lo:hi"))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("{s:?} is not a number"))
            };
            Ok((num(lo)?, num(hi)?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Bounds::new(ranges).map_err(|e| e.to_string())
}

fn benchmark_summary(bench: &ScalarBenchmark, iterations: usize) -> serde_json::Value {
    let best: Vec<_> = bench
        .trials
        .iter()
        .map(|t| {
            let r = t
                .records
                .iter()
                .max_by(|a, b| a.y.total_cmp(&b.y))
                .expect("at least one evaluation");
            json!({ "seed": t.seed, "x": r.x, "y": r.y, "gap": t.final_gap() })
        })
        .collect();
    json!({
        "strategy": bench.strategy,
        "mean_gap": bench.mean_gap_at(iterations),
        "runs": best,
    })
}

fn optimize(a: &OptimizeArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.iterations == 0 || a.repetitions == 0 {
        return Err("--iterations and --repetitions must be positive".into());
    }
    if let Some(cmd) = &a.command {
        let bounds = parse_bounds(a.bounds.as_deref().unwrap_or_default())?;
        let objective = CommandObjective::parse(cmd, bounds).ok_or("--command is empty")?;
        return optimize_command(a, &objective, out);
    }
    let objective = TestObjective::builtin(&a.objective).ok_or_else(|| {
        format!(
            "unknown objective {:?}; expected one of {}",
            a.objective,
            TestObjective::BUILTIN_NAMES.join(", ")
        )
    })?;
    let settings = ScalarSettings::default();
    let run = |strategy| {
        run_scalar_benchmark(
            &objective,
            strategy,
            a.iterations,
            a.repetitions,
            a.seed,
            &settings,
        )
        .map_err(|e| e.to_string())
    };
    let main = run(a.acquisition.strategy())?;
    let baseline = if a.random_baseline && a.acquisition != Acquisition::Random {
        Some(run(ScalarStrategy::RandomSearch)?)
    } else {
        None
    };
    if let Some(mut w) = trace_file(&a.trace)? {
        for b in std::iter::once(&main).chain(baseline.as_ref()) {
            trace::write_scalar(&mut w, b).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    let mut summary = json!({
        "objective": main.objective,
        "iterations": a.iterations,
        "optimum": { "x": main.optimum.location, "value": main.optimum.value },
        "result": benchmark_summary(&main, a.iterations),
    });
    if let Some(b) = &baseline {
        summary["random_baseline"] = benchmark_summary(b, a.iterations);
    }
    print(out, &summary)
}

/// No known optimum here, so only the raw evaluations are reported.
fn optimize_command(
    a: &OptimizeArgs,
    objective: &CommandObjective,
    out: &mut dyn Write,
) -> CliResult<()> {
    let kind = match a.acquisition.strategy() {
        ScalarStrategy::Acquisition(k) => k,
        ScalarStrategy::RandomSearch => {
            return Err("--acquisition random needs a built-in objective".into())
        }
    };
    let mut trace = trace_file(&a.trace)?;
    let mut runs = Vec::new();
    for r in 0..a.repetitions {
        let mut config = OptimizerConfig::new(objective.bounds().clone(), kind);
        config.rng_seed = a.seed.wrapping_add(r as u64);
        let mut opt = ScalarOptimizer::new(config).map_err(|e| e.to_string())?;
        let mut best = f64::NEG_INFINITY;
        for t in 1..=a.iterations {
            let x = opt.propose().map_err(|e| e.to_string())?;
            let y = objective.evaluate(&x);
            if !y.is_finite() {
                let why = objective
                    .last_error()
                    .unwrap_or_else(|| format!("value {y}"));
                return Err(format!("objective failed at {x:?}: {why}"));
            }
            best = best.max(y);
            if let Some(w) = trace.as_mut() {
                let line = TraceLine::Evaluation(EvaluationLine {
                    iteration: t,
                    x: x.clone(),
                    y,
                    best_value: best,
                });
                trace::write_line(w, &line).map_err(|e| e.to_string())?;
            }
            opt.observe(x, y).map_err(|e| e.to_string())?;
        }
        let inc = opt.best().map_err(|e| e.to_string())?;
        runs.push(json!({ "x": inc.location, "y": inc.value }));
    }
    if let Some(w) = trace.as_mut() {
        w.flush().map_err(|e| e.to_string())?;
    }
    print(
        out,
        &json!({ "objective": objective.name(), "iterations": a.iterations, "runs": runs }),
    )
}

enum Latent {
    Target,
    Fixed(TestObjective),
}

fn pref_sim(a: &PrefSimArgs, out: &mut dyn Write) -> CliResult<()> {
    let latent = match a.latent.as_str() {
        "target" => Latent::Target,
        name => Latent::Fixed(
            TestObjective::builtin(name).ok_or_else(|| format!("unknown latent {name:?}"))?,
        ),
    };
    let bounds = match &latent {
        Latent::Target => Bounds::unit(2),
        Latent::Fixed(o) => o.bounds().clone(),
    };
    let mut settings = PreferenceSettings::new(bounds.clone());
    settings.decision_noise = a.noise;
    settings.target_tolerance = a.tolerance;
    settings.max_queries = a.max_queries;
    settings.config.min_separation = a.min_separation;
    let strategy = PairStrategy::from(a.strategy);
    let bench: PreferenceBenchmark = match &latent {
        Latent::Target => run_preference_study(
            |seed| Ok(TargetDistance::random(bounds.clone(), seed)),
            strategy,
            &settings,
            a.trials,
            a.seed,
        ),
        Latent::Fixed(o) => {
            run_preference_study(|_| Ok(o.clone()), strategy, &settings, a.trials, a.seed)
        }
    }
    .map_err(|e| e.to_string())?;
    if let Some(mut w) = trace_file(&a.trace)? {
        trace::write_preference(&mut w, &bench).map_err(|e| e.to_string())?;
        w.flush().map_err(|e| e.to_string())?;
    }
    let reached = bench.trials.iter().filter(|t| t.reached).count();
    print(
        out,
        &json!({
            "strategy": bench.strategy,
            "trials": bench.trials.len(),
            "mean_queries": bench.mean_queries(),
            "std_queries": bench.std_queries(),
            "reached": reached,
            "queries": bench.trials.iter().map(|t| t.queries).collect::<Vec<_>>(),
        }),
    )
}

/// Reads numeric rows; the bounding box of the inputs becomes the domain.
pub fn read_csv(path: &Path) -> CliResult<ObservationSet> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let nums = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format!("row {}: every field must be a number", row + 1))?;
        if nums.len() < 2 {
            return Err(format!(
                "row {}: need at least one input and a value",
                row + 1
            ));
        }
        let (x, y) = nums.split_at(nums.len() - 1);
        points.push(x.to_vec());
        values.push(y[0]);
    }
    let d = points.first().map(Vec::len).ok_or("no data rows")?;
    let ranges = (0..d)
        .map(|i| {
            let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect();
    let bounds = Bounds::new(ranges).map_err(|e| e.to_string())?;
    ObservationSet::from_data(bounds, points, values).map_err(|e| e.to_string())
}

fn fit(a: &FitArgs, out: &mut dyn Write) -> CliResult<()> {
    let data = read_csv(&a.data)?;
    let d = data.dim();
    let mut template = match a.kernel {
        Kernel::Se if a.ard => KernelSpec::squared_exp_ard(vec![1.0; d], 1.0),
        Kernel::Se => KernelSpec::squared_exp(1.0, 1.0),
        Kernel::Matern12 => KernelSpec::matern(MaternSmoothness::Half, 1.0, 1.0),
        Kernel::Matern32 => KernelSpec::matern(MaternSmoothness::ThreeHalves, 1.0, 1.0),
        Kernel::Matern52 => KernelSpec::matern(MaternSmoothness::FiveHalves, 1.0, 1.0),
    };
    if a.ard && a.kernel != Kernel::Se {
        template.theta = vec![1.0; d];
    }
    if let Some(n) = a.noise {
        if !(n >= 0.0) {
            return Err("--noise must be nonnegative".into());
        }
        template.noise_variance = n;
    } else {
        template.noise_variance = 1e-2;
    }
    let options = FitOptions {
        seeds: a.restarts.max(1),
        rng_seed: a.seed,
        fit_noise: a.noise.is_none(),
        ..FitOptions::default()
    };
    let outcome = fit_hyperparameters(&data, &template, &options).map_err(|e| e.to_string())?;
    print(
        out,
        &json!({
            "observations": data.len(),
            "dim": d,
            "kernel": outcome.spec,
            "log_likelihood": outcome.log_likelihood,
            "evaluations": outcome.evaluations,
            "fallback": outcome.fallback,
        }),
    )
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime
        .block_on(crate::service::serve(a.addr, a.data_dir.clone()))
        .map_err(|e| e.to_string())
}
