//! Line-delimited JSON traces: one record per iteration or query.

use std::io::{self, Write};

use bayesopt_core::harness::{PreferenceBenchmark, ScalarBenchmark, ScalarStrategy, TraceRecord};
use bayesopt_core::PairStrategy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarLine {
    pub objective: String,
    pub strategy: ScalarStrategy,
    #[serde(flatten)]
    pub record: TraceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceLine {
    pub strategy: PairStrategy,
    pub trial: usize,
    pub seed: u64,
    /// 1-based query count.
    pub query: usize,
    pub incumbent_value: f64,
    pub optimum_value: f64,
    pub reached: bool,
}

/// One evaluation of an objective with no known optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationLine {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceLine {
    Scalar(ScalarLine),
    Preference(PreferenceLine),
    Evaluation(EvaluationLine),
}

pub fn write_line<W: Write>(out: &mut W, line: &TraceLine) -> io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

pub fn write_scalar<W: Write>(out: &mut W, bench: &ScalarBenchmark) -> io::Result<()> {
    for trial in &bench.trials {
        for record in &trial.records {
            write_line(
                out,
                &TraceLine::Scalar(ScalarLine {
                    objective: bench.objective.clone(),
                    strategy: bench.strategy,
                    record: record.clone(),
                }),
            )?;
        }
    }
    Ok(())
}

pub fn write_preference<W: Write>(out: &mut W, bench: &PreferenceBenchmark) -> io::Result<()> {
    for (i, trial) in bench.trials.iter().enumerate() {
        let last = trial.incumbent_values.len();
        for (q, v) in trial.incumbent_values.iter().enumerate() {
            write_line(
                out,
                &TraceLine::Preference(PreferenceLine {
                    strategy: bench.strategy,
                    trial: i,
                    seed: trial.seed,
                    query: q + 1,
                    incumbent_value: *v,
                    optimum_value: trial.optimum.value,
                    reached: trial.reached && q + 1 == last,
                }),
            )?;
        }
    }
    Ok(())
}

/// Parses a trace back, one line at a time.
pub fn read_lines(text: &str) -> serde_json::Result<Vec<TraceLine>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
