//! Objectives evaluated by an external program.

use std::cell::RefCell;
use std::process::Command;

use bayesopt_core::harness::Objective;
use bayesopt_core::Bounds;

/// Runs `program args… x₁ … x_d` per evaluation and reads the value from the
/// last non-empty line of its standard output. Failures evaluate to NaN,
/// which the optimizer reports as an invalid objective; the reason is kept
/// in [`CommandObjective::last_error`].
#[derive(Debug)]
pub struct CommandObjective {
    program: String,
    args: Vec<String>,
    bounds: Bounds,
    last_error: RefCell<Option<String>>,
}

impl CommandObjective {
    pub fn new(program: impl Into<String>, args: Vec<String>, bounds: Bounds) -> Self {
        CommandObjective {
            program: program.into(),
            args,
            bounds,
            last_error: RefCell::new(None),
        }
    }

    /// Splits a command line on whitespace; no shell quoting.
    pub fn parse(command: &str, bounds: Bounds) -> Option<Self> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts.next()?;
        Some(Self::new(program, parts.collect(), bounds))
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.borrow().clone()
    }

    fn run(&self, x: &[f64]) -> Result<f64, String> {
        let output = Command::new(&self.program)
            .args(&self.args)
            .args(x.iter().map(|v| format!("{v:e}")))
            .output()
            .map_err(|e| format!("cannot run {}: {e}", self.program))?;
        if !output.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let line = stdout
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| format!("{} printed nothing", self.program))?;
        line.trim()
            .parse::<f64>()
            .map_err(|_| format!("{} printed {line:?}, not a number", self.program))
    }
}

impl Objective for CommandObjective {
    fn name(&self) -> &str {
        &self.program
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        match self.run(x) {
            Ok(v) => v,
            Err(e) => {
                *self.last_error.borrow_mut() = Some(e);
                f64::NAN
            }
        }
    }
}
