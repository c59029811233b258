//! DIRECT ("DIviding RECTangles") global maximization over a box, plus a
//! multistart simplex maximizer used as cross-check and fallback.
//!
//! The search runs in the unit cube. Each rectangle is a center with one
//! trisection level per dimension (side `3^-level`). Every iteration picks
//! the potentially optimal rectangles, the lower-right convex hull of
//! (half-diagonal, −value) with the usual ε condition, and trisects each along
//! its longest sides, ordered by the best value sampled along each side.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Bounds;
use crate::simplex::{self, SimplexOptions};

/// Balance parameter of the potentially-optimal test.
pub const EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximizerBudget {
    pub max_evaluations: usize,
    pub max_iterations: usize,
    /// Rectangles whose half-diagonal (in unit-cube coordinates) is below
    /// this are not divided further.
    pub min_rectangle_diagonal: f64,
}

impl Default for MaximizerBudget {
    fn default() -> Self {
        MaximizerBudget {
            max_evaluations: 2000,
            max_iterations: 100,
            min_rectangle_diagonal: 1e-12,
        }
    }
}

impl MaximizerBudget {
    pub fn evaluations(max_evaluations: usize) -> Self {
        MaximizerBudget {
            max_evaluations,
            max_iterations: usize::MAX,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0
            || self.max_iterations == 0
            || !(self.min_rectangle_diagonal > 0.0)
        {
            return Err(Error::invalid("maximizer budget entries must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// A rectangle in input coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
struct Cell {
    center: Vec<f64>,
    levels: Vec<u32>,
    value: f64,
    diagonal: f64,
}

fn half_diagonal(levels: &[u32]) -> f64 {
    // Sorting makes equal-size rectangles produce bit-identical diagonals.
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    let sum: f64 = sorted.iter().map(|l| libm::pow(9.0, -(*l as f64))).sum();
    0.5 * libm::sqrt(sum)
}

fn side(level: u32) -> f64 {
    libm::pow(3.0, -(level as f64))
}

/// Resumable DIRECT state; `best()` is valid after every step.
pub struct Direct<F> {
    objective: F,
    bounds: Bounds,
    budget: MaximizerBudget,
    cells: Vec<Cell>,
    best: usize,
    evaluations: usize,
    iterations: usize,
    finished: bool,
}

impl<F: FnMut(&[f64]) -> f64> Direct<F> {
    /// Evaluates the domain center.
    pub fn new(objective: F, bounds: &Bounds, budget: MaximizerBudget) -> Result<Self> {
        budget.validate()?;
        let d = bounds.dim();
        let mut direct = Direct {
            objective,
            bounds: bounds.clone(),
            budget,
            cells: Vec::new(),
            best: 0,
            evaluations: 0,
            iterations: 0,
            finished: false,
        };
        let center = alloc::vec![0.5; d];
        let value = direct.evaluate(&center)?;
        let levels = alloc::vec![0; d];
        direct.cells.push(Cell {
            diagonal: half_diagonal(&levels),
            center,
            levels,
            value,
        });
        Ok(direct)
    }

    fn evaluate(&mut self, unit: &[f64]) -> Result<f64> {
        let mut x = self.bounds.from_unit(unit);
        self.bounds.clamp(&mut x);
        self.evaluations += 1;
        let v = (self.objective)(&x);
        if v.is_nan() {
            return Err(Error::InvalidObjective { point: x });
        }
        Ok(v)
    }

    pub fn best(&self) -> Maximum {
        let cell = &self.cells[self.best];
        let mut point = self.bounds.from_unit(&cell.center);
        self.bounds.clamp(&mut point);
        Maximum {
            point,
            value: cell.value,
            evaluations: self.evaluations,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Largest half-diagonal among current rectangles, in unit-cube units.
    pub fn max_diagonal(&self) -> f64 {
        self.cells.iter().map(|c| c.diagonal).fold(0.0, f64::max)
    }

    pub fn rectangles(&self) -> impl Iterator<Item = Rectangle> + '_ {
        self.cells.iter().map(|c| Rectangle {
            center: self.bounds.from_unit(&c.center),
            half_widths: c
                .levels
                .iter()
                .enumerate()
                .map(|(i, l)| 0.5 * side(*l) * self.bounds.width(i))
                .collect(),
            value: c.value,
        })
    }

    /// Indices of potentially optimal cells, smallest diagonal first.
    fn potentially_optimal(&self) -> Vec<usize> {
        // Best cell per distinct diagonal, sorted by diagonal.
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&self.cells[a], &self.cells[b]);
            ca.diagonal
                .total_cmp(&cb.diagonal)
                .then(cb.value.total_cmp(&ca.value))
                .then(a.cmp(&b))
        });
        let mut classes: Vec<usize> = Vec::new();
        for idx in order {
            match classes.last() {
                Some(&last) if self.cells[last].diagonal == self.cells[idx].diagonal => {}
                _ => classes.push(idx),
            }
        }

        // Minimization view: f = −value.
        let f = |i: usize| -self.cells[i].value;
        let d = |i: usize| self.cells[i].diagonal;
        let f_min = -self.cells[self.best].value;
        let threshold = f_min - EPSILON * libm::fabs(f_min);

        let mut selected = Vec::new();
        for (pos, &j) in classes.iter().enumerate() {
            let k_low = classes[..pos]
                .iter()
                .map(|&i| (f(j) - f(i)) / (d(j) - d(i)))
                .fold(f64::NEG_INFINITY, f64::max);
            let k_high = classes[pos + 1..]
                .iter()
                .map(|&i| (f(i) - f(j)) / (d(i) - d(j)))
                .fold(f64::INFINITY, f64::min);
            if !(k_high > 0.0) || k_low > k_high {
                continue;
            }
            if k_high.is_finite() && f(j) - k_high * d(j) > threshold {
                continue;
            }
            selected.push(j);
        }
        selected
    }

    fn divide(&mut self, idx: usize) -> Result<()> {
        let parent = self.cells[idx].clone();
        let min_level = *parent.levels.iter().min().unwrap_or(&0);
        let long_dims: Vec<usize> = (0..parent.levels.len())
            .filter(|&i| parent.levels[i] == min_level)
            .collect();
        let delta = side(min_level) / 3.0;

        let mut samples = Vec::with_capacity(long_dims.len());
        for &i in &long_dims {
            let mut lo = parent.center.clone();
            lo[i] -= delta;
            let mut hi = parent.center.clone();
            hi[i] += delta;
            let f_lo = self.evaluate(&lo)?;
            let f_hi = self.evaluate(&hi)?;
            samples.push((i, lo, f_lo, hi, f_hi));
        }
        // Best-sampled dimension first so it keeps the biggest pieces.
        samples.sort_by(|a, b| {
            let wa = a.2.max(a.4);
            let wb = b.2.max(b.4);
            wb.total_cmp(&wa).then(a.0.cmp(&b.0))
        });

        let mut levels = parent.levels.clone();
        for (i, lo, f_lo, hi, f_hi) in samples {
            levels[i] += 1;
            let diagonal = half_diagonal(&levels);
            for (center, value) in [(lo, f_lo), (hi, f_hi)] {
                self.cells.push(Cell {
                    center,
                    levels: levels.clone(),
                    value,
                    diagonal,
                });
                let new = self.cells.len() - 1;
                if value > self.cells[self.best].value {
                    self.best = new;
                }
            }
        }
        let diagonal = half_diagonal(&levels);
        let cell = &mut self.cells[idx];
        cell.levels = levels;
        cell.diagonal = diagonal;
        Ok(())
    }

    /// Runs one iteration. Returns `false` once the budget is exhausted or
    /// nothing is left to divide.
    pub fn step(&mut self) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        if self.iterations >= self.budget.max_iterations {
            self.finished = true;
            return Ok(false);
        }
        let selected = self.potentially_optimal();
        let mut divided = false;
        for idx in selected {
            let cell = &self.cells[idx];
            if cell.diagonal < self.budget.min_rectangle_diagonal {
                continue;
            }
            let min_level = *cell.levels.iter().min().unwrap_or(&0);
            let cost = 2 * cell.levels.iter().filter(|l| **l == min_level).count();
            if self.evaluations + cost > self.budget.max_evaluations {
                self.finished = true;
                break;
            }
            self.divide(idx)?;
            divided = true;
        }
        self.iterations += 1;
        if !divided {
            self.finished = true;
        }
        Ok(!self.finished)
    }

    pub fn run(mut self) -> Result<Maximum> {
        while self.step()? {}
        Ok(self.best())
    }
}

/// Deterministic global maximization of `objective` over `bounds`.
pub fn maximize<F>(objective: F, bounds: &Bounds, budget: &MaximizerBudget) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> f64,
{
    Direct::new(objective, bounds, *budget)?.run()
}

/// Simplex ascent from each start in turn, splitting the evaluation budget
/// evenly. Returns the best local maximum found.
pub fn multistart_from<F>(
    mut objective: F,
    bounds: &Bounds,
    starts: &[Vec<f64>],
    budget: &MaximizerBudget,
) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> f64,
{
    budget.validate()?;
    if starts.is_empty() {
        return Err(Error::invalid("multistart needs at least one start"));
    }
    for s in starts {
        if s.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                found: s.len(),
            });
        }
    }
    let lower: Vec<f64> = bounds.ranges().iter().map(|r| r.0).collect();
    let upper: Vec<f64> = bounds.ranges().iter().map(|r| r.1).collect();
    let options = SimplexOptions {
        max_evaluations: (budget.max_evaluations / starts.len()).max(1),
        relative_tolerance: 1e-12,
        initial_step: 0.1,
    };

    let mut nan_at: Option<Vec<f64>> = None;
    let mut best: Option<Maximum> = None;
    let mut evaluations = 0;
    for start in starts {
        let result = simplex::minimize(
            |x| {
                let v = objective(x);
                if v.is_nan() && nan_at.is_none() {
                    nan_at = Some(x.to_vec());
                }
                -v
            },
            start,
            &lower,
            &upper,
            &options,
        );
        if let Some(point) = nan_at.take() {
            return Err(Error::InvalidObjective { point });
        }
        evaluations += result.evaluations;
        let value = -result.value;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(Maximum {
                point: result.point,
                value,
                evaluations: 0,
            });
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evaluations;
    Ok(best)
}

/// [`multistart_from`] with `starts` points drawn uniformly from the box.
pub fn multistart_maximize<F>(
    objective: F,
    bounds: &Bounds,
    starts: usize,
    rng_seed: u64,
    budget: &MaximizerBudget,
) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let points: Vec<Vec<f64>> = (0..starts.max(1))
        .map(|_| {
            bounds
                .ranges()
                .iter()
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect()
        })
        .collect();
    multistart_from(objective, bounds, &points, budget)
}
