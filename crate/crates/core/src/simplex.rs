//! Nelder–Mead simplex descent restricted to a box.
//!
//! Used for hyperparameter fitting (in log-space) and as the local search of
//! the multistart acquisition maximizer. Trial points are projected onto the
//! box, and non-finite objective values are treated as `+∞`.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    /// Stop once `f_worst − f_best ≤ tolerance · max(|f_best|, 1e-12)`.
    pub relative_tolerance: f64,
    /// Initial edge length as a fraction of each box side.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_evaluations: 200,
            relative_tolerance: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Minimizes `f` starting from `start`. The returned value is never worse
/// than `f(start)`.
pub fn minimize<F>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &SimplexOptions,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x0 = start.to_vec();
    project(&mut x0, lower, upper);
    let f0 = eval(&x0, &mut evaluations);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        if evaluations >= options.max_evaluations {
            break;
        }
        let mut x = x0.clone();
        let step = options.initial_step * (upper[i] - lower[i]);
        // Step inward when the start sits on the upper face.
        x[i] = if x0[i] + step <= upper[i] {
            x0[i] + step
        } else {
            x0[i] - step
        };
        project(&mut x, lower, upper);
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }

    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);

    while simplex.len() == n + 1 && evaluations < options.max_evaluations {
        simplex.sort_by(by_value);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite()
            && worst - best <= options.relative_tolerance * libm::fabs(best).max(1e-12)
        {
            break;
        }

        let mut centroid = alloc::vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut x, lower, upper);
            x
        };

        let reflected = along(1.0);
        let fr = eval(&reflected, &mut evaluations);
        if fr < simplex[0].1 {
            if evaluations >= options.max_evaluations {
                simplex[n] = (reflected, fr);
                break;
            }
            let expanded = along(2.0);
            let fe = eval(&expanded, &mut evaluations);
            simplex[n] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        if evaluations >= options.max_evaluations {
            break;
        }
        let (contracted, fc) = if fr < simplex[n].1 {
            let x = along(0.5);
            let v = eval(&x, &mut evaluations);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x, &mut evaluations);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (contracted, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evaluations >= options.max_evaluations {
                break;
            }
            let mut x: Vec<f64> = best_x
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            project(&mut x, lower, upper);
            let v = eval(&x, &mut evaluations);
            *vertex = (x, v);
        }
    }

    let (point, value) = simplex.into_iter().min_by(by_value).unwrap_or((x0, f0));
    SimplexResult {
        point,
        value,
        evaluations,
    }
}
