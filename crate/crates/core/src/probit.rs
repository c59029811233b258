//! Probit (Thurstone–Mosteller) preference model over a GP latent valuation.
//!
//! A preference `r ≻ c` has likelihood `Φ(Z)` with
//! `Z = (f(r) − f(c)) / (√2 σ)`. The latent posterior is approximated by a
//! Gaussian at its mode (Laplace), found by damped Newton–Raphson.
//!
//! Newton runs on `a = K⁻¹f` rather than on `f`: the gradient is `b − a`
//! and the step solves `(I + CK) δa = b − a`, so `K` is never inverted.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Bounds, PosteriorSummary};
use crate::kernel::{kernel_matrix, KernelSpec};
use crate::linalg::{dot, Cholesky, Lu, Matrix};
use crate::special::{inverse_mills, log_norm_cdf};

/// Distance below which two points count as the same item.
pub const SAME_ITEM: f64 = 1e-9;

pub(crate) fn same_point(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| libm::fabs(x - y) <= tol)
}

/// Distinct items plus ordered preferences `(winner, loser)` over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    items: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize)>,
    bounds: Bounds,
}

impl PreferenceDataset {
    pub fn new(bounds: Bounds) -> Self {
        PreferenceDataset {
            items: Vec::new(),
            pairs: Vec::new(),
            bounds,
        }
    }

    pub fn items(&self) -> &[Vec<f64>] {
        &self.items
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn find(&self, x: &[f64]) -> Option<usize> {
        self.items.iter().position(|p| same_point(p, x, SAME_ITEM))
    }

    /// Index of `x`, inserting it if no existing item is within [`SAME_ITEM`].
    pub fn add_item(&mut self, x: Vec<f64>) -> Result<usize> {
        self.bounds.check_point(&x)?;
        if let Some(i) = self.find(&x) {
            return Ok(i);
        }
        self.items.push(x);
        Ok(self.items.len() - 1)
    }

    pub fn add_pair(&mut self, winner: usize, loser: usize) -> Result<()> {
        if winner == loser {
            return Err(Error::invalid("a preference needs two different items"));
        }
        if winner >= self.items.len() || loser >= self.items.len() {
            return Err(Error::invalid("preference refers to an unknown item"));
        }
        self.pairs.push((winner, loser));
        Ok(())
    }

    /// Records `winner ≻ loser`, adding either point as a new item if needed.
    pub fn record(&mut self, winner: Vec<f64>, loser: Vec<f64>) -> Result<()> {
        self.bounds.check_point(&winner)?;
        self.bounds.check_point(&loser)?;
        if same_point(&winner, &loser, SAME_ITEM) {
            return Err(Error::invalid("winner and loser are the same point"));
        }
        let w = self.add_item(winner)?;
        let l = self.add_item(loser)?;
        self.add_pair(w, l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            gradient_tolerance: 1e-6,
            max_iterations: 100,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceResult {
    pub f_map: Vec<f64>,
    /// `K⁻¹ f_map`; equals `b` at the mode.
    pub alpha: Vec<f64>,
    pub c_matrix: Vec<Vec<f64>>,
    pub b_vector: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub log_posterior: f64,
}

/// Unnormalized log-posterior `−½ fᵀK⁻¹f + Σ log Φ(Zᵢ)` and its derivatives.
pub struct ProbitObjective<'a> {
    gram: Matrix,
    chol: Cholesky,
    pairs: &'a [(usize, usize)],
    sigma: f64,
}

impl<'a> ProbitObjective<'a> {
    pub fn new(kernel: &KernelSpec, data: &'a PreferenceDataset, sigma_noise: f64) -> Result<Self> {
        if !(sigma_noise > 0.0) || !sigma_noise.is_finite() {
            return Err(Error::invalid("probit noise must be positive"));
        }
        if data.items.is_empty() {
            return Err(Error::invalid("preference model needs at least one item"));
        }
        let mut gram = kernel.noisy_gram(&data.items)?;
        let (chol, jitter) = kernel.factor(&data.items)?;
        gram.add_diagonal(jitter);
        Ok(ProbitObjective {
            gram,
            chol,
            pairs: &data.pairs,
            sigma: sigma_noise,
        })
    }

    /// Covariance of the latent values at the items, jitter included.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    fn z(&self, f: &[f64], (r, c): (usize, usize)) -> f64 {
        (f[r] - f[c]) / (core::f64::consts::SQRT_2 * self.sigma)
    }

    fn likelihood(&self, f: &[f64]) -> f64 {
        self.pairs.iter().map(|p| log_norm_cdf(self.z(f, *p))).sum()
    }

    pub fn value(&self, f: &[f64]) -> f64 {
        let a = self.chol.solve(f);
        -0.5 * dot(f, &a) + self.likelihood(f)
    }

    /// Gradient of the likelihood term.
    pub fn b_vector(&self, f: &[f64]) -> Vec<f64> {
        let mut b = alloc::vec![0.0; f.len()];
        let scale = 1.0 / (core::f64::consts::SQRT_2 * self.sigma);
        for &(r, c) in self.pairs {
            let lambda = inverse_mills(self.z(f, (r, c)));
            b[r] += scale * lambda;
            b[c] -= scale * lambda;
        }
        b
    }

    /// Negative Hessian of the likelihood term.
    pub fn c_matrix(&self, f: &[f64]) -> Matrix {
        let n = f.len();
        let mut c = Matrix::zeros(n, n);
        let scale = 1.0 / (2.0 * self.sigma * self.sigma);
        for &(r, cc) in self.pairs {
            let z = self.z(f, (r, cc));
            let lambda = inverse_mills(z);
            let w = scale * lambda * (lambda + z);
            c[(r, r)] += w;
            c[(cc, cc)] += w;
            c[(r, cc)] -= w;
            c[(cc, r)] -= w;
        }
        c
    }

    /// `−K⁻¹f + b`.
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let a = self.chol.solve(f);
        self.b_vector(f)
            .iter()
            .zip(&a)
            .map(|(b, a)| b - a)
            .collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(libm::fabs(*x)))
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Mode of the latent posterior and the curvature there.
pub fn laplace_map(
    kernel: &KernelSpec,
    data: &PreferenceDataset,
    sigma_noise: f64,
    options: &LaplaceOptions,
) -> Result<LaplaceResult> {
    if data.items.len() < 2 || data.pairs.is_empty() {
        return Err(Error::invalid(
            "Laplace fit needs at least two items and one preference",
        ));
    }
    let objective = ProbitObjective::new(kernel, data, sigma_noise)?;
    let k = objective.gram();
    let n = data.items.len();
    let psi = |f: &[f64], a: &[f64]| -0.5 * dot(f, a) + objective.likelihood(f);

    let mut f = alloc::vec![0.0; n];
    let mut a = alloc::vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let b = objective.b_vector(&f);
        let g: Vec<f64> = b.iter().zip(&a).map(|(b, a)| b - a).collect();
        if max_abs(&g) <= options.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }
        iterations += 1;

        let c = objective.c_matrix(&f);
        let mut system = c.mul(k);
        system.add_diagonal(1.0);
        let lu = Lu::new(&system).ok_or(Error::Conditioning { jitter: 0.0 })?;
        let step_a = lu.solve(&g);
        let step_f = k.mul_vec(&step_a);

        let current = psi(&f, &a);
        // Near the mode the change in ψ is below its rounding error.
        let floor = current - 64.0 * f64::EPSILON * (1.0 + libm::fabs(current));
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=options.max_halvings {
            let f_new: Vec<f64> = f.iter().zip(&step_f).map(|(x, d)| x + scale * d).collect();
            let a_new: Vec<f64> = a.iter().zip(&step_a).map(|(x, d)| x + scale * d).collect();
            if psi(&f_new, &a_new) >= floor {
                f = f_new;
                a = a_new;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let b = objective.b_vector(&f);
    let final_gradient_norm = max_abs(&b.iter().zip(&a).map(|(b, a)| b - a).collect::<Vec<_>>());
    Ok(LaplaceResult {
        c_matrix: to_rows(&objective.c_matrix(&f)),
        log_posterior: psi(&f, &a),
        b_vector: b,
        alpha: a,
        f_map: f,
        converged: converged || final_gradient_norm <= options.gradient_tolerance,
        iterations,
        final_gradient_norm,
    })
}

/// Predictive distribution of the latent valuation after a Laplace fit.
#[derive(Debug, Clone)]
pub struct PreferenceModel {
    kernel: KernelSpec,
    items: Vec<Vec<f64>>,
    laplace: LaplaceResult,
    /// `(I + CK)⁻¹ C`, so that `σ² = k(x,x) − kᵀ M k`.
    variance_weights: Matrix,
}

impl PreferenceModel {
    pub fn new(
        kernel: &KernelSpec,
        data: &PreferenceDataset,
        laplace: LaplaceResult,
    ) -> Result<Self> {
        if !laplace.converged {
            return Err(Error::invalid("Laplace approximation did not converge"));
        }
        if laplace.f_map.len() != data.items.len() {
            return Err(Error::invalid("Laplace result does not match the dataset"));
        }
        let n = data.items.len();
        let k = kernel_matrix(kernel, &data.items)?;
        let c = Matrix::from_fn(n, n, |i, j| laplace.c_matrix[i][j]);
        let mut system = c.mul(&k);
        system.add_diagonal(1.0);
        let lu = Lu::new(&system).ok_or(Error::Conditioning { jitter: 0.0 })?;
        Ok(PreferenceModel {
            kernel: kernel.clone(),
            items: data.items.clone(),
            variance_weights: lu.solve_matrix(&c),
            laplace,
        })
    }

    /// Laplace fit followed by model construction.
    pub fn fit(kernel: &KernelSpec, data: &PreferenceDataset, sigma_noise: f64) -> Result<Self> {
        let laplace = laplace_map(kernel, data, sigma_noise, &LaplaceOptions::default())?;
        Self::new(kernel, data, laplace)
    }

    pub fn laplace(&self) -> &LaplaceResult {
        &self.laplace
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn predict(&self, x: &[f64]) -> Result<PosteriorSummary> {
        if let Some(p) = self.items.first() {
            if p.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    found: x.len(),
                });
            }
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> PosteriorSummary {
        let k = self.kernel.cross(&self.items, x);
        let mean = dot(&k, &self.laplace.alpha);
        let mk = self.variance_weights.mul_vec(&k);
        let variance = (self.kernel.signal_variance - dot(&k, &mk)).max(0.0);
        PosteriorSummary {
            mean,
            variance,
            includes_observation_noise: false,
        }
    }
}
