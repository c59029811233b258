//! Space-filling initial designs.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gp::Bounds;

/// How the first `n_seed` points of a run are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeedDesign {
    /// Stratum midpoints `(k+1)/(n+1)`, with dimension `j` cyclically
    /// shifted by `j` so every stratum is hit once per dimension.
    #[default]
    Stratified,
    /// Latin hypercube: shuffled strata with a uniform offset inside each.
    Randomized { seed: u64 },
}

/// Number of seed points for a `dim`-dimensional problem.
pub fn seed_count(dim: usize) -> usize {
    (dim + 1).max(2)
}

pub fn seed_points(bounds: &Bounds, n: usize, design: SeedDesign) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    match design {
        SeedDesign::Stratified => (0..n)
            .map(|k| {
                let unit: Vec<f64> = (0..d)
                    .map(|j| ((k + j) % n + 1) as f64 / (n + 1) as f64)
                    .collect();
                bounds.from_unit(&unit)
            })
            .collect(),
        SeedDesign::Randomized { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let strata: Vec<Vec<usize>> = (0..d)
                .map(|_| {
                    let mut s: Vec<usize> = (0..n).collect();
                    s.shuffle(&mut rng);
                    s
                })
                .collect();
            (0..n)
                .map(|k| {
                    let unit: Vec<f64> = (0..d)
                        .map(|j| (strata[j][k] as f64 + rng.random::<f64>()) / n as f64)
                        .collect();
                    bounds.from_unit(&unit)
                })
                .collect()
        }
    }
}
