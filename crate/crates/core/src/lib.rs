//! Bayesian optimization of expensive black-box functions.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery: Gaussian-process surrogates, acquisition functions, the DIRECT
//! global maximizer, the probit preference model with its Laplace
//! approximation, the sequential optimization engines and the benchmark
//! harness. Persistence, the CLI and the HTTP service live in the `bayesopt`
//! crate.
#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]
// `!(x > 0.0)` is how NaN gets rejected; index loops mirror the algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod acquisition;
pub mod design;
pub mod direct;
mod error;
pub mod fit;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod optimizer;
pub mod preference;
pub mod probit;
pub mod simplex;
pub mod special;

pub use acquisition::{AcquisitionKind, AcquisitionSpec, Incumbent};
pub use direct::{MaximizerBudget, Maximum};
pub use error::{Error, Result};
pub use fit::{FitOptions, FitOutcome};
pub use gp::{Bounds, GaussianProcess, ObservationSet, PosteriorSummary};
pub use kernel::{KernelFamily, KernelSpec, MaternSmoothness};
pub use optimizer::{OptimizerConfig, ScalarOptimizer};
pub use preference::{PairStrategy, PreferenceConfig, PreferenceLoop};
pub use probit::{LaplaceResult, PreferenceDataset, PreferenceModel};
