//! Coupled sequential Monte Carlo.
//!
//! Two bootstrap particle filters are run side by side on a shared noise
//! stream and resampled jointly through a coupling matrix of their weight
//! vectors. The coupling can be the independent product, the maximal
//! coupling, or an entropy-regularised optimal transport plan computed by
//! Sinkhorn scaling, either dense or restricted to a nearest-neighbour
//! support graph built with a KD-tree.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. All transcendental functions go through [`libm`] so results do
//! not depend on the platform math library.
//!
//! Module map:
//!
//! - [`simplex`]: weight vectors, coupling matrices, independent and maximal couplings
//! - [`transport`]: dense and sparse Sinkhorn, exact small-instance transport
//! - [`neighbours`]: KD-tree R-nearest-neighbour search
//! - [`resampling`]: coupled multinomial and systematic resampling
//! - [`filter`]: bootstrap and coupled particle filters
//! - [`models`]: Ricker, 2-d diffusion, prokaryotic auto-regulation, linear-Gaussian
//! - [`estimators`]: multilevel, delta log-likelihood, noisy and correlated pseudo-marginal MCMC, IACT

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod estimators;
pub mod filter;
pub mod math;
pub mod models;
pub mod neighbours;
pub mod resampling;
pub mod rng;
pub mod simplex;
pub mod transport;

pub use error::{Error, Result};
pub use filter::{
    bootstrap_filter, coupled_filter, CoupledRun, CouplingScheme, FilterConfig, ParticleCloud,
    StateSpaceModel, StepSummary,
};
pub use simplex::{CouplingMatrix, WeightSimplex};
