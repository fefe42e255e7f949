//! Spin-glass optimization, sampling and benchmarking.
//!
//! The crate is organised around a single problem representation,
//! [`IsingModel`], with energy `H(s) = Σ J_ij s_i s_j + Σ h_i s_i` over
//! spins `s_i ∈ {-1, +1}`. Everything else consumes it:
//!
//! - [`model`]: Ising/QUBO forms, conversions, exact Gibbs tables.
//! - [`instances`]: benchmark instance families and the COO text format.
//! - [`oracle`]: Gray-code exhaustive search and exact conditionals.
//! - [`annealers`]: simulated annealing, parallel annealing, discrete
//!   simulated bifurcation and greedy descent.
//! - [`peps`]: Potts clustering, PEPS construction, boundary-MPS
//!   contraction and branch-and-bound in probability space.
//! - [`metrics`]: approximation ratio, time-to-solution and diversity.
//! - [`thermo`]: pseudo-likelihood thermometry and TUR bounds.
//! - [`dynamics`]: closed-system transverse-field annealing simulation.

// Negated comparisons are used on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealers;
pub mod dynamics;
pub mod error;
pub mod instances;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod peps;
pub mod rng;
pub mod thermo;

pub use error::{Error, Result};
pub use model::{BinaryConfig, GibbsTable, IsingModel, QuboModel, SpinConfig};
