//! Random Energy Model with exponential-type environments.
//!
//! The crate is split by concern:
//!
//! - [`environment`]: the i.i.d. energy law and its exact CDF and interval masses.
//! - [`theory`]: limiting free energy, rate function, Poisson exceedance law.
//! - [`engine`]: streaming enumeration of all `2^N` configurations of a replica.
//! - [`pointprocess`]: Poisson-Dirichlet samplers and the sequence space metric.
//! - [`stats`]: goodness-of-fit tests and replica summaries.
//! - [`rng`]: counter-based random streams and seed derivation.

pub mod engine;
pub mod environment;
pub mod error;
pub mod pointprocess;
mod quadrature;
pub mod rng;
pub mod stats;
pub mod theory;

pub use environment::{Environment, OpenInterval};
pub use error::{Error, Result};
