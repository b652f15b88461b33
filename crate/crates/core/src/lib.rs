//! Gibbs-type partition mixture models: exact and MCMC posteriors on the
//! number of clusters, together with certified upper bounds on how much
//! posterior mass small block counts can carry.
//!
//! The crate is organized bottom-up:
//!
//! * [`num`], [`quad`] — log-space accumulation and adaptive quadrature
//! * [`partition`] — EPPF weight systems (Dirichlet process, Pitman-Yor,
//!   tabulated), priors on the block count, partition enumeration
//! * [`expfam`] — conjugate exponential families and their marginals
//! * [`data`] — observation sets with cached sufficient statistics
//! * [`laplace`] — certified Laplace-approximation constants
//! * [`posterior`] — exact posteriors on the number of clusters
//! * [`gibbs`] — collapsed Gibbs sampler over partitions
//! * [`theory`] — posterior upper bounds and capture diagnostics
//! * [`experiments`] — reproducible synthetic-data studies
//! * [`formats`] — JSON/CSV input and output schemas

pub mod data;
pub mod error;
pub mod expfam;
pub mod experiments;
pub mod formats;
pub mod gibbs;
pub mod laplace;
pub mod num;
pub mod partition;
pub mod posterior;
pub mod quad;
pub mod theory;

pub use error::{Error, Result};
pub use partition::{GibbsPartitionModel, OrderedPartition};
