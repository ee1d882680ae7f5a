//! Probabilistic K-means (PKM): soft K-means with the centers eliminated,
//! solved as a nonlinear program over the product of probability simplices
//! by active-set gradient projection.

pub mod baselines;
pub mod constraints;
pub mod data;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod objective;
pub mod solvers;

pub use data::{ClusterResult, Dataset, IterationRecord, ProbabilityMatrix, Termination};
pub use error::{Error, Result};
pub use solvers::{solve, Method, SolverConfig};
