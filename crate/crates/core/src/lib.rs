//! Identification of stochastic PDEs from ensembles of sampled trajectories.
//!
//! The pipeline builds finite-difference feature dictionaries, identifies
//! drift terms from sample means with subspace pursuit, decides whether the
//! noise is additive, and identifies diffusion terms from squared drift
//! residuals with quadratic subspace pursuit. Candidates at every sparsity
//! level are ranked by time-integrated lack-of-fit scores.

pub mod catalog;
pub mod cg;
pub mod coeffs;
pub mod data;
pub mod dictionary;
pub mod diffusion;
pub mod drift;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod parallel;
pub mod pipeline;
pub mod qsp;
pub mod select;
pub mod spectral;
pub mod simulate;
pub mod stats;
pub mod stencil;

pub use data::{TrajectoryEnsemble, UniformGrid};
pub use dictionary::{FeatureDictionary, FeatureSpec, Symbol};
pub use error::{Error, Result};
