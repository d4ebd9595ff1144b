//! Doubly-robust estimation of a counterfactual mean with kernel
//! U-statistic bias corrections.
//!
//! The estimators take a [`Dataset`] of `(Y, A, X)` observations together
//! with per-observation nuisance evaluations ([`NuisanceValues`]), supplied
//! by the caller or produced by [`crossfit::crossfit_nuisances`].

pub mod bandwidth;
pub mod crossfit;
pub mod data;
pub mod error;
pub mod estimators;
pub mod folds;
pub mod io;
pub mod kernels;
pub mod logistic;
pub mod lowerbounds;
pub mod normalizers;
pub mod pairwise;
pub mod plm;
pub mod quadrature;
pub mod simulation;

pub use data::{validate, Bounds, Dataset, NuisanceValues, Observation};
pub use error::{Error, ErrorClass, Result};
pub use estimators::{estimate, Bandwidth, EstimateOptions, EstimateReport, Method};
pub use kernels::{KernelFamily, KernelSpec};
