//! Bayesian log-linear and logistic regression for contingency tables under
//! g-priors.
//!
//! The crate represents complete contingency tables, builds corner-point
//! design matrices for hierarchical interaction models, constructs g-priors
//! and their Inverse-Gamma mixtures for both the Poisson log-linear and the
//! grouped binomial (logistic) family, and mechanizes the beta = T lambda
//! correspondence between the two: the prior a log-linear g-prior implies on
//! the logistic parameters is itself the logistic g-prior, and the
//! `correspondence` module verifies that equality numerically on any model.
//! Posterior computation is by adaptive random-walk Metropolis with optional
//! Gibbs updates for a random g, and model determination runs over graphical
//! model spaces by reversible jump with Laplace-centered proposals or by
//! exact enumeration of Laplace-approximated marginal likelihoods.

pub mod correspondence;
pub mod design;
pub mod error;
pub mod inference;
pub mod models;
pub mod priors;
pub mod scenarios;
pub mod tables;

pub use error::{Error, Result};
