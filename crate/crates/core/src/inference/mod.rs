//! Posterior computation: likelihoods, mode finding and Laplace
//! approximations, adaptive Metropolis sampling with Gibbs g-updates,
//! posterior summaries, and model determination.

pub mod likelihood;
pub mod mcmc;
pub mod mle;
pub mod select;
pub mod summary;

pub use likelihood::{loglik_binomial, loglik_poisson, GlmModel};
pub use mcmc::{gibbs_update_g, initial_g, prior_quadform, run_chain, Chain, McmcSettings};
pub use mle::{deviance_mle, laplace_log_marginal, mle, posterior_mode, Mode};
pub use select::{
    enumerate_models, rj_select, tv_distance, ModelPosterior, RjSettings, SelectionProblem,
};
pub use summary::{summarize, summarize_g, summarize_series, ParamSummary};
