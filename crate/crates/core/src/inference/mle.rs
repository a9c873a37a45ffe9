//! Newton–Raphson mode finding: maximum likelihood, posterior modes under a
//! g-prior, and the Laplace approximation to the marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::priors::GPriorSpec;

use super::likelihood::GlmModel;

const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-9;
const RIDGE: f64 = 1e-8;

/// The penalized objective: log-likelihood plus (optionally) the g-prior log
/// density at a fixed g.
pub struct Objective<'a> {
    pub model: &'a GlmModel,
    pub prior: Option<(&'a GPriorSpec, f64)>,
    /// When set, the likelihood is dropped and the target is the prior alone.
    pub prior_only: bool,
}

impl<'a> Objective<'a> {
    pub fn likelihood_only(model: &'a GlmModel) -> Self {
        Objective {
            model,
            prior: None,
            prior_only: false,
        }
    }

    pub fn posterior(model: &'a GlmModel, prior: &'a GPriorSpec, g: f64) -> Self {
        Objective {
            model,
            prior: Some((prior, g)),
            prior_only: false,
        }
    }

    pub fn n_params(&self) -> usize {
        self.model.n_params()
    }

    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        let mut v = if self.prior_only {
            0.0
        } else {
            self.model.loglik(theta)
        };
        if let Some((prior, g)) = self.prior {
            v += prior.log_density(theta, g)?;
        }
        Ok(v)
    }

    /// Value of the log prior alone, at a possibly different g.
    pub fn value_at_g(&self, theta: &DVector<f64>, g: f64) -> Result<f64> {
        let mut v = if self.prior_only {
            0.0
        } else {
            self.model.loglik(theta)
        };
        if let Some((prior, _)) = self.prior {
            v += prior.log_density(theta, g)?;
        }
        Ok(v)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut grad = if self.prior_only {
            DVector::zeros(theta.len())
        } else {
            self.model.score(theta)
        };
        if let Some((prior, g)) = self.prior {
            let block = prior.gaussian_block(theta)?;
            let diff = block - &prior.mean;
            let chol = prior.chol()?;
            let pull = chol.solve(&diff) / g;
            let offset = theta.len() - prior.dim();
            for j in 0..prior.dim() {
                grad[offset + j] -= pull[j];
            }
        }
        Ok(grad)
    }

    /// Negative Hessian of the objective (expected information for the
    /// likelihood part; exact for the Gaussian prior part).
    pub fn neg_hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = theta.len();
        let mut h = if self.prior_only {
            DMatrix::zeros(p, p)
        } else {
            self.model.fisher(theta)
        };
        if let Some((prior, g)) = self.prior {
            let precision = prior.chol()?.inverse() / g;
            let offset = p - prior.dim();
            for a in 0..prior.dim() {
                for b in 0..prior.dim() {
                    h[(offset + a, offset + b)] += precision[(a, b)];
                }
            }
        }
        Ok(h)
    }
}

/// A located mode with its curvature.
#[derive(Debug, Clone)]
pub struct Mode {
    pub theta: DVector<f64>,
    pub value: f64,
    /// Negative Hessian at the mode (ridge-stabilized when needed).
    pub neg_hessian: DMatrix<f64>,
}

/// Newton–Raphson with step-halving from the given start.
pub fn find_mode(objective: &Objective, start: &DVector<f64>) -> Result<Mode> {
    let mut theta = start.clone();
    let mut value = objective.value(&theta)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteInit);
    }
    for _ in 0..MAX_ITER {
        let grad = objective.gradient(&theta)?;
        let mut h = objective.neg_hessian(&theta)?;
        let scale = h.diagonal().amax().max(1.0);
        for d in 0..h.nrows() {
            h[(d, d)] += RIDGE * scale;
        }
        let chol = Cholesky::new(h).ok_or(Error::NotPositiveDefinite)?;
        let step = chol.solve(&grad);
        // Step-halving: retreat until the objective does not decrease.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta + &step * t;
            let v = objective.value(&cand)?;
            if v.is_finite() && v >= value - 1e-12 * value.abs().max(1.0) {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::ModeFindingFailed(MAX_ITER));
        }
        if grad.amax() < GRAD_TOL * (1.0 + value.abs()) {
            let neg_hessian = objective.neg_hessian(&theta)?;
            return Ok(Mode {
                theta,
                value,
                neg_hessian,
            });
        }
    }
    Err(Error::ModeFindingFailed(MAX_ITER))
}

/// Maximum-likelihood estimate, started at zero.
pub fn mle(model: &GlmModel) -> Result<Mode> {
    let objective = Objective::likelihood_only(model);
    find_mode(&objective, &DVector::zeros(model.n_params()))
}

/// Deviance at the maximum-likelihood estimate.
pub fn deviance_mle(model: &GlmModel) -> Result<f64> {
    Ok(model.deviance(&mle(model)?.theta))
}

/// Posterior mode under the prior at fixed g, started at the prior's
/// Gaussian-block mean (zero for a flat intercept coordinate).
pub fn posterior_mode(model: &GlmModel, prior: &GPriorSpec, g: f64) -> Result<Mode> {
    let objective = Objective::posterior(model, prior, g);
    let p = model.n_params();
    let mut start = DVector::zeros(p);
    let offset = p - prior.dim();
    for j in 0..prior.dim() {
        start[offset + j] = prior.mean[j];
    }
    find_mode(&objective, &start)
}

/// Laplace approximation to the log marginal likelihood at fixed g:
/// `log p(y) ~= l(th^) + log pi(th^) + (d/2) log 2 pi - (1/2) log |H|`.
///
/// With a flat intercept the result is an unnormalized marginal (the flat
/// density's constant cancels in model comparisons that share it).
pub fn laplace_log_marginal(model: &GlmModel, prior: &GPriorSpec, g: f64) -> Result<f64> {
    let mode = posterior_mode(model, prior, g)?;
    let chol = Cholesky::new(mode.neg_hessian.clone()).ok_or(Error::NotPositiveDefinite)?;
    let half_log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    let d = model.n_params() as f64;
    Ok(mode.value + 0.5 * d * (2.0 * std::f64::consts::PI).ln() - half_log_det)
}
