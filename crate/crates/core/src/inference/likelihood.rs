//! Poisson and binomial log-likelihoods, gradients, Fisher information, and
//! deviances.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::tables::BinomialData;

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const ETA_CLAMP: f64 = 500.0;

fn clamp_eta(eta: f64) -> f64 {
    eta.clamp(-ETA_CLAMP, ETA_CLAMP)
}

/// `log n!`.
pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `log C(t, s)`.
pub fn ln_choose(t: u64, s: u64) -> f64 {
    ln_factorial(t) - ln_factorial(s) - ln_factorial(t - s)
}

/// `log(1 + e^x)` without overflow.
fn ln1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A model family bound to its design and data, exposing the quantities the
/// samplers need: log-likelihood, score, and expected information.
#[derive(Debug, Clone)]
pub enum GlmModel {
    Poisson {
        x: DesignMatrix,
        counts: Vec<u64>,
    },
    Binomial {
        x: DesignMatrix,
        data: BinomialData,
    },
}

impl GlmModel {
    pub fn poisson(x: DesignMatrix, counts: Vec<u64>) -> Result<Self> {
        if x.nrows() != counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, counts has {}",
                x.nrows(),
                counts.len()
            )));
        }
        Ok(GlmModel::Poisson { x, counts })
    }

    pub fn binomial(x: DesignMatrix, data: BinomialData) -> Result<Self> {
        if x.nrows() != data.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, data has {}",
                x.nrows(),
                data.n_rows()
            )));
        }
        Ok(GlmModel::Binomial { x, data })
    }

    pub fn design(&self) -> &DesignMatrix {
        match self {
            GlmModel::Poisson { x, .. } => x,
            GlmModel::Binomial { x, .. } => x,
        }
    }

    pub fn n_params(&self) -> usize {
        self.design().ncols()
    }

    pub fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.design().matrix() * theta
    }

    pub fn loglik(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.eta(theta);
        match self {
            GlmModel::Poisson { counts, .. } => eta
                .iter()
                .zip(counts)
                .map(|(&e, &n)| n as f64 * e - clamp_eta(e).exp() - ln_factorial(n))
                .sum(),
            GlmModel::Binomial { data, .. } => eta
                .iter()
                .zip(data.trials().iter().zip(data.successes()))
                .map(|(&e, (&t, &s))| {
                    s as f64 * e - t as f64 * ln1p_exp(e) + ln_choose(t, s)
                })
                .sum(),
        }
    }

    /// Fitted means: `mu_i` for Poisson, success probabilities for binomial.
    pub fn fitted(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = self.eta(theta);
        match self {
            GlmModel::Poisson { .. } => eta.map(|e| clamp_eta(e).exp()),
            GlmModel::Binomial { .. } => eta.map(|e| 1.0 / (1.0 + (-clamp_eta(e)).exp())),
        }
    }

    /// Score vector `X'(y - mu)`.
    pub fn score(&self, theta: &DVector<f64>) -> DVector<f64> {
        let fitted = self.fitted(theta);
        let resid: DVector<f64> = match self {
            GlmModel::Poisson { counts, .. } => DVector::from_iterator(
                counts.len(),
                counts.iter().zip(&fitted).map(|(&n, &m)| n as f64 - m),
            ),
            GlmModel::Binomial { data, .. } => DVector::from_iterator(
                data.n_rows(),
                data.successes()
                    .iter()
                    .zip(data.trials())
                    .zip(&fitted)
                    .map(|((&s, &t), &p)| s as f64 - t as f64 * p),
            ),
        };
        self.design().matrix().transpose() * resid
    }

    /// Expected information `X' W X` with `W = diag(mu)` or
    /// `diag(t p (1-p))`.
    pub fn fisher(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let fitted = self.fitted(theta);
        let weights: Vec<f64> = match self {
            GlmModel::Poisson { .. } => fitted.iter().copied().collect(),
            GlmModel::Binomial { data, .. } => fitted
                .iter()
                .zip(data.trials())
                .map(|(&p, &t)| t as f64 * p * (1.0 - p))
                .collect(),
        };
        let m = self.design().matrix();
        let p = m.ncols();
        let mut info = DMatrix::zeros(p, p);
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = m.row(i);
            for a in 0..p {
                if row[a] == 0.0 {
                    continue;
                }
                for b in 0..p {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        info
    }

    /// Deviance at the supplied parameter vector.
    pub fn deviance(&self, theta: &DVector<f64>) -> f64 {
        let fitted = self.fitted(theta);
        // x log(x / m) with the x = 0 limit.
        let xlogx = |x: f64, m: f64| if x == 0.0 { 0.0 } else { x * (x / m).ln() };
        match self {
            GlmModel::Poisson { counts, .. } => {
                2.0 * counts
                    .iter()
                    .zip(&fitted)
                    .map(|(&n, &mu)| xlogx(n as f64, mu) - (n as f64 - mu))
                    .sum::<f64>()
            }
            GlmModel::Binomial { data, .. } => {
                2.0 * data
                    .successes()
                    .iter()
                    .zip(data.trials())
                    .zip(&fitted)
                    .map(|((&s, &t), &p)| {
                        let (s, t) = (s as f64, t as f64);
                        xlogx(s, t * p) + xlogx(t - s, t * (1.0 - p))
                    })
                    .sum::<f64>()
            }
        }
    }
}

/// Convenience wrappers matching the operation-level interface.
pub fn loglik_poisson(x: &DesignMatrix, counts: &[u64], lambda: &DVector<f64>) -> Result<f64> {
    Ok(GlmModel::poisson(x.clone(), counts.to_vec())?.loglik(lambda))
}

pub fn loglik_binomial(x: &DesignMatrix, data: &BinomialData, beta: &DVector<f64>) -> Result<f64> {
    Ok(GlmModel::binomial(x.clone(), data.clone())?.loglik(beta))
}
