//! Adaptive random-walk Metropolis for a fixed model, with Gibbs updates for
//! a mixture g.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::priors::{GLaw, GPriorSpec};

use super::likelihood::GlmModel;
use super::mle::{find_mode, Objective};

/// Sampler settings; the defaults reproduce the reference configuration of
/// a 1e5 burn-in followed by 2e5 recorded iterations.
#[derive(Debug, Clone)]
pub struct McmcSettings {
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Drop the likelihood and sample the prior (sampler validation).
    pub prior_only: bool,
    pub target_acceptance: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            burn_in: 100_000,
            iterations: 200_000,
            seed: 0,
            prior_only: false,
            target_acceptance: 0.234,
        }
    }
}

impl McmcSettings {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Recorded draws from one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    /// kept x n_params.
    pub draws: DMatrix<f64>,
    /// Draws of g when it is random (one per kept iteration).
    pub g_draws: Option<Vec<f64>>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub burn_in: usize,
    pub kept: usize,
    pub labels: Vec<String>,
}

impl Chain {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().copied().collect()
    }

    pub fn posterior_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.draws.ncols());
        for i in 0..self.draws.nrows() {
            mean += self.draws.row(i).transpose();
        }
        mean / self.draws.nrows() as f64
    }
}

/// One Gibbs draw of g given theta: `IG(a + p/2, b + Q/2)` with
/// `Q = (theta - m)' Sigma^{-1} (theta - m)` over the Gaussian block.
pub fn gibbs_update_g<R: Rng>(
    theta: &DVector<f64>,
    prior: &GPriorSpec,
    rng: &mut R,
) -> Result<f64> {
    let (a, b) = match prior.g_law {
        GLaw::InverseGammaMixture { a, b } => (a, b),
        _ => {
            return Err(Error::Config(
                "Gibbs g-updates require an Inverse-Gamma mixture".to_string(),
            ))
        }
    };
    let q = prior_quadform(theta, prior)?;
    let shape = a + prior.dim() as f64 / 2.0;
    let rate = b + q / 2.0;
    // If G ~ Gamma(shape, scale 1) then rate / G ~ IG(shape, rate).
    let gamma = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Config(format!("invalid Gamma parameters: {e}")))?;
    let draw: f64 = gamma.sample(rng);
    Ok(rate / draw.max(f64::MIN_POSITIVE))
}

/// `(theta - m)' Sigma^{-1} (theta - m)` over the prior's Gaussian block.
pub fn prior_quadform(theta: &DVector<f64>, prior: &GPriorSpec) -> Result<f64> {
    let block = prior.gaussian_block(theta)?;
    let diff = block - &prior.mean;
    let chol = prior.chol()?;
    let z = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(z.norm_squared())
}

/// Initial value of g used before any Gibbs update: the fixed value, or the
/// mixture's prior mean `b / (a - 1)`.
pub fn initial_g(prior: &GPriorSpec) -> f64 {
    match prior.g_law {
        GLaw::Fixed { g } => g,
        GLaw::UnitInformation => prior.n_total,
        GLaw::InverseGammaMixture { a, b } => b / (a - 1.0),
    }
}

/// Run one adaptive random-walk Metropolis chain.
///
/// The proposal is `N(theta, s^2 C)` where C tracks the empirical covariance
/// of the history and s follows a Robbins–Monro recursion toward the target
/// acceptance rate; both freeze when the burn-in ends. With a mixture g-law,
/// g is Gibbs-updated after every Metropolis step.
pub fn run_chain(model: &GlmModel, prior: &GPriorSpec, settings: &McmcSettings) -> Result<Chain> {
    let p = model.n_params();
    let expected = prior.dim() + usize::from(prior.intercept_flat);
    if expected != p {
        return Err(Error::DimensionMismatch(format!(
            "prior covers {expected} parameters, design has {p} columns"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
    let mut g = initial_g(prior);
    let random_g = matches!(prior.g_law, GLaw::InverseGammaMixture { .. });

    let objective = Objective {
        model,
        prior: Some((prior, g)),
        prior_only: settings.prior_only,
    };
    // Start at the mode of the initial-g posterior; its curvature seeds the
    // proposal covariance.
    let start_mode = {
        let mut start = DVector::zeros(p);
        let offset = p - prior.dim();
        for j in 0..prior.dim() {
            start[offset + j] = prior.mean[j];
        }
        find_mode(&objective, &start)?
    };
    let mut theta = start_mode.theta.clone();
    let mut log_post = log_posterior(model, prior, settings, &theta, g)?;
    if !log_post.is_finite() {
        return Err(Error::NonFiniteInit);
    }
    let mut proposal_cov = Cholesky::new(start_mode.neg_hessian.clone())
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::identity(p, p) * 0.01);
    let mut chol = cholesky_ridged(&proposal_cov)?;

    // 2.38^2/d is the classic optimal-scaling start.
    let mut log_scale = (2.38f64.powi(2) / p as f64).ln() / 2.0;

    // Running moments for the adaptive covariance.
    let mut run_mean = theta.clone();
    let mut run_m2 = DMatrix::zeros(p, p);
    let mut run_n = 1.0f64;

    let total = settings.burn_in + settings.iterations;
    let mut draws = DMatrix::zeros(settings.iterations, p);
    let mut g_draws = if random_g {
        Some(Vec::with_capacity(settings.iterations))
    } else {
        None
    };
    let mut accepted_kept = 0usize;

    for iter in 0..total {
        let adapting = iter < settings.burn_in;
        let scale = log_scale.exp();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = &theta + chol.l() * z * scale;
        let cand_post = log_posterior(model, prior, settings, &proposal, g)?;
        let accept_prob = (cand_post - log_post).exp().min(1.0);
        let accept = rng.random::<f64>() < accept_prob;
        if accept {
            theta = proposal;
            log_post = cand_post;
        }

        if random_g {
            g = gibbs_update_g(&theta, prior, &mut rng)?;
            log_post = log_posterior(model, prior, settings, &theta, g)?;
        }

        if adapting {
            // Robbins–Monro on the log proposal scale.
            let gain = (iter as f64 + 1.0).powf(-0.6);
            log_scale += gain * (accept_prob - settings.target_acceptance);
            // Welford update of the empirical covariance.
            run_n += 1.0;
            let delta = &theta - &run_mean;
            run_mean += &delta / run_n;
            let delta2 = &theta - &run_mean;
            run_m2 += delta * delta2.transpose();
            if iter >= 100 && iter % 200 == 0 {
                proposal_cov = &run_m2 / (run_n - 1.0);
                chol = cholesky_ridged(&proposal_cov)?;
            }
        } else {
            let k = iter - settings.burn_in;
            draws.row_mut(k).copy_from(&theta.transpose());
            if let Some(gd) = g_draws.as_mut() {
                gd.push(g);
            }
            if accept {
                accepted_kept += 1;
            }
        }
    }

    let acceptance_rate = accepted_kept as f64 / settings.iterations.max(1) as f64;
    if settings.iterations > 0 && accepted_kept == 0 {
        return Err(Error::Config(
            "zero acceptance after adaptation; the chain did not move".to_string(),
        ));
    }
    Ok(Chain {
        draws,
        g_draws,
        acceptance_rate,
        seed: settings.seed,
        burn_in: settings.burn_in,
        kept: settings.iterations,
        labels: model.design().column_names(),
    })
}

fn log_posterior(
    model: &GlmModel,
    prior: &GPriorSpec,
    settings: &McmcSettings,
    theta: &DVector<f64>,
    g: f64,
) -> Result<f64> {
    let mut v = if settings.prior_only {
        0.0
    } else {
        model.loglik(theta)
    };
    v += prior.log_density(theta, g)?;
    Ok(v)
}

fn cholesky_ridged(cov: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let p = cov.nrows();
    let base = cov.diagonal().amax().max(1e-12);
    for k in 0..12 {
        let ridge = base * 1e-10 * 10f64.powi(k);
        let mut c = cov.clone();
        for d in 0..p {
            c[(d, d)] += ridge;
        }
        if let Some(chol) = Cholesky::new(c) {
            return Ok(chol);
        }
    }
    Err(Error::NotPositiveDefinite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::design_for_table;
    use crate::inference::mle::mle;
    use crate::inference::summary::summarize;
    use crate::models::{close_hierarchical, Role, Term};
    use crate::priors::{gprior_loglinear, mixture_ig_params};
    use crate::tables::{ContingencyTable, FactorSpec};

    fn quick_settings(seed: u64) -> McmcSettings {
        McmcSettings {
            burn_in: 4000,
            iterations: 8000,
            seed,
            prior_only: false,
            target_acceptance: 0.234,
        }
    }

    #[test]
    fn prior_only_reproduces_prior_moments() {
        let t = ContingencyTable::new(
            vec![FactorSpec::binary("Y"), FactorSpec::binary("X")],
            vec![12, 8, 9, 11],
        )
        .unwrap();
        let m = close_hierarchical(&[Term::new(["X"]), Term::new(["Y"])], Role::LogLinear)
            .unwrap();
        let x = design_for_table(&t, &m).unwrap();
        let prior = gprior_loglinear(&x, &t).unwrap();
        let g = prior.n_total;
        let model = GlmModel::poisson(x, t.counts().to_vec()).unwrap();
        let mut settings = quick_settings(7);
        settings.prior_only = true;
        settings.iterations = 20000;
        let chain = run_chain(&model, &prior, &settings).unwrap();
        let summary = summarize(&chain, 0.95).unwrap();
        for (j, s) in summary.iter().enumerate() {
            let prior_sd = (g * prior.sigma[(j, j)]).sqrt();
            assert!(
                (s.mean - prior.mean[j]).abs() < 3.0 * s.mcse.max(prior_sd / 50.0),
                "param {j}: mean {} vs prior {}",
                s.mean,
                prior.mean[j]
            );
            let ratio = s.sd / prior_sd;
            assert!((0.9..1.1).contains(&ratio), "param {j}: sd ratio {ratio}");
        }
    }

    #[test]
    fn posterior_concentrates_at_mle_for_large_counts() {
        let t = ContingencyTable::new(
            vec![FactorSpec::binary("Y"), FactorSpec::binary("X")],
            vec![25000, 24000, 26000, 25000],
        )
        .unwrap();
        let m = close_hierarchical(&[Term::new(["X", "Y"])], Role::LogLinear).unwrap();
        let x = design_for_table(&t, &m).unwrap();
        let prior = gprior_loglinear(&x, &t).unwrap();
        let model = GlmModel::poisson(x, t.counts().to_vec()).unwrap();
        let ml = mle(&model).unwrap();
        let chain = run_chain(&model, &prior, &quick_settings(3)).unwrap();
        let summary = summarize(&chain, 0.95).unwrap();
        for (j, s) in summary.iter().enumerate() {
            assert!(
                (s.mean - ml.theta[j]).abs() < 4.0 * s.mcse.max(1e-4),
                "param {j}: {} vs MLE {}",
                s.mean,
                ml.theta[j]
            );
        }
    }

    #[test]
    fn reproducible_under_seed() {
        let t = ContingencyTable::new(
            vec![FactorSpec::binary("Y"), FactorSpec::binary("X")],
            vec![12, 8, 9, 11],
        )
        .unwrap();
        let m = close_hierarchical(&[Term::new(["X"]), Term::new(["Y"])], Role::LogLinear)
            .unwrap();
        let x = design_for_table(&t, &m).unwrap();
        let prior = gprior_loglinear(&x, &t).unwrap();
        let model = GlmModel::poisson(x, t.counts().to_vec()).unwrap();
        let mut s = quick_settings(42);
        s.burn_in = 500;
        s.iterations = 500;
        let c1 = run_chain(&model, &prior, &s).unwrap();
        let c2 = run_chain(&model, &prior, &s).unwrap();
        assert_eq!(c1.draws, c2.draws);
        let c3 = run_chain(&model, &prior, &s.clone().with_seed(43)).unwrap();
        assert_ne!(c1.draws, c3.draws);
    }

    #[test]
    fn gibbs_g_at_prior_mean_has_q_zero() {
        let t = ContingencyTable::new(
            vec![FactorSpec::binary("Y"), FactorSpec::binary("X")],
            vec![12, 8, 9, 11],
        )
        .unwrap();
        let m = close_hierarchical(&[Term::new(["X"]), Term::new(["Y"])], Role::LogLinear)
            .unwrap();
        let x = design_for_table(&t, &m).unwrap();
        let n = t.total() as f64;
        let (a, b) = mixture_ig_params(n, 100.0);
        let prior = gprior_loglinear(&x, &t)
            .unwrap()
            .with_g_law(crate::priors::GLaw::InverseGammaMixture { a, b });
        assert_eq!(prior_quadform(&prior.mean.clone(), &prior).unwrap(), 0.0);
        // Long-run mean of g | theta=m is b / (a + p/2 - 1).
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let k = 40000;
        let mean: f64 = (0..k)
            .map(|_| gibbs_update_g(&prior.mean.clone(), &prior, &mut rng).unwrap())
            .sum::<f64>()
            / k as f64;
        let expect = b / (a + 3.0 / 2.0 - 1.0);
        assert!(
            (mean - expect).abs() / expect < 0.05,
            "mean {mean} vs {expect}"
        );
    }

    #[test]
    fn prior_only_gibbs_marginal_matches_ig() {
        // Kolmogorov–Smirnov check of the g marginal in a prior-only run:
        // integrating over theta, g should be marginally IG(a, b).
        let t = ContingencyTable::new(
            vec![FactorSpec::binary("Y"), FactorSpec::binary("X")],
            vec![12, 8, 9, 11],
        )
        .unwrap();
        let m = close_hierarchical(&[Term::new(["Y"])], Role::LogLinear).unwrap();
        let x = design_for_table(&t, &m).unwrap();
        let n = t.total() as f64;
        let (a, b) = mixture_ig_params(n, 400.0);
        let prior = gprior_loglinear(&x, &t)
            .unwrap()
            .with_g_law(crate::priors::GLaw::InverseGammaMixture { a, b });
        let model = GlmModel::poisson(x, t.counts().to_vec()).unwrap();
        let settings = McmcSettings {
            burn_in: 2000,
            iterations: 30000,
            seed: 5,
            prior_only: true,
            target_acceptance: 0.234,
        };
        let chain = run_chain(&model, &prior, &settings).unwrap();
        let mut g: Vec<f64> = chain.g_draws.unwrap();
        // Thin to weaken autocorrelation before the KS comparison.
        let g: Vec<f64> = g.drain(..).step_by(30).collect();
        g_ks_against_ig(&g, a, b);
    }

    fn g_ks_against_ig(g: &[f64], a: f64, b: f64) {
        use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
        let mut sorted = g.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let gamma = GammaDist::new(a, 1.0).unwrap();
        // g ~ IG(a,b) iff b/g ~ Gamma(a, 1): F_g(x) = 1 - F_gamma(b/x).
        let n = sorted.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in sorted.iter().enumerate() {
            let f = 1.0 - gamma.cdf(b / x);
            d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        // alpha = 1e-3 critical value ~ 1.95 / sqrt(n).
        assert!(d < 1.95 / n.sqrt(), "KS statistic {d} with n {n}");
    }
}
