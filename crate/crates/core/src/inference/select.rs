//! Model determination over graphical model spaces: reversible jump with
//! Laplace-centered independence proposals, and an exact enumeration mode
//! based on Laplace-approximated marginal likelihoods.

use std::collections::HashMap;

use nalgebra::{Cholesky, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{design_for_binomial, design_for_table};
use crate::error::{Error, Result};
use crate::models::{graphical_model, ModelFormula, ModelSpec, Role, MAX_GRAPHICAL_FACTORS};
use crate::priors::{gprior_logistic, gprior_loglinear, GLaw, GPriorSpec};
use crate::tables::{BinomialData, ContingencyTable};

use super::likelihood::GlmModel;
use super::mcmc::{gibbs_update_g, initial_g};
use super::mle::posterior_mode;

/// Largest enumerable graphical space: 2^15 models (6 nodes).
pub const MAX_ENUMERABLE_EDGES: usize = 15;

/// What is being selected over: graphical log-linear models on all table
/// factors, or graphical logistic models on the covariates.
#[derive(Debug, Clone)]
pub enum SelectionProblem {
    LogLinear { table: ContingencyTable },
    Logistic { data: BinomialData, outcome: String },
}

impl SelectionProblem {
    pub fn nodes(&self) -> Vec<String> {
        match self {
            SelectionProblem::LogLinear { table } => {
                table.factors().iter().map(|f| f.name.clone()).collect()
            }
            SelectionProblem::Logistic { data, .. } => {
                data.covariates().iter().map(|f| f.name.clone()).collect()
            }
        }
    }

    pub fn n_edges(&self) -> usize {
        let n = self.nodes().len();
        n * n.saturating_sub(1) / 2
    }

    fn role(&self) -> Role {
        match self {
            SelectionProblem::LogLinear { .. } => Role::LogLinear,
            SelectionProblem::Logistic { outcome, .. } => Role::Logistic(outcome.clone()),
        }
    }

    /// The formula, likelihood, and g-prior for one graph.
    pub fn build(&self, mask: u64, g_law: &GLaw) -> Result<(ModelFormula, GlmModel, GPriorSpec)> {
        let nodes = self.nodes();
        if nodes.len() > MAX_GRAPHICAL_FACTORS {
            return Err(Error::SpaceTooLarge(nodes.len(), MAX_GRAPHICAL_FACTORS));
        }
        let formula = graphical_model(&nodes, mask, self.role())?;
        match self {
            SelectionProblem::LogLinear { table } => {
                let x = design_for_table(table, &formula)?;
                let prior = gprior_loglinear(&x, table)?.with_g_law(g_law.clone());
                let glm = GlmModel::poisson(x, table.counts().to_vec())?;
                Ok((formula, glm, prior))
            }
            SelectionProblem::Logistic { data, outcome } => {
                if data.covariates().iter().any(|f| &f.name == outcome) {
                    return Err(Error::OutcomeAmongCovariates(outcome.clone()));
                }
                let x = design_for_binomial(data, &formula)?;
                let prior = gprior_logistic(&x, data)?.with_g_law(g_law.clone());
                let glm = GlmModel::binomial(x, data.clone())?;
                Ok((formula, glm, prior))
            }
        }
    }
}

/// One model's share of the posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub mask: u64,
    pub model: ModelSpec,
    pub display: String,
    pub probability: f64,
    pub visits: Option<u64>,
    pub log_marginal: Option<f64>,
}

/// Posterior over a model space, sorted by decreasing probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelPosterior {
    pub entries: Vec<ModelEntry>,
    pub method: String,
    /// Moves auto-rejected because Laplace mode finding failed.
    pub mode_failures: u64,
}

impl ModelPosterior {
    pub fn modal(&self) -> &ModelEntry {
        &self.entries[0]
    }

    pub fn top_k(&self, k: usize) -> &[ModelEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn probability_of(&self, mask: u64) -> f64 {
        self.entries
            .iter()
            .find(|e| e.mask == mask)
            .map_or(0.0, |e| e.probability)
    }
}

/// Total-variation distance between two model posteriors.
pub fn tv_distance(a: &ModelPosterior, b: &ModelPosterior) -> f64 {
    let mut masks: Vec<u64> = a.entries.iter().chain(&b.entries).map(|e| e.mask).collect();
    masks.sort_unstable();
    masks.dedup();
    0.5 * masks
        .iter()
        .map(|&m| (a.probability_of(m) - b.probability_of(m)).abs())
        .sum::<f64>()
}

/// Exact enumeration of the graphical space by Laplace-approximated marginal
/// likelihoods under a uniform model prior. Requires a deterministic g.
pub fn enumerate_models(problem: &SelectionProblem, g_law: &GLaw) -> Result<ModelPosterior> {
    if matches!(g_law, GLaw::InverseGammaMixture { .. }) {
        return Err(Error::MixtureNotEnumerable);
    }
    let n_edges = problem.n_edges();
    if n_edges > MAX_ENUMERABLE_EDGES {
        return Err(Error::SpaceTooLarge(problem.nodes().len(), 6));
    }
    let results: Vec<(u64, ModelFormula, Option<f64>)> = (0u64..1 << n_edges)
        .into_par_iter()
        .map(|mask| {
            let (formula, glm, prior) = problem.build(mask, g_law)?;
            let g = prior.fixed_g().expect("deterministic g checked above");
            let lm = super::mle::laplace_log_marginal(&glm, &prior, g).ok();
            Ok((mask, formula, lm))
        })
        .collect::<Result<_>>()?;
    let mode_failures = results.iter().filter(|(_, _, lm)| lm.is_none()).count() as u64;
    let best = results
        .iter()
        .filter_map(|(_, _, lm)| *lm)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::ModeFindingFailed(results.len()));
    }
    let weights: Vec<f64> = results
        .iter()
        .map(|(_, _, lm)| lm.map_or(0.0, |v| (v - best).exp()))
        .collect();
    let z: f64 = weights.iter().sum();
    let mut entries: Vec<ModelEntry> = results
        .into_iter()
        .zip(weights)
        .map(|((mask, formula, lm), w)| ModelEntry {
            mask,
            model: ModelSpec::from_formula(&formula),
            display: formula.to_string(),
            probability: w / z,
            visits: None,
            log_marginal: lm,
        })
        .collect();
    entries.sort_by(|a, b| b.probability.partial_cmp(&a.probability).unwrap());
    Ok(ModelPosterior {
        entries,
        method: "enumeration".to_string(),
        mode_failures,
    })
}

/// Reversible-jump settings.
#[derive(Debug, Clone)]
pub struct RjSettings {
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Probability of an edge-toggle move; otherwise a within-model
    /// parameter refresh.
    pub jump_probability: f64,
}

impl Default for RjSettings {
    fn default() -> Self {
        RjSettings {
            burn_in: 10_000,
            iterations: 100_000,
            seed: 0,
            jump_probability: 0.75,
        }
    }
}

/// A cached per-model Laplace approximation: proposal distribution
/// `N(mode, H^{-1})` with `H` the negative Hessian at the mode.
struct LaplaceCache {
    formula: ModelFormula,
    glm: GlmModel,
    prior: GPriorSpec,
    mode: DVector<f64>,
    chol_precision: Cholesky<f64, nalgebra::Dyn>,
    half_log_det_precision: f64,
}

impl LaplaceCache {
    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.mode.len();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        // H = L L'; a draw is mode + L^{-T} z.
        let lt = self.chol_precision.l().transpose();
        let x = lt.solve_upper_triangular(&z).expect("triangular solve");
        &self.mode + x
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let d = theta.len() as f64;
        let diff = theta - &self.mode;
        let w = self.chol_precision.l().transpose() * diff;
        -0.5 * d * (2.0 * std::f64::consts::PI).ln() + self.half_log_det_precision
            - 0.5 * w.norm_squared()
    }
}

/// Reversible-jump sampler: toggle one random graph edge, propose the new
/// model's parameters from its cached Laplace approximation, accept with the
/// independence-proposal RJ ratio under a uniform model prior. A mixture g
/// is Gibbs-updated each iteration (Laplace proposals use the prior mean of
/// g as reference).
pub fn rj_select(
    problem: &SelectionProblem,
    g_law: &GLaw,
    settings: &RjSettings,
) -> Result<ModelPosterior> {
    let n_edges = problem.n_edges();
    if n_edges == 0 || n_edges > 21 {
        return Err(Error::SpaceTooLarge(problem.nodes().len(), MAX_GRAPHICAL_FACTORS));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
    let mut cache: HashMap<u64, Option<LaplaceCache>> = HashMap::new();
    let mut mode_failures = 0u64;
    let random_g = matches!(g_law, GLaw::InverseGammaMixture { .. });

    let fetch = |cache: &mut HashMap<u64, Option<LaplaceCache>>,
                 mask: u64|
     -> Result<bool> {
        if cache.contains_key(&mask) {
            return Ok(cache[&mask].is_some());
        }
        let (formula, glm, prior) = problem.build(mask, g_law)?;
        let g_ref = initial_g(&prior);
        let entry = match posterior_mode(&glm, &prior, g_ref) {
            Ok(mode) => {
                let chol = Cholesky::new(mode.neg_hessian.clone());
                chol.map(|chol_precision| {
                    let half_log_det_precision: f64 =
                        chol_precision.l().diagonal().iter().map(|d| d.ln()).sum();
                    LaplaceCache {
                        formula,
                        glm,
                        prior,
                        mode: mode.theta,
                        chol_precision,
                        half_log_det_precision,
                    }
                })
            }
            Err(_) => None,
        };
        let ok = entry.is_some();
        cache.insert(mask, entry);
        Ok(ok)
    };

    // Start at the empty graph (always well-posed: main effects only).
    let mut mask = 0u64;
    if !fetch(&mut cache, mask)? {
        return Err(Error::ModeFindingFailed(0));
    }
    let mut g = {
        let c = cache[&mask].as_ref().unwrap();
        initial_g(&c.prior)
    };
    let mut theta = cache[&mask].as_ref().unwrap().mode.clone();
    let mut visits: HashMap<u64, u64> = HashMap::new();

    let total = settings.burn_in + settings.iterations;
    for iter in 0..total {
        let jump = rng.random::<f64>() < settings.jump_probability;
        let cand_mask = if jump {
            mask ^ (1u64 << rng.random_range(0..n_edges))
        } else {
            mask
        };
        if fetch(&mut cache, cand_mask)? {
            let cand_cache = cache[&cand_mask].as_ref().unwrap();
            let cand_theta = cand_cache.sample(&mut rng);
            let cand_score = cand_cache.glm.loglik(&cand_theta)
                + cand_cache.prior.log_density(&cand_theta, g)?
                - cand_cache.log_density(&cand_theta);
            let cur_cache = cache[&mask].as_ref().unwrap();
            let cur_score = cur_cache.glm.loglik(&theta)
                + cur_cache.prior.log_density(&theta, g)?
                - cur_cache.log_density(&theta);
            if rng.random::<f64>().ln() < cand_score - cur_score {
                mask = cand_mask;
                theta = cand_theta;
            }
        } else {
            mode_failures += 1;
        }
        if random_g {
            let prior = &cache[&mask].as_ref().unwrap().prior;
            g = gibbs_update_g(&theta, prior, &mut rng)?;
        }
        if iter >= settings.burn_in {
            *visits.entry(mask).or_insert(0) += 1;
        }
    }

    let kept = settings.iterations as f64;
    let mut entries: Vec<ModelEntry> = visits
        .into_iter()
        .map(|(m, count)| {
            let c = cache[&m].as_ref().unwrap();
            ModelEntry {
                mask: m,
                model: ModelSpec::from_formula(&c.formula),
                display: c.formula.to_string(),
                probability: count as f64 / kept,
                visits: Some(count),
                log_marginal: None,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.probability.partial_cmp(&a.probability).unwrap());
    Ok(ModelPosterior {
        entries,
        method: "reversible-jump".to_string(),
        mode_failures,
    })
}
