//! Posterior summaries: means, batch-means Monte Carlo standard errors, and
//! equal-tailed credible intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::quantile_sorted;

use super::mcmc::Chain;

/// Minimum kept draws for a summary.
pub const MIN_DRAWS: usize = 1000;

/// Per-parameter posterior summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    /// Batch-means Monte Carlo standard error of the mean.
    pub mcse: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Summarize one scalar series.
pub fn summarize_series(label: &str, values: &[f64], level: f64) -> Result<ParamSummary> {
    if values.len() < MIN_DRAWS {
        return Err(Error::TooFewDraws(values.len(), MIN_DRAWS));
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::Config(format!("credible level {level} not in (0, 1)")));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();

    // Batch means with floor(sqrt(n)) batches; remainder draws are dropped
    // from the tail for equally sized batches.
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch_size = n / n_batches;
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|k| {
            values[k * batch_size..(k + 1) * batch_size]
                .iter()
                .sum::<f64>()
                / batch_size as f64
        })
        .collect();
    let bm_mean = batch_means.iter().sum::<f64>() / n_batches as f64;
    let bm_var = batch_means
        .iter()
        .map(|v| (v - bm_mean).powi(2))
        .sum::<f64>()
        / (n_batches as f64 - 1.0);
    let mcse = (batch_size as f64 * bm_var / (n_batches as f64 * batch_size as f64)).sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok(ParamSummary {
        label: label.to_string(),
        mean,
        sd,
        mcse,
        ci_low: quantile_sorted(&sorted, tail),
        ci_high: quantile_sorted(&sorted, 1.0 - tail),
    })
}

/// Summarize every parameter of a chain.
pub fn summarize(chain: &Chain, level: f64) -> Result<Vec<ParamSummary>> {
    (0..chain.draws.ncols())
        .map(|j| summarize_series(&chain.labels[j], &chain.column(j), level))
        .collect()
}

/// Summary of g draws when the chain carried a random g.
pub fn summarize_g(chain: &Chain, level: f64) -> Result<Option<ParamSummary>> {
    match &chain.g_draws {
        Some(g) => Ok(Some(summarize_series("g", g, level)?)),
        None => Ok(None),
    }
}
