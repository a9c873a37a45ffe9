//! Contingency-table data: representation, CSV/JSON ingestion, collapse to
//! grouped binomial form, trial summaries, and multinomial simulation.
//!
//! Cells are stored in lexicographic order with the **last factor varying
//! fastest**; every index/level conversion in the crate goes through
//! [`ContingencyTable::cell_index`] and [`ContingencyTable::cell_levels`].

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::design::design_matrix_for_rows;
use crate::error::{Error, Result};
use crate::models::ModelFormula;

/// A categorical factor: a name and a number of levels.
///
/// Levels are encoded `0..levels`; level 0 is the reference level under
/// corner-point coding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub levels: usize,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, levels: usize) -> Result<Self> {
        let name = name.into();
        if levels < 2 {
            return Err(Error::TooFewLevels(name));
        }
        Ok(FactorSpec { name, levels })
    }

    /// Shorthand for a binary factor.
    pub fn binary(name: impl Into<String>) -> Self {
        FactorSpec {
            name: name.into(),
            levels: 2,
        }
    }
}

fn check_unique_names(factors: &[FactorSpec]) -> Result<()> {
    for (i, f) in factors.iter().enumerate() {
        if f.levels < 2 {
            return Err(Error::TooFewLevels(f.name.clone()));
        }
        if factors[..i].iter().any(|g| g.name == f.name) {
            return Err(Error::DuplicateFactor(f.name.clone()));
        }
    }
    Ok(())
}

/// A complete contingency table over an ordered list of factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    factors: Vec<FactorSpec>,
    counts: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    pub fn new(factors: Vec<FactorSpec>, counts: Vec<u64>) -> Result<Self> {
        check_unique_names(&factors)?;
        let n_cells: usize = factors.iter().map(|f| f.levels).product();
        if counts.len() != n_cells {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells, got {} counts",
                n_cells,
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(ContingencyTable {
            factors,
            counts,
            total,
        })
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of cells, `n_ll`.
    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    /// Total count `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Average cell count, `N / n_ll`.
    pub fn mean_count(&self) -> f64 {
        self.total as f64 / self.n_cells() as f64
    }

    pub fn factor_index(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFactor(name.to_string()))
    }

    /// Cell index of a level tuple (last factor fastest).
    pub fn cell_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.factors.len() {
            return Err(Error::DimensionMismatch(format!(
                "level tuple of length {}, expected {}",
                levels.len(),
                self.factors.len()
            )));
        }
        let mut idx = 0;
        for (f, &l) in self.factors.iter().zip(levels) {
            if l >= f.levels {
                return Err(Error::LevelOutOfRange {
                    factor: f.name.clone(),
                    level: l,
                    levels: f.levels,
                });
            }
            idx = idx * f.levels + l;
        }
        Ok(idx)
    }

    /// Level tuple of a cell index.
    pub fn cell_levels(&self, mut idx: usize) -> Vec<usize> {
        let mut levels = vec![0; self.factors.len()];
        for (k, f) in self.factors.iter().enumerate().rev() {
            levels[k] = idx % f.levels;
            idx /= f.levels;
        }
        levels
    }

    /// All cell level tuples in storage order.
    pub fn all_cells(&self) -> Vec<Vec<usize>> {
        (0..self.n_cells()).map(|i| self.cell_levels(i)).collect()
    }

    /// Read a table from CSV: one header row naming the factors plus a final
    /// `count` column, one data row per cell, levels as integers from 0.
    /// Missing cells are filled with count 0; duplicates are an error.
    pub fn from_csv<R: Read>(factors: Vec<FactorSpec>, reader: R) -> Result<Self> {
        check_unique_names(&factors)?;
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut col_of_factor = Vec::with_capacity(factors.len());
        let mut count_col = None;
        for (j, h) in headers.iter().enumerate() {
            if h == "count" {
                count_col = Some(j);
            } else if !factors.iter().any(|f| f.name == h) {
                return Err(Error::UnknownColumn(h.to_string()));
            }
        }
        let count_col = count_col.ok_or_else(|| Error::UnknownColumn("count".to_string()))?;
        for f in &factors {
            let j = headers
                .iter()
                .position(|h| h == f.name)
                .ok_or_else(|| Error::UnknownFactor(f.name.clone()))?;
            col_of_factor.push(j);
        }

        let n_cells: usize = factors.iter().map(|f| f.levels).product();
        let mut counts = vec![0u64; n_cells];
        let mut seen = vec![false; n_cells];
        let shell = ContingencyTable {
            factors: factors.clone(),
            counts: vec![],
            total: 0,
        };
        for (row_no, record) in rdr.records().enumerate() {
            let record = record?;
            let parse_field = |j: usize| -> Result<i64> {
                record
                    .get(j)
                    .ok_or_else(|| Error::InvalidCount {
                        row: row_no,
                        reason: "short row".to_string(),
                    })?
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidCount {
                        row: row_no,
                        reason: format!("non-integer field `{}`", record.get(j).unwrap_or("")),
                    })
            };
            let mut levels = Vec::with_capacity(factors.len());
            for (&j, f) in col_of_factor.iter().zip(&factors) {
                let l = parse_field(j)?;
                if l < 0 || l as usize >= f.levels {
                    return Err(Error::LevelOutOfRange {
                        factor: f.name.clone(),
                        level: l.max(0) as usize,
                        levels: f.levels,
                    });
                }
                levels.push(l as usize);
            }
            let count = parse_field(count_col)?;
            if count < 0 {
                return Err(Error::InvalidCount {
                    row: row_no,
                    reason: format!("negative count {count}"),
                });
            }
            let idx = shell.cell_index(&levels)?;
            if seen[idx] {
                return Err(Error::DuplicateCell(levels));
            }
            seen[idx] = true;
            counts[idx] = count as u64;
        }
        ContingencyTable::new(factors, counts)
    }

    /// Read a table from CSV, inferring each factor's level count as
    /// 1 + the maximum level seen (minimum 2). Column order follows the header.
    pub fn from_csv_inferred<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<String> = headers
            .iter()
            .filter(|h| *h != "count")
            .map(|h| h.to_string())
            .collect();
        if names.len() + 1 != headers.len() {
            return Err(Error::UnknownColumn("count".to_string()));
        }
        let mut rows: Vec<csv::StringRecord> = Vec::new();
        for record in rdr.records() {
            rows.push(record?);
        }
        let mut max_level = vec![1usize; names.len()];
        for record in &rows {
            for (k, _) in names.iter().enumerate() {
                let j = headers.iter().position(|h| h == names[k]).unwrap();
                if let Some(v) = record.get(j).and_then(|s| s.trim().parse::<usize>().ok()) {
                    max_level[k] = max_level[k].max(v);
                }
            }
        }
        let factors: Vec<FactorSpec> = names
            .iter()
            .zip(&max_level)
            .map(|(n, &m)| FactorSpec {
                name: n.clone(),
                levels: m + 1,
            })
            .collect();
        // Re-parse through the strict path with the inferred specs.
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&headers)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        ContingencyTable::from_csv(factors, buf.as_slice())
    }

    /// Emit the table as CSV in lexicographic cell order.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.factors.iter().map(|f| f.name.as_str()).collect();
        header.push("count");
        w.write_record(&header)?;
        for (i, &c) in self.counts.iter().enumerate() {
            let mut row: Vec<String> = self
                .cell_levels(i)
                .iter()
                .map(|l| l.to_string())
                .collect();
            row.push(c.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Collapse to grouped binomial data for a binary `outcome`, keeping the
    /// covariates in `retained` (a subset of the remaining factors) and
    /// summing over everything else.
    pub fn collapse_to_binomial(&self, outcome: &str, retained: &[String]) -> Result<BinomialData> {
        let out_idx = self.factor_index(outcome)?;
        if self.factors[out_idx].levels != 2 {
            return Err(Error::NotBinary(
                outcome.to_string(),
                self.factors[out_idx].levels,
            ));
        }
        if retained.iter().any(|r| r == outcome) {
            return Err(Error::OutcomeAmongCovariates(outcome.to_string()));
        }
        let mut retained_idx = Vec::with_capacity(retained.len());
        for r in retained {
            retained_idx.push(self.factor_index(r)?);
        }
        let covariates: Vec<FactorSpec> = retained_idx
            .iter()
            .map(|&i| self.factors[i].clone())
            .collect();
        let n_rows: usize = covariates.iter().map(|f| f.levels).product();
        let mut trials = vec![0u64; n_rows];
        let mut successes = vec![0u64; n_rows];
        for (i, &c) in self.counts.iter().enumerate() {
            let levels = self.cell_levels(i);
            let mut row = 0usize;
            for (&fi, f) in retained_idx.iter().zip(&covariates) {
                row = row * f.levels + levels[fi];
            }
            trials[row] += c;
            if levels[out_idx] == 1 {
                successes[row] += c;
            }
        }
        BinomialData::new(covariates, trials, successes)
    }
}

/// Grouped binomial (logistic) data: one row per covariate level combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialData {
    covariates: Vec<FactorSpec>,
    trials: Vec<u64>,
    successes: Vec<u64>,
}

impl BinomialData {
    pub fn new(covariates: Vec<FactorSpec>, trials: Vec<u64>, successes: Vec<u64>) -> Result<Self> {
        check_unique_names(&covariates)?;
        let n_rows: usize = covariates.iter().map(|f| f.levels).product();
        if trials.len() != n_rows || successes.len() != n_rows {
            return Err(Error::DimensionMismatch(format!(
                "expected {} rows, got {} trials / {} successes",
                n_rows,
                trials.len(),
                successes.len()
            )));
        }
        for (i, (&t, &s)) in trials.iter().zip(&successes).enumerate() {
            if s > t {
                return Err(Error::InvalidCount {
                    row: i,
                    reason: format!("successes {s} exceed trials {t}"),
                });
            }
        }
        Ok(BinomialData {
            covariates,
            trials,
            successes,
        })
    }

    pub fn covariates(&self) -> &[FactorSpec] {
        &self.covariates
    }

    pub fn trials(&self) -> &[u64] {
        &self.trials
    }

    pub fn successes(&self) -> &[u64] {
        &self.successes
    }

    /// Number of rows, `n_lt`.
    pub fn n_rows(&self) -> usize {
        self.trials.len()
    }

    /// Total trials `N`.
    pub fn total(&self) -> u64 {
        self.trials.iter().sum()
    }

    /// Covariate level tuple for a row index (last covariate fastest).
    pub fn row_levels(&self, mut idx: usize) -> Vec<usize> {
        let mut levels = vec![0; self.covariates.len()];
        for (k, f) in self.covariates.iter().enumerate().rev() {
            levels[k] = idx % f.levels;
            idx /= f.levels;
        }
        levels
    }

    /// All row level tuples in storage order.
    pub fn all_rows(&self) -> Vec<Vec<usize>> {
        (0..self.n_rows()).map(|i| self.row_levels(i)).collect()
    }
}

/// Order statistics of the per-row trial counts `t_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialsSummary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation (type-7) quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Min / quartiles / max of the trial counts, per the type-7 quantile rule.
pub fn summarize_trials(data: &BinomialData) -> TrialsSummary {
    let mut t: Vec<f64> = data.trials().iter().map(|&x| x as f64).collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    TrialsSummary {
        min: t[0],
        q25: quantile_sorted(&t, 0.25),
        median: quantile_sorted(&t, 0.5),
        q75: quantile_sorted(&t, 0.75),
        max: t[t.len() - 1],
    }
}

/// Cell probabilities `softmax(X_ll lambda)` for a table shape and model.
pub fn cell_probabilities(
    factors: &[FactorSpec],
    model: &ModelFormula,
    lambda: &DVector<f64>,
) -> Result<Vec<f64>> {
    let shape = ContingencyTable::new(factors.to_vec(), {
        let n: usize = factors.iter().map(|f| f.levels).product();
        vec![0; n]
    })?;
    let x = design_matrix_for_rows(factors, &shape.all_cells(), model)?;
    if lambda.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "lambda has {} entries, design has {} columns",
            lambda.len(),
            x.ncols()
        )));
    }
    let eta = x.matrix() * lambda;
    let m = eta.max();
    let w: Vec<f64> = eta.iter().map(|&e| (e - m).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// Draw a table of `n` subjects multinomially with cell probabilities
/// proportional to `exp(X_ll lambda)`.
pub fn simulate_table<R: Rng>(
    factors: &[FactorSpec],
    model: &ModelFormula,
    lambda: &DVector<f64>,
    n: u64,
    rng: &mut R,
) -> Result<ContingencyTable> {
    let probs = cell_probabilities(factors, model, lambda)?;
    let counts = multinomial_draw(&probs, n, rng);
    ContingencyTable::new(factors.to_vec(), counts)
}

/// Multinomial sample via sequential conditional binomials.
pub fn multinomial_draw<R: Rng>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut prob_left = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let cond = (p / prob_left).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, cond).unwrap().sample(rng);
        counts[i] = draw;
        remaining -= draw;
        prob_left -= p;
        if prob_left <= 0.0 {
            prob_left = f64::MIN_POSITIVE;
        }
    }
    counts
}
