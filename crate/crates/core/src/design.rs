//! Corner-point design matrices for log-linear and logistic formulas.
//!
//! Column order is: intercept, then terms by (order, lexicographic), and
//! within a term the non-reference level tuples in lexicographic order with
//! the last factor varying fastest. Entries are 0/1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelFormula, Role, Term};
use crate::tables::{BinomialData, ContingencyTable, FactorSpec};

/// Identifies a design column: a term and the non-reference level tuple
/// (one entry per term factor, each >= 1). The intercept has an empty term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub term: Term,
    pub levels: Vec<usize>,
    /// Human-readable name, e.g. `Intercept`, `YAB`, `X2:Z1`.
    pub name: String,
}

fn label_name(term: &Term, levels: &[usize], factors: &[FactorSpec]) -> String {
    if term.is_intercept() {
        return "Intercept".to_string();
    }
    let binary = |f: &str| factors.iter().any(|s| s.name == f && s.levels == 2);
    if term.factors().iter().all(|f| binary(f) && f.chars().count() == 1) {
        term.factors().concat()
    } else {
        term.factors()
            .iter()
            .zip(levels)
            .map(|(f, l)| format!("{f}{l}"))
            .collect::<Vec<_>>()
            .join(":")
    }
}

/// A dense 0/1 design matrix with per-column labels and per-row level tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<ColumnLabel>,
    row_index: Vec<Vec<usize>>,
    factors: Vec<FactorSpec>,
}

impl DesignMatrix {
    /// Assemble a design from raw parts (used for centered/permuted copies).
    pub fn from_parts(
        matrix: DMatrix<f64>,
        labels: Vec<ColumnLabel>,
        row_index: Vec<Vec<usize>>,
        factors: Vec<FactorSpec>,
    ) -> Self {
        assert_eq!(matrix.ncols(), labels.len());
        assert_eq!(matrix.nrows(), row_index.len());
        DesignMatrix {
            matrix,
            labels,
            row_index,
            factors,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    pub fn column_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn row_index(&self) -> &[Vec<usize>] {
        &self.row_index
    }

    /// The factors indexing the rows (table factors, or retained covariates).
    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Labels of a maximal set of columns linearly dependent on earlier ones
    /// (empty iff full column rank). Gaussian elimination with partial
    /// pivoting; tolerance is relative to the largest entry.
    pub fn dependent_columns(&self) -> Vec<String> {
        let mut a = self.matrix.clone();
        let (n, p) = (a.nrows(), a.ncols());
        let tol = 1e-10 * a.amax().max(1.0);
        let mut row = 0;
        let mut dependent = Vec::new();
        for col in 0..p {
            if row >= n {
                dependent.push(self.labels[col].name.clone());
                continue;
            }
            let (pivot, pval) = (row..n)
                .map(|r| (r, a[(r, col)].abs()))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            if pval <= tol {
                dependent.push(self.labels[col].name.clone());
                continue;
            }
            a.swap_rows(row, pivot);
            for r in row + 1..n {
                let f = a[(r, col)] / a[(row, col)];
                for c in col..p {
                    a[(r, c)] -= f * a[(row, c)];
                }
            }
            row += 1;
        }
        dependent
    }
}

/// Number of columns the formula produces on the given factor set:
/// `sum over terms of prod_{f in term} (levels(f) - 1)`.
pub fn column_count(formula: &ModelFormula, factors: &[FactorSpec]) -> Result<usize> {
    let mut total = 0usize;
    for term in formula.terms() {
        let mut prod = 1usize;
        for f in term.factors() {
            let spec = factors
                .iter()
                .find(|s| &s.name == f)
                .ok_or_else(|| Error::UnknownFactor(f.clone()))?;
            prod *= spec.levels - 1;
        }
        total += prod;
    }
    Ok(total)
}

/// Non-reference level tuples of a term, lexicographic with the last factor
/// varying fastest.
pub fn term_level_tuples(term: &Term, factors: &[FactorSpec]) -> Result<Vec<Vec<usize>>> {
    let mut sizes = Vec::with_capacity(term.order());
    for f in term.factors() {
        let spec = factors
            .iter()
            .find(|s| &s.name == f)
            .ok_or_else(|| Error::UnknownFactor(f.clone()))?;
        sizes.push(spec.levels - 1);
    }
    let mut tuples = vec![vec![]];
    for &s in &sizes {
        let mut next = Vec::with_capacity(tuples.len() * s);
        for t in &tuples {
            for l in 1..=s {
                let mut t2 = t.clone();
                t2.push(l);
                next.push(t2);
            }
        }
        tuples = next;
    }
    Ok(tuples)
}

/// The column labels the formula produces on the given factors, in design
/// order, without building the matrix.
pub fn column_labels(formula: &ModelFormula, factors: &[FactorSpec]) -> Result<Vec<ColumnLabel>> {
    let mut labels = Vec::new();
    for term in formula.terms() {
        for tuple in term_level_tuples(term, factors)? {
            let name = label_name(term, &tuple, factors);
            labels.push(ColumnLabel {
                term: term.clone(),
                levels: tuple,
                name,
            });
        }
    }
    Ok(labels)
}

/// Build a design matrix over explicit rows (level tuples aligned with
/// `factors`).
pub fn design_matrix_for_rows(
    factors: &[FactorSpec],
    rows: &[Vec<usize>],
    formula: &ModelFormula,
) -> Result<DesignMatrix> {
    let labels = column_labels(formula, factors)?;
    let factor_pos = |name: &str| factors.iter().position(|f| f.name == name).unwrap();
    let mut matrix = DMatrix::zeros(rows.len(), labels.len());
    for (j, label) in labels.iter().enumerate() {
        let positions: Vec<usize> = label
            .term
            .factors()
            .iter()
            .map(|f| factor_pos(f))
            .collect();
        for (i, row) in rows.iter().enumerate() {
            let hit = positions
                .iter()
                .zip(&label.levels)
                .all(|(&pos, &lvl)| row[pos] == lvl);
            if hit {
                matrix[(i, j)] = 1.0;
            }
        }
    }
    Ok(DesignMatrix {
        matrix,
        labels,
        row_index: rows.to_vec(),
        factors: factors.to_vec(),
    })
}

/// Log-linear design matrix `X_ll`: one row per table cell.
pub fn design_for_table(table: &ContingencyTable, formula: &ModelFormula) -> Result<DesignMatrix> {
    if formula.role() != &Role::LogLinear {
        return Err(Error::Config(
            "table designs require a log-linear formula".to_string(),
        ));
    }
    for f in formula.factors_used() {
        table.factor_index(&f)?;
    }
    design_matrix_for_rows(table.factors(), &table.all_cells(), formula)
}

/// Logistic design matrix `X_lt`: one row per binomial row.
pub fn design_for_binomial(data: &BinomialData, formula: &ModelFormula) -> Result<DesignMatrix> {
    match formula.role() {
        Role::Logistic(_) => {}
        Role::LogLinear => {
            return Err(Error::Config(
                "binomial designs require a logistic formula".to_string(),
            ))
        }
    }
    for f in formula.factors_used() {
        if !data.covariates().iter().any(|s| s.name == f) {
            return Err(Error::UnknownFactor(f));
        }
    }
    design_matrix_for_rows(data.covariates(), &data.all_rows(), formula)
}
