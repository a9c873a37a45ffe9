//! g-priors for the two model families, unit-information priors,
//! Inverse-Gamma mixtures of g-priors, and the flat-intercept variant.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::tables::{BinomialData, ContingencyTable};

/// How the scale factor g is determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum GLaw {
    Fixed { g: f64 },
    /// g = N, the total count.
    UnitInformation,
    /// g ~ IG(a, b) with density proportional to g^{-a-1} exp(-b/g).
    InverseGammaMixture { a: f64, b: f64 },
}

/// A g-prior: N(mean, g * sigma) with a law for g.
///
/// When `intercept_flat` is set, `mean` and `sigma` exclude the intercept
/// coordinate, the associated design has centered covariate columns, and the
/// intercept carries an improper flat density.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GPriorSpec {
    pub mean: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub g_law: GLaw,
    pub intercept_flat: bool,
    /// Total observation count N backing the prior (drives g under the
    /// unit-information law).
    pub n_total: f64,
}

impl GPriorSpec {
    /// Dimension of the Gaussian block (excludes a flat intercept).
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_g_law(mut self, g_law: GLaw) -> Self {
        self.g_law = g_law;
        self
    }

    /// The value of g when it is deterministic.
    pub fn fixed_g(&self) -> Option<f64> {
        match self.g_law {
            GLaw::Fixed { g } => Some(g),
            GLaw::UnitInformation => Some(self.n_total),
            GLaw::InverseGammaMixture { .. } => None,
        }
    }

    /// Cholesky factor of sigma; every valid prior admits one.
    pub fn chol(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(self.sigma.clone()).ok_or(Error::NotPositiveDefinite)
    }

    /// Log density of N(mean, g*sigma) at the Gaussian block of `theta`.
    ///
    /// `theta` is the full parameter vector; with a flat intercept its first
    /// coordinate is skipped (the flat density contributes 0).
    pub fn log_density(&self, theta: &DVector<f64>, g: f64) -> Result<f64> {
        let block = self.gaussian_block(theta)?;
        let chol = self.chol()?;
        let p = self.dim() as f64;
        let diff = block - &self.mean;
        let z = chol.l().solve_lower_triangular(&diff).ok_or(Error::NotPositiveDefinite)?;
        let log_det_sigma: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Ok(-0.5
            * (p * (2.0 * std::f64::consts::PI * g).ln()
                + log_det_sigma
                + z.norm_squared() / g))
    }

    /// The coordinates of `theta` covered by the Gaussian block.
    pub fn gaussian_block(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let expected = self.dim() + usize::from(self.intercept_flat);
        if theta.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries, prior covers {}",
                theta.len(),
                expected
            )));
        }
        Ok(if self.intercept_flat {
            theta.rows(1, theta.len() - 1).into_owned()
        } else {
            theta.clone()
        })
    }
}

/// Invert a Gram matrix by Cholesky; rank failures are reported with the
/// labels of the offending design columns.
fn invert_gram(gram: &DMatrix<f64>, x: &DesignMatrix) -> Result<DMatrix<f64>> {
    let tol = 1e-10 * gram.diagonal().amax();
    let ok = Cholesky::new(gram.clone())
        .filter(|c| c.l().diagonal().iter().all(|&d| d * d > tol));
    match ok {
        Some(chol) => Ok(chol.inverse()),
        None => Err(Error::RankDeficient(x.dependent_columns())),
    }
}

/// Generic GLM g-prior: mean (m1, 0, ..., 0) and
/// `sigma = V(m*) g'(m*)^2 [X' diag(1/phi) X]^{-1}`.
pub fn gprior_generic(
    x: &DesignMatrix,
    variance_value: f64,
    link_deriv: f64,
    dispersions: &[f64],
    m1: f64,
) -> Result<GPriorSpec> {
    if dispersions.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} dispersions for {} rows",
            dispersions.len(),
            x.nrows()
        )));
    }
    if dispersions.iter().any(|&phi| phi <= 0.0) {
        return Err(Error::Config("dispersions must be positive".to_string()));
    }
    let m = x.matrix();
    let mut gram = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..x.nrows() {
        let row = m.row(i);
        let w = 1.0 / dispersions[i];
        for a in 0..x.ncols() {
            if row[a] == 0.0 {
                continue;
            }
            for b in 0..x.ncols() {
                gram[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let sigma = invert_gram(&gram, x)? * (variance_value * link_deriv * link_deriv);
    let mut mean = DVector::zeros(x.ncols());
    mean[0] = m1;
    Ok(GPriorSpec {
        mean,
        sigma,
        g_law: GLaw::UnitInformation,
        intercept_flat: false,
        n_total: f64::NAN,
    })
}

/// Log-linear g-prior: mean (log n-bar, 0, ..., 0) and
/// `sigma = (n_ll / N) (X'X)^{-1}`.
pub fn gprior_loglinear(x: &DesignMatrix, table: &ContingencyTable) -> Result<GPriorSpec> {
    if table.total() == 0 {
        return Err(Error::EmptyTable);
    }
    if x.nrows() != table.n_cells() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, table has {} cells",
            x.nrows(),
            table.n_cells()
        )));
    }
    let gram = x.matrix().transpose() * x.matrix();
    let sigma = invert_gram(&gram, x)? * (table.n_cells() as f64 / table.total() as f64);
    let mut mean = DVector::zeros(x.ncols());
    mean[0] = table.mean_count().ln();
    Ok(GPriorSpec {
        mean,
        sigma,
        g_law: GLaw::UnitInformation,
        intercept_flat: false,
        n_total: table.total() as f64,
    })
}

/// Logistic g-prior: mean 0 and `sigma = 4 (n_lt / N) (X'X)^{-1}`.
///
/// The average-trials approximation is part of the prior's definition; the
/// exact-weights variant below exists for sensitivity analysis only.
pub fn gprior_logistic(x: &DesignMatrix, data: &BinomialData) -> Result<GPriorSpec> {
    let n = data.total();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    if x.nrows() != data.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, data has {} rows",
            x.nrows(),
            data.n_rows()
        )));
    }
    let gram = x.matrix().transpose() * x.matrix();
    let sigma = invert_gram(&gram, x)? * (4.0 * data.n_rows() as f64 / n as f64);
    Ok(GPriorSpec {
        mean: DVector::zeros(x.ncols()),
        sigma,
        g_law: GLaw::UnitInformation,
        intercept_flat: false,
        n_total: n as f64,
    })
}

/// Sensitivity variant of the logistic g-prior that keeps the per-row trial
/// counts: `sigma = 4 [X' diag(t) X]^{-1}`.
pub fn gprior_logistic_exact_weights(
    x: &DesignMatrix,
    data: &BinomialData,
) -> Result<GPriorSpec> {
    let n = data.total();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    let dispersions: Vec<f64> = data.trials().iter().map(|&t| 1.0 / t.max(1) as f64).collect();
    let mut spec = gprior_generic(x, 0.25, 4.0, &dispersions, 0.0)?;
    spec.n_total = n as f64;
    Ok(spec)
}

/// Inverse-Gamma hyperparameters with mean exactly N:
/// `a = 2 + N^2/Var(g)`, `b = N + N^3/Var(g)`.
pub fn mixture_ig_params(n: f64, var_g: f64) -> (f64, f64) {
    let a = 2.0 + n * n / var_g;
    let b = n + n * n * n / var_g;
    (a, b)
}

/// Switch a prior to the flat-intercept treatment: center the non-intercept
/// design columns, drop the intercept coordinate from the prior, and rebuild
/// the Gaussian block from the centered design with the original scale.
///
/// The first design column must be the intercept.
pub fn apply_flat_intercept(
    spec: &GPriorSpec,
    x: &DesignMatrix,
) -> Result<(GPriorSpec, DesignMatrix)> {
    if spec.intercept_flat {
        return Err(Error::AlreadyFlatIntercept);
    }
    if x.ncols() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, prior has dimension {}",
            x.ncols(),
            spec.dim()
        )));
    }
    if !x.labels()[0].term.is_intercept() {
        return Err(Error::Config("first column is not the intercept".to_string()));
    }
    // Both families set sigma = scale * (X'X)^{-1}; recover the scale.
    let gram = x.matrix().transpose() * x.matrix();
    let prod = &spec.sigma * &gram;
    let scale = prod.trace() / x.ncols() as f64;

    let centered = center_design(x);
    let p = x.ncols();
    let sub = centered.matrix().columns(1, p - 1).into_owned();
    let gram_c = sub.transpose() * &sub;
    let sigma = invert_gram(&gram_c, x)? * scale;
    Ok((
        GPriorSpec {
            mean: DVector::zeros(p - 1),
            sigma,
            g_law: spec.g_law.clone(),
            intercept_flat: true,
            n_total: spec.n_total,
        },
        centered,
    ))
}

/// Center every non-intercept column of a design matrix to mean zero.
pub fn center_design(x: &DesignMatrix) -> DesignMatrix {
    let mut m = x.matrix().clone();
    for j in 0..m.ncols() {
        if x.labels()[j].term.is_intercept() {
            continue;
        }
        let mean = m.column(j).mean();
        for i in 0..m.nrows() {
            m[(i, j)] -= mean;
        }
    }
    DesignMatrix::from_parts(m, x.labels().to_vec(), x.row_index().to_vec(), x.factors().to_vec())
}
