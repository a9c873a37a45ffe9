//! Formula algebra: hierarchical interaction models, graphical-model
//! enumeration via maximal cliques, and the structural mapping between
//! log-linear and logistic formulas.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An interaction term: a sorted set of factor names. The empty term is the
/// intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Term {
    factors: Vec<String>,
}

impl Term {
    pub fn new<I, S>(factors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = factors.into_iter().map(Into::into).collect();
        Term {
            factors: set.into_iter().collect(),
        }
    }

    pub fn intercept() -> Self {
        Term { factors: vec![] }
    }

    pub fn factors(&self) -> &[String] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn contains(&self, factor: &str) -> bool {
        self.factors.iter().any(|f| f == factor)
    }

    pub fn is_subset_of(&self, other: &Term) -> bool {
        self.factors.iter().all(|f| other.contains(f))
    }

    /// All nonempty proper and improper subsets, plus the intercept.
    pub fn subsets(&self) -> Vec<Term> {
        let n = self.factors.len();
        (0..1usize << n)
            .map(|mask| {
                Term::new(
                    self.factors
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, f)| f.clone()),
                )
            })
            .collect()
    }

    pub fn union(&self, factor: &str) -> Term {
        let mut f = self.factors.clone();
        f.push(factor.to_string());
        Term::new(f)
    }

    pub fn without(&self, factor: &str) -> Term {
        Term::new(self.factors.iter().filter(|f| *f != factor).cloned())
    }
}

// Terms order by (size, lexicographic), which is also the column-block order
// of the design matrix.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.factors.len(), &self.factors).cmp(&(other.factors.len(), &other.factors))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        if self.factors.iter().all(|s| s.chars().count() == 1) {
            write!(f, "{}", self.factors.concat())
        } else {
            write!(f, "{}", self.factors.join("*"))
        }
    }
}

/// Whether a formula describes counts (Poisson, log link) or a binary
/// outcome (binomial, logit link).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "role", content = "outcome")]
pub enum Role {
    LogLinear,
    Logistic(String),
}

/// A hierarchical set of interaction terms, always containing the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelFormula {
    role: Role,
    terms: BTreeSet<Term>,
}

impl ModelFormula {
    pub fn role(&self) -> &Role {
        &self.role
    }

    pub fn outcome(&self) -> Option<&str> {
        match &self.role {
            Role::LogLinear => None,
            Role::Logistic(y) => Some(y),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn contains_term(&self, term: &Term) -> bool {
        self.terms.contains(term)
    }

    /// Maximal terms: those not strictly contained in another term.
    pub fn generators(&self) -> Vec<Term> {
        self.terms
            .iter()
            .filter(|t| {
                !t.is_intercept()
                    && !self
                        .terms
                        .iter()
                        .any(|u| u != *t && t.is_subset_of(u))
            })
            .cloned()
            .collect()
    }

    /// Every factor appearing in some term.
    pub fn factors_used(&self) -> BTreeSet<String> {
        self.terms
            .iter()
            .flat_map(|t| t.factors().iter().cloned())
            .collect()
    }

    pub fn contains_factor(&self, factor: &str) -> bool {
        self.terms.iter().any(|t| t.contains(factor))
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gens = self.generators();
        let lhs = match &self.role {
            Role::LogLinear => "log(mu)".to_string(),
            Role::Logistic(y) => format!("logit(p[{y}])"),
        };
        if gens.is_empty() {
            write!(f, "{lhs} = 1")
        } else {
            let parts: Vec<String> = gens.iter().map(|t| t.to_string()).collect();
            write!(f, "{lhs} = {}", parts.join("+"))
        }
    }
}

/// Downward closure of a set of generator terms, plus the intercept.
/// An empty generator set yields the intercept-only model.
pub fn close_hierarchical(generators: &[Term], role: Role) -> Result<ModelFormula> {
    let mut terms: BTreeSet<Term> = BTreeSet::new();
    terms.insert(Term::intercept());
    for g in generators {
        for s in g.subsets() {
            terms.insert(s);
        }
    }
    if let Role::Logistic(outcome) = &role {
        if let Some(bad) = terms.iter().find(|t| t.contains(outcome)) {
            return Err(Error::Config(format!(
                "logistic term {bad} contains the outcome `{outcome}`"
            )));
        }
    }
    Ok(ModelFormula { role, terms })
}

/// Check the hierarchical-closure invariant of an arbitrary term set.
pub fn is_downward_closed(terms: &BTreeSet<Term>) -> bool {
    terms
        .iter()
        .all(|t| t.subsets().iter().all(|s| terms.contains(s)))
}

/// Hard cap on factors for graphical enumeration (2^21 graphs).
pub const MAX_GRAPHICAL_FACTORS: usize = 7;

/// Graph on `nodes` encoded as an edge bitmask; edge (i,j), i<j, occupies
/// bit `edge_bit(i, j, n)`.
pub fn edge_bit(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    // Position within the upper-triangle enumeration (0,1),(0,2),...,(n-2,n-1).
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Maximal cliques of the graph `mask` on `n` nodes, as node bitmasks.
pub fn maximal_cliques(mask: u64, n: usize) -> Vec<u32> {
    let is_clique = |s: u32| -> bool {
        for i in 0..n {
            if s >> i & 1 == 0 {
                continue;
            }
            for j in i + 1..n {
                if s >> j & 1 == 1 && mask >> edge_bit(i, j, n) & 1 == 0 {
                    return false;
                }
            }
        }
        true
    };
    let cliques: Vec<u32> = (1u32..1 << n).filter(|&s| is_clique(s)).collect();
    cliques
        .iter()
        .filter(|&&s| !cliques.iter().any(|&t| t != s && s & t == s))
        .copied()
        .collect()
}

/// The graphical model for a given edge mask: generators are the maximal
/// cliques of the graph.
pub fn graphical_model(nodes: &[String], mask: u64, role: Role) -> Result<ModelFormula> {
    let gens: Vec<Term> = maximal_cliques(mask, nodes.len())
        .into_iter()
        .map(|s| {
            Term::new(
                nodes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| s >> i & 1 == 1)
                    .map(|(_, f)| f.clone()),
            )
        })
        .collect();
    close_hierarchical(&gens, role)
}

/// All graphical models on the given node set.
///
/// Log-linear role: nodes are the table factors. Logistic role: nodes are the
/// covariates (the outcome must not be among them); every covariate main
/// effect is present in every model since every node lies in some maximal
/// clique.
pub fn enumerate_graphical(nodes: &[String], role: Role) -> Result<Vec<ModelFormula>> {
    if nodes.len() > MAX_GRAPHICAL_FACTORS {
        return Err(Error::SpaceTooLarge(nodes.len(), MAX_GRAPHICAL_FACTORS));
    }
    if let Role::Logistic(y) = &role {
        if nodes.iter().any(|f| f == y) {
            return Err(Error::OutcomeAmongCovariates(y.clone()));
        }
    }
    let n_edges = nodes.len() * (nodes.len().saturating_sub(1)) / 2;
    (0u64..1 << n_edges)
        .map(|mask| graphical_model(nodes, mask, role.clone()))
        .collect()
}

/// The logistic model implied by a log-linear formula containing the binary
/// outcome `y`: terms are `T \ {y}` for every term `T` containing `y`.
///
/// The second return value maps each logistic term to its source log-linear
/// term (the parameter-level map fixes the `y` index at level 1).
pub fn loglinear_to_logistic(
    formula: &ModelFormula,
    y: &str,
) -> Result<(ModelFormula, Vec<(Term, Term)>)> {
    if formula.role() != &Role::LogLinear {
        return Err(Error::Config("expected a log-linear formula".to_string()));
    }
    if !formula.contains_factor(y) {
        return Err(Error::OutcomeAbsent(y.to_string()));
    }
    let mut terms: BTreeSet<Term> = BTreeSet::new();
    let mut map = Vec::new();
    for t in formula.terms() {
        if t.contains(y) {
            let logistic = t.without(y);
            map.push((logistic.clone(), t.clone()));
            terms.insert(logistic);
        }
    }
    map.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((
        ModelFormula {
            role: Role::Logistic(y.to_string()),
            terms,
        },
        map,
    ))
}

/// The log-linear model that is deviance-equivalent to a logistic formula:
/// the full interaction among all non-outcome factors, plus `T ∪ {y}` for
/// every logistic term `T`.
pub fn logistic_to_loglinear_equivalent(
    formula: &ModelFormula,
    all_factors: &[String],
) -> Result<ModelFormula> {
    let y = match formula.role() {
        Role::Logistic(y) => y.clone(),
        Role::LogLinear => {
            return Err(Error::Config("expected a logistic formula".to_string()))
        }
    };
    if formula.contains_factor(&y) {
        return Err(Error::OutcomeAmongCovariates(y));
    }
    let covariates: Vec<String> = all_factors.iter().filter(|f| **f != y).cloned().collect();
    let mut gens = vec![Term::new(covariates)];
    for t in formula.terms() {
        gens.push(t.union(&y));
    }
    close_hierarchical(&gens, Role::LogLinear)
}

/// The smallest hierarchical log-linear model mapping to a logistic formula:
/// the closure of `T ∪ {y}` over its terms.
pub fn minimal_loglinear_preimage(formula: &ModelFormula) -> Result<ModelFormula> {
    let y = match formula.role() {
        Role::Logistic(y) => y.clone(),
        Role::LogLinear => {
            return Err(Error::Config("expected a logistic formula".to_string()))
        }
    };
    let gens: Vec<Term> = formula.terms().map(|t| t.union(&y)).collect();
    close_hierarchical(&gens, Role::LogLinear)
}

/// Two distinct log-linear models implying the same logistic model: the
/// minimal preimage and the deviance-equivalent model. They coincide only
/// when the minimal preimage already saturates the covariates, in which case
/// a main effect for an unused factor is added to the witness instead.
pub fn nonbijectivity_witness(
    formula: &ModelFormula,
    all_factors: &[String],
) -> Result<(ModelFormula, ModelFormula)> {
    let minimal = minimal_loglinear_preimage(formula)?;
    let equivalent = logistic_to_loglinear_equivalent(formula, all_factors)?;
    Ok((minimal, equivalent))
}

/// On-disk model spec: `{"role":"loglinear","generators":[["Y","A"],...]}`
/// or `{"role":"logistic","outcome":"Y","generators":[["A","B"],...]}`.
/// Hierarchical closure is applied on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub role: Role,
    pub generators: Vec<Vec<String>>,
}

impl ModelSpec {
    pub fn to_formula(&self) -> Result<ModelFormula> {
        let gens: Vec<Term> = self
            .generators
            .iter()
            .map(|g| Term::new(g.iter().cloned()))
            .collect();
        close_hierarchical(&gens, self.role.clone())
    }

    pub fn from_formula(formula: &ModelFormula) -> Self {
        ModelSpec {
            role: formula.role().clone(),
            generators: formula
                .generators()
                .iter()
                .map(|t| t.factors().to_vec())
                .collect(),
        }
    }
}
