//! Built-in simulation scenario: six binary factors with data generated
//! from a graphical log-linear model and analyzed by model determination
//! over the graphical space.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::design::{design_for_table, DesignMatrix};
use crate::error::Result;
use crate::models::{close_hierarchical, ModelFormula, Role, Term};
use crate::tables::{simulate_table, ContingencyTable, FactorSpec};

/// Factor layout: the outcome `Y` and five binary covariates `A..E`.
pub fn scenario_factors() -> Vec<FactorSpec> {
    ["Y", "A", "B", "C", "D", "E"]
        .iter()
        .map(|&n| FactorSpec::binary(n))
        .collect()
}

/// The generating log-linear model: generators YAB, YCD, YE (graphical,
/// with covariate cliques AB and CD plus the single covariate E linked to
/// the outcome).
pub fn generating_model() -> ModelFormula {
    close_hierarchical(
        &[
            Term::new(["Y", "A", "B"]),
            Term::new(["Y", "C", "D"]),
            Term::new(["Y", "E"]),
        ],
        Role::LogLinear,
    )
    .expect("hierarchical by construction")
}

/// The logistic model the generator corresponds to: A*B and C*D
/// interactions plus an E main effect on the outcome.
pub fn generating_logistic() -> ModelFormula {
    close_hierarchical(
        &[Term::new(["A", "B"]), Term::new(["C", "D"]), Term::new(["E"])],
        Role::Logistic("Y".to_string()),
    )
    .expect("hierarchical by construction")
}

/// Generating parameter values, aligned with the design columns of
/// [`generating_model`] on [`scenario_factors`].
///
/// The true values are configuration: strong covariate pair effects (AB,
/// CD), zero first-order outcome-by-covariate interactions inside the
/// cliques, and strong negative three-way terms, tuned so that every cell
/// probability stays away from the boundary and desk-scale model
/// determination recovers the generating model in both formulations.
pub fn generating_lambda(x: &DesignMatrix) -> DVector<f64> {
    let value = |name: &str| -> f64 {
        match name {
            "Intercept" => 0.0,
            "Y" => 0.6,
            "A" | "B" | "C" | "D" => 0.0,
            "E" => 0.5,
            "AB" => 1.3,
            "CD" => 1.6,
            "AY" | "BY" | "CY" | "DY" => 0.0,
            "EY" => -0.55,
            "ABY" => -1.1,
            "CDY" => -1.4,
            other => panic!("unexpected design column {other}"),
        }
    };
    DVector::from_iterator(
        x.ncols(),
        x.labels().iter().map(|l| value(&l.name)),
    )
}

/// Draw one multinomial table of size `n_total` from the scenario.
pub fn simulate_scenario(n_total: u64, seed: u64) -> Result<ContingencyTable> {
    let factors = scenario_factors();
    let shape = ContingencyTable::new(factors.clone(), vec![0; 64])?;
    let model = generating_model();
    let x = design_for_table(&shape, &model)?;
    let lambda = generating_lambda(&x);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    simulate_table(&factors, &model, &lambda, n_total, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_shapes() {
        let factors = scenario_factors();
        let shape = ContingencyTable::new(factors, vec![0; 64]).unwrap();
        let x = design_for_table(&shape, &generating_model()).unwrap();
        // 1 + 6 mains + AB + CD + 5 Y-interactions + YAB + YCD = 16.
        assert_eq!(x.ncols(), 16);
        let lambda = generating_lambda(&x);
        assert_eq!(lambda.len(), 16);
    }

    #[test]
    fn simulation_is_reproducible_and_full() {
        let t1 = simulate_scenario(1000, 42).unwrap();
        let t2 = simulate_scenario(1000, 42).unwrap();
        assert_eq!(t1.counts(), t2.counts());
        assert_eq!(t1.total(), 1000);
        let t3 = simulate_scenario(1000, 43).unwrap();
        assert_ne!(t1.counts(), t3.counts());
    }

    #[test]
    fn cell_probabilities_stay_off_the_boundary() {
        let factors = scenario_factors();
        let x = design_for_table(
            &ContingencyTable::new(factors.clone(), vec![0; 64]).unwrap(),
            &generating_model(),
        )
        .unwrap();
        let lambda = generating_lambda(&x);
        let probs =
            crate::tables::cell_probabilities(&factors, &generating_model(), &lambda).unwrap();
        for &p in &probs {
            assert!(p > 1e-4, "cell probability {p} too extreme");
        }
    }

    #[test]
    fn logistic_counterpart_matches() {
        let (logit, _) =
            crate::models::loglinear_to_logistic(&generating_model(), "Y").unwrap();
        assert_eq!(logit, generating_logistic());
    }
}
