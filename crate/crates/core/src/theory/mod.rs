//! Numerical verification of the method's theoretical guarantees.
//!
//! Every check returns a [`CheckReport`] comparing a measured left-hand side
//! with a right-hand side under an equality or inequality relation.

mod gsb;
mod sde;
mod tabular;

pub use gsb::{
    boltzmann_closed_form, gsb_boltzmann_check, gsb_objective, mirror_descent, total_variation,
    GridDistribution, MirrorDescent, MIRROR_MAX_ITERS, MIRROR_TOL,
};
pub use sde::{
    benamou_bound_check, dpi_terminal_check, girsanov_compare, girsanov_kl_check, girsanov_kl_check_with,
    log_rn_samples, translation_field, Estimator, GirsanovSamples, Translation,
};
pub use tabular::{
    contraction_check, evaluate_policy, fixed_point_check, greedy_policy, improvement_check,
    iterate_backup, policy_energy, random_policy, tabular_backup, value_iteration,
};

use std::fmt;

use crate::env::make_random_mdp;
use crate::error::Result;
use crate::flow::fields;
use crate::nn::{Activation, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Leq,
}

impl Relation {
    pub fn tag(self) -> &'static str {
        match self {
            Relation::Eq => "eq",
            Relation::Leq => "leq",
        }
    }

    /// `lhs = rhs` within `tol`, or `lhs ≤ rhs + tol`.
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Relation::Eq => (lhs - rhs).abs() <= tol,
            Relation::Leq => lhs <= rhs + tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub tolerance: f64,
    /// Monte Carlo sample count, grid size or trial count.
    pub n_samples: usize,
    pub pass: bool,
    pub seed: u64,
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        lhs: f64,
        rhs: f64,
        relation: Relation,
        tolerance: f64,
        n_samples: usize,
        seed: u64,
    ) -> Self {
        let pass = lhs.is_finite() && rhs.is_finite() && relation.holds(lhs, rhs, tolerance);
        CheckReport {
            name: name.into(),
            lhs,
            rhs,
            relation,
            tolerance,
            n_samples,
            pass,
            seed,
        }
    }

    /// Forces failure when a side condition of the check is violated.
    pub fn require(mut self, side_condition: bool) -> Self {
        self.pass &= side_condition;
        self
    }

    pub const CSV_HEADER: &'static str = "name,lhs,rhs,relation,tolerance,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{},{:.3e},{}",
            self.name,
            self.lhs,
            self.rhs,
            self.relation.tag(),
            self.tolerance,
            self.pass
        )
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.csv_row())
    }
}

/// Runs every check with its default configuration, in a fixed order.
pub fn run_all_checks(seed: u64) -> Result<Vec<CheckReport>> {
    run_all_checks_with(seed, Estimator::Correct)
}

/// [`run_all_checks`] with a selectable Girsanov estimator.
pub fn run_all_checks_with(seed: u64, estimator: Estimator) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    let girsanov = |name: &str, drift: &Params, s: &[f64], sigma: f64, n: usize| {
        girsanov_kl_check_with(name, drift, s, sigma, n, 16, seed, estimator)
    };

    let zero = fields::constant(0, &[0.0, 0.0]);
    reports.push(girsanov("girsanov_zero_drift", &zero, &[], 1.0, 2000)?);
    let c10 = fields::constant(0, &[1.0, 0.0]);
    reports.push(girsanov("girsanov_constant_sigma1", &c10, &[], 1.0, 20_000)?);
    let c11 = fields::constant(0, &[1.0, 1.0]);
    reports.push(girsanov("girsanov_constant_sigma2", &c11, &[], 2.0, 20_000)?);
    let mut mlp = Params::init(&[4, 16, 2], Activation::Elu, seed)?;
    for layer in mlp.layers_mut() {
        layer.weight.mapv_inplace(|w| 2.0 * w);
    }
    reports.push(girsanov("girsanov_mlp_field", &mlp, &[0.5], 0.7, 20_000)?);

    reports.push(dpi_terminal_check("dpi_terminal_c10", &[1.0, 0.0], 1.0)?);
    reports.push(dpi_terminal_check("dpi_terminal_c20", &[2.0, 0.0], 1.0)?);

    reports.push(benamou_bound_check("benamou_constant", &[1.0, -0.5], Translation::Constant, 64, seed)?);
    reports.push(benamou_bound_check("benamou_linear_ramp", &[1.0, -0.5], Translation::LinearRamp, 64, seed)?);

    let uniform2 = GridDistribution::uniform(vec![0.0, 1.0])?;
    reports.push(gsb_boltzmann_check("gsb_two_point", &[0.0, 1.0], &uniform2, 1.0)?);
    let support: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
    let mu = GridDistribution::gaussian(support.clone(), 0.0, 1.0)?;
    let g: Vec<f64> = support.iter().map(|x| (x - 1.0).powi(2) + 0.5 * (3.0 * x).sin()).collect();
    reports.push(gsb_boltzmann_check("gsb_gaussian_grid", &g, &mu, 0.3)?);

    let mdp = make_random_mdp(6, 3, seed);
    let policy = random_policy(6, 3, seed ^ 0x5eed);
    reports.push(contraction_check("bellman_contraction", &mdp, &policy, 0.5, 100, seed)?);
    reports.push(fixed_point_check("bellman_fixed_point", &mdp, &policy, 0.5)?);

    let mdp = make_random_mdp(5, 3, seed.wrapping_add(1));
    reports.push(improvement_check("policy_improvement", &mdp, 0.3, 10, seed)?);

    Ok(reports)
}
