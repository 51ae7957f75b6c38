//! Primal AMEM estimate from a dual optimum.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::dual::DualSolution;
use crate::error::{AmemError, Result};
use crate::measure::{entropy, moment, Atoms, DiscreteMeasure};
use crate::operator::MomentMap;
use crate::prior::ReferenceMeasure;

/// Noisy moment `y_obs` with `‖ε‖ ≤ eta`; `K_Y` is the closed ball
/// `B(y_obs, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y_obs: Vec<f64>,
    pub eta: f64,
}

impl Observation {
    pub fn new(y_obs: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(AmemError::InvalidProblem(format!(
                "eta must be >= 0, got {eta}"
            )));
        }
        if y_obs.is_empty() || y_obs.iter().any(|v| !v.is_finite()) {
            return Err(AmemError::InvalidProblem(
                "y_obs must be finite and nonempty".into(),
            ));
        }
        Ok(Observation { y_obs, eta })
    }
}

/// `μ̂ = (1/n) Σ Λ'(⟨v̂, Φ(X_i)⟩) δ_{X_i}`.
pub fn amem_estimate(
    v_hat: &DVector<f64>,
    atoms: Arc<Atoms>,
    op: &dyn MomentMap,
    prior: &ReferenceMeasure,
) -> Result<DiscreteMeasure> {
    let k = op.output_dim();
    if v_hat.len() != k {
        return Err(AmemError::Dimension {
            expected: k,
            got: v_hat.len(),
        });
    }
    let mut phi = vec![0.0; k];
    let mut weights = Vec::with_capacity(atoms.len());
    for x in atoms.iter() {
        op.eval_into(x, &mut phi)?;
        let s: f64 = phi.iter().zip(v_hat.iter()).map(|(a, b)| a * b).sum();
        weights.push(prior.log_laplace_deriv(s)?);
    }
    DiscreteMeasure::new(atoms, weights)
}

/// `max(0, ‖moment(μ) − y_obs‖ − η)`.
pub fn residual(mu: &DiscreteMeasure, op: &dyn MomentMap, obs: &Observation) -> Result<f64> {
    let m = moment(mu, op)?;
    if m.len() != obs.y_obs.len() {
        return Err(AmemError::Dimension {
            expected: obs.y_obs.len(),
            got: m.len(),
        });
    }
    let dist = m
        .iter()
        .zip(&obs.y_obs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok((dist - obs.eta).max(0.0))
}

/// Plain summary of one reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub objective: f64,
    pub residual: f64,
    /// `None` when the entropy is infinite.
    pub entropy: Option<f64>,
    pub status: String,
    pub iterations: usize,
    pub grad_norm: f64,
    pub v_hat: Vec<f64>,
}

impl Summary {
    pub fn new(
        sol: &DualSolution,
        mu: &DiscreteMeasure,
        op: &dyn MomentMap,
        obs: &Observation,
        prior: &ReferenceMeasure,
    ) -> Result<Self> {
        Ok(Summary {
            objective: sol.objective_value,
            residual: residual(mu, op, obs)?,
            entropy: entropy(mu, prior).finite(),
            status: sol.status.to_string(),
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
            v_hat: sol.v_hat.iter().copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{solve, DualProblem, SolveOptions, SolveStatus};
    use crate::operator::{FnMap, OperatorSpec};
    use nalgebra::DMatrix;

    fn constant_map() -> FnMap<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnMap::new(1, |_x: &[f64], out: &mut [f64]| out[0] = 1.0)
    }

    #[test]
    fn estimate_examples() {
        let atoms = Arc::new(Atoms::from_scalars(vec![0.1, 0.4, 0.9]));
        let op = constant_map();
        let g = ReferenceMeasure::gaussian(0.0, 1.0).unwrap();
        let mu = amem_estimate(&DVector::from_vec(vec![0.8]), atoms.clone(), &op, &g).unwrap();
        assert!(mu.weights().iter().all(|&z| (z - 0.8).abs() < 1e-15));

        let u = ReferenceMeasure::uniform(0.0, 2.0).unwrap();
        let mu = amem_estimate(&DVector::zeros(1), atoms.clone(), &op, &u).unwrap();
        assert!(mu.weights().iter().all(|&z| (z - 1.0).abs() < 1e-15));

        let tp = ReferenceMeasure::two_point(1.0, 0.5).unwrap();
        let pm = OperatorSpec::power_moments(2).unwrap();
        for v in [[-30.0, 5.0], [3.0, 3.0], [40.0, -2.0], [0.01, 0.0]] {
            let mu =
                amem_estimate(&DVector::from_vec(v.to_vec()), atoms.clone(), &pm, &tp).unwrap();
            assert!(mu.weights().iter().all(|&z| z > 0.0 && z < 1.0), "{v:?}");
        }
    }

    #[test]
    fn residual_examples() {
        let atoms = Arc::new(Atoms::from_scalars(vec![0.0, 1.0]));
        let op = constant_map();
        let mu = DiscreteMeasure::new(atoms, vec![1.0, 2.0]).unwrap();
        let exact = Observation::new(vec![1.5], 0.0).unwrap();
        assert_eq!(residual(&mu, &op, &exact).unwrap(), 0.0);
        let off = Observation::new(vec![2.0], 0.3).unwrap();
        assert!((residual(&mu, &op, &off).unwrap() - 0.2).abs() < 1e-15);
        let inside = Observation::new(vec![2.0], 0.7).unwrap();
        assert_eq!(residual(&mu, &op, &inside).unwrap(), 0.0);
    }

    #[test]
    fn soft_threshold_sits_on_the_ball() {
        let atoms = Arc::new(Atoms::from_scalars(vec![0.25, 0.75]));
        let op = constant_map();
        let g = ReferenceMeasure::gaussian(0.0, 1.0).unwrap();
        let obs = Observation::new(vec![0.8], 0.3).unwrap();
        let p = DualProblem::new(DMatrix::from_element(1, 2, 1.0), &obs, g).unwrap();
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        let mu = amem_estimate(&sol.v_hat, atoms, &op, &g).unwrap();
        let m = moment(&mu, &op).unwrap();
        assert!(((m[0] - 0.8).abs() - 0.3).abs() < 1e-8);
        assert!(residual(&mu, &op, &obs).unwrap() <= 1e-6);
    }

    #[test]
    fn rejects_bad_observations() {
        assert!(Observation::new(vec![1.0], -0.1).is_err());
        assert!(Observation::new(vec![f64::NAN], 0.1).is_err());
        assert!(Observation::new(vec![], 0.1).is_err());
    }
}
