//! Synthetic problem instances.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{AtomLayout, ExperimentConfig};
use super::rng::stream;
use crate::dual::{population_solve, DualSolution, SolveOptions};
use crate::error::{AmemError, Result};
use crate::measure::Atoms;
use crate::operator::{phi_matrix, AtParam, MomentMap, OperatorSpec};
use crate::prior::ReferenceMeasure;
use crate::quadrature::Quadrature;
use crate::reconstruct::Observation;

/// The exact operator of a config, with the parameter fixed at `t_obs` for
/// parametric kinds.
pub enum ExactOperator {
    Plain(OperatorSpec),
    AtObs(OperatorSpec, Vec<f64>),
}

impl ExactOperator {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let op = cfg.operator()?;
        Ok(match cfg.t_obs() {
            Some(t) => ExactOperator::AtObs(op, t.to_vec()),
            None => ExactOperator::Plain(op),
        })
    }

    pub fn spec(&self) -> &OperatorSpec {
        match self {
            ExactOperator::Plain(op) | ExactOperator::AtObs(op, _) => op,
        }
    }

    pub fn t_obs(&self) -> Option<&[f64]> {
        match self {
            ExactOperator::Plain(_) => None,
            ExactOperator::AtObs(_, t) => Some(t),
        }
    }
}

impl MomentMap for ExactOperator {
    fn output_dim(&self) -> usize {
        self.spec().output_dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            ExactOperator::Plain(op) => op.eval_exact_into(x, None, out),
            ExactOperator::AtObs(op, t) => AtParam::new(op, t.clone()).eval_into(x, out),
        }
    }
}

/// Everything a replication needs.
pub struct Setup {
    pub prior: ReferenceMeasure,
    pub op: ExactOperator,
    pub quad: Quadrature,
    pub y_clean: DVector<f64>,
    pub opts: SolveOptions,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let prior = cfg.prior()?;
        let op = ExactOperator::from_config(cfg)?;
        let q = &cfg.quadrature;
        let quad = Quadrature::uniform(cfg.px.lower, cfg.px.upper, q.nodes, q.panels)?;
        let y_clean = clean_moment(cfg, &op, &quad)?;
        Ok(Setup {
            prior,
            op,
            quad,
            y_clean,
            opts: SolveOptions {
                tolerance: cfg.solver.tolerance,
                max_iters: cfg.solver.max_iters,
                initial: None,
            },
        })
    }
}

/// `y = ∫ Φ g₀ dP_X` by quadrature.
pub fn clean_moment(
    cfg: &ExperimentConfig,
    op: &dyn MomentMap,
    quad: &Quadrature,
) -> Result<DVector<f64>> {
    let phi = phi_matrix(op, &quad.nodes)?;
    let gw: Vec<f64> = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .map(|(x, w)| w * cfg.truth.eval(x[0], &cfg.px))
        .collect();
    Ok(phi * DVector::from_vec(gw))
}

/// `ε` uniform on a sphere of radius `r ~ U[0, η)`, so `‖ε‖ ≤ η` always.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, k: usize, eta: f64) -> DVector<f64> {
    if eta == 0.0 {
        return DVector::zeros(k);
    }
    let mut dir = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    while dir.norm() == 0.0 {
        dir = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    }
    let r = eta * rng.random::<f64>();
    let scale = r / dir.norm();
    let eps = dir * scale;
    let n = eps.norm();
    if n > eta {
        eps * (eta / n)
    } else {
        eps
    }
}

/// `n` atoms from `P_X`: i.i.d. uniform draws or cell midpoints.
pub fn draw_atoms<R: Rng + ?Sized>(rng: &mut R, cfg: &ExperimentConfig, n: usize) -> Atoms {
    let (a, b) = (cfg.px.lower, cfg.px.upper);
    let xs = match cfg.px.atoms {
        AtomLayout::Random => (0..n).map(|_| a + (b - a) * rng.random::<f64>()).collect(),
        AtomLayout::Grid => (0..n)
            .map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64)
            .collect(),
    };
    Atoms::from_scalars(xs)
}

/// The observation for replication `rep`, offset included.
pub fn observation(
    cfg: &ExperimentConfig,
    y_clean: &DVector<f64>,
    rep: u64,
) -> Result<Observation> {
    let mut rng = stream(cfg.seed, "noise", rep);
    let mut y = y_clean + draw_noise(&mut rng, y_clean.len(), cfg.eta);
    if !cfg.y_offset.is_empty() {
        y += DVector::from_column_slice(&cfg.y_offset);
    }
    Observation::new(y.iter().copied().collect(), cfg.eta)
}

/// One replication of a configured experiment at sample size `n`.
pub struct GeneratedProblem {
    pub atoms: Arc<Atoms>,
    pub phi: DMatrix<f64>,
    pub observation: Observation,
    pub y_clean: DVector<f64>,
    /// Population minimizer on the exact operator; `None` when the
    /// observation is unreachable and the oracle does not converge.
    pub v_star: Option<DualSolution>,
    /// `Λ'(⟨v*, Φ(X_i)⟩)` at the atoms, when `v_star` exists.
    pub oracle_weights: Option<Vec<f64>>,
}

/// `z*(x) = Λ'(⟨v, Φ(x)⟩)` at each point of `sample`.
pub fn oracle_weights(
    v: &DVector<f64>,
    op: &dyn MomentMap,
    prior: &ReferenceMeasure,
    sample: &Atoms,
) -> Result<Vec<f64>> {
    let phi = phi_matrix(op, sample)?;
    phi.tr_mul(v)
        .iter()
        .map(|&s| prior.log_laplace_deriv(s))
        .collect()
}

/// Population solution for an observation; an error unless it converges.
/// Never solved more loosely than the defaults, whatever the study settings.
pub fn oracle_solution(setup: &Setup, obs: &Observation) -> Result<DualSolution> {
    let base = SolveOptions::default();
    let opts = SolveOptions {
        tolerance: setup.opts.tolerance.min(base.tolerance),
        max_iters: setup.opts.max_iters.max(base.max_iters),
        initial: None,
    };
    let sol = population_solve(&setup.op, &setup.quad, obs, &setup.prior, &opts)?;
    if !sol.status.is_success() {
        return Err(AmemError::InvalidProblem(format!(
            "population oracle did not converge: {}",
            sol.status
        )));
    }
    Ok(sol)
}

/// Atoms for sample size `n` in replication `rep`.
pub fn atoms_for(cfg: &ExperimentConfig, n: usize, rep: u64) -> Arc<Atoms> {
    let mut rng = stream(cfg.seed, &format!("atoms/n={n}"), rep);
    Arc::new(draw_atoms(&mut rng, cfg, n))
}

pub fn generate_problem(cfg: &ExperimentConfig, rep: u64, n: usize) -> Result<GeneratedProblem> {
    let setup = Setup::new(cfg)?;
    let observation = observation(cfg, &setup.y_clean, rep)?;
    let atoms = atoms_for(cfg, n, rep);
    let phi = phi_matrix(&setup.op, &atoms)?;
    let v_star = oracle_solution(&setup, &observation).ok();
    let oracle_weights = match &v_star {
        Some(s) => Some(oracle_weights(&s.v_hat, &setup.op, &setup.prior, &atoms)?),
        None => None,
    };
    Ok(GeneratedProblem {
        atoms,
        phi,
        observation,
        y_clean: setup.y_clean,
        v_star,
        oracle_weights,
    })
}
