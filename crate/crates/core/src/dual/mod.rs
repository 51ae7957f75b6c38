//! The finite-dimensional convex dual of the AMEM problem.
//!
//! For a `k × n` matrix `Φ` with column weights `w_i` (uniform `1/n` for an
//! empirical sample, quadrature weights for population problems) the dual
//! objective is
//!
//! `H(v) = Σ w_i Λ(⟨v, Φ_i⟩) − ⟨v, y⟩ + η‖v‖`.

mod feasibility;
mod solve;

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{AmemError, Result};
use crate::measure::Atoms;
use crate::operator::{phi_matrix, MomentMap};
use crate::prior::ReferenceMeasure;
use crate::quadrature::Quadrature;
use crate::reconstruct::Observation;

pub use feasibility::{feasibility, Feasibility, FeasibilityReport};
pub use solve::{population_solve, solve, SolveOptions, TraceRecord};

/// Relative eigenvalue threshold below which the weighted Gram matrix is
/// reported as rank deficient.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DualProblem {
    phi: DMatrix<f64>,
    weights: Vec<f64>,
    y: DVector<f64>,
    eta: f64,
    prior: ReferenceMeasure,
    gram: DMatrix<f64>,
    rank_deficient: bool,
}

impl DualProblem {
    /// Empirical problem with weights `1/n`.
    pub fn new(phi: DMatrix<f64>, obs: &Observation, prior: ReferenceMeasure) -> Result<Self> {
        let n = phi.ncols();
        let w = if n == 0 {
            Vec::new()
        } else {
            vec![1.0 / n as f64; n]
        };
        Self::with_weights(phi, w, obs, prior)
    }

    /// Problem with explicit nonnegative column weights summing to one.
    pub fn with_weights(
        phi: DMatrix<f64>,
        weights: Vec<f64>,
        obs: &Observation,
        prior: ReferenceMeasure,
    ) -> Result<Self> {
        let (k, n) = phi.shape();
        if k == 0 || n == 0 {
            return Err(AmemError::InvalidProblem(format!(
                "empty phi matrix {k}x{n}"
            )));
        }
        if weights.len() != n {
            return Err(AmemError::Dimension {
                expected: n,
                got: weights.len(),
            });
        }
        if obs.y_obs.len() != k {
            return Err(AmemError::Dimension {
                expected: k,
                got: obs.y_obs.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(AmemError::InvalidProblem(
                "phi matrix has non-finite entries".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(AmemError::InvalidProblem(
                "weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AmemError::InvalidProblem(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut gram = DMatrix::zeros(k, k);
        let mut scaled = phi.clone();
        for (mut col, w) in scaled.column_iter_mut().zip(&weights) {
            col *= *w;
        }
        gram.gemm(1.0, &scaled, &phi.transpose(), 0.0);
        let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let rank_deficient = !(max > 0.0 && min > RANK_TOL * max);
        Ok(DualProblem {
            phi,
            weights,
            y: DVector::from_vec(obs.y_obs.clone()),
            eta: obs.eta,
            prior,
            gram,
            rank_deficient,
        })
    }

    /// Evaluates `op` on the atoms and builds the empirical problem.
    pub fn from_operator(
        op: &dyn MomentMap,
        atoms: &Atoms,
        obs: &Observation,
        prior: ReferenceMeasure,
    ) -> Result<Self> {
        Self::new(phi_matrix(op, atoms)?, obs, prior)
    }

    /// Population problem: the sum over atoms becomes the quadrature sum.
    pub fn from_quadrature(
        op: &dyn MomentMap,
        quad: &Quadrature,
        obs: &Observation,
        prior: ReferenceMeasure,
    ) -> Result<Self> {
        Self::with_weights(
            phi_matrix(op, &quad.nodes)?,
            quad.weights.clone(),
            obs,
            prior,
        )
    }

    pub fn k(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn y_obs(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn prior(&self) -> &ReferenceMeasure {
        &self.prior
    }

    /// Weighted Gram matrix `Σ w_i Φ_i Φ_iᵀ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// True when the Gram matrix is numerically singular. Solving proceeds
    /// anyway; the minimizer is then not unique.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// `Σ w_i Φ_i`.
    pub fn mean_column(&self) -> DVector<f64> {
        &self.phi * DVector::from_column_slice(&self.weights)
    }

    /// Inner products `⟨v, Φ_i⟩`.
    pub fn inner_products(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.k() {
            return Err(AmemError::Dimension {
                expected: self.k(),
                got: v.len(),
            });
        }
        Ok(self.phi.tr_mul(v))
    }

    /// Weights `Λ'(⟨v, Φ_i⟩)` of the primal solution attached to `v`.
    pub fn primal_weights(&self, v: &DVector<f64>) -> Result<Vec<f64>> {
        let s = self.inner_products(v)?;
        s.iter()
            .map(|&si| self.prior.log_laplace_deriv(si))
            .collect()
    }

    /// `Σ w_i Φ_i Λ'(⟨v, Φ_i⟩)`.
    pub fn achieved_moment(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self.primal_weights(v)?;
        let wz: Vec<f64> = z.iter().zip(&self.weights).map(|(z, w)| z * w).collect();
        Ok(&self.phi * DVector::from_vec(wz))
    }

    pub fn objective(&self, v: &DVector<f64>) -> Result<f64> {
        let s = self.inner_products(v)?;
        let mut acc = 0.0;
        for (&si, w) in s.iter().zip(&self.weights) {
            acc += w * self.prior.log_laplace(si)?;
        }
        Ok(acc - v.dot(&self.y) + self.eta * v.norm())
    }

    /// Gradient on the smooth region. When `η > 0` the origin is a kink and
    /// `NonsmoothPoint` is returned there.
    pub fn gradient(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let norm = v.norm();
        if self.eta > 0.0 && norm == 0.0 {
            return Err(AmemError::NonsmoothPoint);
        }
        let mut g = self.achieved_moment(v)? - &self.y;
        if self.eta > 0.0 {
            g.axpy(self.eta / norm, v, 1.0);
        }
        Ok(g)
    }

    /// `M_1 + η M_2` with `M_1 = Σ w_i Λ''(⟨v, Φ_i⟩) Φ_i Φ_iᵀ` and
    /// `M_2 = I/‖v‖ − v vᵀ/‖v‖³`.
    pub fn hessian(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let norm = v.norm();
        if self.eta > 0.0 && norm == 0.0 {
            return Err(AmemError::NonsmoothPoint);
        }
        let s = self.inner_products(v)?;
        let mut scaled = self.phi.clone();
        for ((mut col, &si), w) in scaled.column_iter_mut().zip(s.iter()).zip(&self.weights) {
            col *= w * self.prior.log_laplace_second(si)?;
        }
        let k = self.k();
        let mut h = DMatrix::zeros(k, k);
        h.gemm(1.0, &scaled, &self.phi.transpose(), 0.0);
        if self.eta > 0.0 {
            let mut m2 = DMatrix::identity(k, k) / norm;
            m2.ger(-1.0 / norm.powi(3), v, v, 1.0);
            h += m2 * self.eta;
        }
        Ok(h)
    }

    /// `‖Λ'(0) Σ w_i Φ_i − y‖`, the distance from the prior-mean moment to
    /// the observation.
    pub fn origin_residual(&self) -> f64 {
        (self.mean_column() * self.prior.mean() - &self.y).norm()
    }

    /// Whether `0 ∈ ∂H(0)`, in which case `v̂ = 0`.
    pub fn check_zero_optimality(&self) -> bool {
        self.origin_residual() <= self.eta
    }

    /// Whether every inner product sits inside `dom Λ` with the given margin.
    pub(crate) fn in_domain_with_margin(&self, v: &DVector<f64>, margin: f64) -> bool {
        let s = self.phi.tr_mul(v);
        let dom = self.prior.lambda_domain();
        s.iter()
            .all(|&si| si.is_finite() && si > dom.lo + margin && si < dom.hi - margin)
    }
}

pub fn objective(p: &DualProblem, v: &DVector<f64>) -> Result<f64> {
    p.objective(v)
}

pub fn gradient(p: &DualProblem, v: &DVector<f64>) -> Result<DVector<f64>> {
    p.gradient(v)
}

pub fn hessian(p: &DualProblem, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    p.hessian(v)
}

pub fn check_zero_optimality(p: &DualProblem) -> bool {
    p.check_zero_optimality()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    AtOrigin,
    MaxIters,
    InfeasibleDirection,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::AtOrigin => "at_origin",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::InfeasibleDirection => "infeasible_direction",
        }
    }

    /// Converged or at the origin.
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::AtOrigin)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub v_hat: DVector<f64>,
    pub objective_value: f64,
    pub grad_norm: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub newton_decrements: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub rank_deficient: bool,
}

impl DualSolution {
    /// Writes the iteration trace as CSV.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "objective", "grad_norm", "step"])?;
        for r in &self.trace {
            w.write_record([
                r.iteration.to_string(),
                r.objective.to_string(),
                r.grad_norm.to_string(),
                r.step.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
