//! Decides whether some `z` in the hull box reaches the observation ball.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::DualProblem;

const MAX_ITERS: usize = 20_000;
const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
    /// Projected gradient stalled without a witness or a certificate.
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub verdict: Feasibility,
    /// Smallest `‖Σ w_i z_i Φ_i − y‖²` found.
    pub distance_sq: f64,
    /// Lower bound on the distance from `y` to the reachable set.
    pub lower_bound: f64,
    pub iterations: usize,
}

impl FeasibilityReport {
    /// Indeterminate counts as infeasible.
    pub fn is_feasible(&self) -> bool {
        self.verdict == Feasibility::Feasible
    }
}

/// Minimizes `‖A z − y‖²` over `z ∈ hullⁿ` with `A = Φ diag(w)` by
/// accelerated projected gradient. Feasible once the value drops to
/// `η² + tol`; infeasible once a separating direction `u` proves
/// `⟨u, y⟩ − sup_z ⟨u, A z⟩ > η`.
pub fn feasibility(p: &DualProblem) -> FeasibilityReport {
    let hull = p.prior().support_hull();
    let eta = p.eta();
    let y = p.y_obs();
    if hull.is_real_line() && !p.rank_deficient() {
        return FeasibilityReport {
            verdict: Feasibility::Feasible,
            distance_sq: 0.0,
            lower_bound: 0.0,
            iterations: 0,
        };
    }
    let mut a = p.phi().clone();
    for (mut col, w) in a.column_iter_mut().zip(p.weights()) {
        col *= *w;
    }
    let tol = TOLERANCE * (1.0 + y.norm_squared());
    let target = eta * eta + tol;

    let aat: DMatrix<f64> = &a * a.transpose();
    let lip = 2.0
        * SymmetricEigen::new(aat)
            .eigenvalues
            .max()
            .max(f64::MIN_POSITIVE);
    let step = 1.0 / lip;
    let project = |z: &mut DVector<f64>| z.iter_mut().for_each(|v| *v = hull.clamp(*v));

    let mut z = DVector::from_element(p.n(), hull.clamp(p.prior().mean()));
    project(&mut z);
    let mut z_prev = z.clone();
    let mut x = z.clone();
    let mut theta: f64 = 1.0;
    let mut best = f64::INFINITY;
    let mut lower = 0.0_f64;
    let mut f_prev = f64::INFINITY;

    for it in 0..MAX_ITERS {
        let r = &a * &z - y;
        let f = r.norm_squared();
        best = best.min(f);
        if f <= target {
            return report(Feasibility::Feasible, best, lower, it);
        }
        let dist = f.sqrt();
        let u = -&r / dist;
        let bound = u.dot(y) - support(&a.tr_mul(&u), hull.lo, hull.hi);
        if bound.is_finite() {
            lower = lower.max(bound);
            if bound > eta + tol.sqrt() {
                return report(Feasibility::Infeasible, best, lower, it);
            }
        }
        // Adaptive restart keeps the accelerated sequence monotone.
        if f > f_prev {
            theta = 1.0;
            x = z.clone();
        }
        f_prev = f;
        let rx = &a * &x - y;
        let mut next = &x - a.tr_mul(&rx) * (2.0 * step);
        project(&mut next);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        z_prev.copy_from(&z);
        z = next;
        x = &z + (&z - &z_prev) * ((theta - 1.0) / theta_next);
        theta = theta_next;
    }
    report(Feasibility::Indeterminate, best, lower, MAX_ITERS)
}

fn report(
    verdict: Feasibility,
    distance_sq: f64,
    lower_bound: f64,
    iterations: usize,
) -> FeasibilityReport {
    FeasibilityReport {
        verdict,
        distance_sq,
        lower_bound,
        iterations,
    }
}

/// `sup_{z ∈ [lo, hi]ⁿ} ⟨c, z⟩`, possibly `+∞`.
fn support(c: &DVector<f64>, lo: f64, hi: f64) -> f64 {
    c.iter()
        .map(|&ci| {
            if ci > 0.0 {
                ci * hi
            } else if ci < 0.0 {
                ci * lo
            } else {
                0.0
            }
        })
        .sum()
}
