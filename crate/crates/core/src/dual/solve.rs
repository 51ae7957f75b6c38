//! Damped Newton on the smooth region `v ≠ 0`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{DualProblem, DualSolution, SolveStatus};
use crate::error::Result;
use crate::operator::MomentMap;
use crate::prior::ReferenceMeasure;
use crate::quadrature::Quadrature;
use crate::reconstruct::Observation;

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-16;
const DOMAIN_MARGIN: f64 = 1e-8;
const INIT_RIDGE: f64 = 1e-10;
/// Inner products beyond this magnitude, reached while the objective keeps
/// falling, are read as a ray along which the dual is unbounded below.
const DIVERGENCE_SCALE: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative gradient tolerance; the absolute target is
    /// `tolerance * (1 + ‖y‖)`.
    pub tolerance: f64,
    pub max_iters: usize,
    pub initial: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-9,
            max_iters: 200,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

struct Iterate {
    v: DVector<f64>,
    f: f64,
    g: DVector<f64>,
}

impl Iterate {
    fn at(p: &DualProblem, v: DVector<f64>) -> Result<Self> {
        let f = p.objective(&v)?;
        let g = p.gradient(&v)?;
        Ok(Iterate { v, f, g })
    }
}

pub fn solve(p: &DualProblem, opts: &SolveOptions) -> Result<DualSolution> {
    let k = p.k();
    let tol = opts.tolerance * (1.0 + p.y_obs().norm());
    if p.check_zero_optimality() {
        return Ok(DualSolution {
            v_hat: DVector::zeros(k),
            objective_value: 0.0,
            grad_norm: 0.0,
            status: SolveStatus::AtOrigin,
            iterations: 0,
            newton_decrements: Vec::new(),
            trace: Vec::new(),
            rank_deficient: p.rank_deficient(),
        });
    }

    let v0 = match &opts.initial {
        Some(v) if v.len() == k && v.norm() > 0.0 => v.clone(),
        _ => surrogate_start(p),
    };
    let mut cur = Iterate::at(p, admissible_start(p, v0)?)?;
    let mut best_v = cur.v.clone();
    let mut best_f = cur.f;

    let mut trace = Vec::new();
    let mut decrements = Vec::new();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let phi_scale = p
        .phi()
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    for it in 0..opts.max_iters {
        let gn = cur.g.norm();
        if gn <= tol {
            status = SolveStatus::Converged;
            polish(p, &mut cur, &mut trace, it)?;
            break;
        }
        let (d, newton) = direction(p, &cur)?;
        let slope = cur.g.dot(&d);
        decrements.push(if newton {
            (-slope).max(0.0).sqrt()
        } else {
            f64::NAN
        });

        let next = line_search(p, &cur, &d, slope)?;
        let Some((next, step)) = next else {
            iterations = it;
            trace.push(TraceRecord {
                iteration: it,
                objective: cur.f,
                grad_norm: gn,
                step: 0.0,
            });
            break;
        };
        trace.push(TraceRecord {
            iteration: it,
            objective: cur.f,
            grad_norm: gn,
            step,
        });
        cur = next;
        iterations = it + 1;
        if cur.f < best_f {
            best_f = cur.f;
            best_v = cur.v.clone();
        }
        if cur.v.norm() * phi_scale > DIVERGENCE_SCALE && cur.g.norm() > tol {
            status = SolveStatus::InfeasibleDirection;
            break;
        }
    }

    if status == SolveStatus::MaxIters && best_f < cur.f {
        cur = Iterate::at(p, best_v)?;
    }
    Ok(DualSolution {
        grad_norm: cur.g.norm(),
        objective_value: cur.f,
        v_hat: cur.v,
        status,
        iterations,
        newton_decrements: decrements,
        trace,
        rank_deficient: p.rank_deficient(),
    })
}

/// Solves the quadrature version of the dual problem, the oracle for the
/// infinite-sample minimizer.
pub fn population_solve(
    op: &dyn MomentMap,
    quad: &Quadrature,
    obs: &Observation,
    prior: &ReferenceMeasure,
    opts: &SolveOptions,
) -> Result<DualSolution> {
    let p = DualProblem::from_quadrature(op, quad, obs, *prior)?;
    solve(&p, opts)
}

/// Minimizer of the quadratic obtained by replacing `Λ` with its second
/// order expansion at zero: `Var · M v = y − mean · Σ w_i Φ_i`.
fn surrogate_start(p: &DualProblem) -> DVector<f64> {
    let k = p.k();
    let prior = p.prior();
    let rhs = p.y_obs() - p.mean_column() * prior.mean();
    let m = p.gram() * prior.variance() + DMatrix::identity(k, k) * INIT_RIDGE;
    match Cholesky::new(m) {
        Some(ch) => {
            let v = ch.solve(&rhs);
            if v.iter().all(|x| x.is_finite()) && v.norm() > 0.0 {
                v
            } else {
                -residual_direction(p)
            }
        }
        None => -residual_direction(p),
    }
}

/// `(Λ'(0) Σ w_i Φ_i − y) / ‖·‖`, the gradient direction of the smooth
/// part at the origin.
fn residual_direction(p: &DualProblem) -> DVector<f64> {
    let r = p.mean_column() * p.prior().mean() - p.y_obs();
    let n = r.norm();
    if n > 0.0 {
        r / n
    } else {
        let mut e = DVector::zeros(p.k());
        e[0] = 1.0;
        e
    }
}

/// Shrinks the start into the domain and below `H(0) = 0`, and compares it
/// with a short step along the steepest descent direction at the origin,
/// which descends whenever the zero-optimality test fails. The lower of the
/// two wins, so a start that only dips below zero through rounding near the
/// origin is not kept.
fn admissible_start(p: &DualProblem, v: DVector<f64>) -> Result<DVector<f64>> {
    let halved = first_admissible(p, v, 1.0)?;
    let phi_scale = p.phi().abs().max().max(f64::MIN_POSITIVE);
    let ray = first_admissible(p, -residual_direction(p), 1.0 / phi_scale)?;
    Ok(match (halved, ray) {
        (Some((a, fa)), Some((b, fb))) => {
            if fa <= fb {
                a
            } else {
                b
            }
        }
        (Some((a, _)), None) => a,
        (None, Some((b, _))) => b,
        (None, None) => -residual_direction(p) * (0.5f64).powi(200),
    })
}

/// First `t · 2^-j · v` inside the domain with a negative objective.
fn first_admissible(
    p: &DualProblem,
    v: DVector<f64>,
    t: f64,
) -> Result<Option<(DVector<f64>, f64)>> {
    let mut v = v * t;
    for _ in 0..200 {
        if v.norm() == 0.0 {
            break;
        }
        if p.in_domain_with_margin(&v, DOMAIN_MARGIN) {
            let f = p.objective(&v)?;
            if f < 0.0 {
                return Ok(Some((v, f)));
            }
        }
        v *= 0.5;
    }
    Ok(None)
}

/// Newton direction with Cholesky on `H + λI`, increasing `λ` until the
/// factorization succeeds; steepest descent when that fails or the result
/// is not a descent direction.
fn direction(p: &DualProblem, cur: &Iterate) -> Result<(DVector<f64>, bool)> {
    let h = p.hessian(&cur.v)?;
    let k = p.k();
    let scale = (h.trace() / k as f64).abs().max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..20 {
        let m = &h + DMatrix::identity(k, k) * reg;
        if let Some(ch) = Cholesky::new(m) {
            let d = -ch.solve(&cur.g);
            let slope = cur.g.dot(&d);
            if d.iter().all(|x| x.is_finite()) && slope < 0.0 {
                return Ok((d, true));
            }
        }
        reg = if reg == 0.0 {
            1e-12 * scale
        } else {
            reg * 100.0
        };
    }
    Ok((-cur.g.clone(), false))
}

/// Largest admissible step fraction: a segment that would pass through the
/// origin (where `‖v‖` is not differentiable) is cut at half the distance
/// to its closest approach.
fn max_step(p: &DualProblem, v: &DVector<f64>, d: &DVector<f64>) -> f64 {
    if p.eta() == 0.0 {
        return 1.0;
    }
    let dd = d.norm_squared();
    let t_star = -v.dot(d) / dd;
    if t_star > 0.0 && t_star <= 1.0 {
        let closest = (v + d * t_star).norm();
        if closest <= 1e-8 * v.norm() {
            return 0.5 * t_star;
        }
    }
    1.0
}

fn line_search(
    p: &DualProblem,
    cur: &Iterate,
    d: &DVector<f64>,
    slope: f64,
) -> Result<Option<(Iterate, f64)>> {
    let mut t = max_step(p, &cur.v, d);
    let gn = cur.g.norm();
    let noise = 1e-13 * (1.0 + cur.f.abs());
    while t >= MIN_STEP {
        let v = &cur.v + d * t;
        if v.norm() > 0.0 && p.in_domain_with_margin(&v, DOMAIN_MARGIN) {
            let f = p.objective(&v)?;
            if f <= cur.f + ARMIJO_C1 * t * slope {
                let g = p.gradient(&v)?;
                return Ok(Some((Iterate { v, f, g }, t)));
            }
            // Near the optimum the decrease drowns in rounding; accept steps
            // that keep the value flat and shrink the gradient.
            if f <= cur.f + noise {
                let g = p.gradient(&v)?;
                if g.norm() < gn {
                    return Ok(Some((Iterate { v, f, g }, t)));
                }
            }
        }
        t *= BACKTRACK;
    }
    Ok(None)
}

/// Up to two full Newton steps after the tolerance is met, kept only while
/// they reduce the gradient norm.
fn polish(
    p: &DualProblem,
    cur: &mut Iterate,
    trace: &mut Vec<TraceRecord>,
    it: usize,
) -> Result<()> {
    for _ in 0..2 {
        let (d, newton) = direction(p, cur)?;
        if !newton {
            return Ok(());
        }
        let v = &cur.v + &d;
        if v.norm() == 0.0 || !p.in_domain_with_margin(&v, DOMAIN_MARGIN) {
            return Ok(());
        }
        let cand = Iterate::at(p, v)?;
        if cand.g.norm() >= cur.g.norm() || cand.f > cur.f + 1e-13 * (1.0 + cur.f.abs()) {
            return Ok(());
        }
        trace.push(TraceRecord {
            iteration: it,
            objective: cur.f,
            grad_norm: cur.g.norm(),
            step: 1.0,
        });
        *cur = cand;
    }
    Ok(())
}
