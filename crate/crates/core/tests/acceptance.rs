//! Acceptance suite with one printed line per criterion. Exits nonzero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use amem::dual::{solve, DualProblem, SolveOptions, SolveStatus};
use amem::harness::{feasibility_study, rate_study_m, rate_study_n, ExperimentConfig};
use amem::measure::Atoms;
use amem::prior::{ExtReal, Interval, ReferenceMeasure};
use amem::reconstruct::{amem_estimate, residual, Observation};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config(name)).expect("shipped config parses")
}

fn five_priors() -> Vec<ReferenceMeasure> {
    vec![
        ReferenceMeasure::gaussian(0.3, 1.2).unwrap(),
        ReferenceMeasure::poisson(2.0).unwrap(),
        ReferenceMeasure::exponential(1.5).unwrap(),
        ReferenceMeasure::uniform(0.0, 2.0).unwrap(),
        ReferenceMeasure::two_point(1.0, 0.3).unwrap(),
    ]
}

fn uniform_matrix(rng: &mut ChaCha8Rng, k: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0))
}

/// `(1/n) Σ Φ_i Φ_iᵀ` by explicit loops, independent of the library.
fn loop_gram(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, n) = phi.shape();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..n {
        for a in 0..k {
            for b in 0..k {
                m[(a, b)] += phi[(a, i)] * phi[(b, i)] / n as f64;
            }
        }
    }
    m
}

fn c1_gaussian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(k + 5..=200);
        let (mu, sd) = (rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0));
        let prior = ReferenceMeasure::gaussian(mu, sd).unwrap();
        let phi = uniform_matrix(&mut rng, k, n);
        let y: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obs = Observation::new(y.clone(), 0.0).unwrap();
        let p = DualProblem::new(phi.clone(), &obs, prior).unwrap();
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        // σ² M v = y − μ (1/n) Σ Φ_i
        let mbar = DVector::from_fn(k, |a, _| phi.row(a).sum() / n as f64);
        let rhs = DVector::from_vec(y) - mbar * mu;
        let v = (loop_gram(&phi) * (sd * sd))
            .lu()
            .solve(&rhs)
            .expect("nonsingular");
        worst = worst.max((&sol.v_hat - v).norm());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && secs < 1.0,
        format!("max |v - v_oracle| = {worst:.2e} over 50 instances in {secs:.3} s"),
    )
}

fn c2_soft_threshold() -> Outcome {
    let n = 7;
    let obs = Observation::new(vec![0.8], 0.3).unwrap();
    let prior = ReferenceMeasure::gaussian(0.0, 1.0).unwrap();
    let p = DualProblem::new(DMatrix::from_element(1, n, 1.0), &obs, prior).unwrap();
    let sol = solve(&p, &SolveOptions::default()).unwrap();
    let v = sol.v_hat[0];
    let m = p.achieved_moment(&sol.v_hat).unwrap()[0];
    let boundary_gap = ((m - 0.8).abs() - 0.3).abs();
    check(
        (v - 0.5).abs() <= 1e-8 && boundary_gap <= 1e-8,
        format!("v = {v:.12}, | |m - y| - eta | = {boundary_gap:.2e}"),
    )
}

fn c3_derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let start = Instant::now();
    let (mut worst_g, mut worst_h): (f64, f64) = (0.0, 0.0);
    let h = 1e-5;
    for prior in five_priors() {
        for _ in 0..100 {
            let (k, n) = (3, 40);
            let phi = uniform_matrix(&mut rng, k, n);
            let y: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let obs = Observation::new(y, rng.random_range(0.0..0.5)).unwrap();
            let p = DualProblem::new(phi, &obs, prior).unwrap();
            // ‖v‖ ≤ 0.4 keeps every ⟨v, Φ_i⟩ inside the exponential domain.
            let dir = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let v = &dir * (rng.random_range(0.1..0.4) / dir.norm());
            let g = p.gradient(&v).unwrap();
            let hess = p.hessian(&v).unwrap();
            let mut g_fd = DVector::zeros(k);
            let mut h_fd = DMatrix::zeros(k, k);
            for j in 0..k {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[j] += h;
                vm[j] -= h;
                g_fd[j] = (p.objective(&vp).unwrap() - p.objective(&vm).unwrap()) / (2.0 * h);
                let col = (p.gradient(&vp).unwrap() - p.gradient(&vm).unwrap()) / (2.0 * h);
                h_fd.set_column(j, &col);
            }
            worst_g = worst_g.max((&g_fd - &g).norm() / g.norm().max(1e-3));
            worst_h = worst_h.max((&h_fd - &hess).norm() / hess.norm().max(1e-3));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_g <= 1e-6 && worst_h <= 1e-4 && secs < 5.0,
        format!("gradient rel err {worst_g:.2e}, hessian rel err {worst_h:.2e}, {secs:.2} s"),
    )
}

fn closed_form_conjugate(prior: &ReferenceMeasure, x: f64) -> Option<f64> {
    use amem::prior::PriorFamily::*;
    match prior.family() {
        Gaussian { mean, std } => Some((x - mean).powi(2) / (2.0 * std * std)),
        Poisson { rate } => Some(x * (x / rate).ln() - x + rate),
        Exponential { rate } => Some(rate * x - 1.0 - (rate * x).ln()),
        _ => None,
    }
}

fn c4_conjugate_duality() -> Outcome {
    let mut worst_identity: f64 = 0.0;
    let mut worst_fy: f64 = 0.0;
    let mut worst_numeric: f64 = 0.0;
    for prior in five_priors() {
        let dom = prior.lambda_domain();
        let hi = if dom.hi.is_finite() {
            dom.hi - 0.3
        } else {
            4.0
        };
        let ss: Vec<f64> = (0..=80)
            .map(|i| -4.0 + (hi + 4.0) * i as f64 / 80.0)
            .collect();
        for &s in &ss {
            let lam = prior.log_laplace(s).unwrap();
            let x = prior.log_laplace_deriv(s).unwrap();
            let target = s * x - lam;
            let got = match prior.cramer(x) {
                ExtReal::Finite(c) => c,
                other => return Err(format!("{}: Λ*(Λ'({s})) = {other}", prior.name())),
            };
            worst_identity = worst_identity.max((got - target).abs() / (1.0 + target.abs()));
            // Fenchel-Young against every other point on the grid.
            for &s2 in &ss {
                let x2 = prior.log_laplace_deriv(s2).unwrap();
                if let ExtReal::Finite(c2) = prior.cramer(x2) {
                    worst_fy = worst_fy.max(s * x2 - lam - c2);
                }
            }
            if let Some(exact) = closed_form_conjugate(&prior, x) {
                let numeric = prior
                    .numeric_conjugate(x, Interval::new(-10.0, 10.0))
                    .unwrap();
                worst_numeric = worst_numeric.max((numeric - exact).abs());
            }
        }
    }
    check(
        worst_identity <= 1e-8 && worst_fy <= 1e-8 && worst_numeric <= 1e-6,
        format!(
            "identity err {worst_identity:.2e}, Fenchel-Young violation {worst_fy:.2e}, numeric vs closed form {worst_numeric:.2e}"
        ),
    )
}

fn c5_rate_n() -> Outcome {
    let cfg = load("rate_n.toml");
    let ok_grid = cfg.n_grid == [125, 500, 2000, 8000] && cfg.replications == 100;
    let out = rate_study_n(&cfg).map_err(|e| e.to_string())?;
    let r = &out.report;
    check(
        ok_grid && (-0.65..=-0.35).contains(&r.slope) && r.within_budget(),
        format!(
            "slope {:.3} (r2 {:.3}), medians {:?}, exclusions {}/{}",
            r.slope, r.r2, r.medians, r.exclusions, r.total
        ),
    )
}

fn c6_rate_m() -> Outcome {
    let cfg = load("rate_m.toml");
    let out = rate_study_m(&cfg).map_err(|e| e.to_string())?;
    let r = &out.report;
    let span = r.grid[0] / r.grid[r.grid.len() - 1];
    let decreasing = r.grid.windows(2).all(|w| w[1] < w[0]);
    check(
        span >= 10.0 && decreasing && (0.7..=1.3).contains(&r.slope) && r.within_budget(),
        format!(
            "slope {:.3} (r2 {:.3}), e_m from {:.3e} to {:.3e} (x{span:.1}), exclusions {}/{}",
            r.slope,
            r.r2,
            r.grid[0],
            r.grid[r.grid.len() - 1],
            r.exclusions,
            r.total
        ),
    )
}

fn c7_feasibility() -> Outcome {
    let feasible = load("feasibility.toml");
    let infeasible = load("infeasible.toml");
    let ok_setup = feasible.prior.family == "two_point"
        && feasible.replications >= 200
        && feasible.n_grid.iter().all(|&n| n >= 500);
    let a = feasibility_study(&feasible)
        .map_err(|e| e.to_string())?
        .report;
    let b = feasibility_study(&infeasible)
        .map_err(|e| e.to_string())?
        .report;
    let min_a = a.iter().map(|c| c.frequency).fold(f64::INFINITY, f64::min);
    let max_b = b.iter().map(|c| c.frequency).fold(0.0, f64::max);
    check(
        ok_setup && min_a >= 0.99 && max_b == 0.0,
        format!("feasible cells min frequency {min_a}, infeasible cells max frequency {max_b}"),
    )
}

fn c8_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut worst_res, mut worst_bd): (f64, f64) = (0.0, 0.0);
    let mut converged = 0;
    for prior in five_priors() {
        let hull = prior.support_hull();
        for _ in 0..60 {
            let k = rng.random_range(1..=4);
            let n = rng.random_range(20..=150);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let atoms = Arc::new(Atoms::from_scalars(xs));
            let op = amem::operator::OperatorSpec::power_moments(k).unwrap();
            let phi = amem::operator::phi_matrix(&op, &atoms).unwrap();
            // Moment of a point strictly inside the hull box, plus a shift of
            // size up to 2η so some observations put the solution on the ball.
            let (lo, hi) = (hull.lo.max(-3.0), hull.hi.min(3.0));
            let z = DVector::from_fn(n, |_, _| lo + (hi - lo) * rng.random_range(0.2..0.8));
            let eta = rng.random_range(0.0..0.05);
            let shift = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let shift = &shift * (rng.random_range(0.0..2.0) * eta / shift.norm());
            let y: DVector<f64> = &phi * z / n as f64 + shift;
            let obs = Observation::new(y.iter().copied().collect(), eta).unwrap();
            let p = DualProblem::new(phi, &obs, prior).unwrap();
            let sol = solve(&p, &SolveOptions::default()).unwrap();
            if !sol.status.is_success() {
                continue;
            }
            converged += 1;
            let mu = amem_estimate(&sol.v_hat, atoms, &op, &prior).unwrap();
            worst_res = worst_res.max(residual(&mu, &op, &obs).unwrap());
            if sol.status == SolveStatus::Converged && sol.v_hat.norm() > 0.0 {
                let dist = (p.achieved_moment(&sol.v_hat).unwrap() - p.y_obs()).norm();
                worst_bd = worst_bd.max((dist - eta).abs());
            }
        }
    }
    check(
        converged >= 250 && worst_res <= 1e-6 && worst_bd <= 1e-6,
        format!("{converged}/300 converged, max residual {worst_res:.2e}, max boundary gap {worst_bd:.2e}"),
    )
}

/// Minimizer over `[-1, 1]²` by grid search on a box that shrinks around the
/// incumbent at every level.
fn zoom_argmin(f: &dyn Fn(f64, f64) -> f64) -> (f64, f64) {
    let (mut cx, mut cy, mut half) = (0.0, 0.0, 1.0);
    let steps = 100;
    for _ in 0..10 {
        let (mut best, mut bx, mut by) = (f64::INFINITY, cx, cy);
        for i in 0..=steps {
            for j in 0..=steps {
                let x = (cx - half + 2.0 * half * i as f64 / steps as f64).clamp(-1.0, 1.0);
                let y = (cy - half + 2.0 * half * j as f64 / steps as f64).clamp(-1.0, 1.0);
                let v = f(x, y);
                if v < best {
                    (best, bx, by) = (v, x, y);
                }
            }
        }
        (cx, cy, half) = (bx, by, half / 20.0);
    }
    (cx, cy)
}

fn c9_argmin_stability() -> Outcome {
    // f(θ) = ‖θ‖² on [-1, 1]² with argmin 0. Since f(θ) − f(0) = ‖θ‖², any
    // perturbation of sup size ε moves the argmin by at most √(2ε).
    let c = 2f64.sqrt();
    let mut ratios = Vec::new();
    for eps in [1e-2f64, 1e-4, 1e-6] {
        let r = eps.sqrt();
        let (ax, rad) = (0.7 * r, 0.6 * r);
        let bump =
            move |x: f64, y: f64| -eps * (1.0 - ((x - ax).powi(2) + y * y) / (rad * rad)).max(0.0);
        let tilt = move |x: f64, y: f64| eps * (x + 2.0 * y).sin();
        let families: [&dyn Fn(f64, f64) -> f64; 2] = [&bump, &tilt];
        for pert in families {
            let fnf = |x: f64, y: f64| x * x + y * y + pert(x, y);
            let (x, y) = zoom_argmin(&fnf);
            ratios.push((eps, (x * x + y * y).sqrt() / r));
        }
    }
    let fitted = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let bump_ratios: Vec<f64> = ratios.iter().step_by(2).map(|r| r.1).collect();
    // The bump family attains the √ε rate, so its ratio stays away from zero.
    let attained = bump_ratios.iter().all(|&q| q > 0.3);
    check(
        fitted <= c && attained,
        format!("fitted C = {fitted:.4} (bound sqrt 2), bump ratios {bump_ratios:.3?}"),
    )
}

fn c10_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_amem");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(bin)
            .args(["rate-n", "--config"])
            .arg(config("rate_n.toml"))
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("rate-n exited with {status}"));
        }
        outputs.push(std::fs::read(out.join("rate_n.csv")).map_err(|e| e.to_string())?);
    }
    check(
        !outputs[0].is_empty() && outputs[0] == outputs[1],
        format!(
            "two rate-n runs, {} CSV bytes each, identical: {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("closed-form oracle equivalence", c1_gaussian_oracle),
        ("soft-threshold oracle", c2_soft_threshold),
        ("derivative consistency", c3_derivatives),
        ("conjugate duality", c4_conjugate_duality),
        ("rate in n", c5_rate_n),
        ("rate in operator error", c6_rate_m),
        ("feasibility frequency", c7_feasibility),
        ("KKT residual", c8_kkt),
        ("argmin stability", c9_argmin_stability),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[PASS] {:>2} {name}: {d} ({secs:.1} s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {d} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
