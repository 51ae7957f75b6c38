//! Monte Carlo studies over replications.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{AtomLayout, ExperimentConfig, PxConfig};
use super::problem::{atoms_for, draw_atoms, observation, oracle_solution, oracle_weights, Setup};
use super::rng::stream;
use crate::dual::{feasibility, solve, DualProblem, DualSolution, SolveStatus};
use crate::error::{AmemError, Result};
use crate::measure::{entropy, tv_weights, Atoms, DiscreteMeasure};
use crate::operator::{phi_matrix, ApproxOperator, MomentMap};
use crate::prior::ExtReal;
use crate::reconstruct::{amem_estimate, residual, Observation};

/// Largest fraction of non-converged solves a study tolerates.
pub const EXCLUSION_BUDGET: f64 = 0.05;

/// One CSV row. Fields that a study does not measure are left empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub study: String,
    pub n: usize,
    pub m_or_bandwidth: String,
    pub rep: u64,
    pub seed: u64,
    pub tv_error: Option<f64>,
    pub op_l2_error: Option<f64>,
    pub residual: Option<f64>,
    pub entropy: Option<f64>,
    pub feasible: Option<bool>,
    pub status: Option<String>,
    pub iters: Option<usize>,
    pub grad_norm: Option<f64>,
}

impl Record {
    fn new(study: &str, n: usize, m_or_bandwidth: String, rep: u64, seed: u64) -> Self {
        Record {
            study: study.to_string(),
            n,
            m_or_bandwidth,
            rep,
            seed,
            tv_error: None,
            op_l2_error: None,
            residual: None,
            entropy: None,
            feasible: None,
            status: None,
            iters: None,
            grad_norm: None,
        }
    }

    fn with_solution(mut self, sol: &DualSolution) -> Self {
        self.status = Some(sol.status.to_string());
        self.iters = Some(sol.iterations);
        self.grad_norm = Some(sol.grad_norm);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(AmemError::Fit(format!("{} point(s)", points.len())));
    }
    if let Some(p) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(AmemError::Fit(format!(
            "nonpositive or non-finite point {p:?}"
        )));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AmemError::Fit("all x values are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
    })
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub study: String,
    /// Sample sizes, or the median measured operator error per bandwidth.
    pub grid: Vec<f64>,
    /// Bandwidths, for the operator-error study.
    pub bandwidths: Vec<f64>,
    /// Per-replication errors at each grid point (excluded solves removed).
    pub errors: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub exclusions: usize,
    pub total: usize,
}

impl RateReport {
    fn build(
        study: &str,
        grid: Vec<f64>,
        bandwidths: Vec<f64>,
        errors: Vec<Vec<f64>>,
        exclusions: usize,
        total: usize,
    ) -> Result<Self> {
        // A grid point with every solve excluded has no median; it is left
        // out of the fit and the study is over budget anyway.
        let medians: Vec<f64> = errors
            .iter()
            .map(|e| if e.is_empty() { f64::NAN } else { median(e) })
            .collect();
        let points: Vec<(f64, f64)> = grid
            .iter()
            .copied()
            .zip(medians.iter().copied())
            .filter(|p| !p.1.is_nan())
            .collect();
        let fit = if points.len() >= 2 || points.len() == grid.len() {
            fit_slope(&points)?
        } else {
            SlopeFit {
                slope: f64::NAN,
                intercept: f64::NAN,
                r2: f64::NAN,
            }
        };
        Ok(RateReport {
            study: study.to_string(),
            grid,
            bandwidths,
            errors,
            medians,
            slope: fit.slope,
            intercept: fit.intercept,
            r2: fit.r2,
            exclusions,
            total,
        })
    }

    /// False when more than 5% of the solves were excluded.
    pub fn within_budget(&self) -> bool {
        self.exclusions as f64 <= EXCLUSION_BUDGET * self.total as f64
    }
}

/// Records plus the aggregated report of a study.
#[derive(Debug, Clone)]
pub struct StudyOutput<R> {
    pub records: Vec<Record>,
    pub report: R,
}

fn finite(e: ExtReal) -> Option<f64> {
    e.finite()
}

/// Weights `Λ'(⟨v, Φ(x)⟩)` at the points of `sample`.
fn weights_at(
    setup: &Setup,
    v: &DVector<f64>,
    op: &dyn MomentMap,
    sample: &Atoms,
) -> Result<Vec<f64>> {
    oracle_weights(v, op, &setup.prior, sample)
}

fn eval_sample(cfg: &ExperimentConfig, rep: u64) -> Atoms {
    let random = ExperimentConfig {
        px: PxConfig {
            atoms: AtomLayout::Random,
            ..cfg.px.clone()
        },
        ..cfg.clone()
    };
    draw_atoms(&mut stream(cfg.seed, "eval", rep), &random, cfg.eval_sample)
}

struct SolvedInstance {
    sol: DualSolution,
    feasible: bool,
    residual: f64,
    entropy: Option<f64>,
    estimate: DiscreteMeasure,
}

fn solve_instance(setup: &Setup, atoms: Arc<Atoms>, obs: &Observation) -> Result<SolvedInstance> {
    let p = DualProblem::from_operator(&setup.op, &atoms, obs, setup.prior)?;
    let sol = solve(&p, &setup.opts)?;
    let feasible = feasibility(&p).is_feasible();
    let estimate = amem_estimate(&sol.v_hat, atoms, &setup.op, &setup.prior)?;
    Ok(SolvedInstance {
        residual: residual(&estimate, &setup.op, obs)?,
        entropy: finite(entropy(&estimate, &setup.prior)),
        feasible,
        estimate,
        sol,
    })
}

/// Runs `f` for every replication, in parallel, returning results in
/// replication order.
fn per_rep<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(f)
        .collect()
}

/// Error of the empirical estimate against the population solution as `n`
/// grows, with the exact operator.
pub fn rate_study_n(cfg: &ExperimentConfig) -> Result<StudyOutput<RateReport>> {
    cfg.require_bounded_derivatives()?;
    let setup = Setup::new(cfg)?;
    let per_rep_records = per_rep(cfg, |rep| {
        let obs = observation(cfg, &setup.y_clean, rep)?;
        let star = oracle_solution(&setup, &obs)?;
        let sample = eval_sample(cfg, rep);
        let z_star = weights_at(&setup, &star.v_hat, &setup.op, &sample)?;
        let mut rows = Vec::with_capacity(cfg.n_grid.len());
        for &n in &cfg.n_grid {
            let inst = solve_instance(&setup, atoms_for(cfg, n, rep), &obs)?;
            let mut rec =
                Record::new("rate_n", n, "exact".into(), rep, cfg.seed).with_solution(&inst.sol);
            rec.feasible = Some(inst.feasible);
            if inst.sol.status.is_success() {
                let z = weights_at(&setup, &inst.sol.v_hat, &setup.op, &sample)?;
                rec.tv_error = Some(tv_weights(&z, &z_star));
                rec.op_l2_error = Some(0.0);
                rec.residual = Some(inst.residual);
                rec.entropy = inst.entropy;
                rows.push(Some(rec));
            } else {
                rows.push(None);
            }
        }
        Ok(rows)
    })?;

    let total = cfg.n_grid.len() * cfg.replications;
    let mut errors = vec![Vec::new(); cfg.n_grid.len()];
    let mut records = Vec::new();
    let mut exclusions = 0;
    for (gi, _) in cfg.n_grid.iter().enumerate() {
        for rows in &per_rep_records {
            match &rows[gi] {
                Some(rec) => {
                    errors[gi].push(rec.tv_error.expect("set for kept rows"));
                    records.push(rec.clone());
                }
                None => exclusions += 1,
            }
        }
    }
    let grid = cfg.n_grid.iter().map(|&n| n as f64).collect();
    let report = RateReport::build("rate_n", grid, Vec::new(), errors, exclusions, total)?;
    Ok(StudyOutput { records, report })
}

/// Population-level error as the kernel bandwidth shrinks, plotted against
/// the measured operator error.
pub fn rate_study_m(cfg: &ExperimentConfig) -> Result<StudyOutput<RateReport>> {
    cfg.require_bounded_derivatives()?;
    let approx_cfg = cfg
        .approx
        .as_ref()
        .ok_or_else(|| AmemError::Config("rate-m needs an [approx] section".into()))?;
    let setup = Setup::new(cfg)?;
    let t_obs = setup
        .op
        .t_obs()
        .ok_or_else(|| AmemError::Config("rate-m needs a parametric operator".into()))?
        .to_vec();
    let density = approx_cfg.density()?;
    let base = setup.op.spec().clone();
    let hs = &approx_cfg.bandwidth_grid;
    let n_nodes = setup.quad.len();

    let per_rep_rows = per_rep(cfg, |rep| {
        let obs = observation(cfg, &setup.y_clean, rep)?;
        let star = oracle_solution(&setup, &obs)?;
        let z_star = weights_at(&setup, &star.v_hat, &setup.op, &setup.quad.nodes)?;
        let design = density.sample(&mut stream(cfg.seed, "design", rep), approx_cfg.m);
        let sample = eval_sample(cfg, rep);
        let phi_sample = phi_matrix(&setup.op, &sample)?;
        let mut approx = ApproxOperator::build(
            base.clone(),
            design,
            approx_cfg.kernel,
            hs[0],
            density.clone(),
            None,
        )?;
        let mut rows = Vec::with_capacity(hs.len());
        for &h in hs {
            approx = approx.with_bandwidth(h)?;
            // Same quantity as `l2_distance` at `t_obs`, with the kernel
            // weights computed once.
            let diff = approx.matrix_at(&sample, &t_obs)? - &phi_sample;
            let e_m = diff.norm() / (sample.len() as f64).sqrt();
            let phi_m = approx.matrix_at(&setup.quad.nodes, &t_obs)?;
            let p =
                DualProblem::with_weights(phi_m, setup.quad.weights.clone(), &obs, setup.prior)?;
            let sol = solve(&p, &setup.opts)?;
            let mut rec =
                Record::new("rate_m", n_nodes, format!("{h}"), rep, cfg.seed).with_solution(&sol);
            rec.op_l2_error = Some(e_m);
            if sol.status.is_success() {
                let z = p.primal_weights(&sol.v_hat)?;
                let tv: f64 = z
                    .iter()
                    .zip(&z_star)
                    .zip(&setup.quad.weights)
                    .map(|((a, b), w)| w * (a - b).abs())
                    .sum();
                let dist = (p.achieved_moment(&sol.v_hat)? - p.y_obs()).norm();
                let ent: ExtReal = z
                    .iter()
                    .zip(&setup.quad.weights)
                    .fold(ExtReal::Finite(0.0), |acc, (z, w)| {
                        acc + setup.prior.cramer(*z).scale(*w)
                    });
                rec.tv_error = Some(tv);
                rec.residual = Some((dist - obs.eta).max(0.0));
                rec.entropy = finite(ent);
                rows.push((e_m, Some(rec)));
            } else {
                rows.push((e_m, None));
            }
        }
        Ok(rows)
    })?;

    let total = hs.len() * cfg.replications;
    let mut errors = vec![Vec::new(); hs.len()];
    let mut e_ms = vec![Vec::new(); hs.len()];
    let mut records = Vec::new();
    let mut exclusions = 0;
    for gi in 0..hs.len() {
        for rows in &per_rep_rows {
            let (e_m, rec) = &rows[gi];
            e_ms[gi].push(*e_m);
            match rec {
                Some(rec) => {
                    errors[gi].push(rec.tv_error.expect("set for kept rows"));
                    records.push(rec.clone());
                }
                None => exclusions += 1,
            }
        }
    }
    let grid = e_ms.iter().map(|e| median(e)).collect();
    let report = RateReport::build("rate_m", grid, hs.clone(), errors, exclusions, total)?;
    Ok(StudyOutput { records, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyCell {
    pub n: usize,
    pub m_or_bandwidth: String,
    pub feasible: usize,
    pub indeterminate: usize,
    pub replications: usize,
    pub frequency: f64,
}

/// Empirical frequency of a nonempty intersection between the observation
/// ball and the reachable moment set, per `(n, operator)` cell.
pub fn feasibility_study(cfg: &ExperimentConfig) -> Result<StudyOutput<Vec<FrequencyCell>>> {
    let setup = Setup::new(cfg)?;
    let mut labels = vec!["exact".to_string()];
    if let Some(a) = &cfg.approx {
        labels.extend(a.bandwidth_grid.iter().map(|h| format!("{h}")));
    }
    let per_rep_rows = per_rep(cfg, |rep| {
        let obs = observation(cfg, &setup.y_clean, rep)?;
        let approx = match (&cfg.approx, setup.op.t_obs()) {
            (Some(a), Some(_)) => {
                let density = a.density()?;
                let design = density.sample(&mut stream(cfg.seed, "design", rep), a.m);
                Some(ApproxOperator::build(
                    setup.op.spec().clone(),
                    design,
                    a.kernel,
                    a.bandwidth_grid[0],
                    density,
                    None,
                )?)
            }
            _ => None,
        };
        let mut rows = Vec::new();
        for &n in &cfg.n_grid {
            let atoms = atoms_for(cfg, n, rep);
            let mut mats = vec![phi_matrix(&setup.op, &atoms)?];
            if let (Some(a), Some(approx)) = (&cfg.approx, &approx) {
                let t = setup.op.t_obs().expect("parametric");
                for &h in &a.bandwidth_grid {
                    mats.push(approx.with_bandwidth(h)?.matrix_at(&atoms, t)?);
                }
            }
            for (label, phi) in labels.iter().zip(mats) {
                let p = DualProblem::new(phi, &obs, setup.prior)?;
                let r = feasibility(&p);
                let mut rec = Record::new("feasibility", n, label.clone(), rep, cfg.seed);
                rec.feasible = Some(r.is_feasible());
                rec.status = Some(format!("{:?}", r.verdict).to_lowercase());
                rows.push(rec);
            }
        }
        Ok(rows)
    })?;

    let mut cells = Vec::new();
    let mut records = Vec::new();
    let per_n = labels.len();
    for (ni, &n) in cfg.n_grid.iter().enumerate() {
        for (li, label) in labels.iter().enumerate() {
            let idx = ni * per_n + li;
            let mut feasible = 0;
            let mut indeterminate = 0;
            for rows in &per_rep_rows {
                let rec = &rows[idx];
                if rec.feasible == Some(true) {
                    feasible += 1;
                }
                if rec.status.as_deref() == Some("indeterminate") {
                    indeterminate += 1;
                }
                records.push(rec.clone());
            }
            cells.push(FrequencyCell {
                n,
                m_or_bandwidth: label.clone(),
                feasible,
                indeterminate,
                replications: cfg.replications,
                frequency: feasible as f64 / cfg.replications as f64,
            });
        }
    }
    Ok(StudyOutput {
        records,
        report: cells,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub n_grid: Vec<usize>,
    /// Median TV distance to the population solution per `n`.
    pub median_tv_oracle: Vec<f64>,
    /// Median TV distance to the true density per `n`.
    pub median_tv_truth: Vec<f64>,
    pub median_residual: Vec<f64>,
    pub exclusions: usize,
    pub total: usize,
    pub status_first: String,
}

/// Estimate and truth at the atoms of one replication, for plotting.
#[derive(Debug, Clone)]
pub struct DemoSnapshot {
    pub estimate: DiscreteMeasure,
    pub truth: DiscreteMeasure,
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub records: Vec<Record>,
    pub report: DemoReport,
    /// Replication 0 at the largest `n`.
    pub snapshot: DemoSnapshot,
}

/// Reconstruction of a density from blurred moments.
pub fn demo_deconv(cfg: &ExperimentConfig) -> Result<DemoOutput> {
    let setup = Setup::new(cfg)?;
    let n_last = *cfg.n_grid.last().expect("validated nonempty");
    let per_rep_rows = per_rep(cfg, |rep| {
        let obs = observation(cfg, &setup.y_clean, rep)?;
        let star = oracle_solution(&setup, &obs)?;
        let sample = eval_sample(cfg, rep);
        let z_star = weights_at(&setup, &star.v_hat, &setup.op, &sample)?;
        let g0: Vec<f64> = sample
            .iter()
            .map(|x| cfg.truth.eval(x[0], &cfg.px))
            .collect();
        let mut rows = Vec::new();
        let mut snapshot = None;
        for &n in &cfg.n_grid {
            let atoms = atoms_for(cfg, n, rep);
            let inst = solve_instance(&setup, atoms.clone(), &obs)?;
            let mut rec = Record::new("demo_deconv", n, "exact".into(), rep, cfg.seed)
                .with_solution(&inst.sol);
            rec.feasible = Some(inst.feasible);
            let mut tv_truth = None;
            if inst.sol.status.is_success() {
                let z = weights_at(&setup, &inst.sol.v_hat, &setup.op, &sample)?;
                rec.tv_error = Some(tv_weights(&z, &z_star));
                rec.op_l2_error = Some(0.0);
                rec.residual = Some(inst.residual);
                rec.entropy = inst.entropy;
                tv_truth = Some(tv_weights(&z, &g0));
            }
            if rep == 0 && n == n_last {
                let truth: Vec<f64> = atoms
                    .iter()
                    .map(|x| cfg.truth.eval(x[0], &cfg.px))
                    .collect();
                snapshot = Some(DemoSnapshot {
                    estimate: inst.estimate.clone(),
                    truth: DiscreteMeasure::new(atoms.clone(), truth)?,
                });
            }
            rows.push((rec, tv_truth, inst.sol.status));
        }
        Ok((rows, snapshot))
    })?;

    let mut records = Vec::new();
    let mut med_oracle = Vec::new();
    let mut med_truth = Vec::new();
    let mut med_res = Vec::new();
    let mut exclusions = 0;
    for gi in 0..cfg.n_grid.len() {
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for (rows, _) in &per_rep_rows {
            let (rec, tv_truth, _) = &rows[gi];
            match (rec.tv_error, tv_truth) {
                (Some(tv), Some(tt)) => {
                    a.push(tv);
                    b.push(*tt);
                    c.push(rec.residual.unwrap_or(0.0));
                    records.push(rec.clone());
                }
                _ => exclusions += 1,
            }
        }
        if a.is_empty() {
            return Err(AmemError::InvalidProblem(format!(
                "demo: every solve at n = {} failed",
                cfg.n_grid[gi]
            )));
        }
        med_oracle.push(median(&a));
        med_truth.push(median(&b));
        med_res.push(median(&c));
    }
    let first = &per_rep_rows[0];
    let status_first: SolveStatus = first.0.last().expect("nonempty grid").2;
    let snapshot = first.1.clone().expect("replication 0 records the last n");
    Ok(DemoOutput {
        records,
        report: DemoReport {
            n_grid: cfg.n_grid.clone(),
            median_tv_oracle: med_oracle,
            median_tv_truth: med_truth,
            median_residual: med_res,
            exclusions,
            total: cfg.n_grid.len() * cfg.replications,
            status_first: status_first.to_string(),
        },
        snapshot,
    })
}

/// A single solve at the first grid size, replication 0.
pub struct SingleSolve {
    pub n: usize,
    pub observation: Observation,
    pub solution: DualSolution,
    pub feasible: bool,
    pub estimate: DiscreteMeasure,
    pub residual: f64,
    pub entropy: Option<f64>,
}

pub fn single_solve(cfg: &ExperimentConfig) -> Result<SingleSolve> {
    let setup = Setup::new(cfg)?;
    let n = cfg.n_grid[0];
    let obs = observation(cfg, &setup.y_clean, 0)?;
    let inst = solve_instance(&setup, atoms_for(cfg, n, 0), &obs)?;
    Ok(SingleSolve {
        n,
        observation: obs,
        feasible: inst.feasible,
        residual: inst.residual,
        entropy: inst.entropy,
        estimate: inst.estimate,
        solution: inst.sol,
    })
}
