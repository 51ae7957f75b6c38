//! Rate properties of the estimator: sampling error in `n` and sensitivity
//! to the operator error.

use amem::dual::{solve, DualProblem};
use amem::harness::{
    atoms_for, fit_slope, median, observation, oracle_solution, stream, ExperimentConfig, Setup,
};
use amem::measure::Atoms;
use amem::operator::{l2_distance, ApproxOperator};
use rand::Rng;

#[test]
fn sampling_error_shrinks_like_inverse_root_n() {
    let cfg = ExperimentConfig::from_toml(
        r#"
seed = 404
eta = 0.01
replications = 100
n_grid = [100, 1000, 10000]

[prior]
family = "uniform"
params = [0.0, 2.0]

[operator]
kind = "power_moments"
degree = 3

[truth]
shape = "ramp"
low = 0.5
high = 1.5
"#,
    )
    .unwrap();
    let setup = Setup::new(&cfg).unwrap();
    let mut gaps = vec![Vec::new(); cfg.n_grid.len()];
    for rep in 0..cfg.replications as u64 {
        let obs = observation(&cfg, &setup.y_clean, rep).unwrap();
        let v_inf = oracle_solution(&setup, &obs).unwrap().v_hat;
        for (gi, &n) in cfg.n_grid.iter().enumerate() {
            let p =
                DualProblem::from_operator(&setup.op, &atoms_for(&cfg, n, rep), &obs, setup.prior)
                    .unwrap();
            let sol = solve(&p, &setup.opts).unwrap();
            assert!(
                sol.status.is_success(),
                "n = {n}, rep = {rep}: {}",
                sol.status
            );
            gaps[gi].push((sol.v_hat - &v_inf).norm());
        }
    }
    let medians: Vec<f64> = gaps.iter().map(|g| median(g)).collect();
    for w in medians.windows(2) {
        let ratio = w[1] / w[0];
        // 1/√10 ≈ 0.316 for a tenfold increase in n.
        assert!((0.2..=0.8).contains(&ratio), "medians {medians:?}");
    }
    let scaled: Vec<f64> = medians
        .iter()
        .zip(&cfg.n_grid)
        .map(|(m, &n)| m * (n as f64).sqrt())
        .collect();
    let spread = scaled.iter().cloned().fold(0.0, f64::max)
        / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 3.0, "√n · median {scaled:?}");
}

#[test]
fn dual_error_is_linear_in_operator_error() {
    let cfg = ExperimentConfig::from_toml(
        r#"
seed = 505
eta = 0.01
replications = 5
n_grid = [1000]

[prior]
family = "uniform"
params = [0.0, 2.0]

[operator]
kind = "parametric"
family = "modulated"
k = 3
t_obs = [0.5]

[truth]
shape = "ramp"
low = 0.5
high = 1.5

[quadrature]
nodes = 64

[approx]
m = 20000
bandwidth_grid = [0.3, 0.2, 0.14, 0.1, 0.07]
design_lower = [0.0]
design_upper = [1.0]
"#,
    )
    .unwrap();
    let setup = Setup::new(&cfg).unwrap();
    let approx_cfg = cfg.approx.as_ref().unwrap();
    let density = approx_cfg.density().unwrap();
    let t_obs = cfg.t_obs().unwrap().to_vec();
    let hs = &approx_cfg.bandwidth_grid;
    let mut e_m = vec![Vec::new(); hs.len()];
    let mut dv = vec![Vec::new(); hs.len()];
    for rep in 0..cfg.replications as u64 {
        let obs = observation(&cfg, &setup.y_clean, rep).unwrap();
        let v_star = oracle_solution(&setup, &obs).unwrap().v_hat;
        let design = density.sample(&mut stream(cfg.seed, "design", rep), approx_cfg.m);
        let mut rng = stream(cfg.seed, "l2", rep);
        let sample = Atoms::from_scalars((0..100).map(|_| rng.random::<f64>()).collect());
        let base = ApproxOperator::build(
            setup.op.spec().clone(),
            design,
            approx_cfg.kernel,
            hs[0],
            density.clone(),
            None,
        )
        .unwrap();
        for (hi, &h) in hs.iter().enumerate() {
            let approx = base.with_bandwidth(h).unwrap();
            e_m[hi].push(
                l2_distance(
                    setup.op.spec(),
                    &approx,
                    &sample,
                    std::slice::from_ref(&t_obs),
                )
                .unwrap(),
            );
            let phi_m = approx.matrix_at(&setup.quad.nodes, &t_obs).unwrap();
            let p = DualProblem::with_weights(phi_m, setup.quad.weights.clone(), &obs, setup.prior)
                .unwrap();
            let sol = solve(&p, &setup.opts).unwrap();
            assert!(sol.status.is_success());
            dv[hi].push((sol.v_hat - &v_star).norm());
        }
    }
    let points: Vec<(f64, f64)> = e_m
        .iter()
        .zip(&dv)
        .map(|(e, d)| (median(e), median(d)))
        .collect();
    let fit = fit_slope(&points).unwrap();
    assert!((0.7..=1.3).contains(&fit.slope), "{fit:?} from {points:?}");
}
