//! Composite Gauss-Legendre rules for the uniform law on an interval.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{AmemError, Result};
use crate::measure::Atoms;

/// Nodes and probability weights (summing to one) representing `P_X`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Arc<Atoms>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let step = p / d;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

impl Quadrature {
    /// `panels` equal sub-intervals of `[lower, upper]`, each with an
    /// `nodes`-point Gauss-Legendre rule; weights are normalized to the
    /// uniform probability on the interval.
    pub fn uniform(lower: f64, upper: f64, nodes: usize, panels: usize) -> Result<Self> {
        if !(lower < upper) || nodes == 0 || panels == 0 {
            return Err(AmemError::InvalidProblem(format!(
                "bad quadrature: [{lower}, {upper}] with {nodes} nodes x {panels} panels"
            )));
        }
        let (gx, gw) = gauss_legendre(nodes);
        let width = (upper - lower) / panels as f64;
        let mut xs = Vec::with_capacity(nodes * panels);
        let mut ws = Vec::with_capacity(nodes * panels);
        for p in 0..panels {
            let a = lower + width * p as f64;
            for (x, w) in gx.iter().zip(&gw) {
                xs.push(a + 0.5 * width * (x + 1.0));
                ws.push(0.5 * w / panels as f64);
            }
        }
        Ok(Quadrature {
            nodes: Arc::new(Atoms::from_scalars(xs)),
            weights: ws,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `∫ f dP_X`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}
