use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{OperatorSpec, ParametricMap};
use crate::error::{AmemError, Result};
use crate::measure::Atoms;

/// Symmetric smoothing kernel on ℝ, applied coordinate-wise on ℝ^p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// `K_h(u) = Π_d K(u_d / h) / h`.
    pub fn eval_scaled(&self, u: &[f64], h: f64) -> f64 {
        u.iter().map(|&ud| self.eval(ud / h) / h).product()
    }

    /// Half-width of an interval carrying all but a negligible part of the mass.
    pub fn support_radius(&self) -> f64 {
        match self {
            Kernel::Gaussian => 12.0,
            Kernel::Epanechnikov => 1.0,
        }
    }

    /// Numerical integral of the one-dimensional kernel (composite Simpson).
    pub fn integral(&self) -> f64 {
        let r = self.support_radius();
        let panels = 4000;
        let h = 2.0 * r / panels as f64;
        let mut acc = self.eval(-r) + self.eval(r);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.eval(-r + h * i as f64);
        }
        acc * h / 3.0
    }

    /// Symmetric and integrating to one within `1e-6`.
    pub fn check_normalization(&self) -> Result<()> {
        let integral = self.integral();
        if (integral - 1.0).abs() > 1e-6 {
            return Err(AmemError::Operator(format!(
                "{self:?} kernel integrates to {integral}"
            )));
        }
        for i in 0..50 {
            let u = 0.037 * i as f64;
            if self.eval(u) != self.eval(-u) {
                return Err(AmemError::Operator(format!(
                    "{self:?} kernel is not symmetric"
                )));
            }
        }
        Ok(())
    }
}

/// Density `f_T` of the design points on 𝒯.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignDensity {
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl DesignDensity {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty()
            || lower.len() != upper.len()
            || lower.iter().zip(&upper).any(|(a, b)| !(a < b))
        {
            return Err(AmemError::Operator(format!(
                "invalid design box {lower:?} .. {upper:?}"
            )));
        }
        Ok(DesignDensity::UniformBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignDensity::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn pdf(&self, t: &[f64]) -> f64 {
        match self {
            DesignDensity::UniformBox { lower, upper } => {
                let inside = t
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(x, (a, b))| a <= x && x <= b);
                if t.len() == lower.len() && inside {
                    1.0 / lower.iter().zip(upper).map(|(a, b)| b - a).product::<f64>()
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws `m` design points, returned as one vector per point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Vec<f64>> {
        match self {
            DesignDensity::UniformBox { lower, upper } => (0..m)
                .map(|_| {
                    lower
                        .iter()
                        .zip(upper)
                        .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Table {
    atoms: Arc<Atoms>,
    // Φ(X_i, T_j) at ((j * n) + i) * k
    values: Vec<f64>,
}

/// Kernel-smoothed approximation
/// `Φ_m(x, t) = (1 / (f_T(t) m)) Σ_j K_h(t - T_j) Φ(x, T_j)`
/// of a parametric operator from its values at design points `T_1..T_m`.
///
/// With an attached table of `Φ(X_i, T_j)` for a fixed atom set, a query at a
/// new `t` costs `m` kernel evaluations and one contraction.
#[derive(Debug, Clone)]
pub struct ApproxOperator {
    base: OperatorSpec,
    design: Vec<Vec<f64>>,
    kernel: Kernel,
    bandwidth: f64,
    density: DesignDensity,
    table: Option<Table>,
}

impl ApproxOperator {
    pub fn build(
        base: OperatorSpec,
        design: Vec<Vec<f64>>,
        kernel: Kernel,
        bandwidth: f64,
        density: DesignDensity,
        atoms: Option<Arc<Atoms>>,
    ) -> Result<Self> {
        if !base.is_parametric() {
            return Err(AmemError::Operator(format!(
                "kernel approximation needs a parametric operator, got {base}"
            )));
        }
        if design.is_empty() {
            return Err(AmemError::Operator("empty design".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(AmemError::Operator(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let p = density.dim();
        if let Some(bad) = design.iter().find(|t| t.len() != p) {
            return Err(AmemError::Dimension {
                expected: p,
                got: bad.len(),
            });
        }
        kernel.check_normalization()?;

        let mut approx = ApproxOperator {
            base,
            design,
            kernel,
            bandwidth,
            density,
            table: None,
        };
        if let Some(atoms) = atoms {
            approx.fill_table(atoms)?;
        }
        Ok(approx)
    }

    fn fill_table(&mut self, atoms: Arc<Atoms>) -> Result<()> {
        let k = self.base.output_dim();
        let n = atoms.len();
        let mut values = vec![0.0; self.design.len() * n * k];
        for (j, t) in self.design.iter().enumerate() {
            for (i, x) in atoms.iter().enumerate() {
                let at = (j * n + i) * k;
                self.base
                    .eval_exact_into(x, Some(t), &mut values[at..at + k])?;
            }
        }
        self.table = Some(Table { atoms, values });
        Ok(())
    }

    pub fn base(&self) -> &OperatorSpec {
        &self.base
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn m(&self) -> usize {
        self.design.len()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self) -> &DesignDensity {
        &self.density
    }

    pub fn table_atoms(&self) -> Option<&Arc<Atoms>> {
        self.table.as_ref().map(|t| &t.atoms)
    }

    pub fn table_values(&self) -> Option<&[f64]> {
        self.table.as_ref().map(|t| t.values.as_slice())
    }

    /// Same design and table with another bandwidth; the table does not depend on `h`.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(AmemError::Operator(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(ApproxOperator {
            bandwidth,
            ..self.clone()
        })
    }

    /// Attaches precomputed `Φ(X_i, T_j)` values, e.g. read back from disk.
    pub fn attach_table(&mut self, atoms: Arc<Atoms>, values: Vec<f64>) -> Result<()> {
        let expected = self.design.len() * atoms.len() * self.base.output_dim();
        if values.len() != expected {
            return Err(AmemError::Dimension {
                expected,
                got: values.len(),
            });
        }
        self.table = Some(Table { atoms, values });
        Ok(())
    }

    /// `K_h(t - T_j) / (f_T(t) m)` for each design point.
    pub fn kernel_weights(&self, t: &[f64]) -> Result<Vec<f64>> {
        let f = self.density.pdf(t);
        if !(f > 0.0) {
            return Err(AmemError::DesignDensity(t.to_vec()));
        }
        let scale = 1.0 / (f * self.design.len() as f64);
        let mut u = vec![0.0; t.len()];
        Ok(self
            .design
            .iter()
            .map(|tj| {
                for (d, (a, b)) in u.iter_mut().zip(t.iter().zip(tj)) {
                    *d = a - b;
                }
                self.kernel.eval_scaled(&u, self.bandwidth) * scale
            })
            .collect())
    }

    /// `Φ_m(x, t)` by direct summation over the design.
    pub fn eval_approx(&self, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        let w = self.kernel_weights(t)?;
        let k = self.base.output_dim();
        let mut out = vec![0.0; k];
        self.accumulate(x, &w, &mut out)?;
        Ok(out)
    }

    fn accumulate(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (tj, &wj) in self.design.iter().zip(w) {
            if wj == 0.0 {
                continue;
            }
            self.base.eval_exact_into(x, Some(tj), &mut buf)?;
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += wj * b;
            }
        }
        Ok(())
    }

    /// `Φ_m(X_i, t)` for the `i`-th tabulated atom.
    pub fn eval_approx_atom(&self, i: usize, t: &[f64]) -> Result<Vec<f64>> {
        let table = self
            .table
            .as_ref()
            .ok_or_else(|| AmemError::Operator("no precomputed table".into()))?;
        let n = table.atoms.len();
        if i >= n {
            return Err(AmemError::Operator(format!(
                "atom index {i} out of range {n}"
            )));
        }
        let w = self.kernel_weights(t)?;
        let k = self.base.output_dim();
        let mut out = vec![0.0; k];
        for (j, &wj) in w.iter().enumerate() {
            let at = (j * n + i) * k;
            for (o, v) in out.iter_mut().zip(&table.values[at..at + k]) {
                *o += wj * v;
            }
        }
        Ok(out)
    }

    /// `k × n` matrix of `Φ_m(X_i, t)`; uses the table when `atoms` are the
    /// tabulated ones.
    pub fn matrix_at(&self, atoms: &Atoms, t: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.base.output_dim();
        let n = atoms.len();
        let w = self.kernel_weights(t)?;
        let mut m = DMatrix::zeros(k, n);
        match &self.table {
            Some(table) if *table.atoms == *atoms => {
                for (j, &wj) in w.iter().enumerate() {
                    if wj == 0.0 {
                        continue;
                    }
                    let block = &table.values[j * n * k..(j + 1) * n * k];
                    for (i, vals) in block.chunks_exact(k).enumerate() {
                        for (c, v) in vals.iter().enumerate() {
                            m[(c, i)] += wj * v;
                        }
                    }
                }
            }
            _ => {
                let mut col = vec![0.0; k];
                for (i, x) in atoms.iter().enumerate() {
                    self.accumulate(x, &w, &mut col)?;
                    m.column_mut(i).copy_from_slice(&col);
                }
            }
        }
        Ok(m)
    }
}

impl ParametricMap for ApproxOperator {
    fn output_dim(&self) -> usize {
        self.base.output_dim()
    }

    fn eval_param_into(&self, x: &[f64], t: &[f64], out: &mut [f64]) -> Result<()> {
        let w = self.kernel_weights(t)?;
        self.accumulate(x, &w, out)
    }
}

/// Monte Carlo estimate of `‖Φ_m - Φ‖_{L²(P_X)}`, i.e.
/// `sqrt(mean over t_grid and the sample of ‖Φ_m(X, t) - Φ(X, t)‖²)`.
pub fn l2_distance(
    exact: &dyn ParametricMap,
    approx: &dyn ParametricMap,
    px_sample: &Atoms,
    t_grid: &[Vec<f64>],
) -> Result<f64> {
    if px_sample.is_empty() || t_grid.is_empty() {
        return Err(AmemError::InvalidProblem(
            "l2 distance needs a nonempty sample and parameter grid".into(),
        ));
    }
    let k = exact.output_dim();
    if approx.output_dim() != k {
        return Err(AmemError::Dimension {
            expected: k,
            got: approx.output_dim(),
        });
    }
    let mut a = vec![0.0; k];
    let mut e = vec![0.0; k];
    let mut acc = 0.0;
    for t in t_grid {
        for x in px_sample.iter() {
            exact.eval_param_into(x, t, &mut e)?;
            approx.eval_param_into(x, t, &mut a)?;
            acc += a
                .iter()
                .zip(&e)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>();
        }
    }
    Ok((acc / (px_sample.len() * t_grid.len()) as f64).sqrt())
}
