//! Moment operators `Φ: 𝒳 → ℝ^k`, exact and kernel-smoothed.

mod kernel;
mod table;

pub use kernel::{l2_distance, ApproxOperator, DesignDensity, Kernel};
pub use table::{read_table, write_table, TableFile};

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{AmemError, Result};
use crate::measure::Atoms;

/// A map `x ↦ Φ(x) ∈ ℝ^k` evaluated at points of 𝒳.
pub trait MomentMap: Sync {
    fn output_dim(&self) -> usize;

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}

/// A map `(x, t) ↦ Φ(x; t) ∈ ℝ^k` with a parameter `t ∈ 𝒯 ⊂ ℝ^p`.
pub trait ParametricMap: Sync {
    fn output_dim(&self) -> usize;

    fn eval_param_into(&self, x: &[f64], t: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Adapts a closure into a [`MomentMap`].
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnMap { dim, f }
    }
}

impl<F> MomentMap for FnMap<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out);
        Ok(())
    }
}

/// A parametric map frozen at one parameter value.
pub struct AtParam<'a, P: ?Sized> {
    map: &'a P,
    t: Vec<f64>,
}

impl<'a, P: ParametricMap + ?Sized> AtParam<'a, P> {
    pub fn new(map: &'a P, t: Vec<f64>) -> Self {
        AtParam { map, t }
    }

    pub fn param(&self) -> &[f64] {
        &self.t
    }
}

impl<P: ParametricMap + ?Sized> MomentMap for AtParam<'_, P> {
    fn output_dim(&self) -> usize {
        self.map.output_dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.map.eval_param_into(x, &self.t, out)
    }
}

/// Point-spread function `p(u, x)` of a convolution operator, with `u` the
/// offset between observation point and source and `x` the observation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "psf", rename_all = "snake_case")]
pub enum Psf {
    /// `1{|u| ≤ half_width}`.
    Indicator { half_width: f64 },
    /// Normalized gaussian in `u` with width `width * (1 + width_slope * x)`.
    Gaussian {
        width: f64,
        #[serde(default)]
        width_slope: f64,
    },
}

impl Psf {
    pub fn eval(&self, u: f64, x: f64) -> f64 {
        match *self {
            Psf::Indicator { half_width } => {
                if u.abs() <= half_width {
                    1.0
                } else {
                    0.0
                }
            }
            Psf::Gaussian { width, width_slope } => {
                let s = width * (1.0 + width_slope * x);
                (-0.5 * (u / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
            }
        }
    }
}

/// Built-in parametric families `Φ(x; t)` with scalar `x` and scalar `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParametricFamily {
    /// `Φ(x; t) = x t`, k = 1.
    Product,
    /// `Φ_j(x; t) = x^j (1 + sin(2π(t + x)) / 2)` for `j = 0..k`.
    Modulated { k: usize },
}

impl ParametricFamily {
    pub fn output_dim(&self) -> usize {
        match self {
            ParametricFamily::Product => 1,
            ParametricFamily::Modulated { k } => *k,
        }
    }

    fn eval_into(&self, x: f64, t: f64, out: &mut [f64]) {
        match self {
            ParametricFamily::Product => out[0] = x * t,
            ParametricFamily::Modulated { .. } => {
                let m = 1.0 + 0.5 * (2.0 * PI * (t + x)).sin();
                let mut p = 1.0;
                for o in out.iter_mut() {
                    *o = p * m;
                    p *= x;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `(x, x², …, x^degree)`.
    PowerMoments {
        degree: usize,
    },
    /// `(cos 2πx, sin 2πx, cos 4πx, sin 4πx, …)` truncated to `k` entries.
    TrigMoments {
        k: usize,
    },
    /// `Φ^j(y) = p(x_j - y, x_j)` for observation points `x_j`.
    Convolution {
        points: Vec<f64>,
        psf: Psf,
    },
    Parametric {
        family: ParametricFamily,
    },
}

/// An exact moment operator on a one-dimensional 𝒳.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    kind: OperatorKind,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind) -> Result<Self> {
        let bad = |msg: String| Err(AmemError::Operator(msg));
        match &kind {
            OperatorKind::PowerMoments { degree: 0 } => return bad("degree must be >= 1".into()),
            OperatorKind::TrigMoments { k: 0 } => return bad("k must be >= 1".into()),
            OperatorKind::Convolution { points, psf } => {
                if points.is_empty() {
                    return bad("convolution needs observation points".into());
                }
                let ok = match psf {
                    Psf::Indicator { half_width } => *half_width > 0.0,
                    Psf::Gaussian { width, .. } => *width > 0.0,
                };
                if !ok {
                    return bad(format!("point-spread width must be positive: {psf:?}"));
                }
            }
            OperatorKind::Parametric {
                family: ParametricFamily::Modulated { k: 0 },
            } => return bad("k must be >= 1".into()),
            _ => {}
        }
        Ok(OperatorSpec { kind })
    }

    pub fn power_moments(degree: usize) -> Result<Self> {
        Self::new(OperatorKind::PowerMoments { degree })
    }

    pub fn trig_moments(k: usize) -> Result<Self> {
        Self::new(OperatorKind::TrigMoments { k })
    }

    pub fn convolution(points: Vec<f64>, psf: Psf) -> Result<Self> {
        Self::new(OperatorKind::Convolution { points, psf })
    }

    pub fn parametric(family: ParametricFamily) -> Result<Self> {
        Self::new(OperatorKind::Parametric { family })
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self.kind, OperatorKind::Parametric { .. })
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            OperatorKind::PowerMoments { degree } => *degree,
            OperatorKind::TrigMoments { k } => *k,
            OperatorKind::Convolution { points, .. } => points.len(),
            OperatorKind::Parametric { family } => family.output_dim(),
        }
    }

    /// `Φ(x)`, or `Φ(x; t)` for the parametric kind.
    pub fn eval_exact(&self, x: &[f64], t: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_exact_into(x, t, &mut out)?;
        Ok(out)
    }

    pub fn eval_exact_into(&self, x: &[f64], t: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        if x.len() != 1 {
            return Err(AmemError::Dimension {
                expected: 1,
                got: x.len(),
            });
        }
        if out.len() != self.output_dim() {
            return Err(AmemError::Dimension {
                expected: self.output_dim(),
                got: out.len(),
            });
        }
        let x = x[0];
        match &self.kind {
            OperatorKind::PowerMoments { .. } => {
                let mut p = x;
                for o in out.iter_mut() {
                    *o = p;
                    p *= x;
                }
            }
            OperatorKind::TrigMoments { .. } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let arg = 2.0 * PI * (j / 2 + 1) as f64 * x;
                    *o = if j % 2 == 0 { arg.cos() } else { arg.sin() };
                }
            }
            OperatorKind::Convolution { points, psf } => {
                for (o, &xj) in out.iter_mut().zip(points) {
                    *o = psf.eval(xj - x, xj);
                }
            }
            OperatorKind::Parametric { family } => {
                let t = t.ok_or_else(|| {
                    AmemError::Operator("parametric operator needs a parameter t".into())
                })?;
                if t.len() != 1 {
                    return Err(AmemError::Dimension {
                        expected: 1,
                        got: t.len(),
                    });
                }
                family.eval_into(x, t[0], out);
            }
        }
        Ok(())
    }

    /// Fixes the parameter of a parametric operator.
    pub fn at(&self, t: Vec<f64>) -> AtParam<'_, OperatorSpec> {
        AtParam::new(self, t)
    }

    /// Scans a grid of `samples` points on `[lower, upper]` (and `t_grid` for
    /// the parametric kind), rejecting non-finite values.
    pub fn validate_on(
        &self,
        lower: f64,
        upper: f64,
        samples: usize,
        t_grid: &[Vec<f64>],
    ) -> Result<()> {
        let ts: Vec<Option<&[f64]>> = if self.is_parametric() {
            if t_grid.is_empty() {
                return Err(AmemError::Operator(
                    "parametric operator needs a parameter grid to validate".into(),
                ));
            }
            t_grid.iter().map(|t| Some(t.as_slice())).collect()
        } else {
            vec![None]
        };
        let mut out = vec![0.0; self.output_dim()];
        for i in 0..samples.max(2) {
            let x = lower + (upper - lower) * i as f64 / (samples.max(2) - 1) as f64;
            for t in &ts {
                self.eval_exact_into(&[x], *t, &mut out)?;
                if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
                    return Err(AmemError::Operator(format!(
                        "component {bad} is not finite at x = {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl MomentMap for OperatorSpec {
    fn output_dim(&self) -> usize {
        OperatorSpec::output_dim(self)
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval_exact_into(x, None, out)
    }
}

impl ParametricMap for OperatorSpec {
    fn output_dim(&self) -> usize {
        OperatorSpec::output_dim(self)
    }

    fn eval_param_into(&self, x: &[f64], t: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval_exact_into(x, Some(t), out)
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            OperatorKind::PowerMoments { degree } => write!(f, "power_moments({degree})"),
            OperatorKind::TrigMoments { k } => write!(f, "trig_moments({k})"),
            OperatorKind::Convolution { points, psf } => {
                write!(f, "convolution({} points, {psf:?})", points.len())
            }
            OperatorKind::Parametric { family } => write!(f, "parametric({family:?})"),
        }
    }
}

/// The `k × n` matrix whose column `i` is `Φ(X_i)`.
pub fn phi_matrix(op: &dyn MomentMap, atoms: &Atoms) -> Result<DMatrix<f64>> {
    let k = op.output_dim();
    let mut m = DMatrix::zeros(k, atoms.len());
    let mut buf = vec![0.0; k];
    for (i, x) in atoms.iter().enumerate() {
        op.eval_into(x, &mut buf)?;
        m.column_mut(i).copy_from_slice(&buf);
    }
    Ok(m)
}

/// Smallest eigenvalue of the empirical Gram matrix `(1/N) Σ Φ(X)Φ(X)ᵀ`.
/// Linear independence of the components shows up as a positive value.
pub fn gram_min_eigenvalue(op: &dyn MomentMap, sample: &Atoms) -> Result<f64> {
    let phi = phi_matrix(op, sample)?;
    let gram = &phi * phi.transpose() / sample.len() as f64;
    let eig = SymmetricEigen::new(gram);
    Ok(eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min))
}
