//! Experiment configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AmemError, Result};
use crate::operator::{DesignDensity, Kernel, OperatorKind, OperatorSpec, ParametricFamily, Psf};
use crate::prior::ReferenceMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub eta: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub n_grid: Vec<usize>,
    /// Size of the fresh `P_X` sample used for error evaluation.
    #[serde(default = "default_eval_sample")]
    pub eval_sample: usize,
    /// Permits priors without bounded `Λ'` and `Λ''` in the rate studies.
    #[serde(default)]
    pub allow_unbounded_derivatives: bool,
    /// Added to every observation after the noise, to build unreachable
    /// observations on purpose. Empty means no shift.
    #[serde(default)]
    pub y_offset: Vec<f64>,
    pub prior: PriorConfig,
    pub operator: OperatorConfig,
    pub truth: Truth,
    #[serde(default)]
    pub px: PxConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub approx: Option<ApproxConfig>,
}

fn default_replications() -> usize {
    1
}

fn default_eval_sample() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorConfig {
    PowerMoments {
        degree: usize,
    },
    TrigMoments {
        k: usize,
    },
    Convolution {
        points: Points,
        #[serde(flatten)]
        psf: Psf,
    },
    Parametric {
        #[serde(flatten)]
        family: ParametricFamily,
        t_obs: Vec<f64>,
    },
}

/// Observation points of a convolution operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Points {
    List(Vec<f64>),
    /// Cell midpoints of `count` equal cells on `[lower, upper]`.
    Grid {
        lower: f64,
        upper: f64,
        count: usize,
    },
}

impl Points {
    pub fn resolve(&self) -> Vec<f64> {
        match self {
            Points::List(v) => v.clone(),
            Points::Grid {
                lower,
                upper,
                count,
            } => (0..*count)
                .map(|i| lower + (upper - lower) * (i as f64 + 0.5) / *count as f64)
                .collect(),
        }
    }
}

/// The density `g₀ = dμ/dP_X` generating the clean moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truth {
    Constant {
        value: f64,
    },
    /// Linear from `low` at the left end of 𝒳 to `high` at the right end.
    Ramp {
        low: f64,
        high: f64,
    },
    /// `base + height · Σ exp(-(x - c)² / (2 width²))` over two centers.
    TwoBump {
        base: f64,
        height: f64,
        centers: [f64; 2],
        width: f64,
    },
}

impl Truth {
    pub fn eval(&self, x: f64, px: &PxConfig) -> f64 {
        match *self {
            Truth::Constant { value } => value,
            Truth::Ramp { low, high } => {
                low + (high - low) * (x - px.lower) / (px.upper - px.lower)
            }
            Truth::TwoBump {
                base,
                height,
                centers,
                width,
            } => {
                base + height
                    * centers
                        .iter()
                        .map(|c| (-0.5 * ((x - c) / width).powi(2)).exp())
                        .sum::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AtomLayout {
    /// i.i.d. uniform draws.
    #[default]
    Random,
    /// Cell midpoints of an equal partition.
    Grid,
}

/// `P_X`: uniform on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PxConfig {
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub atoms: AtomLayout,
}

impl Default for PxConfig {
    fn default() -> Self {
        PxConfig {
            lower: 0.0,
            upper: 1.0,
            atoms: AtomLayout::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub nodes: usize,
    #[serde(default = "default_panels")]
    pub panels: usize,
}

fn default_panels() -> usize {
    1
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes: 256,
            panels: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-9,
            max_iters: 200,
        }
    }
}

/// Kernel approximation of a parametric operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    /// Number of design points `T_j`.
    pub m: usize,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    /// Bandwidths from coarse to fine (strictly decreasing).
    pub bandwidth_grid: Vec<f64>,
    pub design_lower: Vec<f64>,
    pub design_upper: Vec<f64>,
}

fn default_kernel() -> Kernel {
    Kernel::Gaussian
}

impl ApproxConfig {
    pub fn density(&self) -> Result<DesignDensity> {
        DesignDensity::uniform_box(self.design_lower.clone(), self.design_upper.clone())
    }
}

fn config_err(msg: impl Into<String>) -> AmemError {
    AmemError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn prior(&self) -> Result<ReferenceMeasure> {
        ReferenceMeasure::from_name(&self.prior.family, &self.prior.params)
            .map_err(|e| config_err(e.to_string()))
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        let kind = match &self.operator {
            OperatorConfig::PowerMoments { degree } => {
                OperatorKind::PowerMoments { degree: *degree }
            }
            OperatorConfig::TrigMoments { k } => OperatorKind::TrigMoments { k: *k },
            OperatorConfig::Convolution { points, psf } => OperatorKind::Convolution {
                points: points.resolve(),
                psf: *psf,
            },
            OperatorConfig::Parametric { family, .. } => {
                OperatorKind::Parametric { family: *family }
            }
        };
        OperatorSpec::new(kind).map_err(|e| config_err(e.to_string()))
    }

    /// Observation parameter `t_obs` for parametric operators.
    pub fn t_obs(&self) -> Option<&[f64]> {
        match &self.operator {
            OperatorConfig::Parametric { t_obs, .. } => Some(t_obs),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(config_err(format!(
                "eta must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if self.replications == 0 {
            return Err(config_err("replications must be >= 1"));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(config_err("n_grid must be nonempty with positive entries"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("n_grid must be strictly increasing"));
        }
        if self.eval_sample == 0 {
            return Err(config_err("eval_sample must be >= 1"));
        }
        let px = &self.px;
        if !(px.lower < px.upper && px.lower.is_finite() && px.upper.is_finite()) {
            return Err(config_err(format!(
                "bad px interval [{}, {}]",
                px.lower, px.upper
            )));
        }
        if self.quadrature.nodes == 0 || self.quadrature.panels == 0 {
            return Err(config_err("quadrature needs nodes >= 1 and panels >= 1"));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iters == 0 {
            return Err(config_err("solver needs tolerance > 0 and max_iters >= 1"));
        }
        let prior = self.prior()?;
        let op = self.operator()?;
        let t_grid: Vec<Vec<f64>> = self.t_obs().map(|t| vec![t.to_vec()]).unwrap_or_default();
        op.validate_on(px.lower, px.upper, 1001, &t_grid)
            .map_err(|e| config_err(e.to_string()))?;
        if !self.y_offset.is_empty() && self.y_offset.len() != op.output_dim() {
            return Err(config_err(format!(
                "y_offset has {} entries, operator has k = {}",
                self.y_offset.len(),
                op.output_dim()
            )));
        }
        if let Truth::TwoBump { width, .. } = self.truth {
            if !(width > 0.0) {
                return Err(config_err("two_bump width must be positive"));
            }
        }
        // g₀ must take values in the support hull of the prior.
        let hull = prior.support_hull();
        for i in 0..=1000 {
            let x = px.lower + (px.upper - px.lower) * i as f64 / 1000.0;
            let g = self.truth.eval(x, px);
            if !hull.contains(g) {
                return Err(config_err(format!(
                    "truth takes value {g} at x = {x}, outside the prior support hull {hull}"
                )));
            }
        }
        if let Some(a) = &self.approx {
            if !op.is_parametric() {
                return Err(config_err("[approx] needs a parametric operator"));
            }
            if a.m == 0 {
                return Err(config_err("approx.m must be >= 1"));
            }
            if a.bandwidth_grid.is_empty() || a.bandwidth_grid.iter().any(|h| !(*h > 0.0)) {
                return Err(config_err("bandwidth_grid must be nonempty and positive"));
            }
            if a.bandwidth_grid.windows(2).any(|w| w[0] <= w[1]) {
                return Err(config_err("bandwidth_grid must be strictly decreasing"));
            }
            let density = a.density().map_err(|e| config_err(e.to_string()))?;
            let t = self.t_obs().unwrap_or_default();
            if density.dim() != t.len() || !(density.pdf(t) > 0.0) {
                return Err(config_err("t_obs must lie in the design box"));
            }
        }
        Ok(())
    }

    /// Rate studies need bounded `Λ'` and `Λ''` unless explicitly overridden.
    pub fn require_bounded_derivatives(&self) -> Result<()> {
        let prior = self.prior()?;
        if prior.a2_compliant() || self.allow_unbounded_derivatives {
            Ok(())
        } else {
            Err(config_err(format!(
                "prior {prior} does not have bounded derivatives of its log-Laplace \
                 transform; set allow_unbounded_derivatives = true to run anyway"
            )))
        }
    }
}
