//! Discrete measures `(1/n) Σ z_i δ_{X_i}` on a fixed atom list.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{AmemError, Result};
use crate::operator::MomentMap;
use crate::prior::{ExtReal, ReferenceMeasure};

/// Points `X_1..X_n` of 𝒳 ⊂ ℝ^d stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    dim: usize,
    coords: Vec<f64>,
}

impl Atoms {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(AmemError::Dimension {
                expected: dim,
                got: coords.len(),
            });
        }
        Ok(Atoms { dim, coords })
    }

    /// One-dimensional atoms.
    pub fn from_scalars(xs: Vec<f64>) -> Self {
        Atoms { dim: 1, coords: xs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Reorders atoms by `perm`: new atom `i` is old atom `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Atoms {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &j in perm {
            coords.extend_from_slice(self.get(j));
        }
        Atoms {
            dim: self.dim,
            coords,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Arc<Atoms>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Arc<Atoms>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(AmemError::InvalidProblem(
                "measure needs n >= 1 atoms".into(),
            ));
        }
        if atoms.len() != weights.len() {
            return Err(AmemError::Dimension {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        if let Some(bad) = weights.iter().position(|w| !w.is_finite()) {
            return Err(AmemError::InvalidProblem(format!(
                "weight {bad} is not finite: {}",
                weights[bad]
            )));
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    pub fn atoms(&self) -> &Atoms {
        &self.atoms
    }

    pub fn shared_atoms(&self) -> Arc<Atoms> {
        Arc::clone(&self.atoms)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total mass `(1/n) Σ z_i`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.atoms.dim()).map(|j| format!("x{j}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (x, z) in self.atoms.iter().zip(&self.weights) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(z.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv): coordinate
    /// columns followed by a final weight column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let ncols = r.headers()?.len();
        if ncols < 2 {
            return Err(AmemError::InvalidProblem(
                "measure CSV needs at least one coordinate and a weight column".into(),
            ));
        }
        let dim = ncols - 1;
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| AmemError::InvalidProblem(format!("bad number {s:?}: {e}")))
            };
            for j in 0..dim {
                coords.push(parse(&rec[j])?);
            }
            weights.push(parse(&rec[dim])?);
        }
        DiscreteMeasure::new(Arc::new(Atoms::new(dim, coords)?), weights)
    }
}

fn check_same_atoms(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    if Arc::ptr_eq(&a.atoms, &b.atoms) || a.atoms == b.atoms {
        Ok(())
    } else {
        Err(AmemError::MismatchedAtoms(format!(
            "{} atoms in dimension {} vs {} atoms in dimension {}",
            a.atoms.len(),
            a.atoms.dim(),
            b.atoms.len(),
            b.atoms.dim()
        )))
    }
}

/// Total variation `|μ1 - μ2|(𝒳) = (1/n) Σ |z_i - z'_i|` on shared atoms.
/// No factor 1/2 is applied.
pub fn tv_distance(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> Result<f64> {
    check_same_atoms(mu1, mu2)?;
    Ok(tv_weights(&mu1.weights, &mu2.weights))
}

/// `(1/n) Σ |a_i - b_i|` for weight vectors of equal length.
pub fn tv_weights(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    sum / a.len() as f64
}

/// Generalized moment `(1/n) Σ z_i Φ(X_i)`.
pub fn moment(mu: &DiscreteMeasure, op: &dyn MomentMap) -> Result<Vec<f64>> {
    let k = op.output_dim();
    let mut acc = vec![0.0; k];
    let mut phi = vec![0.0; k];
    for (x, &z) in mu.atoms.iter().zip(&mu.weights) {
        op.eval_into(x, &mut phi)?;
        for (a, p) in acc.iter_mut().zip(&phi) {
            *a += z * p;
        }
    }
    let n = mu.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Primal entropy `(1/n) Σ Λ*(z_i)`; `+∞` once any weight leaves the hull.
pub fn entropy(mu: &DiscreteMeasure, prior: &ReferenceMeasure) -> ExtReal {
    let mut total = ExtReal::Finite(0.0);
    for &z in &mu.weights {
        total = total + prior.cramer(z);
        if !total.is_finite() {
            return ExtReal::PosInf;
        }
    }
    total.scale(1.0 / mu.len() as f64)
}
