//! Jump-diffusion model descriptions.
//!
//! A model is `dx = mu(x) dt + sigma(x) dW + J dN` with intensity
//! `lambda(x)` for `N` and a state-independent jump-size law. Only
//! `sigma sigma^T` is stored; correlated drivers live in its off-diagonal
//! entries. All coefficients are time-homogeneous expressions in the state.

mod catalog;
mod smoother;
pub mod spec;

pub use catalog::*;
pub use smoother::{bs_call_smoother, gaussian_density_smoother, gaussian_density_smoother_symbolic, Smoother, SmootherKind};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::symexpr::{self, simplify, Expr, EvalPoint, Tape};

/// Law of a single coordinate's jump size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    None,
    Normal { mean: f64, sd: f64 },
    /// Laplace law `exp(-|c|/scale) / (2 scale)`; its variance is `2 scale^2`.
    DoubleExponential { scale: f64 },
    Exponential { mean: f64 },
}

impl Marginal {
    pub fn is_none(&self) -> bool {
        matches!(self, Marginal::None)
    }

    /// `E[exp(c)] - 1`, the mean relative jump of `exp(x_i)`.
    pub fn relative_mean(&self) -> f64 {
        match *self {
            Marginal::None => 0.0,
            Marginal::Normal { mean, sd } => (mean + 0.5 * sd * sd).exp_m1(),
            Marginal::DoubleExponential { scale } if scale < 1.0 => 1.0 / (1.0 - scale * scale) - 1.0,
            Marginal::Exponential { mean } if mean < 1.0 => 1.0 / (1.0 - mean) - 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Normal { mean, .. } => mean,
            Marginal::Exponential { mean } => mean,
            Marginal::None | Marginal::DoubleExponential { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        match *self {
            Marginal::None => Ok(()),
            Marginal::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(ModelError::InvalidParameter {
                        name: "jump mean",
                        reason: format!("{mean}"),
                    });
                }
                bad("jump sd", sd)
            }
            Marginal::DoubleExponential { scale } => bad("jump scale", scale),
            Marginal::Exponential { mean } => bad("jump mean", mean),
        }
    }
}

/// Independent per-coordinate jump sizes driven by one Poisson clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDistribution {
    pub marginals: Vec<Marginal>,
}

impl JumpDistribution {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self, ModelError> {
        if marginals.iter().all(Marginal::is_none) {
            return Err(ModelError::Inconsistent(
                "jump distribution has no jumping coordinate".into(),
            ));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    /// Jumps in coordinate `coord` only.
    pub fn single(dim: usize, coord: usize, m: Marginal) -> Result<Self, ModelError> {
        let mut marginals = vec![Marginal::None; dim];
        marginals[coord] = m;
        Self::new(marginals)
    }

    pub fn jumping_coords(&self) -> Vec<usize> {
        self.marginals
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jumps {
    pub intensity: Expr,
    pub distribution: JumpDistribution,
}

#[derive(Debug, Clone)]
pub struct JumpDiffusionModel {
    pub name: String,
    pub dim: usize,
    pub drift: Vec<Expr>,
    pub diffusion_sq: Vec<Vec<Expr>>,
    /// `None` for a pure diffusion.
    pub jumps: Option<Jumps>,
    pub discount: Expr,
    /// `E[exp(c_i)] - 1` per coordinate; used to build price compensators.
    pub jump_mean_vector: Vec<f64>,
    /// Coordinates that must stay nonnegative (variances, intensities);
    /// the simulator evaluates coefficients at their positive part.
    pub nonnegative: Vec<usize>,
}

impl JumpDiffusionModel {
    /// Pure diffusion with zero discount rate.
    pub fn diffusion(
        name: impl Into<String>,
        drift: Vec<Expr>,
        diffusion_sq: Vec<Vec<Expr>>,
    ) -> Result<Self, ModelError> {
        let dim = drift.len();
        if dim == 0 || dim > symexpr::MAX_STATE_VARS {
            return Err(ModelError::Inconsistent(format!("unsupported dimension {dim}")));
        }
        if diffusion_sq.len() != dim || diffusion_sq.iter().any(|r| r.len() != dim) {
            return Err(ModelError::Inconsistent(format!(
                "diffusion matrix must be {dim}x{dim}"
            )));
        }
        let drift: Vec<Expr> = drift.iter().map(simplify).collect();
        let diffusion_sq: Vec<Vec<Expr>> = diffusion_sq
            .iter()
            .map(|r| r.iter().map(simplify).collect())
            .collect();
        for i in 0..dim {
            for j in 0..dim {
                if diffusion_sq[i][j] != diffusion_sq[j][i] {
                    return Err(ModelError::NotSymmetric { i, j });
                }
            }
        }
        let m = Self {
            name: name.into(),
            dim,
            drift,
            diffusion_sq,
            jumps: None,
            discount: symexpr::zero(),
            jump_mean_vector: vec![0.0; dim],
            nonnegative: Vec::new(),
        };
        m.check_exprs()?;
        Ok(m)
    }

    /// Adds jumps. An intensity that simplifies to the constant zero leaves
    /// the model a pure diffusion.
    pub fn with_jumps(mut self, intensity: Expr, distribution: JumpDistribution) -> Result<Self, ModelError> {
        if distribution.marginals.len() != self.dim {
            return Err(ModelError::Inconsistent(format!(
                "jump distribution has {} marginals for a {}-dimensional model",
                distribution.marginals.len(),
                self.dim
            )));
        }
        let intensity = simplify(&intensity);
        if let Some(c) = intensity.as_const() {
            if c < 0.0 {
                return Err(ModelError::InvalidParameter {
                    name: "intensity",
                    reason: format!("negative constant {c}"),
                });
            }
            if c == 0.0 {
                self.jumps = None;
                self.jump_mean_vector = vec![0.0; self.dim];
                return Ok(self);
            }
        }
        self.jump_mean_vector = distribution.marginals.iter().map(Marginal::relative_mean).collect();
        self.jumps = Some(Jumps {
            intensity,
            distribution,
        });
        self.check_exprs()?;
        Ok(self)
    }

    pub fn with_discount(mut self, r: Expr) -> Result<Self, ModelError> {
        self.discount = simplify(&r);
        self.check_exprs()?;
        Ok(self)
    }

    pub fn with_nonnegative(mut self, coords: Vec<usize>) -> Result<Self, ModelError> {
        if let Some(&c) = coords.iter().find(|&&c| c >= self.dim) {
            return Err(ModelError::Inconsistent(format!("nonnegative coordinate {c} out of range")));
        }
        self.nonnegative = coords;
        Ok(self)
    }

    pub fn has_jumps(&self) -> bool {
        self.jumps.is_some()
    }

    pub fn intensity(&self) -> Option<&Expr> {
        self.jumps.as_ref().map(|j| &j.intensity)
    }

    fn all_exprs(&self) -> Vec<Expr> {
        let mut v: Vec<Expr> = self.drift.clone();
        v.extend(self.diffusion_sq.iter().flatten().cloned());
        if let Some(j) = &self.jumps {
            v.push(j.intensity.clone());
        }
        v.push(self.discount.clone());
        v
    }

    fn check_exprs(&self) -> Result<(), ModelError> {
        for e in self.all_exprs() {
            symexpr::check_dimension(&e, self.dim)?;
            if e.vars().has_time() {
                return Err(ModelError::Inconsistent(
                    "model coefficients must not depend on time".into(),
                ));
            }
            if e.vars().param_extent() > 0 {
                return Err(ModelError::Inconsistent(
                    "model coefficients must not contain free parameters".into(),
                ));
            }
        }
        Ok(())
    }

    /// Numeric `sigma^2(x)`.
    pub fn diffusion_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        let flat: Vec<Expr> = self.diffusion_sq.iter().flatten().cloned().collect();
        let vals = Tape::compile(&flat).eval(&EvalPoint::new(x.to_vec(), 0.0))?;
        Ok(vals.chunks(self.dim).map(|c| c.to_vec()).collect())
    }

    pub fn drift_at(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(Tape::compile(&self.drift).eval(&EvalPoint::new(x.to_vec(), 0.0))?)
    }

    /// True when no coefficient depends on `x_coord` and jumps do not
    /// depend on it either, so the law of `x_t - x_0` in that coordinate
    /// does not depend on its starting value.
    pub fn is_translation_invariant_in(&self, coord: usize) -> bool {
        let v = symexpr::Var::State(coord);
        self.all_exprs().iter().all(|e| !e.depends_on(v))
    }
}

/// Smallest eigenvalue of a small symmetric matrix.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    mat.symmetric_eigenvalues().min()
}

/// Checks symmetry and positive definiteness of a constant matrix.
pub(crate) fn check_spd(m: &[Vec<f64>]) -> Result<(), ModelError> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(ModelError::Inconsistent("matrix is not square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if m[i][j] != m[j][i] {
                return Err(ModelError::NotSymmetric { i, j });
            }
        }
    }
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    if mat.cholesky().is_none() {
        return Err(ModelError::NotPositiveDefinite);
    }
    Ok(())
}
