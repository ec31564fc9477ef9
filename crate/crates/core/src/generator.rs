//! Symbolic application of the generator `A = A_D + A_J` to expressions.
//!
//! `A_D e = sum_i mu_i d_i e + 1/2 sum_ij sigma2_ij d_ij e` and the jump part
//! is discretized by a fixed rule, `A_J e ~ lambda(x) [sum_s w_s e(x + c_s) - e]`.
//! A [`Generator`] keeps derivative and shift memo tables alive across calls,
//! so repeated application to expressions that share structure reuses work.

use std::sync::Arc;

use crate::error::GeneratorError;
use crate::model::JumpDiffusionModel;
use crate::quadrature::{jump_rule, QuadratureRule};
use crate::symexpr::{add_all, mul_all, neg, scale, simplify, Differentiator, Expr, Substituter, Var};

/// Default hard cap on expansion order.
pub const DEFAULT_MAX_ORDER: usize = 8;
/// Default cap on distinct expression nodes held by an expansion.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpansionLimits {
    pub max_order: usize,
    pub node_budget: usize,
}

impl Default for ExpansionLimits {
    fn default() -> Self {
        Self {
            max_order: DEFAULT_MAX_ORDER,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub model: Arc<JumpDiffusionModel>,
    pub jump_rule: Option<QuadratureRule>,
    pub simplify_each_step: bool,
    pub limits: ExpansionLimits,
}

impl GeneratorConfig {
    pub fn new(model: JumpDiffusionModel, jump_rule: Option<QuadratureRule>) -> Result<Self, GeneratorError> {
        let jump_rule = match (&model.jumps, jump_rule) {
            (None, _) => None,
            (Some(_), None) => return Err(GeneratorError::MissingRule),
            (Some(j), Some(r)) => {
                if r.dim() != model.dim {
                    return Err(GeneratorError::RuleMismatch(format!(
                        "rule nodes have length {} for a {}-dimensional model",
                        r.dim(),
                        model.dim
                    )));
                }
                let jumping = j.distribution.jumping_coords();
                if let Some(c) = r.active_coords().into_iter().find(|c| !jumping.contains(c)) {
                    return Err(GeneratorError::RuleMismatch(format!(
                        "rule moves coordinate {c}, which does not jump"
                    )));
                }
                Some(r)
            }
        };
        Ok(Self {
            model: Arc::new(model),
            jump_rule,
            simplify_each_step: true,
            limits: ExpansionLimits::default(),
        })
    }

    /// Pairs the model with a tensor Gauss rule of `n` nodes per jumping
    /// coordinate when it has jumps.
    pub fn with_gauss_rule(model: JumpDiffusionModel, n: usize) -> Result<Self, GeneratorError> {
        let rule = match &model.jumps {
            Some(j) => Some(jump_rule(&j.distribution, n).map_err(|e| GeneratorError::RuleMismatch(e.to_string()))?),
            None => None,
        };
        Self::new(model, rule)
    }

    pub fn with_limits(mut self, limits: ExpansionLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }
}

/// Stateful generator application with persistent memo tables.
pub struct Generator {
    cfg: GeneratorConfig,
    diff: Differentiator,
    shifts: Vec<Substituter>,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Self {
        let shifts = cfg
            .jump_rule
            .as_ref()
            .map(|r| r.nodes.iter().map(|c| Substituter::shift(c)).collect())
            .unwrap_or_default();
        Self {
            cfg,
            diff: Differentiator::new(),
            shifts,
        }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    fn finish(&self, e: Expr) -> Expr {
        if self.cfg.simplify_each_step {
            simplify(&e)
        } else {
            e
        }
    }

    fn check(&self, e: &Expr) -> Result<(), GeneratorError> {
        crate::symexpr::check_dimension(e, self.cfg.model.dim)?;
        Ok(())
    }

    fn ad_terms(&mut self, e: &Expr) -> Result<Vec<Expr>, GeneratorError> {
        let model = Arc::clone(&self.cfg.model);
        let d = model.dim;
        let mut terms = Vec::new();
        let mut first: Vec<Option<Expr>> = vec![None; d];
        for (i, slot) in first.iter_mut().enumerate() {
            if e.depends_on(Var::State(i)) {
                *slot = Some(self.diff.diff(e, Var::State(i))?);
            }
        }
        for i in 0..d {
            let Some(di) = &first[i] else { continue };
            if !model.drift[i].is_zero() {
                terms.push(&model.drift[i] * di);
            }
            for j in i..d {
                let s = &model.diffusion_sq[i][j];
                if s.is_zero() || !di.depends_on(Var::State(j)) {
                    continue;
                }
                let dij = self.diff.diff(di, Var::State(j))?;
                let c = if i == j { 0.5 } else { 1.0 };
                terms.push(scale(c, &(s * &dij)));
            }
        }
        Ok(terms)
    }

    fn aj_term(&mut self, e: &Expr) -> Result<Option<Expr>, GeneratorError> {
        let Some(jumps) = &self.cfg.model.jumps else {
            return Ok(None);
        };
        let rule = self.cfg.jump_rule.as_ref().ok_or(GeneratorError::MissingRule)?;
        let moved = rule.active_coords();
        if !moved.iter().any(|&c| e.depends_on(Var::State(c))) {
            return Ok(None);
        }
        let mut parts = Vec::with_capacity(rule.len() + 1);
        for (sub, &w) in self.shifts.iter_mut().zip(&rule.weights) {
            parts.push(scale(w, &sub.apply(e)));
        }
        parts.push(neg(e));
        Ok(Some(mul_all([jumps.intensity.clone(), add_all(parts)])))
    }

    fn discount_term(&self, e: &Expr) -> Option<Expr> {
        let r = &self.cfg.model.discount;
        (!r.is_zero()).then(|| neg(&(r * e)))
    }

    /// Diffusive part `A_D e`.
    pub fn apply_ad(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        self.check(e)?;
        let t = self.ad_terms(e)?;
        Ok(self.finish(add_all(t)))
    }

    /// Quadrature jump part `lambda(x) [sum_s w_s e(x + c_s) - e]`.
    pub fn apply_aj_hat(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        self.check(e)?;
        if self.cfg.model.jumps.is_none() {
            return Err(GeneratorError::MissingRule);
        }
        let t = self.aj_term(e)?;
        Ok(self.finish(t.unwrap_or_else(crate::symexpr::zero)))
    }

    /// `(A - r) e`.
    pub fn apply_b(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        self.check(e)?;
        let mut t = self.ad_terms(e)?;
        t.extend(self.aj_term(e)?);
        t.extend(self.discount_term(e));
        Ok(self.finish(add_all(t)))
    }

    /// `(A - r - d/dt) e`.
    pub fn apply_b_minus_dt(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        self.check(e)?;
        let mut t = self.ad_terms(e)?;
        t.extend(self.aj_term(e)?);
        t.extend(self.discount_term(e));
        if e.vars().has_time() {
            t.push(neg(&self.diff.diff(e, Var::Time)?));
        }
        Ok(self.finish(add_all(t)))
    }

    /// `(A_D - r) e`, ignoring jumps.
    pub fn apply_ad_minus_r(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        self.check(e)?;
        let mut t = self.ad_terms(e)?;
        t.extend(self.discount_term(e));
        Ok(self.finish(add_all(t)))
    }

    /// `(A_D - r - d/dt) e`, ignoring jumps.
    pub fn apply_ad_minus_r_dt(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        self.check(e)?;
        let mut t = self.ad_terms(e)?;
        t.extend(self.discount_term(e));
        if e.vars().has_time() {
            t.push(neg(&self.diff.diff(e, Var::Time)?));
        }
        Ok(self.finish(add_all(t)))
    }

    /// `d e / dt`.
    pub fn dt(&mut self, e: &Expr) -> Result<Expr, GeneratorError> {
        Ok(self.diff.diff(e, Var::Time)?)
    }
}

pub fn apply_ad(cfg: &GeneratorConfig, e: &Expr) -> Result<Expr, GeneratorError> {
    Generator::new(cfg.clone()).apply_ad(e)
}

pub fn apply_aj_hat(cfg: &GeneratorConfig, e: &Expr) -> Result<Expr, GeneratorError> {
    Generator::new(cfg.clone()).apply_aj_hat(e)
}

pub fn apply_b(cfg: &GeneratorConfig, e: &Expr) -> Result<Expr, GeneratorError> {
    Generator::new(cfg.clone()).apply_b(e)
}

pub fn apply_b_minus_dt(cfg: &GeneratorConfig, e: &Expr) -> Result<Expr, GeneratorError> {
    Generator::new(cfg.clone()).apply_b_minus_dt(e)
}
