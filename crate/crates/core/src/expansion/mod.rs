//! Power-series expansions of conditional moments in the horizon `t`.
//!
//! Every expansion is a list of symbolic coefficients `g_m` built once and
//! evaluated many times as `sum_m t^m / m! g_m(x, t)`:
//!
//! * regular: `g_m = B^m f` with `B = A - r`;
//! * smoothed: `g_m = (B - d/dt)^m u_0` for a closed-form smoother `u_0`;
//! * two-parameter: `g_{m1,m2} = B^{m2} d_s^{m1} u_0` evaluated at `(s, t)`;
//! * jump shortcut: constant-intensity models with Gaussian jumps, where the
//!   jump semigroup is applied in closed form as a Poisson mixture and only
//!   the diffusive generator is expanded.

mod cache;
mod expm;
mod poly;

pub use cache::{content_hash, model_fingerprint, ExpansionCache};
pub use expm::expm;
pub use poly::{monomial_basis, poly_generator_matrix, poly_moment, PolyGeneratorMatrix};

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{ExpansionError, ExprError};
use crate::generator::{Generator, GeneratorConfig};
use crate::model::{gaussian_density_smoother_symbolic, JumpDistribution, Marginal, Smoother};
use crate::quadrature::{jump_rule, Provenance, QuadratureRule};
use crate::symexpr::{
    add_all, constant, evaluate, exp, mul_all, node_count, powf, scale, simplify, time, EvalPoint, Expr, Substituter,
    Tape,
};

/// Horizon used to pick the Poisson truncation of the jump shortcut when
/// none is given.
pub const SHORTCUT_DEFAULT_HORIZON: f64 = 1.0;
/// Poisson tail mass tolerated by the jump shortcut.
pub const POISSON_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpansionKind {
    Regular,
    Smoothed,
    TwoParam { m1: usize, m2: usize },
    JumpShortcut { k_max: usize, smoothed: bool },
}

#[derive(Debug)]
pub struct ExpansionResult {
    pub kind: ExpansionKind,
    pub order: usize,
    pub coefficients: Vec<Expr>,
    /// Value returned at `t = 0` for smoothed expansions.
    pub limit: Option<Expr>,
    pub model_name: String,
    pub rule: Option<QuadratureRule>,
    /// Poisson mixture of a jump-shortcut expansion.
    pub mixture: Option<PoissonMixture>,
    tape: OnceLock<Tape>,
}

impl Clone for ExpansionResult {
    fn clone(&self) -> Self {
        Self::new(
            self.kind,
            self.order,
            self.coefficients.clone(),
            self.limit.clone(),
            self.model_name.clone(),
            self.rule.clone(),
            self.mixture.clone(),
        )
    }
}

impl ExpansionResult {
    pub(crate) fn new(
        kind: ExpansionKind,
        order: usize,
        coefficients: Vec<Expr>,
        limit: Option<Expr>,
        model_name: String,
        rule: Option<QuadratureRule>,
        mixture: Option<PoissonMixture>,
    ) -> Self {
        Self {
            kind,
            order,
            coefficients,
            limit,
            model_name,
            rule,
            mixture,
            tape: OnceLock::new(),
        }
    }

    /// Compiled program evaluating every coefficient at once.
    pub fn tape(&self) -> &Tape {
        self.tape.get_or_init(|| Tape::compile(&self.coefficients))
    }

    /// Distinct nodes across all coefficients.
    pub fn node_count(&self) -> usize {
        node_count(&self.coefficients)
    }

    fn is_smoothed(&self) -> bool {
        match self.kind {
            ExpansionKind::Regular => false,
            ExpansionKind::Smoothed | ExpansionKind::TwoParam { .. } => true,
            ExpansionKind::JumpShortcut { smoothed, .. } => smoothed,
        }
    }
}

/// Per-term values `tau_m = t^m / m! g_m(x, t)` and their partial sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDiagnostics {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub divergence_onset: Option<usize>,
}

impl TermDiagnostics {
    pub fn from_terms(terms: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let partial_sums = terms
            .iter()
            .map(|t| {
                acc += t;
                acc
            })
            .collect();
        let divergence_onset = divergence_onset(&terms);
        Self {
            terms,
            partial_sums,
            divergence_onset,
        }
    }

    pub fn value(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

/// Smallest `m >= 1` with `|tau_{m+1}| > |tau_m|`.
pub fn divergence_onset(terms: &[f64]) -> Option<usize> {
    (1..terms.len().saturating_sub(1)).find(|&m| terms[m + 1].abs() > terms[m].abs())
}

fn check_order(cfg: &GeneratorConfig, order: usize) -> Result<(), ExpansionError> {
    if order > cfg.limits.max_order {
        return Err(ExpansionError::OrderCap {
            order,
            cap: cfg.limits.max_order,
        });
    }
    Ok(())
}

fn check_budget(cfg: &GeneratorConfig, coeffs: &[Expr]) -> Result<(), ExpansionError> {
    let nodes = node_count(coeffs);
    if nodes > cfg.limits.node_budget {
        return Err(ExpansionError::BudgetExceeded {
            nodes,
            budget: cfg.limits.node_budget,
        });
    }
    Ok(())
}

/// Refuses the next order when the last growth factor, applied once more,
/// would already exceed the budget.
fn predict_budget(cfg: &GeneratorConfig, coeffs: &[Expr]) -> Result<(), ExpansionError> {
    let n = coeffs.len();
    let last = node_count(&coeffs[n - 1..]) as f64;
    let prev = node_count(&coeffs[n - 2..n - 1]).max(1) as f64;
    let predicted = node_count(coeffs) as f64 + last * (last / prev).max(1.0);
    if predicted > cfg.limits.node_budget as f64 {
        return Err(ExpansionError::BudgetExceeded {
            nodes: predicted as usize,
            budget: cfg.limits.node_budget,
        });
    }
    Ok(())
}

fn iterate(
    cfg: &GeneratorConfig,
    g0: Expr,
    order: usize,
    mut step: impl FnMut(&mut Generator, &Expr) -> Result<Expr, ExpansionError>,
) -> Result<Vec<Expr>, ExpansionError> {
    check_order(cfg, order)?;
    let mut gen = Generator::new(cfg.clone());
    let mut coeffs = vec![g0];
    for m in 0..order {
        if m > 0 {
            predict_budget(cfg, &coeffs)?;
        }
        let next = step(&mut gen, &coeffs[m])?;
        coeffs.push(next);
        check_budget(cfg, &coeffs)?;
        log::debug!("order {} built, {} nodes", m + 1, node_count(&coeffs));
    }
    Ok(coeffs)
}

/// `g_m = B^m f` for a time-independent `f`.
pub fn expand_regular(cfg: &GeneratorConfig, f: &Expr, order: usize) -> Result<ExpansionResult, ExpansionError> {
    if f.vars().has_time() {
        return Err(ExpansionError::Unsupported("regular expansion needs a time-independent target".into()));
    }
    crate::symexpr::check_dimension(f, cfg.dim())?;
    let coeffs = iterate(cfg, simplify(f), order, |g, e| Ok(g.apply_b(e)?))?;
    Ok(ExpansionResult::new(
        ExpansionKind::Regular,
        order,
        coeffs,
        None,
        cfg.model.name.clone(),
        cfg.jump_rule.clone(),
        None,
    ))
}

/// `g_m = (B - d/dt)^m u_0`.
pub fn expand_smoothed(cfg: &GeneratorConfig, sm: &Smoother, order: usize) -> Result<ExpansionResult, ExpansionError> {
    crate::symexpr::check_dimension(&sm.expr, cfg.dim())?;
    let coeffs = iterate(cfg, simplify(&sm.expr), order, |g, e| Ok(g.apply_b_minus_dt(e)?))?;
    Ok(ExpansionResult::new(
        ExpansionKind::Smoothed,
        order,
        coeffs,
        sm.limit.clone(),
        cfg.model.name.clone(),
        cfg.jump_rule.clone(),
        None,
    ))
}

/// `g_{m1,m2} = B^{m2} d_s^{m1} u_{0,s}`, stored row-major in `m1`.
pub fn expand_two_param(
    cfg: &GeneratorConfig,
    sm: &Smoother,
    m1: usize,
    m2: usize,
) -> Result<ExpansionResult, ExpansionError> {
    crate::symexpr::check_dimension(&sm.expr, cfg.dim())?;
    check_order(cfg, m1.max(m2))?;
    let mut gen = Generator::new(cfg.clone());
    let mut rows = vec![simplify(&sm.expr)];
    for _ in 0..m1 {
        let next = simplify(&gen.dt(rows.last().unwrap())?);
        rows.push(next);
    }
    let mut coeffs = Vec::with_capacity((m1 + 1) * (m2 + 1));
    for r in rows {
        coeffs.push(r);
        for _ in 0..m2 {
            let next = gen.apply_b(coeffs.last().unwrap())?;
            coeffs.push(next);
            check_budget(cfg, &coeffs)?;
        }
    }
    Ok(ExpansionResult::new(
        ExpansionKind::TwoParam { m1, m2 },
        m1 + m2,
        coeffs,
        sm.limit.clone(),
        cfg.model.name.clone(),
        cfg.jump_rule.clone(),
        None,
    ))
}

/// `P(N > k)` for `N ~ Poisson(mu)`.
pub fn poisson_tail(mu: f64, k: usize) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let mut pmf = (-mu).exp();
    for j in 1..=k {
        pmf *= mu / j as f64;
    }
    let mut tail = 0.0;
    let mut j = k + 1;
    loop {
        pmf *= mu / j as f64;
        tail += pmf;
        if pmf < 1e-17 * tail.max(1e-300) || j > k + 10_000 {
            break;
        }
        j += 1;
    }
    tail
}

/// Smallest `k` with `P(N > k) < tol`.
pub fn poisson_k_max(mu: f64, tol: f64) -> usize {
    (0..).find(|&k| poisson_tail(mu, k) < tol).unwrap()
}

/// Compound-Poisson jump law truncated at `k_max` jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonMixture {
    pub lambda: f64,
    pub k_max: usize,
    /// Per `k`: the Gauss rule of the `k`-fold sum of jumps.
    pub rules: Vec<QuadratureRule>,
}

impl PoissonMixture {
    fn build(cfg: &GeneratorConfig, k_max: Option<usize>) -> Result<Option<Self>, ExpansionError> {
        let Some(jumps) = &cfg.model.jumps else {
            return Ok(None);
        };
        let lambda = jumps.intensity.as_const().ok_or_else(|| {
            ExpansionError::Unsupported("the jump shortcut needs a constant intensity".into())
        })?;
        let marg = &jumps.distribution.marginals;
        if marg.iter().any(|m| !matches!(m, Marginal::None | Marginal::Normal { .. })) {
            return Err(ExpansionError::Unsupported(
                "the jump shortcut convolves normal jumps only".into(),
            ));
        }
        let n = match cfg.jump_rule.as_ref().map(|r| &r.provenance) {
            Some(Provenance::GaussHermite { n }) => *n,
            Some(Provenance::Tensor { parts }) => match parts.first() {
                Some(Provenance::GaussHermite { n }) => *n,
                _ => 10,
            },
            _ => 10,
        };
        let k_max = k_max.unwrap_or_else(|| poisson_k_max(lambda * SHORTCUT_DEFAULT_HORIZON, POISSON_TAIL_TOL));
        let mut rules = Vec::with_capacity(k_max + 1);
        rules.push(QuadratureRule::new(vec![vec![0.0; cfg.dim()]], vec![1.0], Provenance::Custom)?);
        for k in 1..=k_max {
            let kf = k as f64;
            let conv = marg
                .iter()
                .map(|m| match *m {
                    Marginal::Normal { mean, sd } => Marginal::Normal {
                        mean: kf * mean,
                        sd: kf.sqrt() * sd,
                    },
                    other => other,
                })
                .collect();
            let dist = JumpDistribution::new(conv).map_err(|e| ExpansionError::Unsupported(e.to_string()))?;
            rules.push(jump_rule(&dist, n)?);
        }
        Ok(Some(Self { lambda, k_max, rules }))
    }

    /// `sum_k exp(-lambda t) (lambda t)^k / k! sum_i w_i e(x + c_i^{(k)})`.
    fn apply(&self, subs: &mut [Vec<Substituter>], e: &Expr) -> Expr {
        let t = time();
        let decay = exp(&scale(-self.lambda, &t));
        let mut terms = Vec::with_capacity(self.k_max + 1);
        let mut coef = 1.0;
        for (k, (rule, sub)) in self.rules.iter().zip(subs.iter_mut()).enumerate() {
            if k > 0 {
                coef *= self.lambda / k as f64;
            }
            let avg = if k == 0 {
                e.clone()
            } else {
                add_all(rule.weights.iter().zip(sub.iter_mut()).map(|(&w, s)| scale(w, &s.apply(e))))
            };
            terms.push(mul_all([constant(coef), powf(&t, k as f64), decay.clone(), avg]));
        }
        add_all(terms)
    }

    fn substituters(&self) -> Vec<Vec<Substituter>> {
        self.rules
            .iter()
            .map(|r| r.nodes.iter().map(|c| Substituter::shift(c)).collect())
            .collect()
    }
}

/// Diffusive expansion of the closed-form jump semigroup applied to `f`:
/// `g_m = (A_D - r)^m B_{J,t} f`, with the Poisson mixture built
/// symbolically.
pub fn expand_jump_shortcut(
    cfg: &GeneratorConfig,
    f: &Expr,
    order: usize,
    k_max: Option<usize>,
) -> Result<ExpansionResult, ExpansionError> {
    if f.vars().has_time() {
        return Err(ExpansionError::Unsupported("the jump shortcut needs a time-independent target".into()));
    }
    crate::symexpr::check_dimension(f, cfg.dim())?;
    let mix = PoissonMixture::build(cfg, k_max)?;
    let g0 = match &mix {
        Some(m) => simplify(&m.apply(&mut m.substituters(), f)),
        None => simplify(f),
    };
    let coeffs = iterate(cfg, g0, order, |g, e| Ok(g.apply_ad_minus_r(e)?))?;
    Ok(ExpansionResult::new(
        ExpansionKind::JumpShortcut {
            k_max: mix.as_ref().map_or(0, |m| m.k_max),
            smoothed: false,
        },
        order,
        coeffs,
        None,
        cfg.model.name.clone(),
        cfg.jump_rule.clone(),
        mix,
    ))
}

/// Smoothed variant: `g_m = B_{J,t} (A_D - r - d/dt)^m u_0`. Only the
/// diffusive coefficients are symbolic; the mixture over jump counts and
/// quadrature nodes is applied when evaluating.
pub fn expand_jump_shortcut_smoothed(
    cfg: &GeneratorConfig,
    sm: &Smoother,
    order: usize,
    k_max: Option<usize>,
) -> Result<ExpansionResult, ExpansionError> {
    crate::symexpr::check_dimension(&sm.expr, cfg.dim())?;
    let mix = PoissonMixture::build(cfg, k_max)?;
    let coeffs = iterate(cfg, simplify(&sm.expr), order, |g, e| Ok(g.apply_ad_minus_r_dt(e)?))?;
    Ok(ExpansionResult::new(
        ExpansionKind::JumpShortcut {
            k_max: mix.as_ref().map_or(0, |m| m.k_max),
            smoothed: true,
        },
        order,
        coeffs,
        sm.limit.clone(),
        cfg.model.name.clone(),
        cfg.jump_rule.clone(),
        mix,
    ))
}

fn t_zero_error() -> ExpansionError {
    ExpansionError::Expr(ExprError::Domain {
        op: "smoother",
        detail: "t = 0 has no function limit for this smoother".into(),
    })
}

fn terms_from_buf(res: &ExpansionResult, buf: &[f64], t: f64) -> Vec<f64> {
    let tape = res.tape();
    let mut fac = 1.0;
    (0..res.coefficients.len())
        .map(|m| {
            let v = fac * tape.output(buf, m);
            fac *= t / (m + 1) as f64;
            v
        })
        .collect()
}

fn two_param_terms(res: &ExpansionResult, buf: &[f64], m1: usize, m2: usize, s: f64, t: f64) -> Vec<f64> {
    let tape = res.tape();
    let mut terms = vec![0.0; m1 + m2 + 1];
    let mut fs = 1.0;
    for i in 0..=m1 {
        let mut ft = 1.0;
        for j in 0..=m2 {
            terms[i + j] += fs * ft * tape.output(buf, i * (m2 + 1) + j);
            ft *= t / (j + 1) as f64;
        }
        fs *= -s / (i + 1) as f64;
    }
    terms
}

/// Terms of a smoothed shortcut: the diffusive terms averaged over the
/// Poisson mixture, dropping jump counts whose probability mass beyond
/// them is below the tolerance.
fn mixture_terms(
    res: &ExpansionResult,
    mix: &PoissonMixture,
    p: &EvalPoint,
    buf: &mut Vec<f64>,
) -> Result<Vec<f64>, ExpansionError> {
    let mu = mix.lambda * p.t;
    let k_eff = if mu > 0.0 {
        mix.k_max.min(poisson_k_max(mu, POISSON_TAIL_TOL))
    } else {
        0
    };
    let mut terms = vec![0.0; res.coefficients.len()];
    let mut x = p.x.clone();
    let mut pk = (-mu).exp();
    for (k, rule) in mix.rules.iter().enumerate().take(k_eff + 1) {
        if k > 0 {
            pk *= mu / k as f64;
        }
        for (c, &w) in rule.nodes.iter().zip(&rule.weights) {
            for ((xi, &x0), &ci) in x.iter_mut().zip(&p.x).zip(c) {
                *xi = x0 + ci;
            }
            res.tape().run(&x, p.t, &p.params, buf)?;
            for (acc, v) in terms.iter_mut().zip(terms_from_buf(res, buf, p.t)) {
                *acc += pk * w * v;
            }
        }
    }
    Ok(terms)
}

fn eval_with(res: &ExpansionResult, p: &EvalPoint, buf: &mut Vec<f64>) -> Result<(f64, TermDiagnostics), ExpansionError> {
    if p.t < 0.0 || !p.t.is_finite() {
        return Err(ExpansionError::Expr(ExprError::Domain {
            op: "time",
            detail: format!("t = {}", p.t),
        }));
    }
    if p.t == 0.0 && res.is_smoothed() {
        let lim = res.limit.as_ref().ok_or_else(t_zero_error)?;
        let v = evaluate(lim, p)?;
        let d = TermDiagnostics::from_terms(vec![v]);
        return Ok((v, d));
    }
    if let Some(mix) = &res.mixture {
        let tail = poisson_tail(mix.lambda * p.t, mix.k_max);
        if tail > POISSON_TAIL_TOL {
            log::warn!("Poisson truncation at k = {} leaves tail mass {tail:.3e} at t = {}", mix.k_max, p.t);
        }
        if let ExpansionKind::JumpShortcut { smoothed: true, .. } = res.kind {
            let d = TermDiagnostics::from_terms(mixture_terms(res, mix, p, buf)?);
            return Ok((d.value(), d));
        }
    }
    res.tape().run(&p.x, p.t, &p.params, buf)?;
    let terms = match res.kind {
        ExpansionKind::TwoParam { m1, m2 } => two_param_terms(res, buf, m1, m2, p.t, p.t),
        _ => terms_from_buf(res, buf, p.t),
    };
    let d = TermDiagnostics::from_terms(terms);
    Ok((d.value(), d))
}

/// `sum_m t^m / m! g_m(x, t)` with per-term diagnostics. Smoothed
/// expansions return the smoothed target `f(x)` at `t = 0`.
pub fn evaluate_expansion(res: &ExpansionResult, p: &EvalPoint) -> Result<(f64, TermDiagnostics), ExpansionError> {
    eval_with(res, p, &mut Vec::new())
}

/// Evaluates at many points in parallel; results are in point order.
pub fn evaluate_batch(
    res: &ExpansionResult,
    points: &[EvalPoint],
) -> Result<Vec<(f64, TermDiagnostics)>, ExpansionError> {
    use rayon::prelude::*;
    res.tape();
    points
        .par_iter()
        .map_init(Vec::new, |buf, p| eval_with(res, p, buf))
        .collect()
}

/// Two-parameter evaluation at independent smoothing time `s` and horizon `t`.
pub fn evaluate_two_param(
    res: &ExpansionResult,
    x: &[f64],
    s: f64,
    t: f64,
    params: &[f64],
) -> Result<(f64, TermDiagnostics), ExpansionError> {
    let ExpansionKind::TwoParam { m1, m2 } = res.kind else {
        return Err(ExpansionError::Shape("not a two-parameter expansion".into()));
    };
    if s <= 0.0 {
        return Err(t_zero_error());
    }
    let mut buf = Vec::new();
    res.tape().run(x, s, params, &mut buf)?;
    let d = TermDiagnostics::from_terms(two_param_terms(res, &buf, m1, m2, s, t));
    Ok((d.value(), d))
}

/// Transition-density approximation around a Gaussian auxiliary model.
#[derive(Debug, Clone)]
pub struct DensityApprox {
    pub expansion: ExpansionResult,
    pub dim: usize,
}

impl DensityApprox {
    pub fn evaluate(&self, y: &[f64], x: &[f64], t: f64) -> Result<(f64, TermDiagnostics), ExpansionError> {
        if y.len() != self.dim || x.len() != self.dim {
            return Err(ExpansionError::Shape(format!("density points must have length {}", self.dim)));
        }
        evaluate_expansion(&self.expansion, &EvalPoint::new(x.to_vec(), t).with_params(y.to_vec()))
    }

    /// Values at many targets `y` for one `(x, t)`, in parallel.
    pub fn evaluate_grid(&self, ys: &[Vec<f64>], x: &[f64], t: f64) -> Result<Vec<(f64, TermDiagnostics)>, ExpansionError> {
        let pts: Vec<EvalPoint> = ys
            .iter()
            .map(|y| EvalPoint::new(x.to_vec(), t).with_params(y.clone()))
            .collect();
        evaluate_batch(&self.expansion, &pts)
    }
}

/// `p_t(y|x) ~ sum_m t^m / m! (B - d/dt)^m p_{0,t}(y|x)` with `p_0` the
/// density of Brownian motion with drift `mu0` and covariance `sigma0_sq`.
pub fn density_approx(
    cfg: &GeneratorConfig,
    mu0: &[f64],
    sigma0_sq: &[Vec<f64>],
    order: usize,
) -> Result<DensityApprox, ExpansionError> {
    if mu0.len() != cfg.dim() {
        return Err(ExpansionError::Shape(format!(
            "auxiliary drift has length {} for a {}-dimensional model",
            mu0.len(),
            cfg.dim()
        )));
    }
    let sm = gaussian_density_smoother_symbolic(mu0, sigma0_sq)
        .map_err(|e| ExpansionError::Unsupported(e.to_string()))?;
    Ok(DensityApprox {
        expansion: expand_smoothed(cfg, &sm, order)?,
        dim: cfg.dim(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn onset_definition() {
        assert_eq!(divergence_onset(&[5.0, 1.0, 0.5, 0.1]), None);
        assert_eq!(divergence_onset(&[5.0, 1.0, 2.0]), Some(1));
        assert_eq!(divergence_onset(&[0.1, 1.0, 0.5, 0.6]), Some(2));
        assert_eq!(divergence_onset(&[1.0]), None);
    }

    #[test]
    fn poisson_tail_values() {
        assert!((poisson_tail(1.0, 0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(poisson_tail(0.0, 0), 0.0);
        let k = poisson_k_max(0.5, 1e-12);
        assert!(poisson_tail(0.5, k) < 1e-12 && poisson_tail(0.5, k - 1) >= 1e-12);
    }
}
