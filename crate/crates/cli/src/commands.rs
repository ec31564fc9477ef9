//! The price, density, moment and mc commands.
//!
//! Each command returns a [`Report`]: rows for the CSV file plus per-group
//! summaries and warnings for the JSON summary. Rows come out in a fixed
//! order (maturity, order, quadrature size, grid point) so identical
//! configs give identical output regardless of scheduling.

use jdexpand::expansion::{
    content_hash, density_approx, divergence_onset, evaluate_batch, expand_jump_shortcut_smoothed, expand_regular,
    expand_smoothed, model_fingerprint, poisson_k_max, poly_generator_matrix, poly_moment, ExpansionCache,
    ExpansionResult, TermDiagnostics, POISSON_TAIL_TOL,
};
use jdexpand::error::ExpansionError;
use jdexpand::generator::{ExpansionLimits, GeneratorConfig, DEFAULT_MAX_ORDER, DEFAULT_NODE_BUDGET};
use jdexpand::mcbench::{simulate_moment, simulate_moment_grid, MCConfig, MCEstimate};
use jdexpand::model::{
    gaussian_density_smoother_symbolic, CatalogModel, JumpDiffusionModel, Marginal, Smoother, SmootherKind,
};
use jdexpand::symexpr::{abs, constant, evaluate, exp, parse, scale, state, sub, to_polynomial, EvalPoint, Expr};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{Axis, ExperimentConfig, Method};
use crate::error::CliError;

pub const PRICE_HEADER: &str = "model,delta,M,quad_n,S,approx,mc,mc_se,abs_err,pct_err,divergence_onset";
pub const MOMENT_HEADER: &str = "model,delta,M,quad_n,value,exact,abs_err,divergence_onset";
pub const MC_HEADER: &str = "model,delta,S,mc,mc_se,paths,steps,seed";

/// Printed whenever a divergence onset is detected.
pub const CAUTION: &str = "caution: expansion terms stopped shrinking at some grid points (see the \
divergence_onset column); the series may be outside its radius of convergence at these maturities, \
so higher orders need not be more accurate";

#[derive(Debug, Clone, Serialize)]
pub struct Report<R, S> {
    pub config_hash: String,
    #[serde(skip)]
    pub rows: Vec<R>,
    pub summaries: Vec<S>,
    pub warnings: Vec<String>,
}

impl<R, S: Serialize> Report<R, S> {
    /// `{config_hash, summaries, warnings}`.
    pub fn summary_json(&self) -> String
    where
        R: Serialize,
    {
        serde_json::to_string_pretty(self).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRow {
    pub model: String,
    pub delta: f64,
    pub order: usize,
    pub quad_n: usize,
    pub s: f64,
    pub approx: f64,
    pub mc: f64,
    pub mc_se: f64,
    pub abs_err: f64,
    pub pct_err: Option<f64>,
    pub divergence_onset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSummary {
    pub delta: f64,
    pub order: usize,
    pub quad_n: usize,
    pub max_abs_err: f64,
    pub max_pct_err: Option<f64>,
    pub max_mc_se: f64,
    pub onset_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub model: String,
    pub delta: f64,
    pub order: usize,
    pub quad_n: usize,
    pub y: Vec<f64>,
    pub density: f64,
    pub exact: Option<f64>,
    pub divergence_onset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySummary {
    pub delta: f64,
    pub order: usize,
    pub quad_n: usize,
    /// Trapezoid integral over the grid; absent for single-point axes.
    pub normalization: Option<f64>,
    pub min_density: f64,
    pub negative_points: usize,
    pub sup_abs_err: Option<f64>,
    pub onset_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub model: String,
    pub delta: f64,
    pub order: usize,
    pub quad_n: usize,
    pub value: f64,
    pub exact: Option<f64>,
    pub abs_err: Option<f64>,
    pub divergence_onset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub model: String,
    pub delta: f64,
    pub s: Option<f64>,
    pub mc: f64,
    pub mc_se: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub delta: f64,
    pub max_mc_se: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

fn limits(cfg: &ExperimentConfig) -> ExpansionLimits {
    ExpansionLimits {
        max_order: cfg.max_order().max(DEFAULT_MAX_ORDER),
        node_budget: cfg.node_budget.unwrap_or(DEFAULT_NODE_BUDGET),
    }
}

fn generator_config(cfg: &ExperimentConfig, model: &JumpDiffusionModel, n: usize) -> Result<GeneratorConfig, CliError> {
    let g = if model.has_jumps() {
        GeneratorConfig::with_gauss_rule(model.clone(), n)
    } else {
        GeneratorConfig::new(model.clone(), None)
    };
    Ok(g.map_err(|e| CliError::Config(e.to_string()))?.with_limits(limits(cfg)))
}

/// Quadrature sizes to sweep; a single `0` for models without jumps.
fn quad_sizes(cfg: &ExperimentConfig, model: &JumpDiffusionModel) -> Vec<usize> {
    if model.has_jumps() {
        cfg.quad_sizes.clone()
    } else {
        vec![0]
    }
}

fn shortcut_applies(model: &JumpDiffusionModel) -> bool {
    model.jumps.as_ref().is_some_and(|j| {
        j.intensity.as_const().is_some()
            && j
                .distribution
                .marginals
                .iter()
                .all(|m| matches!(m, Marginal::None | Marginal::Normal { .. }))
    })
}

fn use_shortcut(method: Method, model: &JumpDiffusionModel) -> Result<bool, CliError> {
    match method {
        Method::Auto => Ok(shortcut_applies(model)),
        Method::Generator => Ok(false),
        Method::Shortcut if shortcut_applies(model) => Ok(true),
        Method::Shortcut => Err(CliError::Config(
            "method 'shortcut' needs normal jumps at a constant intensity".into(),
        )),
    }
}

fn open_cache(cfg: &ExperimentConfig) -> Result<Option<ExpansionCache>, CliError> {
    cfg.cache_dir.as_ref().map(ExpansionCache::new).transpose().map_err(CliError::Io)
}

fn cached(
    cache: Option<&ExpansionCache>,
    parts: &[&str],
    build: impl FnOnce() -> Result<ExpansionResult, ExpansionError>,
) -> Result<ExpansionResult, CliError> {
    let key = content_hash(parts);
    if let Some(hit) = cache.and_then(|c| c.get(&key)) {
        log::debug!("expansion cache hit {key}");
        return Ok(hit);
    }
    let res = build()?;
    if let Some(c) = cache {
        if let Err(e) = c.put(&key, &res) {
            log::warn!("could not write expansion cache entry {key}: {e}");
        }
    }
    Ok(res)
}

/// `(e^x - K)^+` in the log-price `x0`.
pub fn call_payoff(strike: f64) -> Expr {
    let y = sub(&exp(&state(0)), &constant(strike));
    scale(0.5, &(&y + &abs(&y)))
}

/// The configured smoother, or a Black-Scholes call whose rate and
/// volatility match the model's log-price drift and variance at `x0`.
pub fn price_smoother(cfg: &ExperimentConfig, model: &JumpDiffusionModel) -> Result<Smoother, CliError> {
    let kind = match &cfg.smoother {
        Some(k) => k.clone(),
        None => {
            let mut x = cfg.x0.clone();
            x[0] = cfg.strike.ln();
            let var = model.diffusion_at(&x)?[0][0];
            let drift = model.drift_at(&x)?[0];
            if !(var > 0.0) {
                return Err(CliError::Config(format!(
                    "automatic smoother needs a positive price variance at x0, got {var}"
                )));
            }
            SmootherKind::BsCall {
                strike: cfg.strike,
                rate: drift + 0.5 * var,
                vol: var.sqrt(),
                coord: 0,
            }
        }
    };
    Ok(Smoother::from_kind(&kind)?)
}

fn mc_seed(cfg: &ExperimentConfig, maturity_index: usize) -> MCConfig {
    MCConfig {
        seed: cfg.mc.seed.wrapping_add(maturity_index as u64),
        ..cfg.mc
    }
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, f64::max)
}

/// Value and onset of the order-`m` truncation.
fn truncate(d: &TermDiagnostics, m: usize) -> (f64, Option<usize>) {
    let m = m.min(d.terms.len() - 1);
    (d.partial_sums[m], divergence_onset(&d.terms[..=m]))
}

/// Builds the price expansion for one quadrature size.
pub fn price_expansion(
    cfg: &ExperimentConfig,
    model: &JumpDiffusionModel,
    sm: &Smoother,
    n: usize,
) -> Result<ExpansionResult, CliError> {
    let shortcut = use_shortcut(cfg.method, model)?;
    let g = generator_config(cfg, model, n)?;
    let order = cfg.max_order();
    let fp = model_fingerprint(model);
    let sk = serde_json::to_string(&sm.kind).unwrap();
    let cache = open_cache(cfg)?;
    if shortcut {
        let lambda = model.intensity().and_then(Expr::as_const).unwrap_or(0.0);
        let horizon = cfg.maturities.iter().copied().fold(0.0, f64::max);
        let k_max = poisson_k_max(lambda * horizon, POISSON_TAIL_TOL);
        let parts = [fp.as_str(), &sk, "shortcut", &order.to_string(), &n.to_string(), &k_max.to_string()];
        cached(cache.as_ref(), &parts, || expand_jump_shortcut_smoothed(&g, sm, order, Some(k_max)))
    } else {
        let parts = [fp.as_str(), &sk, "generator", &order.to_string(), &n.to_string()];
        cached(cache.as_ref(), &parts, || expand_smoothed(&g, sm, order))
    }
}

pub fn cmd_price(cfg: &ExperimentConfig) -> Result<Report<PriceRow, PriceSummary>, CliError> {
    let model = cfg.build_model()?;
    let label = cfg.label(&model);
    let sm = price_smoother(cfg, &model)?;
    let grid = cfg.price_grid.points();
    let offsets: Vec<f64> = grid.iter().map(|s| (s / cfg.strike).ln()).collect();
    let mut base = cfg.x0.clone();
    base[0] = cfg.strike.ln();
    let sizes = quad_sizes(cfg, &model);

    // evals[n][delta][s]
    let mut evals = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let res = price_expansion(cfg, &model, &sm, n)?;
        log::info!("price expansion n = {n}: {} nodes", res.node_count());
        let mut per_delta = Vec::with_capacity(cfg.maturities.len());
        for &delta in &cfg.maturities {
            let pts: Vec<EvalPoint> = offsets
                .iter()
                .map(|o| {
                    let mut x = base.clone();
                    x[0] += o;
                    EvalPoint::new(x, delta)
                })
                .collect();
            let out = evaluate_batch(&res, &pts)?;
            per_delta.push(out.into_iter().map(|(_, d)| d).collect::<Vec<_>>());
        }
        evals.push(per_delta);
    }

    let payoff = call_payoff(cfg.strike);
    let mut mc = Vec::with_capacity(cfg.maturities.len());
    for (i, &delta) in cfg.maturities.iter().enumerate() {
        mc.push(simulate_moment_grid(&model, &payoff, delta, &base, 0, &offsets, &mc_seed(cfg, i))?);
    }

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (di, &delta) in cfg.maturities.iter().enumerate() {
        for &m in &cfg.orders {
            for (ni, &n) in sizes.iter().enumerate() {
                let start = rows.len();
                for (si, &s) in grid.iter().enumerate() {
                    let (approx, onset) = truncate(&evals[ni][di][si], m);
                    let est = &mc[di][si];
                    let abs_err = (approx - est.mean).abs();
                    rows.push(PriceRow {
                        model: label.clone(),
                        delta,
                        order: m,
                        quad_n: n,
                        s,
                        approx,
                        mc: est.mean,
                        mc_se: est.std_error,
                        abs_err,
                        pct_err: (est.mean > 0.0).then(|| abs_err / est.mean),
                        divergence_onset: onset,
                    });
                }
                summaries.push(summarize_price(&rows[start..]));
            }
        }
    }
    let mut warnings = Vec::new();
    let onsets = rows.iter().filter(|r| r.divergence_onset.is_some()).count();
    if onsets > 0 {
        warnings.push(format!("{CAUTION} ({onsets} of {} rows)", rows.len()));
    }
    Ok(Report {
        config_hash: cfg.hash(),
        rows,
        summaries,
        warnings,
    })
}

/// Summary of the rows of one `(delta, M, quad_n)` group.
pub fn summarize_price(rows: &[PriceRow]) -> PriceSummary {
    let pct: Vec<f64> = rows.iter().filter_map(|r| r.pct_err).collect();
    PriceSummary {
        delta: rows[0].delta,
        order: rows[0].order,
        quad_n: rows[0].quad_n,
        max_abs_err: max_of(rows.iter().map(|r| r.abs_err)),
        max_pct_err: (!pct.is_empty()).then(|| max_of(pct.into_iter())),
        max_mc_se: max_of(rows.iter().map(|r| r.mc_se)),
        onset_points: rows.iter().filter(|r| r.divergence_onset.is_some()).count(),
    }
}

/// Grid axes around the auxiliary mean at maturity `delta`.
fn auto_axes(model: &JumpDiffusionModel, x0: &[f64], mu0: &[f64], s0: &[Vec<f64>], delta: f64) -> Vec<Axis> {
    (0..model.dim)
        .map(|i| {
            let c = x0[i] + mu0[i] * delta;
            let sd = (s0[i][i] * delta).sqrt();
            let (mut lo, mut hi) = (c - 10.0 * sd, c + 10.0 * sd);
            if let Some(Marginal::Normal { mean, sd: sj }) = model.jumps.as_ref().map(|j| &j.distribution.marginals[i]) {
                lo += (mean - 6.0 * sj).min(0.0);
                hi += (mean + 6.0 * sj).max(0.0);
            }
            let h = sd / 6.0;
            let n = ((hi - lo) / h).ceil() as usize + 1;
            Axis {
                lo,
                hi: lo + h * (n - 1) as f64,
                n,
            }
        })
        .collect()
}

fn tensor_grid(axes: &[Axis]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for a in axes {
        let pts = a.points();
        out = out
            .into_iter()
            .flat_map(|p| {
                pts.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Trapezoid rule on a row-major tensor grid.
fn trapezoid_nd(axes: &[Axis], vals: &[f64]) -> Option<f64> {
    if axes.iter().any(|a| a.n < 2) {
        return None;
    }
    let mut cur = vals.to_vec();
    for a in axes.iter().rev() {
        let h = (a.hi - a.lo) / (a.n - 1) as f64;
        cur = cur
            .chunks(a.n)
            .map(|c| h * (c.iter().sum::<f64>() - 0.5 * (c[0] + c[a.n - 1])))
            .collect();
    }
    Some(cur[0])
}

/// Closed-form transition density for catalog models that have one.
fn exact_density(cat: Option<&CatalogModel>) -> Option<Box<dyn Fn(&[f64], &[f64], f64) -> f64>> {
    match cat? {
        CatalogModel::Bm { mu0, sigma0_sq } => {
            let e = gaussian_density_smoother_symbolic(mu0, sigma0_sq).ok()?.expr;
            Some(Box::new(move |y, x, t| {
                evaluate(&e, &EvalPoint::new(x.to_vec(), t).with_params(y.to_vec())).unwrap_or(f64::NAN)
            }))
        }
        CatalogModel::Ou(p) => {
            let p = *p;
            Some(Box::new(move |y, x, t| {
                let decay = (-p.kappa * t).exp();
                let mean = p.alpha + (x[0] - p.alpha) * decay;
                let var = p.sigma * p.sigma * (1.0 - decay * decay) / (2.0 * p.kappa);
                (-(y[0] - mean) * (y[0] - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            }))
        }
        _ => None,
    }
}

pub fn density_header(dim: usize) -> String {
    let ys: Vec<String> = (0..dim).map(|i| format!("y{i}")).collect();
    format!("model,delta,M,quad_n,{},density,exact,abs_err,divergence_onset", ys.join(","))
}

pub fn cmd_density(cfg: &ExperimentConfig) -> Result<Report<DensityRow, DensitySummary>, CliError> {
    let model = cfg.build_model()?;
    let label = cfg.label(&model);
    let spec = cfg.density.clone().unwrap_or_default();
    let mu0 = match spec.mu0 {
        Some(m) => m,
        None => model.drift_at(&cfg.x0)?,
    };
    let s0 = match spec.sigma0_sq {
        Some(s) => s,
        None => model.diffusion_at(&cfg.x0)?,
    };
    let exact = exact_density(cfg.catalog().as_ref());
    let cache = open_cache(cfg)?;
    let fp = model_fingerprint(&model);
    let aux = serde_json::to_string(&(&mu0, &s0)).unwrap();
    let order = cfg.max_order();

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let sizes = quad_sizes(cfg, &model);
    let mut expansions = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let g = generator_config(cfg, &model, n)?;
        let parts = [fp.as_str(), &aux, "density", &order.to_string(), &n.to_string()];
        let res = cached(cache.as_ref(), &parts, || Ok(density_approx(&g, &mu0, &s0, order)?.expansion))?;
        expansions.push(res);
    }
    for &delta in &cfg.maturities {
        let axes = match &spec.axes {
            Some(a) => a.clone(),
            None => auto_axes(&model, &cfg.x0, &mu0, &s0, delta),
        };
        if axes.len() != model.dim {
            return Err(CliError::Config(format!("density needs {} axes, got {}", model.dim, axes.len())));
        }
        let ys = tensor_grid(&axes);
        let exact_vals: Option<Vec<f64>> = exact.as_ref().map(|f| ys.iter().map(|y| f(y, &cfg.x0, delta)).collect());
        let diags: Vec<Vec<TermDiagnostics>> = expansions
            .iter()
            .map(|res| {
                let pts: Vec<EvalPoint> = ys
                    .iter()
                    .map(|y| EvalPoint::new(cfg.x0.clone(), delta).with_params(y.clone()))
                    .collect();
                Ok(evaluate_batch(res, &pts)?.into_iter().map(|(_, d)| d).collect())
            })
            .collect::<Result<_, CliError>>()?;
        for &m in &cfg.orders {
            for (ni, &n) in sizes.iter().enumerate() {
                let mut vals = Vec::with_capacity(ys.len());
                let mut onsets = 0;
                for (k, y) in ys.iter().enumerate() {
                    let (v, onset) = truncate(&diags[ni][k], m);
                    onsets += onset.is_some() as usize;
                    vals.push(v);
                    rows.push(DensityRow {
                        model: label.clone(),
                        delta,
                        order: m,
                        quad_n: n,
                        y: y.clone(),
                        density: v,
                        exact: exact_vals.as_ref().map(|e| e[k]),
                        divergence_onset: onset,
                    });
                }
                summaries.push(DensitySummary {
                    delta,
                    order: m,
                    quad_n: n,
                    normalization: trapezoid_nd(&axes, &vals),
                    min_density: vals.iter().copied().fold(f64::INFINITY, f64::min),
                    negative_points: vals.iter().filter(|v| **v < 0.0).count(),
                    sup_abs_err: exact_vals
                        .as_ref()
                        .map(|e| max_of(e.iter().zip(&vals).map(|(a, b)| (a - b).abs()))),
                    onset_points: onsets,
                });
            }
        }
    }
    let mut warnings = Vec::new();
    let onsets: usize = summaries.iter().map(|s| s.onset_points).sum();
    if onsets > 0 {
        warnings.push(format!("{CAUTION} ({onsets} of {} rows)", rows.len()));
    }
    for s in &summaries {
        if s.negative_points > 0 {
            warnings.push(format!(
                "delta {} M {}: density is negative at {} grid points (min {:e})",
                s.delta, s.order, s.negative_points, s.min_density
            ));
        }
    }
    Ok(Report {
        config_hash: cfg.hash(),
        rows,
        summaries,
        warnings,
    })
}

/// `E[f(x_t)]` by the matrix exponential when the model is polynomial.
fn exact_moment(g: &GeneratorConfig, f: &Expr, x: &[f64], t: f64) -> Result<f64, CliError> {
    let p = to_polynomial(f, g.dim()).ok_or_else(|| CliError::Eval("target is not a polynomial".into()))?;
    let pg = poly_generator_matrix(g, p.degree())?;
    let mut c = DVector::zeros(pg.len());
    for (alpha, coef) in &p.terms {
        c[pg.index_of(alpha).unwrap()] = *coef;
    }
    Ok(poly_moment(&pg, &c, t, x)?)
}

pub fn cmd_moment(cfg: &ExperimentConfig) -> Result<Report<MomentRow, MomentRow>, CliError> {
    let model = cfg.build_model()?;
    let label = cfg.label(&model);
    let spec = cfg
        .moment
        .as_ref()
        .ok_or_else(|| CliError::Config("the moment command needs a 'moment' section".into()))?;
    let f = parse(&spec.f).map_err(|e| CliError::Config(format!("moment.f: {e}")))?;
    let cache = open_cache(cfg)?;
    let fp = model_fingerprint(&model);
    let order = cfg.max_order();
    let sizes = quad_sizes(cfg, &model);
    let mut warnings = Vec::new();
    let mut per_n = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let g = generator_config(cfg, &model, n)?;
        let parts = [fp.as_str(), &spec.f, "regular", &order.to_string(), &n.to_string()];
        let res = cached(cache.as_ref(), &parts, || expand_regular(&g, &f, order))?;
        let pts: Vec<EvalPoint> = cfg.maturities.iter().map(|&d| EvalPoint::new(cfg.x0.clone(), d)).collect();
        let diags: Vec<TermDiagnostics> = evaluate_batch(&res, &pts)?.into_iter().map(|(_, d)| d).collect();
        let exact: Vec<Option<f64>> = cfg
            .maturities
            .iter()
            .map(|&d| match exact_moment(&g, &f, &cfg.x0, d) {
                Ok(v) => Some(v),
                Err(e) => {
                    if warnings.is_empty() {
                        warnings.push(format!("no matrix-exponential reference: {e}"));
                    }
                    None
                }
            })
            .collect();
        per_n.push((diags, exact));
    }
    let mut rows = Vec::new();
    for (di, &delta) in cfg.maturities.iter().enumerate() {
        for &m in &cfg.orders {
            for (ni, &n) in sizes.iter().enumerate() {
                let (diags, exact) = &per_n[ni];
                let (value, onset) = truncate(&diags[di], m);
                rows.push(MomentRow {
                    model: label.clone(),
                    delta,
                    order: m,
                    quad_n: n,
                    value,
                    exact: exact[di],
                    abs_err: exact[di].map(|e| (value - e).abs()),
                    divergence_onset: onset,
                });
            }
        }
    }
    if rows.iter().any(|r| r.divergence_onset.is_some()) {
        warnings.push(CAUTION.to_string());
    }
    Ok(Report {
        config_hash: cfg.hash(),
        summaries: rows.clone(),
        rows,
        warnings,
    })
}

pub fn cmd_mc(cfg: &ExperimentConfig) -> Result<Report<McRow, McSummary>, CliError> {
    let model = cfg.build_model()?;
    let label = cfg.label(&model);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (i, &delta) in cfg.maturities.iter().enumerate() {
        let mc_cfg = mc_seed(cfg, i);
        let ests: Vec<(Option<f64>, MCEstimate)> = match &cfg.moment {
            Some(spec) => {
                let f = parse(&spec.f).map_err(|e| CliError::Config(format!("moment.f: {e}")))?;
                vec![(None, simulate_moment(&model, &f, delta, &cfg.x0, &mc_cfg)?)]
            }
            None => {
                let grid = cfg.price_grid.points();
                let offsets: Vec<f64> = grid.iter().map(|s| (s / cfg.strike).ln()).collect();
                let mut base = cfg.x0.clone();
                base[0] = cfg.strike.ln();
                let est = simulate_moment_grid(&model, &call_payoff(cfg.strike), delta, &base, 0, &offsets, &mc_cfg)?;
                grid.into_iter().map(Some).zip(est).collect()
            }
        };
        let first = &ests[0].1;
        summaries.push(McSummary {
            delta,
            max_mc_se: max_of(ests.iter().map(|(_, e)| e.std_error)),
            paths: first.paths_used,
            steps: first.steps,
            seed: first.seed,
        });
        for (s, e) in ests {
            rows.push(McRow {
                model: label.clone(),
                delta,
                s,
                mc: e.mean,
                mc_se: e.std_error,
                paths: e.paths_used,
                steps: e.steps,
                seed: e.seed,
            });
        }
    }
    Ok(Report {
        config_hash: cfg.hash(),
        rows,
        summaries,
        warnings: Vec::new(),
    })
}

/// Human-readable summary lines: one per `(delta, M, quad_n)` group.
pub fn price_table(summaries: &[PriceSummary]) -> Vec<String> {
    summaries
        .iter()
        .map(|s| {
            format!(
                "delta={:.6} M={} n={} max_abs_err={:.6e} max_pct_err={} max_mc_se={:.3e} onsets={}",
                s.delta,
                s.order,
                s.quad_n,
                s.max_abs_err,
                s.max_pct_err.map_or("-".to_string(), |p| format!("{p:.4e}")),
                s.max_mc_se,
                s.onset_points
            )
        })
        .collect()
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

fn opt_idx(v: Option<usize>) -> String {
    v.map_or(String::new(), |m| m.to_string())
}

pub fn price_csv(rows: &[PriceRow]) -> String {
    let mut out = format!("{PRICE_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            num(r.delta),
            r.order,
            r.quad_n,
            num(r.s),
            num(r.approx),
            num(r.mc),
            num(r.mc_se),
            num(r.abs_err),
            opt(r.pct_err),
            opt_idx(r.divergence_onset)
        );
    }
    out
}

pub fn density_csv(rows: &[DensityRow]) -> String {
    let dim = rows.first().map_or(1, |r| r.y.len());
    let mut out = density_header(dim) + "\n";
    for r in rows {
        let ys: Vec<String> = r.y.iter().map(|v| num(*v)).collect();
        out += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model,
            num(r.delta),
            r.order,
            r.quad_n,
            ys.join(","),
            num(r.density),
            opt(r.exact),
            opt(r.exact.map(|e| (e - r.density).abs())),
            opt_idx(r.divergence_onset)
        );
    }
    out
}

pub fn moment_csv(rows: &[MomentRow]) -> String {
    let mut out = format!("{MOMENT_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model,
            num(r.delta),
            r.order,
            r.quad_n,
            num(r.value),
            opt(r.exact),
            opt(r.abs_err),
            opt_idx(r.divergence_onset)
        );
    }
    out
}

pub fn mc_csv(rows: &[McRow]) -> String {
    let mut out = format!("{MC_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model,
            num(r.delta),
            opt(r.s),
            num(r.mc),
            num(r.mc_se),
            r.paths,
            r.steps,
            r.seed
        );
    }
    out
}
