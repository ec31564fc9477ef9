//! Catalog of benchmark models.
//!
//! Price coordinates are log-prices. Every model is written under the
//! risk-neutral measure with a zero discount rate, so expansions and
//! simulations target the undiscounted expected payoff.

use serde::{Deserialize, Serialize};

use super::{check_spd, JumpDiffusionModel, JumpDistribution, Marginal};
use crate::error::ModelError;
use crate::symexpr::{constant, exp, powf, scale, state};

fn positive(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be positive, got {v}"),
        })
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be nonnegative, got {v}"),
        })
    }
}

fn finite(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be finite, got {v}"),
        })
    }
}

fn correlation(rho: f64) -> Result<(), ModelError> {
    if rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name: "rho",
            reason: format!("|rho| must be < 1, got {rho}"),
        })
    }
}

/// `exp(m + s^2/2) - 1`.
pub fn lognormal_jump_mean(m_j: f64, sigma_j: f64) -> f64 {
    (m_j + 0.5 * sigma_j * sigma_j).exp_m1()
}

/// Square-root / CEV / GARCH stochastic volatility with lognormal price
/// jumps. State `(s, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvParams {
    pub beta: f64,
    pub r: f64,
    #[serde(default)]
    pub delta: f64,
    pub kappa_v: f64,
    pub alpha_v: f64,
    pub sigma_v: f64,
    pub rho: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub m_j: f64,
    pub sigma_j: f64,
}

pub fn make_sv_model(p: &SvParams) -> Result<JumpDiffusionModel, ModelError> {
    positive("kappa_v", p.kappa_v)?;
    positive("alpha_v", p.alpha_v)?;
    positive("sigma_v", p.sigma_v)?;
    if !(0.5..=1.0).contains(&p.beta) {
        return Err(ModelError::InvalidParameter {
            name: "beta",
            reason: format!("must lie in [1/2, 1], got {}", p.beta),
        });
    }
    correlation(p.rho)?;
    nonnegative("lambda0", p.lambda0)?;
    nonnegative("lambda1", p.lambda1)?;
    finite("r", p.r)?;
    finite("delta", p.delta)?;
    finite("m_j", p.m_j)?;
    positive("sigma_j", p.sigma_j)?;

    let v = state(1);
    let jbar = lognormal_jump_mean(p.m_j, p.sigma_j);
    let intensity = constant(p.lambda0) + scale(p.lambda1, &v);
    let drift = vec![
        constant(p.r - p.delta) - scale(0.5, &v) - scale(jbar, &intensity),
        scale(p.kappa_v, &(constant(p.alpha_v) - &v)),
    ];
    let cross = scale(p.rho * p.sigma_v, &powf(&v, p.beta + 0.5));
    let diffusion_sq = vec![
        vec![v.clone(), cross.clone()],
        vec![cross, scale(p.sigma_v * p.sigma_v, &powf(&v, 2.0 * p.beta))],
    ];
    let name = if p.beta == 0.5 {
        "sqr"
    } else if p.beta == 1.0 {
        "garch"
    } else {
        "cev"
    };
    JumpDiffusionModel::diffusion(name, drift, diffusion_sq)?
        .with_jumps(
            intensity,
            JumpDistribution::single(2, 0, Marginal::Normal { mean: p.m_j, sd: p.sigma_j })?,
        )?
        .with_nonnegative(vec![1])
}

/// Log-variance stochastic volatility. State `(s, h)` with `h = log v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogVolParams {
    pub r: f64,
    #[serde(default)]
    pub delta: f64,
    pub kappa_v: f64,
    /// Long-run mean of `h`; may be negative.
    pub alpha_v: f64,
    pub sigma_v: f64,
    pub rho: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub m_j: f64,
    pub sigma_j: f64,
}

pub fn make_logvol_model(p: &LogVolParams) -> Result<JumpDiffusionModel, ModelError> {
    positive("kappa_v", p.kappa_v)?;
    finite("alpha_v", p.alpha_v)?;
    positive("sigma_v", p.sigma_v)?;
    correlation(p.rho)?;
    nonnegative("lambda0", p.lambda0)?;
    nonnegative("lambda1", p.lambda1)?;
    finite("r", p.r)?;
    finite("delta", p.delta)?;
    finite("m_j", p.m_j)?;
    positive("sigma_j", p.sigma_j)?;

    let h = state(1);
    let v = exp(&h);
    let jbar = lognormal_jump_mean(p.m_j, p.sigma_j);
    let intensity = constant(p.lambda0) + scale(p.lambda1, &v);
    let drift = vec![
        constant(p.r - p.delta) - scale(0.5, &v) - scale(jbar, &intensity),
        scale(p.kappa_v, &(constant(p.alpha_v) - &h)),
    ];
    let cross = scale(p.rho * p.sigma_v, &exp(&scale(0.5, &h)));
    let diffusion_sq = vec![
        vec![v, cross.clone()],
        vec![cross, constant(p.sigma_v * p.sigma_v)],
    ];
    JumpDiffusionModel::diffusion("logvol", drift, diffusion_sq)?.with_jumps(
        intensity,
        JumpDistribution::single(2, 0, Marginal::Normal { mean: p.m_j, sd: p.sigma_j })?,
    )
}

/// Two variance factors with simultaneous price and variance jumps.
/// State `(s, v, m)`; `m` is the stochastic level `v` reverts to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoFactorParams {
    pub r: f64,
    #[serde(default)]
    pub delta: f64,
    pub kappa_v: f64,
    pub sigma_v: f64,
    pub rho: f64,
    pub kappa_m: f64,
    pub alpha_m: f64,
    pub sigma_m: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub m_j: f64,
    pub sigma_j: f64,
    /// Mean of the exponential variance jump; zero disables it.
    pub mu_jv: f64,
}

pub fn make_two_factor(p: &TwoFactorParams) -> Result<JumpDiffusionModel, ModelError> {
    positive("kappa_v", p.kappa_v)?;
    positive("sigma_v", p.sigma_v)?;
    correlation(p.rho)?;
    positive("kappa_m", p.kappa_m)?;
    positive("alpha_m", p.alpha_m)?;
    positive("sigma_m", p.sigma_m)?;
    nonnegative("lambda0", p.lambda0)?;
    nonnegative("lambda1", p.lambda1)?;
    nonnegative("lambda2", p.lambda2)?;
    nonnegative("mu_jv", p.mu_jv)?;
    finite("r", p.r)?;
    finite("delta", p.delta)?;
    finite("m_j", p.m_j)?;
    positive("sigma_j", p.sigma_j)?;

    let (v, m) = (state(1), state(2));
    let jbar = lognormal_jump_mean(p.m_j, p.sigma_j);
    let intensity = constant(p.lambda0) + scale(p.lambda1, &v) + scale(p.lambda2, &m);
    let drift = vec![
        constant(p.r - p.delta) - scale(0.5, &v) - scale(jbar, &intensity),
        scale(p.kappa_v, &(&m - &v)),
        scale(p.kappa_m, &(constant(p.alpha_m) - &m)),
    ];
    let z = constant(0.0);
    let cross = scale(p.rho * p.sigma_v, &v);
    let diffusion_sq = vec![
        vec![v.clone(), cross.clone(), z.clone()],
        vec![cross, scale(p.sigma_v * p.sigma_v, &v), z.clone()],
        vec![z.clone(), z, scale(p.sigma_m * p.sigma_m, &m)],
    ];
    let jv = if p.mu_jv > 0.0 {
        Marginal::Exponential { mean: p.mu_jv }
    } else {
        Marginal::None
    };
    JumpDiffusionModel::diffusion("two_factor", drift, diffusion_sq)?
        .with_jumps(
            intensity,
            JumpDistribution::new(vec![
                Marginal::Normal { mean: p.m_j, sd: p.sigma_j },
                jv,
                Marginal::None,
            ])?,
        )?
        .with_nonnegative(vec![1, 2])
}

/// Brownian motion with constant drift `mu0` and covariance `sigma0_sq`.
pub fn make_bm_auxiliary(mu0: &[f64], sigma0_sq: &[Vec<f64>]) -> Result<JumpDiffusionModel, ModelError> {
    if mu0.len() != sigma0_sq.len() {
        return Err(ModelError::Inconsistent(format!(
            "drift has length {} but covariance is {}x{}",
            mu0.len(),
            sigma0_sq.len(),
            sigma0_sq.len()
        )));
    }
    for &m in mu0 {
        finite("mu0", m)?;
    }
    check_spd(sigma0_sq)?;
    JumpDiffusionModel::diffusion(
        "bm",
        mu0.iter().map(|&m| constant(m)).collect(),
        sigma0_sq
            .iter()
            .map(|r| r.iter().map(|&c| constant(c)).collect())
            .collect(),
    )
}

/// Log-price of geometric Brownian motion.
pub fn make_gbm(r: f64, delta: f64, sigma: f64) -> Result<JumpDiffusionModel, ModelError> {
    finite("r", r)?;
    finite("delta", delta)?;
    positive("sigma", sigma)?;
    let mut m = make_bm_auxiliary(&[r - delta - 0.5 * sigma * sigma], &[vec![sigma * sigma]])?;
    m.name = "gbm".into();
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonParams {
    pub r: f64,
    #[serde(default)]
    pub delta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub m_j: f64,
    pub sigma_j: f64,
}

/// Log-price with constant volatility and lognormal jumps at a constant rate.
pub fn make_merton(p: &MertonParams) -> Result<JumpDiffusionModel, ModelError> {
    finite("r", p.r)?;
    finite("delta", p.delta)?;
    positive("sigma", p.sigma)?;
    nonnegative("lambda", p.lambda)?;
    finite("m_j", p.m_j)?;
    positive("sigma_j", p.sigma_j)?;
    let jbar = lognormal_jump_mean(p.m_j, p.sigma_j);
    let drift = p.r - p.delta - 0.5 * p.sigma * p.sigma - p.lambda * jbar;
    JumpDiffusionModel::diffusion("merton", vec![constant(drift)], vec![vec![constant(p.sigma * p.sigma)]])?
        .with_jumps(
            constant(p.lambda),
            JumpDistribution::single(1, 0, Marginal::Normal { mean: p.m_j, sd: p.sigma_j })?,
        )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanRevertingParams {
    pub kappa: f64,
    pub alpha: f64,
    pub sigma: f64,
}

/// `dx = kappa (alpha - x) dt + sigma dW`.
pub fn make_ou(p: &MeanRevertingParams) -> Result<JumpDiffusionModel, ModelError> {
    positive("kappa", p.kappa)?;
    finite("alpha", p.alpha)?;
    positive("sigma", p.sigma)?;
    let x = state(0);
    JumpDiffusionModel::diffusion(
        "ou",
        vec![scale(p.kappa, &(constant(p.alpha) - &x))],
        vec![vec![constant(p.sigma * p.sigma)]],
    )
}

/// `dv = kappa (alpha - v) dt + sigma sqrt(v) dW`.
pub fn make_cir(p: &MeanRevertingParams) -> Result<JumpDiffusionModel, ModelError> {
    positive("kappa", p.kappa)?;
    positive("alpha", p.alpha)?;
    positive("sigma", p.sigma)?;
    let v = state(0);
    JumpDiffusionModel::diffusion(
        "cir",
        vec![scale(p.kappa, &(constant(p.alpha) - &v))],
        vec![vec![scale(p.sigma * p.sigma, &v)]],
    )?
    .with_nonnegative(vec![0])
}

/// Reference parameters for the log-variance model.
pub fn logvol_reference_params(lambda1: f64) -> LogVolParams {
    LogVolParams {
        r: 0.0304,
        delta: 0.0,
        kappa_v: 0.0145,
        alpha_v: -0.8276,
        sigma_v: 0.1153,
        rho: -0.6125,
        lambda0: 0.0137,
        lambda1,
        m_j: -0.000125,
        sigma_j: 0.015,
    }
}

/// Representative square-root/CEV/GARCH parameters. These are plausible
/// annualized values, not an estimate.
pub fn sv_representative_params(beta: f64) -> SvParams {
    let sigma_v = if beta >= 1.0 {
        2.0
    } else if beta > 0.5 {
        1.0
    } else {
        0.3
    };
    SvParams {
        beta,
        r: 0.03,
        delta: 0.0,
        kappa_v: 3.0,
        alpha_v: 0.04,
        sigma_v,
        rho: -0.5,
        lambda0: 0.5,
        lambda1: 0.0,
        m_j: -0.05,
        sigma_j: 0.1,
    }
}

/// Catalog selector used by JSON model specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", content = "params", rename_all = "snake_case")]
pub enum CatalogModel {
    Sv(SvParams),
    Logvol(LogVolParams),
    TwoFactor(TwoFactorParams),
    Bm { mu0: Vec<f64>, sigma0_sq: Vec<Vec<f64>> },
    Gbm { r: f64, #[serde(default)] delta: f64, sigma: f64 },
    Merton(MertonParams),
    Ou(MeanRevertingParams),
    Cir(MeanRevertingParams),
}

impl CatalogModel {
    pub fn build(&self) -> Result<JumpDiffusionModel, ModelError> {
        match self {
            CatalogModel::Sv(p) => make_sv_model(p),
            CatalogModel::Logvol(p) => make_logvol_model(p),
            CatalogModel::TwoFactor(p) => make_two_factor(p),
            CatalogModel::Bm { mu0, sigma0_sq } => make_bm_auxiliary(mu0, sigma0_sq),
            CatalogModel::Gbm { r, delta, sigma } => make_gbm(*r, *delta, *sigma),
            CatalogModel::Merton(p) => make_merton(p),
            CatalogModel::Ou(p) => make_ou(p),
            CatalogModel::Cir(p) => make_cir(p),
        }
    }
}
