use serde::{Deserialize, Serialize};

use super::check_spd;
use crate::error::ModelError;
use crate::symexpr::{
    abs, constant, div, exp, mul_all, normal_cdf_expr, param, powf, scale, sqrt, state, sub, time, Expr,
};

/// What a smoother regularizes, kept so the expression can be rebuilt and
/// hashed for caching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherKind {
    /// Gaussian transition density. `y = None` leaves the target as the
    /// symbolic parameters `p0..p{d-1}`.
    GaussianDensity {
        y: Option<Vec<f64>>,
        mu0: Vec<f64>,
        sigma0_sq: Vec<Vec<f64>>,
    },
    BsCall {
        strike: f64,
        rate: f64,
        vol: f64,
        coord: usize,
    },
    Custom {
        expr: String,
    },
}

/// A closed-form `u_{0,t}(x)` together with the `t -> 0` target it smooths,
/// when that target is a function.
#[derive(Debug, Clone)]
pub struct Smoother {
    pub kind: SmootherKind,
    pub expr: Expr,
    /// Payoff `f(x)` returned at `t = 0`. `None` for density smoothers.
    pub limit: Option<Expr>,
}

impl Smoother {
    pub fn custom(expr: Expr, limit: Option<Expr>) -> Self {
        Self {
            kind: SmootherKind::Custom {
                expr: crate::symexpr::to_dag_string(&expr),
            },
            expr,
            limit,
        }
    }

    pub fn from_kind(kind: &SmootherKind) -> Result<Self, ModelError> {
        match kind {
            SmootherKind::GaussianDensity { y: Some(y), mu0, sigma0_sq } => {
                gaussian_density_smoother(y, mu0, sigma0_sq)
            }
            SmootherKind::GaussianDensity { y: None, mu0, sigma0_sq } => {
                gaussian_density_smoother_symbolic(mu0, sigma0_sq)
            }
            SmootherKind::BsCall { strike, rate, vol, coord } => bs_call_smoother(*strike, *rate, *vol, *coord),
            SmootherKind::Custom { expr } => Ok(Self::custom(crate::symexpr::parse(expr)?, None)),
        }
    }
}

fn gaussian(y: Vec<Expr>, mu0: &[f64], sigma0_sq: &[Vec<f64>]) -> Result<Expr, ModelError> {
    let d = mu0.len();
    if sigma0_sq.len() != d {
        return Err(ModelError::Inconsistent(format!(
            "mean has length {d} but covariance is {}x{}",
            sigma0_sq.len(),
            sigma0_sq.len()
        )));
    }
    check_spd(sigma0_sq)?;
    let cov = nalgebra::DMatrix::from_fn(d, d, |i, j| sigma0_sq[i][j]);
    let det = cov.determinant();
    let prec = cov.try_inverse().ok_or(ModelError::NotPositiveDefinite)?;
    let t = time();
    let z: Vec<Expr> = (0..d)
        .map(|i| sub(&sub(&y[i], &state(i)), &scale(mu0[i], &t)))
        .collect();
    let mut q = Vec::new();
    for i in 0..d {
        q.push(scale(prec[(i, i)], &powf(&z[i], 2.0)));
        for j in i + 1..d {
            if prec[(i, j)] != 0.0 {
                q.push(scale(2.0 * prec[(i, j)], &(&z[i] * &z[j])));
            }
        }
    }
    let q = crate::symexpr::add_all(q);
    let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) / det.sqrt();
    Ok(mul_all([
        constant(norm),
        powf(&t, -(d as f64) / 2.0),
        exp(&div(&scale(-0.5, &q), &t)),
    ]))
}

/// Density of `x + mu0 t + N(0, sigma0_sq t)` at the fixed point `y`.
pub fn gaussian_density_smoother(y: &[f64], mu0: &[f64], sigma0_sq: &[Vec<f64>]) -> Result<Smoother, ModelError> {
    if y.len() != mu0.len() {
        return Err(ModelError::Inconsistent(format!(
            "target has length {} but mean has length {}",
            y.len(),
            mu0.len()
        )));
    }
    let expr = gaussian(y.iter().map(|&v| constant(v)).collect(), mu0, sigma0_sq)?;
    Ok(Smoother {
        kind: SmootherKind::GaussianDensity {
            y: Some(y.to_vec()),
            mu0: mu0.to_vec(),
            sigma0_sq: sigma0_sq.to_vec(),
        },
        expr,
        limit: None,
    })
}

/// As [`gaussian_density_smoother`] with `y_i` the parameter `p_i`.
pub fn gaussian_density_smoother_symbolic(mu0: &[f64], sigma0_sq: &[Vec<f64>]) -> Result<Smoother, ModelError> {
    let expr = gaussian((0..mu0.len()).map(param).collect(), mu0, sigma0_sq)?;
    Ok(Smoother {
        kind: SmootherKind::GaussianDensity {
            y: None,
            mu0: mu0.to_vec(),
            sigma0_sq: sigma0_sq.to_vec(),
        },
        expr,
        limit: None,
    })
}

/// Undiscounted Black-Scholes call value in the log-price `x_coord`:
/// `exp(x + r t) N(d+) - K N(d-)`.
pub fn bs_call_smoother(strike: f64, rate: f64, vol: f64, coord: usize) -> Result<Smoother, ModelError> {
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(ModelError::InvalidParameter {
            name: "strike",
            reason: format!("must be positive, got {strike}"),
        });
    }
    if !(vol > 0.0 && vol.is_finite()) {
        return Err(ModelError::InvalidParameter {
            name: "vol",
            reason: format!("must be positive, got {vol}"),
        });
    }
    if !rate.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "rate",
            reason: format!("must be finite, got {rate}"),
        });
    }
    if coord >= crate::symexpr::MAX_STATE_VARS {
        return Err(ModelError::Inconsistent(format!("coordinate {coord} out of range")));
    }
    let x = state(coord);
    let t = time();
    let denom = scale(vol, &sqrt(&t));
    let m = &x - strike.ln();
    let d_plus = div(&(&m + &scale(rate + 0.5 * vol * vol, &t)), &denom);
    let d_minus = div(&(&m + &scale(rate - 0.5 * vol * vol, &t)), &denom);
    let expr = exp(&(&x + &scale(rate, &t))) * normal_cdf_expr(&d_plus) - scale(strike, &normal_cdf_expr(&d_minus));
    let intrinsic = exp(&x) - strike;
    let limit = scale(0.5, &(&intrinsic + &abs(&intrinsic)));
    Ok(Smoother {
        kind: SmootherKind::BsCall {
            strike,
            rate,
            vol,
            coord,
        },
        expr,
        limit: Some(limit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{evaluate, EvalPoint};

    #[test]
    fn standard_normal_at_mode() {
        let s = gaussian_density_smoother(&[0.3], &[0.0], &[vec![1.0]]).unwrap();
        let v = evaluate(&s.expr, &EvalPoint::new(vec![0.3], 1.0)).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bivariate_at_mode() {
        let s = gaussian_density_smoother(&[0.0, 0.0], &[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let v = evaluate(&s.expr, &EvalPoint::new(vec![0.0, 0.0], 1.0)).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn symbolic_target_matches_numeric() {
        let mu = [0.1, -0.2];
        let cov = [vec![0.5, 0.1], vec![0.1, 0.3]];
        let a = gaussian_density_smoother(&[0.4, 0.2], &mu, &cov).unwrap();
        let b = gaussian_density_smoother_symbolic(&mu, &cov).unwrap();
        let p = EvalPoint::new(vec![0.1, 0.3], 0.7);
        let va = evaluate(&a.expr, &p).unwrap();
        let vb = evaluate(&b.expr, &p.clone().with_params(vec![0.4, 0.2])).unwrap();
        assert!((va - vb).abs() < 1e-15 * va.abs());
    }

    #[test]
    fn deep_in_the_money_call() {
        let s = bs_call_smoother(100.0, 0.03, 0.2, 0).unwrap();
        let x = 200f64.ln();
        let t = 0.1;
        let v = evaluate(&s.expr, &EvalPoint::new(vec![x], t)).unwrap();
        assert!((v - ((x + 0.03 * t).exp() - 100.0)).abs() < 1e-6);
    }

    #[test]
    fn at_the_money_short_time() {
        let s = bs_call_smoother(100.0, 0.0, 0.2, 0).unwrap();
        let v = evaluate(&s.expr, &EvalPoint::new(vec![100f64.ln()], 1e-12)).unwrap();
        assert!(v.abs() < 1e-3);
        let limit = evaluate(s.limit.as_ref().unwrap(), &EvalPoint::new(vec![110f64.ln()], 0.0)).unwrap();
        assert!((limit - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(bs_call_smoother(0.0, 0.0, 0.2, 0).is_err());
        assert!(bs_call_smoother(100.0, 0.0, -0.2, 0).is_err());
        assert!(gaussian_density_smoother(&[0.0], &[0.0], &[vec![-1.0]]).is_err());
        assert!(gaussian_density_smoother(&[0.0, 1.0], &[0.0], &[vec![1.0]]).is_err());
    }
}
