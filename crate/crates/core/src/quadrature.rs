//! Quadrature rules for the jump integral `int f(x + c) nu(dc)`.
//!
//! Gauss rules come from the Golub-Welsch construction: nodes are the
//! eigenvalues of the Jacobi matrix of the three-term recurrence. Nodes are
//! then polished by Newton steps on the orthonormal polynomial and weights
//! are taken from the Christoffel function `1 / sum_k p_k(x)^2`, which keeps
//! full relative accuracy in the tiny weights at the tails.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::QuadratureError;
use crate::model::{JumpDistribution, Marginal};

pub const MAX_GAUSS_NODES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    GaussHermite { n: usize },
    GaussLaguerre { n: usize },
    MonteCarlo { samples: usize, seed: u64 },
    /// Per-coordinate rules combined by tensor product.
    Tensor { parts: Vec<Provenance> },
    Custom,
}

/// Weighted nodes `(omega_s, c_s)` in the full state space; coordinates
/// without jumps hold zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>, provenance: Provenance) -> Result<Self, QuadratureError> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(QuadratureError::InvalidSize(nodes.len()));
        }
        let d = nodes[0].len();
        if nodes.iter().any(|c| c.len() != d) {
            return Err(QuadratureError::Unsupported("nodes of differing length".into()));
        }
        Ok(Self {
            nodes,
            weights,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// `sum_s omega_s g(c_s)`.
    pub fn integrate(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(c, w)| w * g(c)).sum()
    }

    /// Coordinates in which some node is nonzero.
    pub fn active_coords(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.nodes.iter().any(|c| c[i] != 0.0))
            .collect()
    }
}

/// Neumaier summation.
fn compensated_sum(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in it {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Gauss rule for the measure whose monic recurrence has diagonal `a` and
/// squared off-diagonal `b2` (`b2[k]` couples degrees `k` and `k+1`), with
/// total mass `mu0`. `b2` must have `n` entries; the last one is used for
/// the Newton polish.
fn golub_welsch(a: &[f64], b2: &[f64], mu0: f64) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let n = a.len();
    let b: Vec<f64> = b2.iter().map(|v| v.sqrt()).collect();
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            a[i]
        } else if i + 1 == j {
            b[i]
        } else if j + 1 == i {
            b[j]
        } else {
            0.0
        }
    });
    let eig = jac
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(QuadratureError::NoConvergence)?;
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.total_cmp(y));

    // Orthonormal recurrence: b_{k} p_{k+1} = (x - a_k) p_k - b_{k-1} p_{k-1}.
    let eval = |x: f64| -> (f64, f64, f64) {
        let mut p_prev = 0.0;
        let mut dp_prev = 0.0;
        let mut p = 1.0 / mu0.sqrt();
        let mut dp = 0.0;
        let mut christoffel = p * p;
        for k in 0..n {
            let bk_prev = if k == 0 { 0.0 } else { b[k - 1] };
            let p_next = ((x - a[k]) * p - bk_prev * p_prev) / b[k];
            let dp_next = (p + (x - a[k]) * dp - bk_prev * dp_prev) / b[k];
            p_prev = p;
            dp_prev = dp;
            p = p_next;
            dp = dp_next;
            if k + 1 < n {
                christoffel += p * p;
            }
        }
        (p, dp, christoffel)
    };
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = eval(*x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let step = p / dp;
            if !step.is_finite() || step.abs() > 1e-6 * (1.0 + x.abs()) {
                break;
            }
            *x -= step;
        }
        let (_, _, c) = eval(*x);
        let w = 1.0 / c;
        if !(w > 0.0) {
            return Err(QuadratureError::NoConvergence);
        }
        weights.push(w);
    }
    Ok((nodes, weights))
}

/// Nodes and weights for `int exp(-x^2) g(x) dx`.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if n == 0 || n > MAX_GAUSS_NODES {
        return Err(QuadratureError::InvalidSize(n));
    }
    let a = vec![0.0; n];
    let b2: Vec<f64> = (1..=n).map(|k| k as f64 / 2.0).collect();
    let (mut x, mut w) = golub_welsch(&a, &b2, std::f64::consts::PI.sqrt())?;
    // The weight is even: make the rule exactly symmetric.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xm = 0.5 * (x[j] - x[i]);
        let wm = 0.5 * (w[i] + w[j]);
        x[i] = -xm;
        x[j] = xm;
        w[i] = wm;
        w[j] = wm;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// Nodes and weights for `int_0^inf exp(-x) g(x) dx`.
pub fn gauss_laguerre(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if n == 0 || n > MAX_GAUSS_NODES {
        return Err(QuadratureError::InvalidSize(n));
    }
    let a: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let b2: Vec<f64> = (1..=n).map(|k| (k * k) as f64).collect();
    golub_welsch(&a, &b2, 1.0)
}

/// One-dimensional probability rule for a single marginal.
pub fn marginal_rule(m: &Marginal, n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    match *m {
        Marginal::None => Ok((vec![0.0], vec![1.0])),
        Marginal::Normal { mean, sd } => {
            let (x, w) = gauss_hermite(n)?;
            let c = x.iter().map(|xi| mean + std::f64::consts::SQRT_2 * sd * xi).collect();
            let om = w.iter().map(|wi| wi / std::f64::consts::PI.sqrt()).collect();
            Ok((c, om))
        }
        Marginal::DoubleExponential { scale } => {
            let (x, w) = gauss_laguerre(n)?;
            let mut c: Vec<f64> = x.iter().rev().map(|xi| -scale * xi).collect();
            c.extend(x.iter().map(|xi| scale * xi));
            let mut om: Vec<f64> = w.iter().rev().map(|wi| 0.5 * wi).collect();
            om.extend(w.iter().map(|wi| 0.5 * wi));
            Ok((c, om))
        }
        Marginal::Exponential { mean } => {
            let (x, w) = gauss_laguerre(n)?;
            Ok((x.iter().map(|xi| mean * xi).collect(), w))
        }
    }
}

fn marginal_provenance(m: &Marginal, n: usize) -> Provenance {
    match m {
        Marginal::Normal { .. } => Provenance::GaussHermite { n },
        Marginal::DoubleExponential { .. } | Marginal::Exponential { .. } => Provenance::GaussLaguerre { n },
        Marginal::None => Provenance::Custom,
    }
}

/// Tensor-product Gauss rule over the jumping coordinates, `n` nodes per
/// coordinate (`2n` for double-exponential marginals).
pub fn jump_rule(dist: &JumpDistribution, n: usize) -> Result<QuadratureRule, QuadratureError> {
    let d = dist.marginals.len();
    let coords = dist.jumping_coords();
    if coords.is_empty() {
        return Err(QuadratureError::Unsupported("no jumping coordinate".into()));
    }
    let mut nodes = vec![vec![0.0; d]];
    let mut weights = vec![1.0];
    let mut parts = Vec::new();
    for &i in &coords {
        let m = &dist.marginals[i];
        let (c, w) = marginal_rule(m, n)?;
        parts.push(marginal_provenance(m, n));
        let mut nn = Vec::with_capacity(nodes.len() * c.len());
        let mut nw = Vec::with_capacity(nodes.len() * c.len());
        for (base, bw) in nodes.iter().zip(&weights) {
            for (ci, wi) in c.iter().zip(&w) {
                let mut node = base.clone();
                node[i] = *ci;
                nn.push(node);
                nw.push(bw * wi);
            }
        }
        nodes = nn;
        weights = nw;
    }
    let provenance = if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        Provenance::Tensor { parts }
    };
    QuadratureRule::new(nodes, weights, provenance)
}

/// Draws one jump vector.
pub fn sample_jump<R: Rng + ?Sized>(dist: &JumpDistribution, rng: &mut R, out: &mut [f64]) {
    for (o, m) in out.iter_mut().zip(&dist.marginals) {
        *o = match *m {
            Marginal::None => 0.0,
            Marginal::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Marginal::DoubleExponential { scale } => {
                let e: f64 = Exp1.sample(rng);
                if rng.gen::<bool>() {
                    scale * e
                } else {
                    -scale * e
                }
            }
            Marginal::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
        };
    }
}

/// `samples` i.i.d. draws with equal weights, reproducible from `seed`.
pub fn monte_carlo_rule(dist: &JumpDistribution, samples: usize, seed: u64) -> Result<QuadratureRule, QuadratureError> {
    if samples == 0 {
        return Err(QuadratureError::InvalidSize(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dist.marginals.len();
    let nodes = (0..samples)
        .map(|_| {
            let mut c = vec![0.0; d];
            sample_jump(dist, &mut rng, &mut c);
            c
        })
        .collect();
    QuadratureRule::new(
        nodes,
        vec![1.0 / samples as f64; samples],
        Provenance::MonteCarlo { samples, seed },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_small_rules() {
        let (x, w) = gauss_hermite(1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert!((w[0] - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        let (x, w) = gauss_hermite(2).unwrap();
        assert!((x[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(x[0], -x[1]);
        assert!((w[0] - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn laguerre_small_rules() {
        let (x, w) = gauss_laguerre(1).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_laguerre(5).unwrap();
        let m1: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((m1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_limits() {
        assert!(gauss_hermite(0).is_err());
        assert!(gauss_hermite(101).is_err());
        assert!(gauss_laguerre(100).is_ok());
        assert!(monte_carlo_rule(&JumpDistribution::new(vec![Marginal::Normal { mean: 0.0, sd: 1.0 }]).unwrap(), 0, 1)
            .is_err());
    }

    #[test]
    fn degenerate_normal_rule() {
        let d = JumpDistribution::new(vec![Marginal::Normal { mean: -0.1, sd: 0.2 }]).unwrap();
        let r = jump_rule(&d, 1).unwrap();
        assert_eq!(r.nodes, vec![vec![-0.1]]);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_rule_places_zeros() {
        let d = JumpDistribution::new(vec![
            Marginal::Normal { mean: 0.0, sd: 0.1 },
            Marginal::Exponential { mean: 0.05 },
            Marginal::None,
        ])
        .unwrap();
        let r = jump_rule(&d, 4).unwrap();
        assert_eq!(r.len(), 16);
        assert!(r.nodes.iter().all(|c| c[2] == 0.0));
        assert_eq!(r.active_coords(), vec![0, 1]);
        assert!((r.total_weight() - 1.0).abs() < 1e-12);
    }
}
