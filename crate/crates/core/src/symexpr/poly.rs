use std::collections::{BTreeMap, HashMap};

use super::*;

/// Sparse multivariate polynomial in `x0..x{dim-1}`, keyed by exponent
/// multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn constant(dim: usize, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(vec![0; dim], c);
        }
        Self { dim, terms }
    }

    pub fn var(dim: usize, i: usize) -> Self {
        let mut alpha = vec![0; dim];
        alpha[i] = 1;
        Self {
            dim,
            terms: BTreeMap::from([(alpha, 1.0)]),
        }
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.iter().sum()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    fn add(&self, other: &Self, sign: f64) -> Self {
        let mut terms = self.terms.clone();
        for (a, c) in &other.terms {
            *terms.entry(a.clone()).or_insert(0.0) += sign * c;
        }
        terms.retain(|_, c| *c != 0.0);
        Self { dim: self.dim, terms }
    }

    fn mul(&self, other: &Self) -> Self {
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let k: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                *terms.entry(k).or_insert(0.0) += ca * cb;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Self { dim: self.dim, terms }
    }

    fn scale(&self, s: f64) -> Self {
        let mut terms: BTreeMap<Vec<u32>, f64> =
            self.terms.iter().map(|(a, c)| (a.clone(), c * s)).collect();
        terms.retain(|_, c| *c != 0.0);
        Self { dim: self.dim, terms }
    }

    fn as_const(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&vec![0; self.dim]).copied(),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c * a.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }
}

/// Expands `e` into a polynomial in the state variables, or returns `None`
/// if it is not one (time or parameter dependence, non-integer powers,
/// division by a non-constant, transcendental functions of the state).
pub fn to_polynomial(e: &Expr, dim: usize) -> Option<Polynomial> {
    if e.vars().state_extent() > dim || e.vars().has_time() || e.vars().param_extent() > 0 {
        return None;
    }
    let mut memo: HashMap<u64, Polynomial> = HashMap::new();
    for node in e.topo_order() {
        let p = if node.vars().is_empty() {
            // Variable-free subtree: fold numerically.
            let v = evaluate(&node, &EvalPoint::new(Vec::new(), 0.0)).ok()?;
            Polynomial::constant(dim, v)
        } else {
            let get = |c: &Expr| memo[&c.id()].clone();
            match node.kind() {
                Kind::State(i) => Polynomial::var(dim, *i),
                Kind::Add(v) => v
                    .iter()
                    .fold(Polynomial::constant(dim, 0.0), |acc, c| acc.add(&get(c), 1.0)),
                Kind::Mul(v) => v
                    .iter()
                    .fold(Polynomial::constant(dim, 1.0), |acc, c| acc.mul(&get(c))),
                Kind::Sub(a, b) => get(a).add(&get(b), -1.0),
                Kind::Neg(a) => get(a).scale(-1.0),
                Kind::Div(a, b) => {
                    let d = get(b).as_const()?;
                    if d == 0.0 {
                        return None;
                    }
                    get(a).scale(1.0 / d)
                }
                Kind::Pow(a, b) => {
                    let n = get(b).as_const()?;
                    if n < 0.0 || n.fract() != 0.0 || n > 64.0 {
                        return None;
                    }
                    let base = get(a);
                    (0..n as u32).fold(Polynomial::constant(dim, 1.0), |acc, _| acc.mul(&base))
                }
                _ => return None,
            }
        };
        memo.insert(node.id(), p);
    }
    memo.remove(&e.id())
}
