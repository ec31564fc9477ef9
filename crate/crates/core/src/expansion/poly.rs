use nalgebra::{DMatrix, DVector};

use super::expm::expm;
use crate::error::ExpansionError;
use crate::generator::{Generator, GeneratorConfig};
use crate::symexpr::{constant, mul_all, powf, state, to_polynomial, Expr};

/// Generator of a polynomial process restricted to polynomials of total
/// degree at most `k`: `B e_i = sum_j matrix[i][j] e_j`.
#[derive(Debug, Clone)]
pub struct PolyGeneratorMatrix {
    pub basis: Vec<Vec<u32>>,
    pub matrix: DMatrix<f64>,
}

impl PolyGeneratorMatrix {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.basis.iter().position(|b| b == alpha)
    }

    /// `e(x)`, the basis evaluated at `x`.
    pub fn basis_values(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.basis.len(),
            self.basis
                .iter()
                .map(|a| a.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>()),
        )
    }

    /// Coefficient vector selecting the single monomial `alpha`.
    pub fn unit(&self, alpha: &[u32]) -> Option<DVector<f64>> {
        let i = self.index_of(alpha)?;
        let mut c = DVector::zeros(self.basis.len());
        c[i] = 1.0;
        Some(c)
    }
}

/// Monomials of total degree `<= k` in `d` variables, by degree and then
/// with higher powers of earlier coordinates first.
pub fn monomial_basis(d: usize, k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for deg in 0..=k {
        let mut cur = vec![0u32; d];
        fill(&mut cur, 0, deg, &mut out);
    }
    out
}

fn fill(cur: &mut Vec<u32>, i: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    let d = cur.len();
    if i + 1 == d || d == 0 {
        if d > 0 {
            cur[i] = left;
        }
        out.push(cur.clone());
        return;
    }
    for a in (0..=left).rev() {
        cur[i] = a;
        fill(cur, i + 1, left - a, out);
    }
    cur[i] = 0;
}

fn monomial(alpha: &[u32]) -> Expr {
    mul_all(
        alpha
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(i, &k)| powf(&state(i), k as f64)),
    )
}

fn degree_at_most(e: &Expr, d: usize, k: u32, what: &str) -> Result<(), ExpansionError> {
    match to_polynomial(e, d) {
        Some(p) if p.degree() <= k => Ok(()),
        Some(p) => Err(ExpansionError::NonPolynomial(format!("{what} has degree {}", p.degree()))),
        None => Err(ExpansionError::NonPolynomial(format!("{what} is not a polynomial"))),
    }
}

/// Builds the matrix of `B = A - r` on polynomials of degree `<= k`.
///
/// The model is first screened for affine drift and quadratic diffusion,
/// intensity and constant discount; the definitive check is that the image
/// of every basis monomial is a polynomial of degree `<= k`.
pub fn poly_generator_matrix(cfg: &GeneratorConfig, k: u32) -> Result<PolyGeneratorMatrix, ExpansionError> {
    let m = &cfg.model;
    let d = m.dim;
    for (i, e) in m.drift.iter().enumerate() {
        degree_at_most(e, d, 1, &format!("drift[{i}]"))?;
    }
    for (i, row) in m.diffusion_sq.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            degree_at_most(e, d, 2, &format!("diffusion_sq[{i}][{j}]"))?;
        }
    }
    if let Some(l) = m.intensity() {
        degree_at_most(l, d, 2, "intensity")?;
    }
    degree_at_most(&m.discount, d, 0, "discount")?;

    let basis = monomial_basis(d, k);
    let n = basis.len();
    let mut matrix = DMatrix::zeros(n, n);
    let mut gen = Generator::new(cfg.clone());
    for (i, alpha) in basis.iter().enumerate() {
        let e = if alpha.iter().all(|&a| a == 0) {
            constant(1.0)
        } else {
            monomial(alpha)
        };
        let image = gen.apply_b(&e)?;
        let p = to_polynomial(&image, d)
            .ok_or_else(|| ExpansionError::NonPolynomial(format!("image of monomial {alpha:?} is not polynomial")))?;
        for (beta, c) in &p.terms {
            let j = basis.iter().position(|b| b == beta).ok_or_else(|| {
                ExpansionError::NonPolynomial(format!(
                    "image of monomial {alpha:?} contains {beta:?}, outside degree {k}"
                ))
            })?;
            matrix[(i, j)] = *c;
        }
    }
    Ok(PolyGeneratorMatrix { basis, matrix })
}

/// `c' exp(t A) e(x)`.
pub fn poly_moment(pg: &PolyGeneratorMatrix, c: &DVector<f64>, t: f64, x: &[f64]) -> Result<f64, ExpansionError> {
    if c.len() != pg.len() {
        return Err(ExpansionError::Shape(format!(
            "coefficient vector has length {} for a basis of {}",
            c.len(),
            pg.len()
        )));
    }
    if x.len() < pg.basis.first().map_or(0, |b| b.len()) {
        return Err(ExpansionError::Shape(format!("state has length {}", x.len())));
    }
    let e = pg.basis_values(x);
    if t == 0.0 {
        return Ok(c.dot(&e));
    }
    let phi = expm(&(&pg.matrix * t));
    Ok(c.dot(&(phi * e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_ordering() {
        assert_eq!(monomial_basis(1, 2), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(
            monomial_basis(2, 2),
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(monomial_basis(3, 3).len(), 20);
    }
}
