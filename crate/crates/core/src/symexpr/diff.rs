use std::collections::HashMap;

use super::*;

/// Exact partial derivative of `e` with respect to `v`.
///
/// `abs` is not differentiated: an `abs` node whose argument depends on `v`
/// makes the call fail.
pub fn differentiate(e: &Expr, v: Var) -> Result<Expr, ExprError> {
    Differentiator::new().diff(e, v)
}

/// Differentiation with a memo table that outlives a single call.
///
/// Repeated generator application differentiates many expressions that share
/// subgraphs with expressions differentiated earlier; keeping one
/// `Differentiator` per expansion reuses those derivatives.
#[derive(Default)]
pub struct Differentiator {
    memo: HashMap<(u64, Var), Expr>,
    // Holds the keyed nodes alive so their ids are never recycled.
    keep: Vec<Expr>,
}

impl Differentiator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cached(&self) -> usize {
        self.memo.len()
    }

    pub fn diff(&mut self, e: &Expr, v: Var) -> Result<Expr, ExprError> {
        if !e.depends_on(v) {
            return Ok(zero());
        }
        if let Some(d) = self.memo.get(&(e.id(), v)) {
            return Ok(d.clone());
        }
        // Post-order over the sub-DAG that depends on `v`.
        let mut stack: Vec<(Expr, bool)> = vec![(e.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if self.memo.contains_key(&(node.id(), v)) {
                continue;
            }
            if !expanded {
                stack.push((node.clone(), true));
                for c in node.operands() {
                    if c.depends_on(v) && !self.memo.contains_key(&(c.id(), v)) {
                        stack.push((c.clone(), false));
                    }
                }
                continue;
            }
            let d = self.local(&node, v)?;
            self.memo.insert((node.id(), v), d);
            self.keep.push(node);
        }
        Ok(self.memo[&(e.id(), v)].clone())
    }

    fn d(&self, e: &Expr, v: Var) -> Expr {
        if !e.depends_on(v) {
            zero()
        } else {
            self.memo[&(e.id(), v)].clone()
        }
    }

    fn local(&self, e: &Expr, v: Var) -> Result<Expr, ExprError> {
        Ok(match e.kind() {
            Kind::Const(_) | Kind::Param(_) => zero(),
            Kind::State(i) => {
                if v == Var::State(*i) {
                    one()
                } else {
                    zero()
                }
            }
            Kind::Time => {
                if v == Var::Time {
                    one()
                } else {
                    zero()
                }
            }
            Kind::Add(terms) => add_all(terms.iter().map(|t| self.d(t, v))),
            Kind::Mul(factors) => {
                let mut terms = Vec::new();
                for (k, f) in factors.iter().enumerate() {
                    if !f.depends_on(v) {
                        continue;
                    }
                    let df = self.d(f, v);
                    let others = factors
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, g)| g.clone());
                    terms.push(mul_all(others.chain(std::iter::once(df))));
                }
                add_all(terms)
            }
            Kind::Sub(a, b) => sub(&self.d(a, v), &self.d(b, v)),
            Kind::Neg(a) => neg(&self.d(a, v)),
            Kind::Div(a, b) => {
                // (a/b)' = a'/b - a b' / b^2
                let da = self.d(a, v);
                let db = self.d(b, v);
                let first = div(&da, b);
                if db.is_zero() {
                    first
                } else {
                    sub(&first, &div(&mul(a, &db), &powf(b, 2.0)))
                }
            }
            Kind::Pow(base, ex) => {
                let db = self.d(base, v);
                if !ex.depends_on(v) {
                    // n b^(n-1) b'
                    let n_minus_1 = match ex.as_const() {
                        Some(n) => constant(n - 1.0),
                        None => sub(ex, &one()),
                    };
                    mul_all([ex.clone(), pow(base, &n_minus_1), db])
                } else {
                    // b^e (e' ln b + e b'/b)
                    let de = self.d(ex, v);
                    let inner = add(&mul(&de, &log(base)), &div(&mul(ex, &db), base));
                    mul(e, &inner)
                }
            }
            Kind::Call(f, a) => {
                let da = self.d(a, v);
                let outer = match f {
                    Builtin::Exp => e.clone(),
                    Builtin::Log => div(&one(), a),
                    Builtin::Sqrt => div(&constant(0.5), e),
                    Builtin::NormalCdf => normal_pdf_expr(a),
                    Builtin::NormalPdf => neg(&mul(a, e)),
                    Builtin::Erf => scale(
                        std::f64::consts::FRAC_2_SQRT_PI,
                        &exp(&neg(&powf(a, 2.0))),
                    ),
                    Builtin::Abs => {
                        return Err(ExprError::NotDifferentiable {
                            function: "abs",
                            var: v.to_string(),
                        })
                    }
                };
                mul(&outer, &da)
            }
        })
    }
}
