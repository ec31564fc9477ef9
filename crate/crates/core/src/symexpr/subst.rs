use std::collections::HashMap;

use super::*;

/// Replaces every state variable `x_i` by `x_i + c_i`; time is untouched.
pub fn shift(e: &Expr, c: &[f64]) -> Result<Expr, ExprError> {
    let extent = e.vars().state_extent();
    if c.len() < extent {
        return Err(ExprError::DimensionMismatch {
            expected: extent,
            found: c.len(),
        });
    }
    Ok(Substituter::shift(c).apply(e))
}

/// Memoized substitution of state variables by expressions.
pub struct Substituter {
    replacement: Vec<Option<Expr>>,
    mask: u32,
    memo: HashMap<u64, Expr>,
}

impl Substituter {
    /// Substitution `x_i -> x_i + c_i` for every nonzero `c_i`.
    pub fn shift(c: &[f64]) -> Self {
        let replacement = c
            .iter()
            .enumerate()
            .map(|(i, &ci)| (ci != 0.0).then(|| add(&state(i), &constant(ci))))
            .collect();
        Self::new(replacement)
    }

    /// `replacement[i] = Some(e)` substitutes `x_i` by `e`.
    pub fn new(replacement: Vec<Option<Expr>>) -> Self {
        let mask = replacement
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some())
            .fold(0u32, |m, (i, _)| m | (1 << i));
        Self {
            replacement,
            mask,
            memo: HashMap::new(),
        }
    }

    pub fn apply(&mut self, e: &Expr) -> Expr {
        if !e.vars().intersects_states(self.mask) {
            return e.clone();
        }
        if let Some(r) = self.memo.get(&e.id()) {
            return r.clone();
        }
        let mut stack: Vec<(Expr, bool)> = vec![(e.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if self.memo.contains_key(&node.id()) {
                continue;
            }
            if !expanded {
                stack.push((node.clone(), true));
                for c in node.operands() {
                    if c.vars().intersects_states(self.mask) && !self.memo.contains_key(&c.id()) {
                        stack.push((c.clone(), false));
                    }
                }
                continue;
            }
            let out = match node.kind() {
                Kind::State(i) => self.replacement[*i].clone().unwrap_or_else(|| node.clone()),
                _ => {
                    let ops: Vec<Expr> = node.operands().into_iter().map(|c| self.get(c)).collect();
                    rebuild(&node, &ops)
                }
            };
            self.memo.insert(node.id(), out);
        }
        self.memo[&e.id()].clone()
    }

    fn get(&self, e: &Expr) -> Expr {
        if !e.vars().intersects_states(self.mask) {
            e.clone()
        } else {
            self.memo[&e.id()].clone()
        }
    }
}
