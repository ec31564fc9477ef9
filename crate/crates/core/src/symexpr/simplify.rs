use std::collections::HashMap;

use super::*;

/// Rebuilds `e` bottom-up through the smart constructors: constant folding,
/// removal of `+0`, `*1`, `*0`, `^0`, `^1`, double negation, and flattening
/// of nested sums and products. Idempotent.
pub fn simplify(e: &Expr) -> Expr {
    let mut memo: HashMap<u64, Expr> = HashMap::new();
    for node in e.topo_order() {
        let out = {
            let ops: Vec<Expr> = node
                .operands()
                .into_iter()
                .map(|c| memo[&c.id()].clone())
                .collect();
            rebuild(&node, &ops)
        };
        memo.insert(node.id(), out);
    }
    memo[&e.id()].clone()
}
