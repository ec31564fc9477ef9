use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::*;

/// A point `(x, t)` at which expressions are evaluated, plus values for any
/// symbolic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
}

impl EvalPoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self {
            x,
            t,
            params: Vec::new(),
        }
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Self {
        self.params = params;
        self
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    State(u32),
    Time,
    Param(u32),
    Add { start: u32, len: u32 },
    Mul { start: u32, len: u32 },
    Sub(u32, u32),
    Div(u32, u32),
    Pow(u32, u32),
    PowI(u32, i32),
    Neg(u32),
    Call(Builtin, u32),
}

/// A DAG flattened into a straight-line program.
///
/// Each reachable node becomes exactly one instruction, so evaluating the
/// tape evaluates every shared subexpression once. A tape is immutable and
/// can be evaluated from many threads, each with its own scratch buffer.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    args: Vec<u32>,
    outputs: Vec<u32>,
    n_state: usize,
    n_param: usize,
}

impl Tape {
    pub fn compile(roots: &[Expr]) -> Tape {
        let order = topo_order(roots);
        let mut slot: HashMap<u64, u32> = HashMap::with_capacity(order.len());
        let mut ops = Vec::with_capacity(order.len());
        let mut args = Vec::new();
        let mut vars = VarSet::empty();
        for node in &order {
            vars = vars.union(node.vars());
            let s = |e: &Expr| slot[&e.id()];
            let op = match node.kind() {
                Kind::Const(c) => Op::Const(*c),
                Kind::State(i) => Op::State(*i as u32),
                Kind::Time => Op::Time,
                Kind::Param(i) => Op::Param(*i as u32),
                Kind::Add(v) | Kind::Mul(v) => {
                    let start = args.len() as u32;
                    args.extend(v.iter().map(s));
                    let len = v.len() as u32;
                    if matches!(node.kind(), Kind::Add(_)) {
                        Op::Add { start, len }
                    } else {
                        Op::Mul { start, len }
                    }
                }
                Kind::Sub(a, b) => Op::Sub(s(a), s(b)),
                Kind::Div(a, b) => Op::Div(s(a), s(b)),
                Kind::Pow(a, b) => match b.as_const() {
                    Some(n) if n.fract() == 0.0 && n.abs() <= 64.0 => Op::PowI(s(a), n as i32),
                    _ => Op::Pow(s(a), s(b)),
                },
                Kind::Neg(a) => Op::Neg(s(a)),
                Kind::Call(f, a) => Op::Call(*f, s(a)),
            };
            slot.insert(node.id(), ops.len() as u32);
            ops.push(op);
        }
        let outputs = roots.iter().map(|r| slot[&r.id()]).collect();
        Tape {
            ops,
            args,
            outputs,
            n_state: vars.state_extent(),
            n_param: vars.param_extent(),
        }
    }

    /// Number of instructions (distinct nodes).
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Number of state variables the tape reads.
    pub fn state_extent(&self) -> usize {
        self.n_state
    }

    /// Runs the program. `buf` is resized as needed and holds every node
    /// value on return; read results with [`Tape::output`].
    pub fn run(&self, x: &[f64], t: f64, params: &[f64], buf: &mut Vec<f64>) -> Result<(), ExprError> {
        if x.len() < self.n_state {
            return Err(ExprError::UndefinedVariable(format!(
                "x{} (point has {} state values)",
                self.n_state - 1,
                x.len()
            )));
        }
        if params.len() < self.n_param {
            return Err(ExprError::UndefinedVariable(format!(
                "p{} (point has {} parameters)",
                self.n_param - 1,
                params.len()
            )));
        }
        buf.clear();
        buf.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::State(i) => x[i as usize],
                Op::Time => t,
                Op::Param(i) => params[i as usize],
                Op::Add { start, len } => {
                    let a = &self.args[start as usize..(start + len) as usize];
                    a.iter().map(|&k| buf[k as usize]).sum()
                }
                Op::Mul { start, len } => {
                    let a = &self.args[start as usize..(start + len) as usize];
                    a.iter().map(|&k| buf[k as usize]).product()
                }
                Op::Sub(a, b) => buf[a as usize] - buf[b as usize],
                Op::Div(a, b) => {
                    let d = buf[b as usize];
                    if d == 0.0 {
                        return Err(ExprError::Domain {
                            op: "div",
                            detail: "division by zero".into(),
                        });
                    }
                    buf[a as usize] / d
                }
                Op::PowI(a, n) => {
                    let base = buf[a as usize];
                    if base == 0.0 && n < 0 {
                        return Err(ExprError::Domain {
                            op: "pow",
                            detail: format!("0^{n}"),
                        });
                    }
                    base.powi(n)
                }
                Op::Pow(a, b) => {
                    let (base, ex) = (buf[a as usize], buf[b as usize]);
                    if base < 0.0 && ex.fract() != 0.0 {
                        return Err(ExprError::Domain {
                            op: "pow",
                            detail: format!("negative base {base} with exponent {ex}"),
                        });
                    }
                    if base == 0.0 && ex < 0.0 {
                        return Err(ExprError::Domain {
                            op: "pow",
                            detail: format!("0^{ex}"),
                        });
                    }
                    base.powf(ex)
                }
                Op::Neg(a) => -buf[a as usize],
                Op::Call(f, a) => {
                    let z = buf[a as usize];
                    f.apply(z).ok_or_else(|| ExprError::Domain {
                        op: f.name(),
                        detail: format!("argument {z}"),
                    })?
                }
            };
            buf.push(v);
        }
        Ok(())
    }

    pub fn output(&self, buf: &[f64], k: usize) -> f64 {
        buf[self.outputs[k] as usize]
    }

    /// Evaluates every output at one point.
    pub fn eval(&self, p: &EvalPoint) -> Result<Vec<f64>, ExprError> {
        let mut buf = Vec::new();
        self.run(&p.x, p.t, &p.params, &mut buf)?;
        Ok(self.outputs.iter().map(|&k| buf[k as usize]).collect())
    }

    /// Evaluates every output at many points, in parallel. Results are in
    /// point order regardless of scheduling.
    pub fn eval_batch(&self, points: &[EvalPoint]) -> Result<Vec<Vec<f64>>, ExprError> {
        use rayon::prelude::*;
        points
            .par_iter()
            .map_init(Vec::new, |buf, p| {
                self.run(&p.x, p.t, &p.params, buf)?;
                Ok(self.outputs.iter().map(|&k| buf[k as usize]).collect())
            })
            .collect()
    }
}

/// Counters from one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalStats {
    pub node_evals: usize,
}

pub fn evaluate(e: &Expr, p: &EvalPoint) -> Result<f64, ExprError> {
    evaluate_with_stats(e, p).map(|(v, _)| v)
}

/// Evaluates `e` at `p`; every distinct node is computed exactly once.
pub fn evaluate_with_stats(e: &Expr, p: &EvalPoint) -> Result<(f64, EvalStats), ExprError> {
    let tape = Tape::compile(std::slice::from_ref(e));
    let mut buf = Vec::new();
    tape.run(&p.x, p.t, &p.params, &mut buf)?;
    Ok((
        tape.output(&buf, 0),
        EvalStats {
            node_evals: buf.len(),
        },
    ))
}
