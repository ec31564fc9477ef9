//! Hash-consed symbolic expressions in state variables `x0..x{d-1}`, the
//! time variable `t` and symbolic parameters `p0..`.
//!
//! Every [`Expr`] is an immutable node in a global DAG. Nodes are built only
//! through the smart constructors in this module, which fold constants,
//! drop additive/multiplicative identities and intern the result, so two
//! structurally identical expressions built anywhere in the process share
//! the same node and compare equal by identity.
//!
//! Sums and products are n-ary. Their operands are ordered by a content
//! hash, which makes `a + b` and `b + a` the same node and keeps the order
//! (and therefore the floating-point evaluation order) reproducible from
//! one run to the next.

mod diff;
mod eval;
mod poly;
mod sexpr;
mod simplify;
mod subst;

pub use diff::{differentiate, Differentiator};
pub use eval::{evaluate, evaluate_with_stats, EvalPoint, Tape};
pub use poly::{to_polynomial, Polynomial};
pub use sexpr::{parse, to_dag_string, to_sexpr};
pub use simplify::simplify;
pub use subst::{shift, Substituter};

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Weak};

use once_cell::sync::Lazy;
use parking_lot::Mutex;
use smallvec::SmallVec;

use crate::error::ExprError;

/// Largest number of state variables an expression may reference.
pub const MAX_STATE_VARS: usize = 32;
/// Largest number of symbolic parameters an expression may reference.
pub const MAX_PARAMS: usize = 31;

/// A variable an expression can be differentiated with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    State(usize),
    Time,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(i) => write!(f, "x{i}"),
            Var::Time => write!(f, "t"),
        }
    }
}

/// Closed set of elementary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Exp,
    Log,
    Sqrt,
    NormalCdf,
    NormalPdf,
    Erf,
    Abs,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::Exp,
        Builtin::Log,
        Builtin::Sqrt,
        Builtin::NormalCdf,
        Builtin::NormalPdf,
        Builtin::Erf,
        Builtin::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Sqrt => "sqrt",
            Builtin::NormalCdf => "normal_cdf",
            Builtin::NormalPdf => "normal_pdf",
            Builtin::Erf => "erf",
            Builtin::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Numeric value, or `None` outside the function's real domain.
    pub fn apply(self, z: f64) -> Option<f64> {
        match self {
            Builtin::Exp => Some(z.exp()),
            Builtin::Log => (z > 0.0).then(|| z.ln()),
            Builtin::Sqrt => (z >= 0.0).then(|| z.sqrt()),
            Builtin::NormalCdf => Some(normal_cdf(z)),
            Builtin::NormalPdf => Some(normal_pdf(z)),
            Builtin::Erf => Some(libm::erf(z)),
            Builtin::Abs => Some(z.abs()),
        }
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal cdf, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Node payload. Children are ordered; `Add` and `Mul` are n-ary.
#[derive(Debug)]
pub enum Kind {
    Const(f64),
    State(usize),
    Time,
    Param(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Neg(Expr),
    Call(Builtin, Expr),
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Const(_) => "const",
            Kind::State(_) => "state",
            Kind::Time => "time",
            Kind::Param(_) => "param",
            Kind::Add(_) => "add",
            Kind::Mul(_) => "mul",
            Kind::Sub(..) => "sub",
            Kind::Div(..) => "div",
            Kind::Pow(..) => "pow",
            Kind::Neg(_) => "neg",
            Kind::Call(b, _) => b.name(),
        }
    }

}

/// Bit set of the variables an expression depends on.
///
/// Bits `0..32` are state variables, bit 32 is time, bits `33..64` are
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct VarSet(u64);

impl VarSet {
    const TIME_BIT: u64 = 1 << 32;

    pub fn empty() -> Self {
        VarSet(0)
    }
    fn state(i: usize) -> Self {
        VarSet(1 << i)
    }
    fn param(i: usize) -> Self {
        VarSet(1 << (33 + i))
    }
    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn contains(self, v: Var) -> bool {
        match v {
            Var::State(i) => i < MAX_STATE_VARS && self.0 & (1 << i) != 0,
            Var::Time => self.0 & Self::TIME_BIT != 0,
        }
    }
    pub fn has_time(self) -> bool {
        self.0 & Self::TIME_BIT != 0
    }
    /// Mask of the state variables only.
    pub fn state_mask(self) -> u32 {
        self.0 as u32
    }
    pub fn intersects_states(self, mask: u32) -> bool {
        self.state_mask() & mask != 0
    }
    /// Number of state slots needed (highest index + 1).
    pub fn state_extent(self) -> usize {
        32 - self.state_mask().leading_zeros() as usize
    }
    pub fn param_extent(self) -> usize {
        let p = (self.0 >> 33) as u32;
        32 - p.leading_zeros() as usize
    }
}

pub struct Node {
    id: u64,
    shash: u64,
    vars: VarSet,
    kind: Kind,
}

/// Shared handle to an interned expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}
impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr#{}({})", self.0.id, self.kind().name())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_sexpr(self))
    }
}

#[derive(PartialEq, Eq, Hash)]
struct Key {
    tag: u8,
    payload: u64,
    children: SmallVec<[u64; 4]>,
}

struct Interner {
    table: HashMap<Key, Weak<Node>>,
    next_id: u64,
    sweep_at: usize,
}

static INTERNER: Lazy<Mutex<Interner>> = Lazy::new(|| {
    Mutex::new(Interner {
        table: HashMap::new(),
        next_id: 0,
        sweep_at: 1 << 16,
    })
});

/// Number of live interned nodes (diagnostic).
pub fn interned_count() -> usize {
    let mut g = INTERNER.lock();
    g.table.retain(|_, w| w.strong_count() > 0);
    g.table.len()
}

fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn const_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn intern(kind: Kind) -> Expr {
    let (tag, payload): (u8, u64) = match &kind {
        Kind::Const(v) => (0, const_bits(*v)),
        Kind::State(i) => (1, *i as u64),
        Kind::Time => (2, 0),
        Kind::Param(i) => (3, *i as u64),
        Kind::Add(_) => (4, 0),
        Kind::Mul(_) => (5, 0),
        Kind::Sub(..) => (6, 0),
        Kind::Div(..) => (7, 0),
        Kind::Pow(..) => (8, 0),
        Kind::Neg(_) => (9, 0),
        Kind::Call(b, _) => (10, *b as u64),
    };
    let kids: SmallVec<[&Expr; 4]> = match &kind {
        Kind::Add(v) | Kind::Mul(v) => v.iter().collect(),
        Kind::Sub(a, b) | Kind::Div(a, b) | Kind::Pow(a, b) => smallvec::smallvec![a, b],
        Kind::Neg(a) | Kind::Call(_, a) => smallvec::smallvec![a],
        _ => SmallVec::new(),
    };
    let key = Key {
        tag,
        payload,
        children: kids.iter().map(|c| c.0.id).collect(),
    };
    let mut shash = mix(tag as u64, payload);
    let mut vars = match &kind {
        Kind::State(i) => VarSet::state(*i),
        Kind::Time => VarSet(VarSet::TIME_BIT),
        Kind::Param(i) => VarSet::param(*i),
        _ => VarSet::empty(),
    };
    for c in &kids {
        shash = mix(shash, c.0.shash);
        vars = vars.union(c.0.vars);
    }
    drop(kids);

    let mut g = INTERNER.lock();
    if let Some(existing) = g.table.get(&key).and_then(Weak::upgrade) {
        return Expr(existing);
    }
    let id = g.next_id;
    g.next_id += 1;
    let node = Arc::new(Node {
        id,
        shash,
        vars,
        kind,
    });
    g.table.insert(key, Arc::downgrade(&node));
    if g.table.len() >= g.sweep_at {
        g.table.retain(|_, w| w.strong_count() > 0);
        g.sweep_at = (2 * g.table.len()).max(1 << 16);
    }
    Expr(node)
}

impl Expr {
    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    /// Process-unique node identity.
    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Content hash, stable across runs.
    pub fn structural_hash(&self) -> u64 {
        self.0.shash
    }

    pub fn vars(&self) -> VarSet {
        self.0.vars
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.0.vars.contains(v)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.kind() {
            Kind::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// All direct operands, in order.
    pub fn operands(&self) -> SmallVec<[&Expr; 4]> {
        match self.kind() {
            Kind::Add(v) | Kind::Mul(v) => v.iter().collect(),
            Kind::Sub(a, b) | Kind::Div(a, b) | Kind::Pow(a, b) => smallvec::smallvec![a, b],
            Kind::Neg(a) | Kind::Call(_, a) => smallvec::smallvec![a],
            _ => SmallVec::new(),
        }
    }

    /// Number of distinct nodes reachable from this expression.
    pub fn node_count(&self) -> usize {
        node_count(std::slice::from_ref(self))
    }

    /// Nodes reachable from `self` in children-before-parents order.
    pub fn topo_order(&self) -> Vec<Expr> {
        topo_order(std::slice::from_ref(self))
    }
}

/// Number of distinct nodes reachable from any of `roots`.
pub fn node_count(roots: &[Expr]) -> usize {
    let mut seen = std::collections::HashSet::new();
    let mut stack: Vec<&Expr> = roots.iter().collect();
    while let Some(e) = stack.pop() {
        if seen.insert(e.id()) {
            stack.extend(e.operands());
        }
    }
    seen.len()
}

/// Post-order (children first) listing of every node reachable from `roots`.
/// Iterative, so deep DAGs do not exhaust the call stack.
pub fn topo_order(roots: &[Expr]) -> Vec<Expr> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut stack: Vec<(Expr, bool)> = roots.iter().rev().map(|r| (r.clone(), false)).collect();
    while let Some((e, expanded)) = stack.pop() {
        if expanded {
            out.push(e);
            continue;
        }
        if !seen.insert(e.id()) {
            continue;
        }
        stack.push((e.clone(), true));
        for c in e.operands().into_iter().rev() {
            if !seen.contains(&c.id()) {
                stack.push((c.clone(), false));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Smart constructors
// ---------------------------------------------------------------------------

pub fn constant(v: f64) -> Expr {
    intern(Kind::Const(if v == 0.0 { 0.0 } else { v }))
}

pub fn zero() -> Expr {
    constant(0.0)
}

pub fn one() -> Expr {
    constant(1.0)
}

pub fn state(i: usize) -> Expr {
    assert!(i < MAX_STATE_VARS, "state index {i} exceeds {MAX_STATE_VARS}");
    intern(Kind::State(i))
}

pub fn time() -> Expr {
    intern(Kind::Time)
}

pub fn param(i: usize) -> Expr {
    assert!(i < MAX_PARAMS, "param index {i} exceeds {MAX_PARAMS}");
    intern(Kind::Param(i))
}

pub fn var(v: Var) -> Expr {
    match v {
        Var::State(i) => state(i),
        Var::Time => time(),
    }
}

fn sort_operands(v: &mut [Expr]) {
    v.sort_by(|a, b| {
        a.structural_hash()
            .cmp(&b.structural_hash())
            .then(a.id().cmp(&b.id()))
    });
}

// Nested sums/products are spliced into their parent only when the whole
// flattened operand list stays short. Splicing into long lists would turn
// repeated differentiation into ever wider flat sums with nothing shared.
const FLATTEN_LIMIT: usize = 4;
const FLAT_MAX: usize = 8;

/// Operands of `items` with nested `is_nested` nodes of at most
/// `FLATTEN_LIMIT` operands spliced in, unless the result would exceed
/// `FLAT_MAX` operands. The choice depends only on the operand multiset.
fn flatten_operands(items: Vec<Expr>, nested: impl Fn(&Expr) -> Option<&[Expr]>) -> Vec<Expr> {
    let mut flat = Vec::with_capacity(items.len());
    let mut stack: Vec<Expr> = items.iter().rev().cloned().collect();
    while let Some(e) = stack.pop() {
        match nested(&e) {
            Some(inner) if inner.len() <= FLATTEN_LIMIT => stack.extend(inner.iter().rev().cloned()),
            _ => flat.push(e),
        }
    }
    if flat.len() <= FLAT_MAX || flat.len() == items.len() {
        flat
    } else {
        items
    }
}

/// n-ary sum with small nested sums flattened and constants folded.
pub fn add_all<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
    let items = flatten_operands(terms.into_iter().collect(), |e| match e.kind() {
        Kind::Add(v) => Some(v.as_slice()),
        _ => None,
    });
    let mut acc = 0.0;
    let mut rest = Vec::with_capacity(items.len());
    for e in items {
        match e.kind() {
            Kind::Const(c) => acc += c,
            _ => rest.push(e),
        }
    }
    if rest.is_empty() {
        return constant(acc);
    }
    sort_operands(&mut rest);
    if acc != 0.0 {
        rest.insert(0, constant(acc));
    }
    if rest.len() == 1 {
        return rest.pop().unwrap();
    }
    intern(Kind::Add(rest))
}

/// n-ary product with small nested products flattened and constants folded.
pub fn mul_all<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
    let items = flatten_operands(factors.into_iter().collect(), |e| match e.kind() {
        Kind::Mul(v) => Some(v.as_slice()),
        _ => None,
    });
    let mut acc = 1.0;
    let mut rest = Vec::with_capacity(items.len());
    for e in items {
        match e.kind() {
            Kind::Const(c) => acc *= c,
            _ => rest.push(e),
        }
    }
    if acc == 0.0 || rest.is_empty() {
        return constant(acc);
    }
    sort_operands(&mut rest);
    if acc == -1.0 && rest.len() == 1 {
        return neg(&rest[0]);
    }
    if acc != 1.0 {
        rest.insert(0, constant(acc));
    }
    if rest.len() == 1 {
        return rest.pop().unwrap();
    }
    intern(Kind::Mul(rest))
}

pub fn add(a: &Expr, b: &Expr) -> Expr {
    add_all([a.clone(), b.clone()])
}

pub fn mul(a: &Expr, b: &Expr) -> Expr {
    mul_all([a.clone(), b.clone()])
}

pub fn scale(c: f64, a: &Expr) -> Expr {
    mul_all([constant(c), a.clone()])
}

pub fn sub(a: &Expr, b: &Expr) -> Expr {
    if b.is_zero() {
        return a.clone();
    }
    if a.is_zero() {
        return neg(b);
    }
    if a == b {
        return zero();
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return constant(x - y);
    }
    intern(Kind::Sub(a.clone(), b.clone()))
}

pub fn div(a: &Expr, b: &Expr) -> Expr {
    if b.is_one() {
        return a.clone();
    }
    if a.is_zero() && !b.is_zero() {
        return zero();
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if y != 0.0 {
            return constant(x / y);
        }
    }
    intern(Kind::Div(a.clone(), b.clone()))
}

pub fn pow(a: &Expr, b: &Expr) -> Expr {
    if b.is_zero() {
        return one();
    }
    if b.is_one() || a.is_one() {
        return a.clone();
    }
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        let v = x.powf(y);
        if v.is_finite() {
            return constant(v);
        }
    }
    intern(Kind::Pow(a.clone(), b.clone()))
}

pub fn powf(a: &Expr, p: f64) -> Expr {
    pow(a, &constant(p))
}

pub fn neg(a: &Expr) -> Expr {
    match a.kind() {
        Kind::Const(c) => constant(-c),
        Kind::Neg(inner) => inner.clone(),
        _ => intern(Kind::Neg(a.clone())),
    }
}

pub fn call(f: Builtin, a: &Expr) -> Expr {
    if let Some(c) = a.as_const() {
        if let Some(v) = f.apply(c) {
            if v.is_finite() {
                return constant(v);
            }
        }
    }
    intern(Kind::Call(f, a.clone()))
}

pub fn exp(a: &Expr) -> Expr {
    call(Builtin::Exp, a)
}
pub fn log(a: &Expr) -> Expr {
    call(Builtin::Log, a)
}
pub fn sqrt(a: &Expr) -> Expr {
    call(Builtin::Sqrt, a)
}
pub fn normal_cdf_expr(a: &Expr) -> Expr {
    call(Builtin::NormalCdf, a)
}
pub fn normal_pdf_expr(a: &Expr) -> Expr {
    call(Builtin::NormalPdf, a)
}
pub fn erf(a: &Expr) -> Expr {
    call(Builtin::Erf, a)
}
pub fn abs(a: &Expr) -> Expr {
    call(Builtin::Abs, a)
}

/// Rebuilds a node of the same kind over new operands, through the smart
/// constructors.
pub(crate) fn rebuild(e: &Expr, ops: &[Expr]) -> Expr {
    match e.kind() {
        Kind::Const(_) | Kind::State(_) | Kind::Time | Kind::Param(_) => e.clone(),
        Kind::Add(_) => add_all(ops.iter().cloned()),
        Kind::Mul(_) => mul_all(ops.iter().cloned()),
        Kind::Sub(..) => sub(&ops[0], &ops[1]),
        Kind::Div(..) => div(&ops[0], &ops[1]),
        Kind::Pow(..) => pow(&ops[0], &ops[1]),
        Kind::Neg(_) => neg(&ops[0]),
        Kind::Call(b, _) => call(*b, &ops[0]),
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $f:expr) => {
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(self, rhs)
            }
        }
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(&self, &rhs)
            }
        }
        impl std::ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(&self, rhs)
            }
        }
        impl std::ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(self, &rhs)
            }
        }
        impl std::ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $f(self, &constant(rhs))
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $f(&self, &constant(rhs))
            }
        }
        impl std::ops::$trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $f(&constant(self), rhs)
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $f(&constant(self), &rhs)
            }
        }
    };
}

impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}
impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(&self)
    }
}

/// Checks that `e` only references state variables below `dim`.
pub fn check_dimension(e: &Expr, dim: usize) -> Result<(), ExprError> {
    let extent = e.vars().state_extent();
    if extent > dim {
        return Err(ExprError::DimensionMismatch {
            expected: dim,
            found: extent,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_consing_shares_identical_structure() {
        let a = exp(&(state(0) * 2.0));
        let b = exp(&(state(0) * 2.0));
        assert_eq!(a, b);
        assert_eq!(a.id(), b.id());
    }

    #[test]
    fn commutative_operands_are_canonical() {
        let x = state(0);
        let y = state(1);
        assert_eq!(&x + &y, &y + &x);
        assert_eq!(&x * &y, &y * &x);
    }

    #[test]
    fn identities_fold() {
        let x = state(0);
        assert_eq!((&x * 1.0) + 0.0, x);
        assert!((&x * 0.0).is_zero());
        assert_eq!(constant(2.0) * constant(3.0), constant(6.0));
        assert_eq!(neg(&neg(&x)), x);
        assert_eq!(pow(&x, &one()), x);
        assert!(pow(&x, &zero()).is_one());
        assert!(sub(&x, &x).is_zero());
    }

    #[test]
    fn nested_sums_flatten() {
        let x = state(0);
        let e = (&x + 1.0) + 2.0;
        match e.kind() {
            Kind::Add(v) => {
                assert_eq!(v.len(), 2);
                assert_eq!(v[0].as_const(), Some(3.0));
            }
            k => panic!("unexpected {k:?}"),
        }
    }

    #[test]
    fn var_sets_track_dependencies() {
        let e = exp(&state(2)) * time() + param(1);
        assert!(e.depends_on(Var::State(2)));
        assert!(!e.depends_on(Var::State(0)));
        assert!(e.depends_on(Var::Time));
        assert_eq!(e.vars().state_extent(), 3);
        assert_eq!(e.vars().param_extent(), 2);
        assert!(check_dimension(&e, 2).is_err());
        assert!(check_dimension(&e, 3).is_ok());
    }

    #[test]
    fn topo_order_lists_children_first() {
        let x = state(0);
        let s = &x * &x + exp(&x);
        let order = s.topo_order();
        let pos = |e: &Expr| order.iter().position(|o| o == e).unwrap();
        assert!(pos(&x) < pos(&exp(&x)));
        assert_eq!(order.last().unwrap(), &s);
        assert_eq!(order.len(), s.node_count());
    }
}
