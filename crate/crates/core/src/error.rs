use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot differentiate {function} with respect to {var}")]
    NotDifferentiable { function: &'static str, var: String },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("undefined variable {0}")]
    UndefinedVariable(String),
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("diffusion matrix is not symmetric at ({i},{j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("{0}")]
    Inconsistent(String),
    #[error("model spec field {field}: {message}")]
    Spec { field: String, message: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid rule size {0}")]
    InvalidSize(usize),
    #[error("tridiagonal eigen-solve did not converge")]
    NoConvergence,
    #[error("unsupported distribution: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("model has jumps but no quadrature rule was supplied")]
    MissingRule,
    #[error("quadrature rule does not match the model: {0}")]
    RuleMismatch(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpansionError {
    #[error("expression budget exceeded: {nodes} nodes > {budget}")]
    BudgetExceeded { nodes: usize, budget: usize },
    #[error("expansion order {order} exceeds the cap {cap}")]
    OrderCap { order: usize, cap: usize },
    #[error("model is not a polynomial process: {0}")]
    NonPolynomial(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("inadmissible start state: {0}")]
    InvalidStart(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("step count overflow: {0}")]
    StepOverflow(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}
