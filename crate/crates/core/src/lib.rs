pub mod error;
pub mod model;
pub mod symexpr;
pub mod quadrature;
pub mod generator;
pub mod expansion;
pub mod mcbench;
