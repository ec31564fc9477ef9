//! Experiment runner for generator expansions of jump-diffusions.

pub mod commands;
pub mod config;
pub mod error;
