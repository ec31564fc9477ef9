//! Experiment configuration files.
//!
//! A config is a JSON object. Only `model` and `x0` are required:
//!
//! ```json
//! {
//!   "id": "logvol",
//!   "model": {"catalog": "logvol", "params": {...}},
//!   "x0": [4.605170185988092, -0.8276],
//!   "maturities": [0.019230769230769232, 0.08333333333333333, 0.25],
//!   "orders": [1, 2, 3, 4],
//!   "quad_sizes": [10],
//!   "price_grid": {"lo": 90.0, "hi": 110.0, "step": 0.5},
//!   "strike": 100.0,
//!   "mc": {"paths": 200000, "steps_per_year": 1200, "seed": 7},
//!   "method": "auto"
//! }
//! ```
//!
//! `model` is either a model spec (see [`jdexpand::model::spec`]) or
//! `{"file": "path"}`, resolved against the config's directory. In the
//! price and MC commands coordinate 0 of `x0` is replaced by `log S` for
//! every `S` on the price grid.

use std::fs;
use std::path::{Path, PathBuf};

use jdexpand::expansion::content_hash;
use jdexpand::mcbench::MCConfig;
use jdexpand::model::{spec::model_from_value, CatalogModel, JumpDiffusionModel, SmootherKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Largest expansion order a config may request.
pub const ORDER_HARD_CAP: usize = 12;

fn default_maturities() -> Vec<f64> {
    vec![1.0 / 52.0, 1.0 / 12.0, 0.25]
}

fn default_orders() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn default_quad_sizes() -> Vec<usize> {
    vec![10]
}

fn default_strike() -> f64 {
    100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for PriceGrid {
    fn default() -> Self {
        Self {
            lo: 90.0,
            hi: 110.0,
            step: 0.5,
        }
    }
}

impl PriceGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + self.step * i as f64).collect()
    }
}

/// How price expansions are built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Jump shortcut when the model allows it, otherwise the generator.
    #[default]
    Auto,
    /// Poisson mixture over normal jumps at a constant intensity.
    Shortcut,
    /// Generator with a quadrature rule for the jump integral.
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.lo + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    /// Tensor grid of target points, one axis per coordinate. When absent
    /// each axis spans the auxiliary mean +- 10 sd (plus +- 6 jump sd for
    /// normally jumping coordinates) at spacing sd / 6.
    #[serde(default)]
    pub axes: Option<Vec<Axis>>,
    /// Auxiliary Gaussian drift; defaults to the model drift at `x0`.
    #[serde(default)]
    pub mu0: Option<Vec<f64>>,
    /// Auxiliary covariance rate; defaults to the model diffusion at `x0`.
    #[serde(default)]
    pub sigma0_sq: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSpec {
    /// Target function in the s-expression grammar.
    pub f: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model label written to the CSV; defaults to the model's name.
    #[serde(default)]
    pub id: Option<String>,
    pub model: Value,
    /// Price smoother; defaults to a Black-Scholes call matched to the
    /// model's local drift and variance at `x0`.
    #[serde(default)]
    pub smoother: Option<SmootherKind>,
    pub x0: Vec<f64>,
    #[serde(default = "default_maturities")]
    pub maturities: Vec<f64>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_quad_sizes")]
    pub quad_sizes: Vec<usize>,
    #[serde(default)]
    pub price_grid: PriceGrid,
    #[serde(default = "default_strike")]
    pub strike: f64,
    #[serde(default)]
    pub mc: MCConfig,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub node_budget: Option<usize>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub moment: Option<MomentSpec>,
}

impl ExperimentConfig {
    /// Reads a config file and inlines a model given by file reference.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(file) = cfg.model.get("file").and_then(Value::as_str) {
            let p = base.join(file);
            let text = fs::read_to_string(&p).map_err(|e| CliError::Config(format!("model file {}: {e}", p.display())))?;
            cfg.model = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("model file {}: {e}", p.display())))?;
        }
        if let Some(dir) = &cfg.cache_dir {
            if dir.is_relative() {
                cfg.cache_dir = Some(base.join(dir));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.maturities.is_empty() || self.maturities.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad(format!("maturities must be a nonempty list of positive numbers, got {:?}", self.maturities));
        }
        if self.orders.is_empty() {
            return bad("orders must be nonempty".into());
        }
        if let Some(m) = self.orders.iter().find(|&&m| m > ORDER_HARD_CAP) {
            return bad(format!("order {m} exceeds the cap {ORDER_HARD_CAP}"));
        }
        if self.quad_sizes.is_empty() || self.quad_sizes.contains(&0) {
            return bad("quad_sizes must be a nonempty list of positive integers".into());
        }
        let g = &self.price_grid;
        if !(g.lo > 0.0 && g.hi >= g.lo && g.step > 0.0 && g.hi.is_finite()) {
            return bad(format!("invalid price grid {g:?}"));
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return bad(format!("strike must be positive, got {}", self.strike));
        }
        if self.mc.paths == 0 || self.mc.steps_per_year == 0 {
            return bad("mc.paths and mc.steps_per_year must be positive".into());
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad(format!("x0 must be finite, got {:?}", self.x0));
        }
        if let Some(axes) = self.density.as_ref().and_then(|d| d.axes.as_ref()) {
            if axes.iter().any(|a| a.n == 0 || !(a.hi >= a.lo)) {
                return bad("density axes need n >= 1 and hi >= lo".into());
            }
        }
        let model = self.build_model()?;
        if self.x0.len() != model.dim {
            return bad(format!("x0 has length {} for a {}-dimensional model", self.x0.len(), model.dim));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<JumpDiffusionModel, CliError> {
        model_from_value(&self.model).map_err(|e| CliError::Config(format!("model: {e}")))
    }

    /// The catalog entry, when the model is given as one.
    pub fn catalog(&self) -> Option<CatalogModel> {
        serde_json::from_value(self.model.clone()).ok()
    }

    pub fn label(&self, model: &JumpDiffusionModel) -> String {
        self.id.clone().unwrap_or_else(|| model.name.clone())
    }

    pub fn max_order(&self) -> usize {
        self.orders.iter().copied().max().unwrap_or(0)
    }

    /// SHA-256 of the canonical JSON of the effective config.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.cache_dir = None;
        content_hash(&[&serde_json::to_string(&c).unwrap()])
    }
}

/// Command-line overrides applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps_per_year: Option<usize>,
    pub max_order: Option<usize>,
    pub quad_n: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            cfg.mc.seed = s;
        }
        if let Some(p) = self.paths {
            cfg.mc.paths = p;
        }
        if let Some(s) = self.steps_per_year {
            cfg.mc.steps_per_year = s;
        }
        if let Some(m) = self.max_order {
            cfg.orders = (1..=m).collect();
        }
        if let Some(n) = self.quad_n {
            cfg.quad_sizes = vec![n];
        }
        if let Some(d) = &self.cache_dir {
            cfg.cache_dir = Some(d.clone());
        }
        cfg.validate()
    }
}
