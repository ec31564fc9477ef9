//! JSON model specifications.
//!
//! Two forms are accepted. A catalog entry:
//!
//! ```json
//! {"catalog": "cir", "params": {"kappa": 2.0, "alpha": 0.04, "sigma": 0.3}}
//! ```
//!
//! or an explicit model whose expressions use the s-expression grammar of
//! [`crate::symexpr::parse`]:
//!
//! ```json
//! {
//!   "name": "ou",
//!   "dim": 1,
//!   "drift": ["(* -1 x0)"],
//!   "diffusion_sq": [["0.04"]],
//!   "intensity": "0.5",
//!   "jumps": [{"coord": 0, "dist": "normal", "params": {"mean": 0.0, "sd": 0.1}}],
//!   "discount": "0",
//!   "nonnegative": []
//! }
//! ```
//!
//! `intensity`, `jumps`, `discount` and `nonnegative` are optional. Errors
//! name the offending field, e.g. `drift[1]` or `jumps[0].params.sd`.

use serde_json::Value;

use super::{CatalogModel, JumpDiffusionModel, JumpDistribution, Marginal};
use crate::error::ModelError;
use crate::symexpr::{self, Expr};

fn spec_err(field: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Spec {
        field: field.into(),
        message: message.into(),
    }
}

fn expr_at(v: &Value, field: &str) -> Result<Expr, ModelError> {
    match v {
        Value::String(s) => symexpr::parse(s).map_err(|e| spec_err(field, e.to_string())),
        Value::Number(n) => Ok(symexpr::constant(n.as_f64().unwrap_or(f64::NAN))),
        _ => Err(spec_err(field, "expected an expression string")),
    }
}

fn num_at(obj: &serde_json::Map<String, Value>, key: &str, field: &str) -> Result<f64, ModelError> {
    obj.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| spec_err(format!("{field}.{key}"), "expected a number"))
}

fn marginal(v: &Value, field: &str) -> Result<(usize, Marginal), ModelError> {
    let obj = v.as_object().ok_or_else(|| spec_err(field, "expected an object"))?;
    let coord = obj
        .get("coord")
        .and_then(Value::as_u64)
        .ok_or_else(|| spec_err(format!("{field}.coord"), "expected a nonnegative integer"))? as usize;
    let dist = obj
        .get("dist")
        .and_then(Value::as_str)
        .ok_or_else(|| spec_err(format!("{field}.dist"), "expected a string"))?;
    let empty = serde_json::Map::new();
    let params = match obj.get("params") {
        Some(Value::Object(p)) => p,
        None => &empty,
        Some(_) => return Err(spec_err(format!("{field}.params"), "expected an object")),
    };
    let pf = format!("{field}.params");
    let m = match dist {
        "normal" => Marginal::Normal {
            mean: num_at(params, "mean", &pf)?,
            sd: num_at(params, "sd", &pf)?,
        },
        "double_exponential" => Marginal::DoubleExponential {
            scale: num_at(params, "scale", &pf)?,
        },
        "exponential" => Marginal::Exponential {
            mean: num_at(params, "mean", &pf)?,
        },
        other => return Err(spec_err(format!("{field}.dist"), format!("unknown distribution '{other}'"))),
    };
    Ok((coord, m))
}

/// Builds a model from a parsed JSON value.
pub fn model_from_value(v: &Value) -> Result<JumpDiffusionModel, ModelError> {
    let obj = v.as_object().ok_or_else(|| spec_err("$", "expected an object"))?;
    if obj.contains_key("catalog") {
        let c: CatalogModel = serde_json::from_value(v.clone()).map_err(|e| spec_err("params", e.to_string()))?;
        return c.build();
    }
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| spec_err("dim", "expected a positive integer"))? as usize;
    let name = obj.get("name").and_then(Value::as_str).unwrap_or("custom").to_string();

    let drift = obj
        .get("drift")
        .and_then(Value::as_array)
        .ok_or_else(|| spec_err("drift", "expected an array"))?;
    if drift.len() != dim {
        return Err(spec_err("drift", format!("expected {dim} entries, got {}", drift.len())));
    }
    let drift = drift
        .iter()
        .enumerate()
        .map(|(i, e)| expr_at(e, &format!("drift[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = obj
        .get("diffusion_sq")
        .and_then(Value::as_array)
        .ok_or_else(|| spec_err("diffusion_sq", "expected an array of arrays"))?;
    if rows.len() != dim {
        return Err(spec_err("diffusion_sq", format!("expected {dim} rows, got {}", rows.len())));
    }
    let mut diffusion_sq = Vec::with_capacity(dim);
    for (i, r) in rows.iter().enumerate() {
        let f = format!("diffusion_sq[{i}]");
        let r = r.as_array().ok_or_else(|| spec_err(&f, "expected an array"))?;
        if r.len() != dim {
            return Err(spec_err(&f, format!("expected {dim} entries, got {}", r.len())));
        }
        diffusion_sq.push(
            r.iter()
                .enumerate()
                .map(|(j, e)| expr_at(e, &format!("{f}[{j}]")))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }

    let mut model = JumpDiffusionModel::diffusion(name, drift, diffusion_sq)?;
    let intensity = match obj.get("intensity") {
        None | Some(Value::Null) => None,
        Some(e) => Some(expr_at(e, "intensity")?),
    };
    let jumps = match obj.get("jumps") {
        None | Some(Value::Null) => None,
        Some(Value::Array(a)) => {
            let mut marginals = vec![Marginal::None; dim];
            for (k, j) in a.iter().enumerate() {
                let f = format!("jumps[{k}]");
                let (coord, m) = marginal(j, &f)?;
                if coord >= dim {
                    return Err(spec_err(format!("{f}.coord"), format!("{coord} is not below dim {dim}")));
                }
                if !marginals[coord].is_none() {
                    return Err(spec_err(format!("{f}.coord"), format!("coordinate {coord} listed twice")));
                }
                marginals[coord] = m;
            }
            Some(JumpDistribution::new(marginals).map_err(|e| spec_err("jumps", e.to_string()))?)
        }
        Some(_) => return Err(spec_err("jumps", "expected an array")),
    };
    model = match (intensity, jumps) {
        (Some(l), Some(j)) => model.with_jumps(l, j)?,
        (None, None) => model,
        (Some(_), None) => return Err(spec_err("jumps", "intensity given without jumps")),
        (None, Some(_)) => return Err(spec_err("intensity", "jumps given without an intensity")),
    };
    if let Some(d) = obj.get("discount") {
        model = model.with_discount(expr_at(d, "discount")?)?;
    }
    if let Some(n) = obj.get("nonnegative") {
        let coords = n
            .as_array()
            .and_then(|a| a.iter().map(|c| c.as_u64().map(|c| c as usize)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| spec_err("nonnegative", "expected an array of indices"))?;
        model = model.with_nonnegative(coords)?;
    }
    Ok(model)
}

/// Parses a JSON model specification. Syntax errors report line and column.
pub fn parse_model_spec(json: &str) -> Result<JumpDiffusionModel, ModelError> {
    let v: Value = serde_json::from_str(json)
        .map_err(|e| spec_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    model_from_value(&v)
}
