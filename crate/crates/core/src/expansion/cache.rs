//! On-disk cache of built expansions, keyed by a SHA-256 content hash.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExpansionKind, ExpansionResult, PoissonMixture};
use crate::model::JumpDiffusionModel;
use crate::quadrature::QuadratureRule;
use crate::symexpr::{parse, to_dag_string};

/// Hex SHA-256 of the parts, each length-prefixed.
pub fn content_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Canonical text of a model's coefficients and jump law.
pub fn model_fingerprint(m: &JumpDiffusionModel) -> String {
    let mut s = format!("dim {}\n", m.dim);
    for e in &m.drift {
        s.push_str(&to_dag_string(e));
        s.push('\n');
    }
    for e in m.diffusion_sq.iter().flatten() {
        s.push_str(&to_dag_string(e));
        s.push('\n');
    }
    if let Some(j) = &m.jumps {
        s.push_str(&to_dag_string(&j.intensity));
        s.push('\n');
        s.push_str(&serde_json::to_string(&j.distribution).unwrap());
        s.push('\n');
    }
    s.push_str(&to_dag_string(&m.discount));
    s
}

#[derive(Serialize, Deserialize)]
struct Stored {
    kind: ExpansionKind,
    order: usize,
    coefficients: Vec<String>,
    limit: Option<String>,
    model_name: String,
    rule: Option<QuadratureRule>,
    mixture: Option<PoissonMixture>,
}

impl ExpansionResult {
    pub fn to_json(&self) -> String {
        let s = Stored {
            kind: self.kind,
            order: self.order,
            coefficients: self.coefficients.iter().map(to_dag_string).collect(),
            limit: self.limit.as_ref().map(to_dag_string),
            model_name: self.model_name.clone(),
            rule: self.rule.clone(),
            mixture: self.mixture.clone(),
        };
        serde_json::to_string(&s).unwrap()
    }

    pub fn from_json(text: &str) -> Option<Self> {
        let s: Stored = serde_json::from_str(text).ok()?;
        let coefficients = s.coefficients.iter().map(|c| parse(c)).collect::<Result<Vec<_>, _>>().ok()?;
        let limit = match s.limit {
            Some(l) => Some(parse(&l).ok()?),
            None => None,
        };
        Some(Self::new(
            s.kind,
            s.order,
            coefficients,
            limit,
            s.model_name,
            s.rule,
            s.mixture,
        ))
    }
}

/// Directory of `<hash>.json` files.
#[derive(Debug, Clone)]
pub struct ExpansionCache {
    dir: PathBuf,
}

impl ExpansionCache {
    pub fn new(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Missing or unreadable entries are treated as misses.
    pub fn get(&self, key: &str) -> Option<ExpansionResult> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        ExpansionResult::from_json(&text)
    }

    pub fn put(&self, key: &str, res: &ExpansionResult) -> io::Result<()> {
        let tmp = self.dir.join(format!("{key}.tmp"));
        fs::write(&tmp, res.to_json())?;
        fs::rename(tmp, self.path(key))
    }
}
