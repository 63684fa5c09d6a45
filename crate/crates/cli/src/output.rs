use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};
use tcfbm::harnack::{round_json, round_sig};

/// Provenance stamped on every output file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub task: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

/// `x` with 12 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{}", round_sig(x, 12))
    }
}

pub struct Csv {
    header: Vec<String>,
    body: String,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "# task={}", prov.task);
        let _ = writeln!(out, "# config_sha256={}", prov.config_hash);
        let _ = writeln!(out, "# seed={}", prov.seed);
        out.push_str(&self.header.join(","));
        out.push('\n');
        out.push_str(&self.body);
        std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
    }
}

/// Write `report` (an object) with provenance keys, numbers rounded to 12
/// significant digits.
pub fn write_json(path: &Path, report: Value, prov: &Provenance) -> Result<()> {
    let mut obj = match report {
        Value::Object(o) => o,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    obj.insert("task".into(), Value::String(prov.task.into()));
    obj.insert("config_sha256".into(), Value::String(prov.config_hash.clone()));
    obj.insert("seed".into(), Value::from(prov.seed));
    let text = serde_json::to_string_pretty(&round_json(Value::Object(obj)))?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn target(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
