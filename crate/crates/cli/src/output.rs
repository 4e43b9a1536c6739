//! Stamped, atomically written artifacts and the capacitance cache.

use std::path::{Path, PathBuf};

use elastoscat::capacitance::{BemGeometry, CapacitanceMatrix};
use elastoscat::io::write_atomic;
use elastoscat::mesh::{builtin, SurfaceMesh};
use elastoscat::{Error, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ShapeSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes artifacts under one directory, stamping each with the config
/// hash and artifact version.
pub struct Writer {
    pub dir: PathBuf,
    pub hash: String,
    pub written: Vec<String>,
}

impl Writer {
    pub fn new(dir: PathBuf, hash: String) -> Self {
        Self {
            dir,
            hash,
            written: Vec::new(),
        }
    }

    fn stamp(&self) -> Value {
        json!({"name": "elastoscat", "version": VERSION, "config_hash": self.hash})
    }

    /// JSON object with an `artifact` stamp in front of the payload fields.
    pub fn json<T: Serialize>(&mut self, name: &str, payload: &T) -> Result<()> {
        let mut obj = Map::new();
        obj.insert("artifact".into(), self.stamp());
        match serde_json::to_value(payload)? {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    /// Text preceded by one `#` comment line carrying the stamp. Used for
    /// CSVs and scripts, which both read `#` as a comment.
    pub fn commented(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# elastoscat {VERSION} config_hash={}\n{body}", self.hash);
        self.put(name, text.as_bytes())
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Whether a previous run with the same config left a complete result.
pub fn up_to_date(dir: &Path, manifest: &str, hash: &str) -> bool {
    let Ok(text) = std::fs::read_to_string(dir.join(manifest)) else {
        return false;
    };
    let Ok(v) = serde_json::from_str::<Value>(&text) else {
        return false;
    };
    let stamped = v["artifact"]["config_hash"].as_str() == Some(hash) && v["artifact"]["version"].as_str() == Some(VERSION);
    let outputs_exist = v["outputs"]
        .as_array()
        .is_some_and(|o| o.iter().all(|f| f.as_str().is_some_and(|f| dir.join(f).is_file())));
    stamped && outputs_exist
}

pub enum CacheStatus {
    Hit,
    Miss,
}

impl CacheStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
        }
    }
}

pub fn load_mesh(shape: &ShapeSpec) -> Result<SurfaceMesh> {
    match &shape.mesh {
        Some(p) => SurfaceMesh::read(p),
        None => builtin(shape.builtin.as_deref().unwrap_or("sphere"), shape.level, shape.axes),
    }
}

/// Cache key of an extraction: shape description (or mesh file digest),
/// level and Lamé pair.
fn cache_key(shape: &ShapeSpec, lambda: f64, mu: f64) -> Result<String> {
    let geometry = match &shape.mesh {
        Some(p) => json!({"mesh_sha256": sha256_hex(&std::fs::read(p)?)}),
        None => json!({"builtin": shape.builtin.as_deref().unwrap_or("sphere"), "axes": shape.axes}),
    };
    let key = json!({"geometry": geometry, "level": shape.level, "lambda": lambda, "mu": mu});
    Ok(sha256_hex(serde_json::to_string(&key)?.as_bytes())[..16].to_string())
}

pub fn cache_path(cache_dir: &Path, shape: &ShapeSpec, lambda: f64, mu: f64) -> Result<PathBuf> {
    Ok(cache_dir.join(format!("capacitance-{}.json", cache_key(shape, lambda, mu)?)))
}

/// Capacitance from the cache, extracting and storing it on a miss.
pub fn capacitance(cache_dir: &Path, shape: &ShapeSpec, lambda: f64, mu: f64) -> Result<(CapacitanceMatrix, CacheStatus)> {
    let path = cache_path(cache_dir, shape, lambda, mu)?;
    if let Ok(text) = std::fs::read_to_string(&path) {
        match CapacitanceMatrix::from_json(&text) {
            Ok(c) if c.lambda == lambda && c.mu == mu => return Ok((c, CacheStatus::Hit)),
            _ => log::warn!("ignoring unreadable cache entry {}", path.display()),
        }
    }
    let mesh = load_mesh(shape)?;
    let c = BemGeometry::new(&mesh).elastic(lambda, mu)?;
    let mut text = c.to_json()?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok((c, CacheStatus::Miss))
}

/// Generic matplotlib script for a far-field CSV written by this tool.
pub fn plot_script(csv: &str) -> String {
    format!(
        r##"# Plots |U_p| and |U_s| per direction from {csv}.
import sys
import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "{csv}", comment="#")
p = np.sqrt(sum(df[f"{{c}}(Up{{i}})"] ** 2 for c in ("Re", "Im") for i in (1, 2, 3)))
s = np.sqrt(sum(df[f"{{c}}(Us{{i}})"] ** 2 for c in ("Re", "Im") for i in (1, 2, 3)))
fig, ax = plt.subplots()
ax.plot(p.values, "o-", label="|U_p|")
ax.plot(s.values, "s-", label="|U_s|")
ax.set_xlabel("direction index")
ax.set_ylabel("far-field magnitude")
ax.legend()
fig.savefig("{stem}.png", dpi=150)
"##,
        stem = csv.trim_end_matches(".csv")
    )
}

/// Exit code and machine-readable description of a failure.
pub fn error_report(e: &Error) -> (i32, Value) {
    let (code, kind) = match e {
        Error::Parse(_) | Error::InvalidInput(_) | Error::InvalidMedium { .. } | Error::InvalidMesh(_) | Error::GridMismatch(_) => {
            (2, "schema")
        }
        Error::Infeasible(_) => (4, "infeasible"),
        Error::Io(_) | Error::Json(_) => (1, "io"),
        _ => (3, "numerical"),
    };
    (code, json!({"status": "error", "kind": kind, "exit_code": code, "message": e.to_string()}))
}
