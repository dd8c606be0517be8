//! Artifact writers: diagnostics CSV, flat binary arrays with JSON
//! sidecars, and the run manifest.
//!
//! CSV floats are written with Rust's shortest round-trip formatting, so a
//! rerun with the same config and seed produces byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::grid::GridDistribution;

/// Accumulates the files a run writes, then lands the manifest atomically.
pub struct ArtifactSink {
    dir: PathBuf,
    records: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub wall_seconds: f64,
    pub outputs: Vec<ArtifactRecord>,
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), records: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data)?;
        let mut hasher = Sha256::new();
        hasher.update(data);
        self.records.push(ArtifactRecord {
            path: name.to_string(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    /// Writes a CSV with the given header and rows; floats in shortest
    /// round-trip form, NaN spelled `NaN`.
    pub fn write_csv(&mut self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let mut out = String::new();
        out.push_str(header);
        out.push('\n');
        for row in rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&format_float(*v));
            }
            out.push('\n');
        }
        self.record(name, out.as_bytes())
    }

    /// Flat little-endian f64 array.
    pub fn write_f64_binary(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let mut bytes = Vec::with_capacity(data.len() * 8);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.record(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| crate::error::Error::Config(e.to_string()))?;
        self.record(name, text.as_bytes())
    }

    /// Grid distribution as binary cells plus a JSON sidecar with the grid
    /// geometry and ordering.
    pub fn write_distribution(&mut self, stem: &str, f: &GridDistribution) -> Result<()> {
        self.write_f64_binary(&format!("{stem}.bin"), &f.values)?;
        let g = &f.grid;
        let sidecar = GridSidecar {
            kind: "grid-distribution",
            layout: "f64 little-endian, row-major cells (axis 0 outermost)",
            min: (0..g.dim()).map(|a| g.axis(a).min).collect(),
            max: (0..g.dim()).map(|a| g.axis(a).max).collect(),
            cells: (0..g.dim()).map(|a| g.axis(a).cells).collect(),
            time: f.time,
        };
        self.write_json(&format!("{stem}.json"), &sidecar)
    }

    /// Finalizes the manifest; written via a temp file and rename so the
    /// manifest appears atomically and only at run end.
    pub fn finish(
        mut self,
        seed: u64,
        config: serde_json::Value,
        wall_seconds: f64,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: "metriplectic",
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            wall_seconds,
            outputs: std::mem::take(&mut self.records),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| crate::error::Error::Config(e.to_string()))?;
        let tmp = self.dir.join(".manifest.json.tmp");
        {
            let mut fh = fs::File::create(&tmp)?;
            fh.write_all(text.as_bytes())?;
            fh.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join("manifest.json"))?;
        Ok(manifest)
    }
}

#[derive(Serialize)]
struct GridSidecar {
    kind: &'static str,
    layout: &'static str,
    min: Vec<f64>,
    max: Vec<f64>,
    cells: Vec<usize>,
    time: f64,
}

/// Sidecar for spectral-state snapshots (complex pairs, row-major modes).
#[derive(Serialize)]
pub struct ChmSidecar {
    pub kind: &'static str,
    pub layout: &'static str,
    pub k: usize,
    pub c: f64,
}

impl ChmSidecar {
    pub fn new(k: usize, c: f64) -> Self {
        Self {
            kind: "chm-state",
            layout: "f64 little-endian (re, im) pairs, modes row-major (n outer, m inner), n,m in -K..=K",
            k,
            c,
        }
    }
}

/// Sidecar for ensemble snapshots.
#[derive(Serialize)]
pub struct EnsembleSidecar {
    pub kind: &'static str,
    pub layout: &'static str,
    pub n_particles: usize,
    pub dim: usize,
    pub time: f64,
}

impl EnsembleSidecar {
    pub fn new(n_particles: usize, dim: usize, time: f64) -> Self {
        Self {
            kind: "ensemble",
            layout: "f64 little-endian, particle-major (N x dim)",
            n_particles,
            dim,
            time,
        }
    }
}

/// Shortest round-trip decimal form; deterministic for equal values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

/// Reads back a flat little-endian f64 array.
pub fn read_f64_binary(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_deterministic_and_round_trips_binary() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec![0.1, 1.0 / 3.0, f64::NAN], vec![2.0, -0.25, 1e-12]];
        let write = |sub: &str| {
            let mut sink = ArtifactSink::new(&dir.path().join(sub)).unwrap();
            sink.write_csv("d.csv", "a,b,c", &rows).unwrap();
            sink.write_f64_binary("x.bin", &[1.5, -2.5, 0.0]).unwrap();
            sink.finish(1, serde_json::json!({}), 0.0).unwrap();
            std::fs::read(dir.path().join(sub).join("d.csv")).unwrap()
        };
        assert_eq!(write("a"), write("b"));
        let data = read_f64_binary(&dir.path().join("a").join("x.bin")).unwrap();
        assert_eq!(data, vec![1.5, -2.5, 0.0]);
    }

    #[test]
    fn manifest_lists_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = ArtifactSink::new(dir.path()).unwrap();
        sink.write_csv("d.csv", "t", &[vec![0.0]]).unwrap();
        sink.write_f64_binary("x.bin", &[1.0]).unwrap();
        let manifest = sink.finish(9, serde_json::json!({"k": 1}), 1.0).unwrap();
        let names: Vec<&str> = manifest.outputs.iter().map(|r| r.path.as_str()).collect();
        assert_eq!(names, vec!["d.csv", "x.bin"]);
        assert!(dir.path().join("manifest.json").exists());
        for r in &manifest.outputs {
            assert_eq!(r.sha256.len(), 64);
        }
    }
}
