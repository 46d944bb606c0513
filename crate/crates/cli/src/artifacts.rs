//! Artifact files: CSV/JSON payloads written atomically, plus the manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Artifact {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact payloads serialize");
        bytes.push(b'\n');
        Artifact { name: name.into(), bytes }
    }
}

/// Plain CSV with a header row. Floats use the shortest round-trip form,
/// switching to exponent notation for very small or large magnitudes.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, cells: &[f64]) {
        let line: Vec<String> = cells.iter().map(|v| fmt_float(*v)).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn finish(self, name: &str) -> Artifact {
        Artifact { name: name.into(), bytes: self.text.into_bytes() }
    }
}

fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to a sibling temp file, syncs, then renames over the target.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub module: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub status: &'static str,
    pub artifacts: Vec<FileEntry>,
    pub diagnostics: Option<Diagnostics>,
}

pub fn write_all(dir: &Path, artifacts: &[Artifact], mut manifest: Manifest) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        write_atomic(dir, &a.name, &a.bytes)?;
        manifest.artifacts.push(FileEntry { file: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() });
    }
    let m = Artifact::json("manifest.json", &manifest);
    write_atomic(dir, &m.name, &m.bytes)
}
