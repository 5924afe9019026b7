//! Result bundles: every output file of a command plus a manifest of hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const BUNDLE_SCHEMA_VERSION: &str = "qdphase.bundle/1";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub command: String,
    pub tool_version: String,
    /// Inputs by file name, with their hashes.
    pub inputs: Vec<FileEntry>,
    /// Outputs sorted by path; the manifest itself is not listed.
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn entry(path: String, data: &[u8]) -> FileEntry {
    FileEntry {
        path,
        sha256: sha256_hex(data),
        bytes: data.len() as u64,
    }
}

/// Outputs held in memory until [`Bundle::write`].
#[derive(Clone, Debug)]
pub struct Bundle {
    pub command: String,
    inputs: Vec<FileEntry>,
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new(command: impl Into<String>) -> Self {
        Bundle {
            command: command.into(),
            inputs: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Add or replace an output file.
    pub fn add(&mut self, name: impl Into<String>, data: impl Into<Vec<u8>>) {
        let name = name.into();
        let data = data.into();
        match self.files.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = data,
            None => self.files.push((name, data)),
        }
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, v: &T) -> CliResult<()> {
        self.add(name, qdphase::io::to_json(v)?);
        Ok(())
    }

    /// Record an input file by name and content hash.
    pub fn record_input(&mut self, path: &Path, data: &[u8]) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.inputs.push(entry(name, data));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
    }

    pub fn get_str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(|d| std::str::from_utf8(d).ok())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn manifest(&self) -> Manifest {
        let mut files: Vec<FileEntry> = self
            .files
            .iter()
            .map(|(n, d)| entry(n.clone(), d))
            .collect();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Manifest {
            schema_version: BUNDLE_SCHEMA_VERSION.into(),
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: self.inputs.clone(),
            files,
        }
    }

    /// Write all files and the manifest into `dir`, one file at a time.
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::bad(format!("cannot create {}: {e}", dir.display())))?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        let mut put = |name: &str, data: &[u8]| -> CliResult<()> {
            let p = dir.join(name);
            std::fs::write(&p, data)
                .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display())))?;
            written.push(p);
            Ok(())
        };
        for (n, d) in &self.files {
            put(n, d)?;
        }
        put(MANIFEST_NAME, qdphase::io::to_json(&self.manifest())?.as_bytes())?;
        Ok(written)
    }
}

/// Check every file listed in `dir/manifest.json` against its hash.
pub fn verify_dir(dir: &Path) -> CliResult<Manifest> {
    let read = |p: PathBuf| {
        std::fs::read(&p).map_err(|e| CliError::bad(format!("cannot read {}: {e}", p.display())))
    };
    let m: Manifest = serde_json::from_slice(&read(dir.join(MANIFEST_NAME))?)
        .map_err(|e| CliError::bad(format!("manifest: {e}")))?;
    for f in &m.files {
        let data = read(dir.join(&f.path))?;
        if sha256_hex(&data) != f.sha256 || data.len() as u64 != f.bytes {
            return Err(CliError::bad(format!("{} does not match its manifest hash", f.path)));
        }
    }
    Ok(m)
}
