//! `manifest.json`: what a command produced and how to reproduce it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, outcome: Result<(), &CliError>) -> Self {
        let (status, error) = match outcome {
            Ok(()) => (Status::Ok, None),
            Err(e) => (Status::Error, Some(e.to_string())),
        };
        Self {
            software: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            status,
            error,
            config: config.clone(),
            files: Vec::new(),
        }
    }

    /// Hash every file under `root` except the manifest itself.
    pub fn scan(mut self, root: &Path) -> Result<Self, CliError> {
        let mut files = Vec::new();
        if root.is_dir() {
            collect(root, root, &mut files)?;
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files = files;
        Ok(self)
    }

    pub fn write(&self, root: &Path) -> Result<(), CliError> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        let path = root.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(path))
    }

    pub fn read(root: &Path) -> Result<Self, CliError> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text).map_err(CliError::input(format!("parsing {}", path.display())))
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let rel = rel.join("/");
        if rel == MANIFEST {
            continue;
        }
        let bytes = fs::read(&path).map_err(CliError::io(&path))?;
        out.push(FileEntry { path: rel, bytes: bytes.len() as u64, sha256: hex(&Sha256::digest(&bytes)) });
    }
    Ok(())
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
