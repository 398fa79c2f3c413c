//! Reading and writing artifacts under the output directory.

use std::fmt;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rankmst::{CorrelationMatrix, Method, ReturnPanel, SectorMap, Tree};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const RETURNS: &str = "clean/returns.csv";
pub const SECTORS: &str = "clean/sectors.csv";
pub const WINDOWS: &str = "correlation/windows.csv";

/// One analysis window as recorded by `correlate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_start: NaiveDate,
    pub first_row: usize,
    pub rows: usize,
}

pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).is_file()
    }

    /// Empty a stage directory so no output of an earlier run survives.
    pub fn reset(&self, dir: &str) -> Result<(), CliError> {
        let path = self.path(dir);
        match fs::remove_dir_all(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::Io { path, source: e }),
        }
        fs::create_dir_all(&path).map_err(CliError::io(path))
    }

    pub fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        fs::write(&path, bytes).map_err(CliError::io(path))
    }

    /// Render into a buffer with `f`, then write it out.
    pub fn write_with<E: fmt::Display>(
        &self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(CliError::analysis(format!("rendering {rel}")))?;
        self.write(rel, buf)
    }

    pub fn write_rows<T: Serialize>(&self, rel: &str, rows: &[T]) -> Result<(), CliError> {
        self.write_with(rel, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(csv::Error::from)
        })
    }

    /// A CSV with an explicit header, written even when there are no rows.
    pub fn write_table<R, I>(&self, rel: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        self.write_with(rel, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush().map_err(csv::Error::from)
        })
    }

    pub fn read(&self, rel: &str) -> Result<Vec<u8>, CliError> {
        let path = self.path(rel);
        fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => CliError::Input(format!(
                "missing {}; run `rankmst {}` first",
                path.display(),
                producer(rel)
            )),
            _ => CliError::Io { path, source: e },
        })
    }

    pub fn read_string(&self, rel: &str) -> Result<String, CliError> {
        String::from_utf8(self.read(rel)?).map_err(CliError::input(rel.to_owned()))
    }

    pub fn read_rows<T: DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>, CliError> {
        let bytes = self.read(rel)?;
        csv::Reader::from_reader(bytes.as_slice())
            .deserialize()
            .collect::<Result<Vec<T>, _>>()
            .map_err(CliError::input(rel.to_owned()))
    }

    pub fn returns(&self) -> Result<ReturnPanel, CliError> {
        ReturnPanel::read_csv(self.read(RETURNS)?.as_slice()).map_err(CliError::input(RETURNS))
    }

    pub fn sectors(&self) -> Result<SectorMap, CliError> {
        rankmst::ingest::load_sectors(self.read(SECTORS)?.as_slice()).map_err(CliError::input(SECTORS))
    }

    pub fn windows(&self) -> Result<Vec<WindowRow>, CliError> {
        self.read_rows(WINDOWS)
    }

    pub fn correlation(&self, method: Method, start: NaiveDate) -> Result<CorrelationMatrix, CliError> {
        let rel = correlation_path(method, start);
        let m = CorrelationMatrix::from_json(&self.read_string(&rel)?).map_err(CliError::input(&rel))?;
        if m.method() != method {
            return Err(CliError::Input(format!("{rel} holds a {} matrix", m.method())));
        }
        Ok(m)
    }

    pub fn tree(&self, method: Method, start: NaiveDate) -> Result<Tree, CliError> {
        let rel = tree_path(method, start, "json");
        Tree::from_json(&self.read_string(&rel)?).map_err(CliError::input(rel))
    }
}

pub fn correlation_path(method: Method, start: NaiveDate) -> String {
    format!("correlation/{method}/{start}.json")
}

pub fn tree_path(method: Method, start: NaiveDate, ext: &str) -> String {
    format!("mst/{method}/{start}.{ext}")
}

/// Subcommand that writes the artifact at `rel`.
fn producer(rel: &str) -> &'static str {
    match rel.split('/').next().unwrap_or_default() {
        "clean" => "clean",
        "correlation" => "correlate",
        "mst" => "mst",
        "stability" => "stability",
        "centrality" => "centrality",
        "gaussianity" => "gaussianity",
        "portfolio" => "portfolio",
        "bootstrap" => "bootstrap",
        _ => "run",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_artifact_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let err = store.windows().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("rankmst correlate"), "{err}");
    }

    #[test]
    fn reset_clears_previous_output() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        store.write("mst/pearson/old.json", "{}").unwrap();
        store.reset("mst").unwrap();
        assert!(!store.exists("mst/pearson/old.json"));
        assert!(store.path("mst").is_dir());
    }

    #[test]
    fn rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let rows = vec![WindowRow { window_start: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), first_row: 0, rows: 5 }];
        store.write_rows(WINDOWS, &rows).unwrap();
        assert_eq!(store.windows().unwrap(), rows);
        assert_eq!(store.read_string(WINDOWS).unwrap(), "window_start,first_row,rows\n2020-01-02,0,5\n");
    }
}
