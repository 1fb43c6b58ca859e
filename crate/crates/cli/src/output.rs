use std::io::Write;
use std::path::{Path, PathBuf};

use nlstefan::Field;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::scenario::SnapshotFormat;
use crate::CliError;

/// Output directory; every file is written to a temporary sibling first and
/// renamed into place.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| io_error(&root, e))?;
        Ok(Self { root })
    }

    pub fn write(&self, rel: &str, contents: &str) -> Result<PathBuf, CliError> {
        let target = self.root.join(rel);
        let parent = target.parent().unwrap_or(&self.root).to_path_buf();
        std::fs::create_dir_all(&parent).map_err(|e| io_error(&parent, e))?;
        let mut tmp = NamedTempFile::new_in(&parent).map_err(|e| io_error(&parent, e))?;
        tmp.write_all(contents.as_bytes()).map_err(|e| io_error(&target, e))?;
        tmp.as_file().sync_all().map_err(|e| io_error(&target, e))?;
        tmp.persist(&target).map_err(|e| io_error(&target, e.error))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable output");
        text.push('\n');
        self.write(rel, &text)
    }

    /// Writes `stem.csv` and/or `stem.json`; returns the written file names.
    pub fn write_field(&self, stem: &str, field: &Field, format: &SnapshotFormat) -> Result<Vec<String>, CliError> {
        let mut names = Vec::new();
        if matches!(format, SnapshotFormat::Csv | SnapshotFormat::Both) {
            names.push(format!("{stem}.csv"));
            self.write(names.last().unwrap(), &field.to_csv())?;
        }
        if matches!(format, SnapshotFormat::Json | SnapshotFormat::Both) {
            names.push(format!("{stem}.json"));
            self.write(names.last().unwrap(), &field.to_json())?;
        }
        Ok(names)
    }

    /// Two-column `t,value` series.
    pub fn write_series(&self, rel: &str, times: &[f64], values: &[f64]) -> Result<PathBuf, CliError> {
        let mut text = String::from("t,value\n");
        for (t, v) in times.iter().zip(values) {
            text.push_str(&format!("{t},{v}\n"));
        }
        self.write(rel, &text)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
