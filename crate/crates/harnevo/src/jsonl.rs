//! Line-delimited JSON helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
}

pub fn io_error(path: &Path, source: std::io::Error) -> JsonlError {
    JsonlError::Io { path: path.to_path_buf(), source }
}

/// Parse every nonblank line; errors carry the 1-based line number.
pub fn parse_lines<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| JsonlError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_lines(&text, path)
}

pub fn to_line<T: Serialize>(record: &T) -> String {
    let mut s = serde_json::to_string(record).expect("record serializes");
    s.push('\n');
    s
}

pub fn to_text<'a, T: Serialize + 'a>(records: impl IntoIterator<Item = &'a T>) -> String {
    records.into_iter().map(to_line).collect()
}

pub fn append<T: Serialize>(path: &Path, record: &T) -> Result<(), JsonlError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_error(path, e))?;
    f.write_all(to_line(record).as_bytes()).map_err(|e| io_error(path, e))
}
