//! JSON-Lines files and CSV manifests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use singassess_core::scorer::Dimension;

use crate::error::{Error, IoContext, Result};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).at(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = File::create(path).at(path)?;
    let mut w = BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::format(path, e))?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, e))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).at(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
}

/// A user take and its reference, for pre-screening and rule scoring.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct TakePair {
    pub user_path: PathBuf,
    pub ref_path: PathBuf,
}

/// A clip with one 1-5 label per dimension.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct LabelledClip {
    pub clip_path: PathBuf,
    pub breath: u8,
    pub timbre: u8,
    pub emotion: u8,
    pub technique: u8,
}

impl LabelledClip {
    pub fn label(&self, d: Dimension) -> u8 {
        match d {
            Dimension::Breath => self.breath,
            Dimension::Timbre => self.timbre,
            Dimension::Emotion => self.emotion,
            Dimension::Technique => self.technique,
        }
    }
}

/// Reads a headed CSV. Relative paths resolve against the manifest's directory.
fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked io error"),
        }
    } else {
        Error::format(path, e)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn read_pairs(path: &Path) -> Result<Vec<TakePair>> {
    Ok(read_csv::<TakePair>(path)?
        .into_iter()
        .map(|p| TakePair { user_path: resolve(path, &p.user_path), ref_path: resolve(path, &p.ref_path) })
        .collect())
}

pub fn read_labelled(path: &Path) -> Result<Vec<LabelledClip>> {
    let rows = read_csv::<LabelledClip>(path)?;
    for (i, r) in rows.iter().enumerate() {
        if let Some(d) = Dimension::ALL.into_iter().find(|&d| !(1..=5).contains(&r.label(d))) {
            return Err(Error::format(path, format!("row {}: {d} label {} outside 1-5", i + 1, r.label(d))));
        }
    }
    Ok(rows.into_iter().map(|r| LabelledClip { clip_path: resolve(path, &r.clip_path), ..r }).collect())
}

pub fn write_labelled(path: &Path, rows: &[LabelledClip]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().at(path)
}
