//! Utterance manifests.
//!
//! CSV with a header row. Required columns: `utterance_id`, `label`,
//! `arousal`, `valence`, `split`. Every other column is a modality whose
//! cells hold a file path (WAV audio or an EMSQ1 tensor) relative to the
//! manifest's directory; an empty cell marks the modality as absent.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::{emotion_index, Error, Result};

pub const REQUIRED_COLUMNS: [&str; 5] = ["utterance_id", "label", "arousal", "valence", "split"];
pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub class: usize,
    pub arousal: f64,
    pub valence: f64,
    pub split: String,
    /// One entry per [`Manifest::modalities`], resolved to absolute-or-
    /// manifest-relative paths.
    pub paths: Vec<Option<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub modalities: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn rows_in_split<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a ManifestRow> + 'a {
        self.rows.iter().filter(move |r| split == "all" || r.split == split)
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m == name)
    }
}

fn parse_err(path: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(path.to_path_buf(), io),
            other => parse_err(path, 1, "", format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, "", e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut required = [0usize; 5];
    for (slot, name) in required.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = col(name).ok_or_else(|| parse_err(path, 1, name, "missing required column"))?;
    }
    let modality_cols: Vec<usize> = (0..headers.len()).filter(|i| !required.contains(i)).collect();
    let modalities: Vec<String> = modality_cols.iter().map(|&i| headers[i].to_string()).collect();
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, "", e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(required[0]).to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "utterance_id", "empty utterance id"));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_err(
                path,
                line,
                "utterance_id",
                format!("duplicate utterance id {id:?}"),
            ));
        }
        let label = field(required[1]);
        let class = emotion_index(label)
            .ok_or_else(|| parse_err(path, line, "label", format!("unknown emotion label {label:?}")))?;
        let number = |i: usize, name: &str| -> Result<f64> {
            let raw = field(i);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, name, format!("not a number: {raw:?}")))
        };
        let arousal = number(required[2], "arousal")?;
        let valence = number(required[3], "valence")?;
        let split = field(required[4]).to_string();
        if !SPLITS.contains(&split.as_str()) {
            return Err(parse_err(path, line, "split", format!("unknown split {split:?}")));
        }
        let mut paths = Vec::with_capacity(modality_cols.len());
        for (&ci, name) in modality_cols.iter().zip(&modalities) {
            let cell = field(ci);
            if cell.is_empty() {
                paths.push(None);
                continue;
            }
            let p = base.join(cell);
            if !p.is_file() {
                return Err(parse_err(path, line, name, format!("file not found: {}", p.display())));
            }
            paths.push(Some(p));
        }
        rows.push(ManifestRow {
            utterance_id: id,
            class,
            arousal,
            valence,
            split,
            paths,
        });
    }
    Ok(Manifest {
        path: path.to_path_buf(),
        modalities,
        rows,
    })
}
