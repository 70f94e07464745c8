//! On-disk layout: `Caption-All/<split>/<stem>.json` plus
//! `List-of-Files-for-Each-Experiments/First-Sentence/<split>/file_idx.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schema::{parse_benchmark_record, serialize_benchmark_record};
use super::{Dataset, FigureCaptionRecord, Provenance, Split};
use crate::error::{Error, Result};

const CAPTION_DIR: &str = "Caption-All";
const INDEX_DIR: &str = "List-of-Files-for-Each-Experiments/First-Sentence";
const INDEX_FILE: &str = "file_idx.json";
const CONTROL: &str = "control";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    provenance: Provenance,
    counts: [usize; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSplit {
    pub records: Vec<FigureCaptionRecord>,
    /// Index entries whose caption file does not exist.
    pub skipped: Vec<String>,
}

fn file_stem(figure_id: &str) -> &str {
    figure_id.strip_suffix(".png").unwrap_or(figure_id)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_indexed(root: &Path, name: &str, records: &[FigureCaptionRecord]) -> Result<()> {
    let mut index = Vec::with_capacity(records.len());
    for r in records {
        let stem = file_stem(&r.figure_id);
        let path = root.join(CAPTION_DIR).join(name).join(format!("{stem}.json"));
        let mut body = serialize_benchmark_record(r);
        body.push('\n');
        write_file(&path, &body)?;
        index.push(format!("{stem}.png"));
    }
    let mut idx = serde_json::to_string_pretty(&index)?;
    idx.push('\n');
    write_file(&root.join(INDEX_DIR).join(name).join(INDEX_FILE), &idx)
}

/// Writes `records` as the named caption list under `root`.
pub fn export_records(root: &Path, name: &str, records: &[FigureCaptionRecord]) -> Result<()> {
    write_indexed(root, name, records)
}

/// Loads a named caption list in index order.
pub fn load_records(root: &Path, name: &str) -> Result<LoadedSplit> {
    load_indexed(root, name)
}

/// Writes every split and the control set under `root`.
pub fn export_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    for split in Split::ALL {
        write_indexed(root, split.as_str(), ds.split(split))?;
    }
    write_indexed(root, CONTROL, &ds.control_set)?;
    let manifest = Manifest {
        provenance: ds.provenance,
        counts: [ds.train.len(), ds.val.len(), ds.test.len(), ds.control_set.len()],
    };
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    write_file(&root.join(MANIFEST), &m)
}

fn load_indexed(root: &Path, name: &str) -> Result<LoadedSplit> {
    let index_path = root.join(INDEX_DIR).join(name).join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let entries: Vec<String> = serde_json::from_str(&text)
        .map_err(|e| Error::schema(index_path.display().to_string(), e.to_string()))?;
    let mut records = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();
    for entry in entries {
        let stem = Path::new(&entry)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&entry)
            .to_string();
        let path: PathBuf = root.join(CAPTION_DIR).join(name).join(format!("{stem}.json"));
        match fs::read_to_string(&path) {
            Ok(body) => records.push(parse_benchmark_record(&body)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => skipped.push(entry),
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    log::info!(
        "loaded {} records from {name} ({} skipped)",
        records.len(),
        skipped.len()
    );
    Ok(LoadedSplit { records, skipped })
}

/// Loads one split in `file_idx.json` order.
pub fn load_split(root: &Path, split: Split) -> Result<LoadedSplit> {
    load_indexed(root, split.as_str())
}

/// Loads the annotated control set; a missing index means no control set.
pub fn load_control_set(root: &Path) -> Result<LoadedSplit> {
    if !root.join(INDEX_DIR).join(CONTROL).join(INDEX_FILE).exists() {
        return Ok(LoadedSplit {
            records: Vec::new(),
            skipped: Vec::new(),
        });
    }
    load_indexed(root, CONTROL)
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let provenance = match fs::read_to_string(root.join(MANIFEST)) {
        Ok(text) => serde_json::from_str::<Manifest>(&text)?.provenance,
        Err(_) => Provenance::Benchmark,
    };
    Ok(Dataset {
        train: load_split(root, Split::Train)?.records,
        val: load_split(root, Split::Val)?.records,
        test: load_split(root, Split::Test)?.records,
        control_set: load_control_set(root)?.records,
        provenance,
    })
}
