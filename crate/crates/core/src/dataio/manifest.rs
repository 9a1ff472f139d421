//! `id,path,label` dataset manifests.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{parse_pgm, sample_from_pgm, ImageSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: Option<usize>,
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "path", "label"] {
        return Err(Error::Data(format!(
            "{}: manifest header must be id,path,label",
            path.display()
        )));
    }
    let mut entries = Vec::new();
    for row in r.deserialize::<ManifestEntry>() {
        let row = row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        entries.push(row);
    }
    Ok(entries)
}

/// Resolves an entry's image path relative to the manifest location.
pub fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&entry.path)
    }
}

/// Loads every image listed in a manifest. Sample ids and labels come from
/// the manifest, not the file names.
pub fn load_manifest_samples(manifest_path: impl AsRef<Path>) -> Result<Vec<ImageSample>> {
    let manifest_path = manifest_path.as_ref();
    read_manifest(manifest_path)?
        .into_iter()
        .map(|entry| {
            let path = resolve(manifest_path, &entry);
            let bytes = std::fs::read(&path)
                .map_err(|e| Error::Data(format!("image for `{}`: {}: {e}", entry.id, path.display())))?;
            let pgm = parse_pgm(&bytes).map_err(|e| Error::Data(format!("image for `{}`: {e}", entry.id)))?;
            sample_from_pgm(entry.id, entry.label, &pgm)
        })
        .collect()
}
