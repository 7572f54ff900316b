//! Dataset directories: a `dataset.json` index pointing at per-entry skull
//! landmark files and face meshes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::mesh::{load_mesh, save_mesh, MeshFormat, TriMesh};
use crate::scalar::Real;

pub const INDEX_FILE: &str = "dataset.json";

/// Index record of one entry, with paths relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: String,
    /// Entries sharing a group (the two halves of one individual) are held
    /// out together during cross-validation. Defaults to the id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub skull: String,
    /// Measured face surface.
    pub face: String,
    /// Reference mesh registered onto `face`; defaults to `face` itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deformed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format_version: u32,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T: Real> {
    pub id: String,
    pub group: String,
    pub skull: LandmarkSet<T>,
    pub face: TriMesh<T>,
    pub deformed: TriMesh<T>,
}

fn rel(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn load_index(dir: &Path) -> Result<DatasetIndex> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let idx: DatasetIndex = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.line(), e.to_string()))?;
    if idx.format_version != 1 {
        return Err(Error::format(
            path.display().to_string(),
            0,
            format!("unsupported dataset format version {}", idx.format_version),
        ));
    }
    Ok(idx)
}

/// Loads every entry listed in `dir/dataset.json`.
pub fn load_dataset<T: Real>(dir: &Path) -> Result<Vec<Entry<T>>> {
    let idx = load_index(dir)?;
    let mut out = Vec::with_capacity(idx.entries.len());
    for rec in idx.entries {
        let fp = rel(dir, &rec.face);
        let face: TriMesh<T> = load_mesh(&fp, MeshFormat::from_path(&fp)?)?;
        let deformed = match &rec.deformed {
            Some(d) if *d != rec.face => {
                let dp = rel(dir, d);
                load_mesh(&dp, MeshFormat::from_path(&dp)?)?
            }
            _ => face.clone(),
        };
        let skull = LandmarkSet::load(&rel(dir, &rec.skull))?;
        out.push(Entry {
            group: rec.group.clone().unwrap_or_else(|| rec.id.clone()),
            id: rec.id,
            skull,
            face,
            deformed,
        });
    }
    Ok(out)
}

/// Writes entries as `skull_XXX.json`, `face_XXX.ply` (and `deformed_XXX.ply`
/// when the deformed reference differs from the face) plus the index.
pub fn save_dataset<T: Real>(entries: &[Entry<T>], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let skull = format!("skull_{i:03}.json");
        let face = format!("face_{i:03}.ply");
        e.skull.save(&dir.join(&skull))?;
        save_mesh(&e.face, &dir.join(&face), MeshFormat::Ply)?;
        let deformed = if e.deformed == e.face {
            None
        } else {
            let d = format!("deformed_{i:03}.ply");
            save_mesh(&e.deformed, &dir.join(&d), MeshFormat::Ply)?;
            Some(d)
        };
        records.push(EntryRecord {
            id: e.id.clone(),
            group: (e.group != e.id).then(|| e.group.clone()),
            skull,
            face,
            deformed,
        });
    }
    let idx = DatasetIndex {
        format_version: 1,
        entries: records,
    };
    let path = dir.join(INDEX_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&idx)?).map_err(|e| Error::io(&path, e))
}
