//! Feature archives: one little-endian `FEA1` file per utterance plus a
//! `manifest.json` index at the archive root.
//!
//! File layout: magic `FEA1`, version `u32 = 1`, frames `u32`, dim `u32`,
//! frame rate `f64`, then `frames × dim` row-major `f32` values.
//!
//! Archives are immutable once written; [`Archive`] maps files on demand
//! and is safe to share between threads.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use abxkit_core::score::FeatureSource;
use abxkit_core::FeatureMatrix;
use memmap2::Mmap;
use serde::{Deserialize, Serialize};

use crate::error::{data_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"FEA1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub relative_path: String,
    pub frames: u32,
    pub dim: u32,
    pub frame_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ArchiveManifest {
    pub fn dim(&self) -> Option<u32> {
        self.entries.first().map(|e| e.dim)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.utterance_id.as_str()) {
                return Err(data_err!(
                    "manifest lists utterance {} twice",
                    e.utterance_id
                ));
            }
            if Some(e.dim) != self.dim() {
                return Err(data_err!(
                    "manifest mixes feature dims ({} has dim {})",
                    e.utterance_id,
                    e.dim
                ));
            }
            let rel = Path::new(&e.relative_path);
            if rel.is_absolute()
                || rel
                    .components()
                    .any(|c| !matches!(c, std::path::Component::Normal(_)))
            {
                return Err(data_err!(
                    "{}: manifest path {:?} escapes the archive",
                    e.utterance_id,
                    e.relative_path
                ));
            }
        }
        Ok(())
    }
}

/// Serialises one matrix into the `FEA1` byte layout.
pub fn encode_matrix(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    out.extend_from_slice(&m.frame_rate().to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Header fields of a `FEA1` file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub frames: u32,
    pub dim: u32,
    pub frame_rate: f64,
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_header(bytes: &[u8], utterance_id: &str) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(data_err!(
            "{utterance_id}: truncated feature file ({} bytes)",
            bytes.len()
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(data_err!(
            "{utterance_id}: bad magic, not a FEA1 feature file"
        ));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(data_err!(
            "{utterance_id}: unsupported feature file version {version}"
        ));
    }
    Ok(Header {
        frames: read_u32(bytes, 8),
        dim: read_u32(bytes, 12),
        frame_rate: f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")),
    })
}

pub fn decode_matrix(bytes: &[u8], utterance_id: &str) -> Result<FeatureMatrix> {
    let h = decode_header(bytes, utterance_id)?;
    let values = h.frames as usize * h.dim as usize;
    let expected = HEADER_LEN + values * 4;
    if bytes.len() != expected {
        return Err(data_err!(
            "{utterance_id}: truncated or oversized feature file ({} bytes, expected {expected})",
            bytes.len()
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(FeatureMatrix::new(
        utterance_id,
        h.dim as usize,
        h.frame_rate,
        data,
    )?)
}

/// File name for an utterance id: the id itself when it is a plain
/// portable name, otherwise a hex encoding.
fn file_name(id: &str) -> String {
    let plain = !id.starts_with('.')
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'));
    if plain {
        format!("{id}.fea")
    } else {
        let hex: String = id.bytes().map(|b| format!("{b:02x}")).collect();
        format!("~{hex}.fea")
    }
}

/// Writes every matrix and the manifest under `root`.
pub fn write_archive(matrices: &[FeatureMatrix], root: &Path) -> Result<ArchiveManifest> {
    let mut seen = HashSet::new();
    for m in matrices {
        if !seen.insert(m.utterance_id()) {
            return Err(data_err!("duplicate utterance id {}", m.utterance_id()));
        }
        if m.dim() != matrices[0].dim() {
            return Err(data_err!(
                "mixed feature dims: {} has {}, {} has {}",
                matrices[0].utterance_id(),
                matrices[0].dim(),
                m.utterance_id(),
                m.dim()
            ));
        }
        if m.frames() > u32::MAX as usize || m.dim() > u32::MAX as usize {
            return Err(data_err!(
                "{}: matrix too large for the FEA1 header",
                m.utterance_id()
            ));
        }
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = ArchiveManifest::default();
    for m in matrices {
        let name = file_name(m.utterance_id());
        let path = root.join(&name);
        fs::write(&path, encode_matrix(m)).map_err(|e| Error::io(&path, e))?;
        manifest.entries.push(ManifestEntry {
            utterance_id: m.utterance_id().to_owned(),
            relative_path: name,
            frames: m.frames() as u32,
            dim: m.dim() as u32,
            frame_rate: m.frame_rate(),
        });
    }
    let path = root.join(MANIFEST);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Read-only view of an archive; matrices load on demand.
#[derive(Debug, Clone)]
pub struct Archive {
    root: PathBuf,
    manifest: ArchiveManifest,
    index: BTreeMap<String, usize>,
}

impl Archive {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(data_err!("{}: missing archive manifest", path.display()))
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        let manifest: ArchiveManifest = serde_json::from_str(&text)
            .map_err(|e| data_err!("{}: invalid manifest: {e}", path.display()))?;
        manifest.validate()?;
        let index = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.utterance_id.clone(), i))
            .collect();
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            index,
        })
    }

    pub fn manifest(&self) -> &ArchiveManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    /// Utterance ids in manifest order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.manifest
            .entries
            .iter()
            .map(|e| e.utterance_id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<FeatureMatrix> {
        let entry = self
            .index
            .get(id)
            .map(|&i| &self.manifest.entries[i])
            .ok_or_else(|| {
                data_err!(
                    "utterance {id} not found in archive {}",
                    self.root.display()
                )
            })?;
        let path = self.root.join(&entry.relative_path);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let m = if len == 0 {
            decode_matrix(&[], id)?
        } else {
            // SAFETY: archives are immutable after writing; the map is
            // dropped before this function returns.
            let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(&path, e))?;
            let h = decode_header(&map, id)?;
            if h.frames != entry.frames
                || h.dim != entry.dim
                || h.frame_rate.to_bits() != entry.frame_rate.to_bits()
            {
                return Err(data_err!(
                    "{id}: header (frames {}, dim {}, rate {}) disagrees with manifest (frames {}, dim {}, rate {})",
                    h.frames,
                    h.dim,
                    h.frame_rate,
                    entry.frames,
                    entry.dim,
                    entry.frame_rate
                ));
            }
            decode_matrix(&map, id)?
        };
        Ok(m)
    }

    /// Every matrix, in manifest order.
    pub fn load_all(&self) -> Result<Vec<FeatureMatrix>> {
        self.ids().map(|id| self.get(id)).collect()
    }
}

impl FeatureSource for Archive {
    fn load(&self, utterance_id: &str) -> abxkit_core::Result<Cow<'_, FeatureMatrix>> {
        self.get(utterance_id).map(Cow::Owned).map_err(|e| match e {
            Error::Core(c) => c,
            other => abxkit_core::Error::Data(other.to_string()),
        })
    }
}

pub fn read_archive(root: &Path) -> Result<Archive> {
    Archive::open(root)
}
