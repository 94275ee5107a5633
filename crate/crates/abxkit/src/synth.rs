//! On-disk layout of generated fixtures.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use abxkit_core::syngen::{generate, SynDataset, SynSpec};

use crate::error::{data_err, Error, Result};
use crate::featstore::write_archive;
use crate::itemfile::{write_language_items, write_phone_items};

pub const FEATURES_DIR: &str = "features";
pub const PHONE_ITEMS: &str = "phone.item";
pub const LANGUAGE_ITEMS: &str = "language.item";

/// Paths of a written fixture.
#[derive(Debug, Clone)]
pub struct SynPaths {
    pub features: PathBuf,
    pub phone_items: PathBuf,
    pub language_items: PathBuf,
}

impl SynPaths {
    pub fn under(root: &Path) -> Self {
        Self {
            features: root.join(FEATURES_DIR),
            phone_items: root.join(PHONE_ITEMS),
            language_items: root.join(LANGUAGE_ITEMS),
        }
    }
}

pub fn write_dataset(ds: &SynDataset, root: &Path) -> Result<SynPaths> {
    let paths = SynPaths::under(root);
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    write_archive(&ds.features, &paths.features)?;
    let f = File::create(&paths.phone_items).map_err(|e| Error::io(&paths.phone_items, e))?;
    write_phone_items(&ds.phone_items, BufWriter::new(f))
        .map_err(|e| Error::io(&paths.phone_items, e))?;
    let f = File::create(&paths.language_items).map_err(|e| Error::io(&paths.language_items, e))?;
    write_language_items(&ds.language_items, BufWriter::new(f))
        .map_err(|e| Error::io(&paths.language_items, e))?;
    Ok(paths)
}

pub fn read_spec(path: &Path) -> Result<SynSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| data_err!("{}: invalid fixture spec: {e}", path.display()))
}

pub fn generate_to(spec: &SynSpec, root: &Path) -> Result<SynPaths> {
    let ds = generate(spec)?;
    write_dataset(&ds, root)
}
