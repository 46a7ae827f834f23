//! Dataset generation and the versioned JSON manifest that indexes it.
//!
//! Generation is a pure function of (count, seed): image paths are relative
//! to the manifest, entry RNG streams are derived per index, and the JSON is
//! rendered deterministically, so two runs with the same arguments produce
//! byte-identical output trees.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::caption::{Caption, Vocabulary};
use crate::rng::stream;
use crate::{Error, Result};

use super::grammar::random_caption;
use super::render::{encode_ppm, read_ppm, render};
use super::scene::{sample_scene, SceneSpec};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Image path relative to the manifest's directory.
    pub image: String,
    pub captions: Vec<String>,
    pub scene: SceneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Generate `count` scene/image/caption entries under `output_dir` and write
/// `manifest.json` there. Byte-identical for identical (count, seed).
pub fn generate_dataset(count: usize, seed: u64, output_dir: &Path) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::Config("dataset count must be at least 1".into()));
    }
    let vocab = Vocabulary::v1();
    let images_dir = output_dir.join("images");
    fs::create_dir_all(&images_dir)?;

    let mut entries = Vec::with_capacity(count);
    for index in 0..count {
        let mut rng = stream(seed, index as u64);
        let scene = sample_scene(&mut rng);
        let caption = random_caption(&vocab, &scene, &mut rng);
        let rel = format!("images/img_{index:05}.ppm");
        fs::write(output_dir.join(&rel), encode_ppm(&render(&scene))?)?;
        entries.push(ManifestEntry { image: rel, captions: vec![caption.text()], scene });
    }

    let manifest = DatasetManifest { version: MANIFEST_VERSION, seed, entries };
    manifest.save(&output_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// One loaded training example.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub image: Tensor,
    pub caption: Caption,
    pub scene: SceneSpec,
    /// Primary-object category among shape x color combinations.
    pub category: usize,
}

/// A manifest together with decoded images and tokenized captions.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub items: Vec<DatasetItem>,
}

impl LoadedDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Load a dataset from its manifest path, decoding every referenced image.
pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let vocab = Vocabulary::v1();
    let mut items = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let text = entry.captions.first().ok_or_else(|| {
            Error::Manifest(format!("entry {} carries no caption", entry.image))
        })?;
        items.push(DatasetItem {
            image: read_ppm(&base.join(&entry.image))?,
            caption: vocab.encode(text)?,
            scene: entry.scene.clone(),
            category: entry.scene.category(),
        });
    }
    Ok(LoadedDataset { manifest, items })
}

/// Check that every referenced image exists and byte-matches the rendering
/// of its scene. Returns the offending path on failure.
pub fn verify_manifest(manifest_path: &Path) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    for entry in &manifest.entries {
        let path: PathBuf = base.join(&entry.image);
        let on_disk = fs::read(&path)?;
        let expected = encode_ppm(&render(&entry.scene))?;
        if on_disk != expected {
            return Err(Error::Manifest(format!(
                "{} does not round-trip to its scene",
                path.display()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::grammar::parse;

    #[test]
    fn same_count_and_seed_reproduce_identical_output() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_dataset(5, 7, dir_a.path()).unwrap();
        generate_dataset(5, 7, dir_b.path()).unwrap();
        let a = fs::read(dir_a.path().join(MANIFEST_FILE)).unwrap();
        let b = fs::read(dir_b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(a, b);
        for i in 0..5 {
            let rel = format!("images/img_{i:05}.ppm");
            assert_eq!(
                fs::read(dir_a.path().join(&rel)).unwrap(),
                fs::read(dir_b.path().join(&rel)).unwrap()
            );
        }
    }

    #[test]
    fn generated_dataset_verifies_and_loads() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(20, 1, dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 20);
        verify_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();

        let loaded = load_dataset(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.len(), 20);
        for item in &loaded.items {
            assert!(item.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            // Every generated caption parses under the grammar.
            parse(&item.caption).unwrap();
        }
    }

    #[test]
    fn zero_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_dataset(0, 1, dir.path()).is_err());
    }

    #[test]
    fn unwritable_directory_rejected() {
        let err = generate_dataset(1, 1, Path::new("/proc/definitely/not/writable"));
        assert!(err.is_err());
    }

    #[test]
    fn manifest_json_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(3, 9, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let original = fs::read_to_string(&path).unwrap();
        let reloaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(reloaded.to_json().unwrap(), original);
    }
}
