//! Procedural training/eval corpus: rendered shape scenes with
//! grammar-generated captions and a rule-based paraphraser.

pub mod grammar;
pub mod manifest;
pub mod render;
pub mod scene;

pub use grammar::{
    caption_of, compatible_templates, paraphrase, parse, random_caption, CaptionSemantics,
    TEMPLATE_COUNT,
};
pub use manifest::{
    generate_dataset, load_dataset, verify_manifest, DatasetItem, DatasetManifest, LoadedDataset,
    ManifestEntry, MANIFEST_FILE,
};
pub use render::{encode_ppm, footprint, object_box, read_ppm, render, write_ppm, BACKGROUND};
pub use scene::{
    category_label, sample_scene, Color, SceneObject, SceneSpec, ShapeClass, Size, CATEGORY_COUNT,
    CELL_PX, CHANNELS, GRID, IMAGE_H, IMAGE_LEN, IMAGE_W, NUM_CELLS,
};
