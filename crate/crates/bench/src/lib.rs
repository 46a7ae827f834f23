//! Shared fixtures for the pipeline benchmarks: untrained models and a tiny
//! scene, so benchmark cost reflects the computation graph, not training.

use mmvr_core::caption::{Caption, Vocabulary};
use mmvr_core::models::{CaptionerModel, DaeModel, DetectorModel, GeneratorModel};
use mmvr_core::rng::{normal_vec, stream};
use mmvr_core::{SceneSpec, Tensor};

pub struct BenchFixture {
    pub generator: GeneratorModel,
    pub captioner: CaptionerModel,
    pub dae: DaeModel,
    pub detector: DetectorModel,
    pub caption: Caption,
    pub latent: Tensor,
    pub image: Tensor,
    pub scene: SceneSpec,
}

impl BenchFixture {
    pub fn new() -> Self {
        let generator = GeneratorModel::new(64, 128, 1);
        let captioner = CaptionerModel::new(64, 16, 2);
        let dae = DaeModel::new(64, 64, 3);
        let detector = DetectorModel::new(96, 4);
        let caption = Vocabulary::v1().encode("a red circle").unwrap();
        let latent = Tensor::vector(normal_vec(&mut stream(7, 0), 64, 1.0)).unwrap();
        let scene = mmvr_core::corpus::sample_scene(&mut stream(8, 0));
        let image = mmvr_core::corpus::render(&scene);
        Self { generator, captioner, dae, detector, caption, latent, image, scene }
    }
}

impl Default for BenchFixture {
    fn default() -> Self {
        Self::new()
    }
}
