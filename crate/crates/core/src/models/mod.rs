//! The five toy models the latent-update loop composes: image generator,
//! image captioner, latent denoising autoencoder, grid object detector, and
//! scene classifier — plus training loops and checkpoint persistence.

pub mod captioner;
pub mod checkpoint;
pub mod classifier;
pub mod dae;
pub mod detector;
pub mod generator;

pub use captioner::{train_captioner, CaptionerModel, CaptionerTraining, HoldoutReport};
pub use checkpoint::{ModelCheckpoint, NamedBlock, CHECKPOINT_VERSION};
pub use classifier::{train_classifier, ClassifierModel, ClassifierTraining};
pub use dae::{train_dae, DaeModel, DaeTraining};
pub use detector::{train_detector, DetectorModel, DetectorTraining};
pub use generator::{train_generator, GeneratorModel, GeneratorTraining};

use rand::Rng;

use crate::autodiff::Tensor;
use crate::corpus::IMAGE_LEN;
use crate::rng::uniform_vec;
use crate::{Error, Result};

/// Uniform fan-in-scaled init: `W ~ U(+-scale/sqrt(in_dim))`, zero bias.
pub(crate) fn init_affine<R: Rng>(
    rng: &mut R,
    out_dim: usize,
    in_dim: usize,
    scale: f64,
) -> (Tensor, Tensor) {
    let bound = scale / (in_dim as f64).sqrt();
    let w = Tensor::new(vec![out_dim, in_dim], uniform_vec(rng, out_dim * in_dim, bound))
        .expect("init weights are finite");
    let b = Tensor::zeros(vec![out_dim]);
    (w, b)
}

/// Concatenate parameter tensors into one flat vector (checkpoint order).
pub(crate) fn concat_params(params: &[&Tensor]) -> Vec<f64> {
    params.iter().flat_map(|p| p.data().iter().copied()).collect()
}

/// Scatter a flat vector back over parameter tensors; the length must match
/// exactly.
pub(crate) fn scatter_params(params: &mut [&mut Tensor], flat: &[f64]) -> Result<()> {
    let mut offset = 0;
    for p in params.iter_mut() {
        let n = p.len();
        let slice = flat.get(offset..offset + n).ok_or_else(|| Error::Shape {
            op: "with_param_vector",
            detail: format!("expected at least {} values, got {}", offset + n, flat.len()),
        })?;
        **p = Tensor::new(p.shape().to_vec(), slice.to_vec())?;
        offset += n;
    }
    if offset != flat.len() {
        return Err(Error::Shape {
            op: "with_param_vector",
            detail: format!("expected {offset} values, got {}", flat.len()),
        });
    }
    Ok(())
}

/// Accept an image as either [32, 32, 3] or flat [3072]; return the flat view.
pub(crate) fn flat_image(image: &Tensor) -> Result<Tensor> {
    if image.len() != IMAGE_LEN {
        return Err(Error::Shape {
            op: "image",
            detail: format!("expected {IMAGE_LEN} pixels, got shape {:?}", image.shape()),
        });
    }
    Tensor::vector(image.data().to_vec())
}
