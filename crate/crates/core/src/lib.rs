//! Caption-conditioned image generation by iterative latent-vector
//! optimization, at desk scale.
//!
//! A fixed image generator maps a latent vector to an image and a fixed
//! captioner maps images to sentences; the latent is optimized so the
//! captioner's description approaches a target caption. The crate bundles
//! the reverse-mode differentiation core, a synthetic shapes-and-captions
//! corpus, the five toy models, sentence-level BLEU, the latent update
//! loop, and the evaluation metrics plus experiment harness.

pub mod autodiff;
pub mod caption;
pub mod corpus;
mod error;
pub mod eval;
pub mod models;
pub mod optim;
pub mod rng;
pub mod text;

pub use autodiff::{sgd_step, Gradients, Op, Tape, Tensor, VarId};
pub use caption::{Caption, TokenId, Vocabulary};
pub use corpus::{Color, DatasetManifest, SceneSpec, ShapeClass, Size};
pub use error::{Error, Result};
pub use eval::{detection_score, inception_score, run_experiment, Detection, ScoreReport};
pub use models::{
    CaptionerModel, ClassifierModel, DaeModel, DetectorModel, GeneratorModel, ModelCheckpoint,
};
pub use optim::{generate, GenerationTrace, LatentState, UpdateConfig};
pub use text::{bleu, scale_factor, BleuScore, NgramProfile};
