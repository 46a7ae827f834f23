//! Image generator: affine stack from latent space to a sigmoid image.
//!
//! Trained as a decoder with a learnable latent per training image and MSE
//! reconstruction loss — the minimal setup that yields a differentiable
//! latent-to-image map. The learned latents double as the DAE's training set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, Tape, Tensor, VarId};
use crate::corpus::manifest::LoadedDataset;
use crate::corpus::{CHANNELS, IMAGE_H, IMAGE_LEN, IMAGE_W};
use crate::rng::{normal_vec, stream};
use crate::{Error, Result};

use super::{flat_image, init_affine};

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 128;
pub const DEFAULT_EPOCHS: usize = 150;
pub const DEFAULT_LR: f64 = 0.5;

const KIND: &str = "generator";
const PARAM_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];
const LATENTS_BLOCK: &str = "latents";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Hyper {
    latent_dim: usize,
    hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    latent_dim: usize,
    hidden_dim: usize,
}

impl GeneratorModel {
    pub fn new(latent_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0xE0);
        let (w1, b1) = init_affine(&mut rng, hidden_dim, latent_dim, 1.0);
        let (w2, mut b2) = init_affine(&mut rng, IMAGE_LEN, hidden_dim, 1.0);
        // Start the sigmoid output at the dark background level instead of 0.5.
        let bg_logit = (0.1f64 / 0.9).ln();
        b2.data_mut().fill(bg_logit);
        Self { w1, b1, w2, b2, latent_dim, hidden_dim }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn params(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<VarId> {
        self.params()
            .iter()
            .map(|p| {
                let mut t = (*p).clone();
                t.set_requires_grad(trainable);
                tape.leaf(t)
            })
            .collect()
    }

    fn forward(tape: &mut Tape, vars: &[VarId], h: VarId) -> Result<VarId> {
        let pre = tape.affine(vars[0], vars[1], h)?;
        // relu keeps the latent-to-image Jacobian alive at arbitrary latents;
        // a tanh hidden layer saturates once training grows the weights.
        let hidden = tape.relu(pre)?;
        let logits = tape.affine(vars[2], vars[3], hidden)?;
        tape.sigmoid(logits)
    }

    /// Record the latent-to-image map on an existing tape. Output is the
    /// flat `[3072]` image in (0, 1).
    pub fn image_var(&self, tape: &mut Tape, h: VarId) -> Result<VarId> {
        let vars = self.bind(tape, false);
        Self::forward(tape, &vars, h)
    }

    /// Render a latent to a [32, 32, 3] image.
    pub fn generate(&self, h: &Tensor) -> Result<Tensor> {
        if h.len() != self.latent_dim {
            return Err(Error::Shape {
                op: "generator",
                detail: format!("latent must have {} entries, got {:?}", self.latent_dim, h.shape()),
            });
        }
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let out = self.image_var(&mut tape, hv)?;
        Tensor::new(vec![IMAGE_H, IMAGE_W, CHANNELS], tape.value(out).data().to_vec())
    }

    /// All parameters concatenated in checkpoint order.
    pub fn param_vector(&self) -> Vec<f64> {
        super::concat_params(&self.params())
    }

    /// Clone of the model with parameters replaced from a flat vector.
    pub fn with_param_vector(&self, flat: &[f64]) -> Result<Self> {
        let mut model = self.clone();
        super::scatter_params(&mut model.params_mut(), flat)?;
        Ok(model)
    }

    /// Reconstruction MSE of one (latent, image) pair — the per-example
    /// training objective.
    pub fn training_loss(&self, z: &Tensor, image: &Tensor) -> Result<f64> {
        let target = flat_image(image)?;
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let out = self.image_var(&mut tape, zv)?;
        let loss = tape.mse_to(out, &target)?;
        Ok(tape.value(loss).item())
    }

    /// (loss, gradient wrt flat params, gradient wrt latent).
    pub fn training_gradients(&self, z: &Tensor, image: &Tensor) -> Result<(f64, Vec<f64>, Tensor)> {
        let target = flat_image(image)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let zv = tape.leaf(z.clone().with_grad());
        let out = Self::forward(&mut tape, &vars, zv)?;
        let loss = tape.mse_to(out, &target)?;
        let grads = tape.backward(loss)?;
        let mut param_grad = Vec::new();
        for &v in &vars {
            param_grad.extend_from_slice(grads.wrt(v)?.data());
        }
        Ok((tape.value(loss).item(), param_grad, grads.wrt(zv)?.clone()))
    }

    pub fn to_checkpoint(&self, seed: u64, latents: &Tensor) -> super::ModelCheckpoint {
        let hyper = serde_json::to_value(Hyper {
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
        })
        .expect("hyper serializes");
        let mut ckpt = super::ModelCheckpoint::new(KIND, seed, hyper);
        for (name, tensor) in PARAM_NAMES.iter().zip(self.params()) {
            ckpt.push(name, tensor.clone());
        }
        ckpt.push(LATENTS_BLOCK, latents.clone());
        ckpt
    }

    /// Rebuild model and training-latent table from a checkpoint.
    pub fn from_checkpoint(ckpt: &super::ModelCheckpoint) -> Result<(Self, Tensor)> {
        ckpt.expect_kind(KIND)?;
        let hyper: Hyper = ckpt.hyper_as()?;
        let mut model = Self::new(hyper.latent_dim, hyper.hidden_dim, 0);
        for (name, slot) in PARAM_NAMES.iter().zip(model.params_mut()) {
            *slot = ckpt.block(name)?.clone();
        }
        let latents = ckpt.block(LATENTS_BLOCK)?.clone();
        model.validate_shapes()?;
        Ok((model, latents))
    }

    fn validate_shapes(&self) -> Result<()> {
        let ok = self.w1.shape() == [self.hidden_dim, self.latent_dim]
            && self.b1.shape() == [self.hidden_dim]
            && self.w2.shape() == [IMAGE_LEN, self.hidden_dim]
            && self.b2.shape() == [IMAGE_LEN];
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint("generator parameter shapes are inconsistent".into()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorTraining {
    pub model: GeneratorModel,
    /// One learned latent row per training image, shape [n, latent_dim].
    pub latents: Tensor,
    pub final_loss: f64,
}

/// Decoder-style training: jointly optimize model weights and one latent per
/// image against MSE reconstruction.
pub fn train_generator(
    dataset: &LoadedDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<GeneratorTraining> {
    train_generator_sized(dataset, DEFAULT_LATENT_DIM, DEFAULT_HIDDEN_DIM, epochs, lr, seed)
}

pub fn train_generator_sized(
    dataset: &LoadedDataset,
    latent_dim: usize,
    hidden_dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<GeneratorTraining> {
    if dataset.is_empty() {
        return Err(Error::Config("generator training needs a non-empty dataset".into()));
    }
    let mut model = GeneratorModel::new(latent_dim, hidden_dim, seed);
    let mut rng = stream(seed, 0xE1);
    let n = dataset.len();
    let mut latents: Vec<Tensor> = (0..n)
        .map(|_| Tensor::vector(normal_vec(&mut rng, latent_dim, 1.0)).expect("finite init"))
        .collect();
    let targets: Vec<Tensor> =
        dataset.items.iter().map(|item| flat_image(&item.image)).collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..epochs {
        for i in 0..n {
            let j = rng.random_range(i..n);
            order.swap(i, j);
        }
        for &idx in &order {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let z = tape.leaf(latents[idx].clone().with_grad());
            let image = GeneratorModel::forward(&mut tape, &vars, z)?;
            let loss = tape.mse_to(image, &targets[idx])?;
            let grads = tape.backward(loss)?;
            let params = model.params_mut();
            sgd_step(vars.into_iter().zip(params), &grads, lr)?;
            sgd_step([(z, &mut latents[idx])], &grads, lr)?;
        }
    }

    // Reported loss: one evaluation pass over the dataset.
    let mut total = 0.0;
    for (z, target) in latents.iter().zip(&targets) {
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let image = model.image_var(&mut tape, zv)?;
        let loss = tape.mse_to(image, target)?;
        total += tape.value(loss).item();
    }
    let final_loss = total / n as f64;

    let mut flat = Vec::with_capacity(n * latent_dim);
    for z in &latents {
        flat.extend_from_slice(z.data());
    }
    let latents = Tensor::new(vec![n, latent_dim], flat)?;
    Ok(GeneratorTraining { model, latents, final_loss })
}
