//! Latent denoising autoencoder with a residual head:
//! `dae(h) = h + correction(h)`. A fresh model has a zeroed correction
//! output layer, so it starts as the exact identity, and the residual
//! `dae(h) - h` is just the correction branch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, Tape, Tensor, VarId};
use crate::rng::{normal_vec, stream};
use crate::{Error, Result};

use super::init_affine;

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_NOISE_STD: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 1000;
pub const DEFAULT_LR: f64 = 0.05;

const KIND: &str = "dae";
const PARAM_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Hyper {
    latent_dim: usize,
    hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeModel {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    latent_dim: usize,
    hidden_dim: usize,
}

impl DaeModel {
    /// Identity-initialized model: the correction output layer starts at
    /// zero, so `dae(h) == h` before training.
    pub fn new(latent_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0xDA);
        let (w1, b1) = init_affine(&mut rng, hidden_dim, latent_dim, 1.0);
        let w2 = Tensor::zeros(vec![latent_dim, hidden_dim]);
        let b2 = Tensor::zeros(vec![latent_dim]);
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

    fn check_dim(&self, h: &Tensor) -> Result<()> {
        if h.shape() != [self.latent_dim] {
            return Err(Error::Shape {
                op: "dae",
                detail: format!("latent must be [{}], got {:?}", self.latent_dim, h.shape()),
            });
        }
        Ok(())
    }

    /// The correction branch `dae(h) - h` on an existing tape: an affine
    /// bottleneck with no activation, so the learned pull keeps growing with
    /// distance from the latent manifold instead of saturating.
    fn residual_on(&self, tape: &mut Tape, vars: &[VarId], h: VarId) -> Result<VarId> {
        let hidden = tape.affine(vars[0], vars[1], h)?;
        tape.affine(vars[2], vars[3], hidden)
    }

    /// Full reconstruction `dae(h) = h + correction(h)` on a tape.
    fn forward_on(&self, tape: &mut Tape, vars: &[VarId], h: VarId) -> Result<VarId> {
        let corr = self.residual_on(tape, vars, h)?;
        tape.add(h, corr)
    }

    /// `dae(h) - h`: the vector pointing from a latent toward its
    /// reconstruction. Same dimension as the latent.
    pub fn residual(&self, h: &Tensor) -> Result<Tensor> {
        self.check_dim(h)?;
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let vars = self.bind(&mut tape, false);
        let out = self.residual_on(&mut tape, &vars, hv)?;
        Ok(tape.value(out).clone())
    }

    /// Reconstruction of a latent.
    pub fn reconstruct(&self, h: &Tensor) -> Result<Tensor> {
        self.check_dim(h)?;
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let vars = self.bind(&mut tape, false);
        let out = self.forward_on(&mut tape, &vars, hv)?;
        Ok(tape.value(out).clone())
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

    /// Denoising MSE of one (noisy, clean) pair.
    pub fn training_loss(&self, noisy: &Tensor, clean: &Tensor) -> Result<f64> {
        self.check_dim(noisy)?;
        self.check_dim(clean)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let input = tape.constant(noisy.clone());
        let out = self.forward_on(&mut tape, &vars, input)?;
        let loss = tape.mse_to(out, clean)?;
        Ok(tape.value(loss).item())
    }

    /// (loss, gradient wrt flat params).
    pub fn training_gradients(&self, noisy: &Tensor, clean: &Tensor) -> Result<(f64, Vec<f64>)> {
        self.check_dim(noisy)?;
        self.check_dim(clean)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let input = tape.constant(noisy.clone());
        let out = self.forward_on(&mut tape, &vars, input)?;
        let loss = tape.mse_to(out, clean)?;
        let grads = tape.backward(loss)?;
        let mut param_grad = Vec::new();
        for &v in &vars {
            param_grad.extend_from_slice(grads.wrt(v)?.data());
        }
        Ok((tape.value(loss).item(), param_grad))
    }

    pub fn to_checkpoint(&self, seed: u64) -> super::ModelCheckpoint {
        let hyper = serde_json::to_value(Hyper {
            latent_dim: self.latent_dim,
            hidden_dim: self.hidden_dim,
        })
        .expect("hyper serializes");
        let mut ckpt = super::ModelCheckpoint::new(KIND, seed, hyper);
        for (name, tensor) in PARAM_NAMES.iter().zip(self.params()) {
            ckpt.push(name, tensor.clone());
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &super::ModelCheckpoint) -> Result<Self> {
        ckpt.expect_kind(KIND)?;
        let hyper: Hyper = ckpt.hyper_as()?;
        let mut model = Self::new(hyper.latent_dim, hyper.hidden_dim, 0);
        for (name, slot) in PARAM_NAMES.iter().zip(model.params_mut()) {
            *slot = ckpt.block(name)?.clone();
        }
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct DaeTraining {
    pub model: DaeModel,
    pub final_loss: f64,
}

/// Denoise the generator's training latents: inputs are latent rows
/// corrupted with Gaussian noise, targets are the clean rows.
pub fn train_dae(
    latents: &Tensor,
    hidden_dim: usize,
    noise_std: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<DaeTraining> {
    let [n, latent_dim] = *latents.shape() else {
        return Err(Error::Shape {
            op: "train_dae",
            detail: format!("latent table must be [n, dim], got {:?}", latents.shape()),
        });
    };
    if n == 0 {
        return Err(Error::Config("DAE training needs a non-empty latent table".into()));
    }
    let rows: Vec<Tensor> = (0..n)
        .map(|i| {
            Tensor::vector(latents.data()[i * latent_dim..(i + 1) * latent_dim].to_vec())
                .expect("rows of a valid tensor are valid")
        })
        .collect();

    let mut model = DaeModel::new(latent_dim, hidden_dim, seed);
    let mut rng = stream(seed, 0xDB);
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..epochs {
        for i in 0..n {
            let j = rng.random_range(i..n);
            order.swap(i, j);
        }
        for &idx in &order {
            let noise = normal_vec(&mut rng, latent_dim, noise_std);
            let noisy: Vec<f64> = rows[idx].data().iter().zip(&noise).map(|(z, e)| z + e).collect();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let input = tape.constant(Tensor::vector(noisy)?);
            let out = model.forward_on(&mut tape, &vars, input)?;
            let loss = tape.mse_to(out, &rows[idx])?;
            let grads = tape.backward(loss)?;
            sgd_step(vars.into_iter().zip(model.params_mut()), &grads, lr)?;
        }
    }

    let mut total = 0.0;
    for row in &rows {
        let rec = model.reconstruct(row)?;
        let mse = rec
            .data()
            .iter()
            .zip(row.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / latent_dim as f64;
        total += mse;
    }
    Ok(DaeTraining { model, final_loss: total / n as f64 })
}
