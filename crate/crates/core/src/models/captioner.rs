//! Image captioner: affine image encoder feeding a single-layer recurrent
//! decoder with a vocabulary-sized softmax per step. The image feature
//! initializes the state, is re-fed to the cell at every step, and skips
//! directly into each step's logits, so the loss keeps a short gradient
//! path to the pixels at every position.
//!
//! The teacher-forced loss is the mean over target positions of the
//! cross-entropy of the next target token — differentiable with respect to
//! the input image, which is what the latent update needs. Greedy decoding
//! (no gradient) produces the predicted caption for the n-gram metric.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, Tape, Tensor, VarId};
use crate::caption::{Caption, Vocabulary, BOS, EOS, MAX_CAPTION_LEN};
use crate::corpus::manifest::LoadedDataset;
use crate::rng::stream;
use crate::{Error, Result};

use super::{flat_image, init_affine};

pub const DEFAULT_STATE_DIM: usize = 64;
pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_EPOCHS: usize = 250;
pub const DEFAULT_LR: f64 = 0.2;

const KIND: &str = "captioner";
const PARAM_NAMES: [&str; 8] =
    ["embed", "enc_w", "enc_b", "cell_w", "cell_b", "out_w", "out_feat", "out_b"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Hyper {
    vocab_version: u32,
    vocab_size: usize,
    state_dim: usize,
    embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerModel {
    /// Token embedding table, flat [vocab_size * embed_dim].
    embed: Tensor,
    enc_w: Tensor,
    enc_b: Tensor,
    cell_w: Tensor,
    cell_b: Tensor,
    out_w: Tensor,
    /// Direct feature-to-logits connection, applied at every step.
    out_feat: Tensor,
    out_b: Tensor,
    vocab_size: usize,
    state_dim: usize,
    embed_dim: usize,
}

impl CaptionerModel {
    pub fn new(state_dim: usize, embed_dim: usize, seed: u64) -> Self {
        let vocab = Vocabulary::v1();
        let vocab_size = vocab.len();
        let mut rng = stream(seed, 0xCA);
        let embed = Tensor::vector(crate::rng::uniform_vec(&mut rng, vocab_size * embed_dim, 0.1))
            .expect("finite init");
        let (enc_w, enc_b) = init_affine(&mut rng, state_dim, crate::corpus::IMAGE_LEN, 1.0);
        // Cell input is [embedding, state, feature].
        let (cell_w, cell_b) = init_affine(&mut rng, state_dim, embed_dim + 2 * state_dim, 1.0);
        // Small output init keeps the untrained per-step distribution near
        // uniform (loss ~ ln(vocab)).
        let (out_w, out_b) = init_affine(&mut rng, vocab_size, state_dim, 0.1);
        let (out_feat, _) = init_affine(&mut rng, vocab_size, state_dim, 0.1);
        Self {
            embed,
            enc_w,
            enc_b,
            cell_w,
            cell_b,
            out_w,
            out_feat,
            out_b,
            vocab_size,
            state_dim,
            embed_dim,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn params(&self) -> [&Tensor; 8] {
        [
            &self.embed,
            &self.enc_w,
            &self.enc_b,
            &self.cell_w,
            &self.cell_b,
            &self.out_w,
            &self.out_feat,
            &self.out_b,
        ]
    }

    fn params_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.embed,
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.cell_w,
            &mut self.cell_b,
            &mut self.out_w,
            &mut self.out_feat,
            &mut self.out_b,
        ]
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

    /// One decoder step: previous token + state + image feature ->
    /// (new state, token probs).
    fn step(
        tape: &mut Tape,
        vars: &[VarId],
        embed_dim: usize,
        prev_token: usize,
        state: VarId,
        feature: VarId,
        zero_logits: VarId,
    ) -> Result<(VarId, VarId)> {
        let emb = tape.slice(vars[0], prev_token * embed_dim, embed_dim)?;
        let joined = tape.concat(&[emb, state, feature])?;
        let pre = tape.affine(vars[3], vars[4], joined)?;
        let next_state = tape.tanh(pre)?;
        let state_logits = tape.affine(vars[5], vars[7], next_state)?;
        let feat_logits = tape.affine(vars[6], zero_logits, feature)?;
        let logits = tape.add(state_logits, feat_logits)?;
        let probs = tape.softmax(logits)?;
        Ok((next_state, probs))
    }

    fn zero_logits(&self, tape: &mut Tape) -> VarId {
        tape.constant(Tensor::zeros(vec![self.vocab_size]))
    }

    fn encode_image(tape: &mut Tape, vars: &[VarId], image: VarId) -> Result<VarId> {
        let pre = tape.affine(vars[1], vars[2], image)?;
        tape.tanh(pre)
    }

    fn check_target(&self, target: &Caption) -> Result<()> {
        if target.len() < 2 {
            return Err(Error::Config("target caption must contain BOS and EOS".into()));
        }
        for &id in target.ids() {
            if id as usize >= self.vocab_size {
                return Err(Error::Parse {
                    caption: target.text(),
                    reason: format!("token id {id} outside the model vocabulary"),
                });
            }
        }
        Ok(())
    }

    /// Record the teacher-forced caption loss on an existing tape, starting
    /// from a flat `[3072]` image variable. Returns the scalar mean
    /// cross-entropy over the target positions (EOS included, BOS consumed
    /// as the first input).
    pub fn caption_loss_var(&self, tape: &mut Tape, image: VarId, target: &Caption) -> Result<VarId> {
        self.check_target(target)?;
        let vars = self.bind(tape, false);
        self.caption_loss_on(tape, &vars, image, target)
    }

    fn caption_loss_on(
        &self,
        tape: &mut Tape,
        vars: &[VarId],
        image: VarId,
        target: &Caption,
    ) -> Result<VarId> {
        let feature = Self::encode_image(tape, vars, image)?;
        let zero_logits = self.zero_logits(tape);
        let mut state = feature;
        let ids = target.ids();
        let mut losses = Vec::with_capacity(ids.len() - 1);
        for t in 1..ids.len() {
            let (next_state, probs) = Self::step(
                tape,
                vars,
                self.embed_dim,
                ids[t - 1] as usize,
                state,
                feature,
                zero_logits,
            )?;
            state = next_state;
            losses.push(tape.cross_entropy(probs, ids[t] as usize)?);
        }
        let stacked = tape.concat(&losses)?;
        tape.mean(stacked)
    }

    /// Teacher-forced loss of a target caption given an image. Pure function.
    pub fn caption_loss(&self, image: &Tensor, target: &Caption) -> Result<f64> {
        let mut tape = Tape::new();
        let img = tape.constant(flat_image(image)?);
        let loss = self.caption_loss_var(&mut tape, img, target)?;
        Ok(tape.value(loss).item())
    }

    /// Greedy argmax decode until EOS or the caption length budget.
    pub fn greedy_decode(&self, image: &Tensor) -> Result<Caption> {
        let mut tape = Tape::new();
        let img = tape.constant(flat_image(image)?);
        let vars = self.bind(&mut tape, false);
        let feature = Self::encode_image(&mut tape, &vars, img)?;
        let zero_logits = self.zero_logits(&mut tape);
        let mut state = feature;
        let mut ids = vec![BOS];
        let mut prev = BOS as usize;
        for _ in 0..MAX_CAPTION_LEN - 2 {
            let (next_state, probs) =
                Self::step(&mut tape, &vars, self.embed_dim, prev, state, feature, zero_logits)?;
            state = next_state;
            let p = tape.value(probs).data();
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("probabilities are finite"))
                .map(|(i, _)| i)
                .expect("non-empty distribution");
            if argmax == EOS as usize {
                break;
            }
            ids.push(argmax as u16);
            prev = argmax;
        }
        ids.push(EOS);
        Caption::from_ids(&Vocabulary::v1(), ids)
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

    /// (loss, gradient wrt flat params, gradient wrt the image).
    pub fn caption_loss_gradients(
        &self,
        image: &Tensor,
        target: &Caption,
    ) -> Result<(f64, Vec<f64>, Tensor)> {
        self.check_target(target)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let img = tape.leaf(flat_image(image)?.with_grad());
        let loss = self.caption_loss_on(&mut tape, &vars, img, target)?;
        let grads = tape.backward(loss)?;
        let mut param_grad = Vec::new();
        for &v in &vars {
            param_grad.extend_from_slice(grads.wrt(v)?.data());
        }
        Ok((tape.value(loss).item(), param_grad, grads.wrt(img)?.clone()))
    }

    pub fn to_checkpoint(&self, seed: u64) -> super::ModelCheckpoint {
        let hyper = serde_json::to_value(Hyper {
            vocab_version: Vocabulary::v1().version(),
            vocab_size: self.vocab_size,
            state_dim: self.state_dim,
            embed_dim: self.embed_dim,
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
        let vocab = Vocabulary::v1();
        if hyper.vocab_version != vocab.version() || hyper.vocab_size != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "captioner was trained on vocabulary v{} ({} words); current is v{} ({} words)",
                hyper.vocab_version,
                hyper.vocab_size,
                vocab.version(),
                vocab.len()
            )));
        }
        let mut model = Self::new(hyper.state_dim, hyper.embed_dim, 0);
        for (name, slot) in PARAM_NAMES.iter().zip(model.params_mut()) {
            *slot = ckpt.block(name)?.clone();
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldoutReport {
    pub correct: usize,
    pub total: usize,
    /// True when the dataset was too small to spare a held-out split and
    /// the exact-match rate was measured on the training pairs instead.
    pub on_training_set: bool,
}

#[derive(Debug, Clone)]
pub struct CaptionerTraining {
    pub model: CaptionerModel,
    pub final_loss: f64,
    /// Greedy-decode exact-match accuracy, on a 100-pair held-out split
    /// when the dataset affords one.
    pub holdout: HoldoutReport,
}

/// Teacher-forced cross-entropy training over (image, caption) pairs.
/// Datasets with at least 110 entries reserve their last 100 as a held-out
/// exact-match split.
pub fn train_captioner(
    dataset: &LoadedDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<CaptionerTraining> {
    train_captioner_sized(dataset, DEFAULT_STATE_DIM, DEFAULT_EMBED_DIM, epochs, lr, seed)
}

pub fn train_captioner_sized(
    dataset: &LoadedDataset,
    state_dim: usize,
    embed_dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<CaptionerTraining> {
    if dataset.is_empty() {
        return Err(Error::Config("captioner training needs a non-empty dataset".into()));
    }
    let holdout_n = if dataset.len() >= 110 { 100 } else { 0 };
    let train_n = dataset.len() - holdout_n;
    let train = &dataset.items[..train_n];
    let holdout = &dataset.items[train_n..];

    let mut model = CaptionerModel::new(state_dim, embed_dim, seed);
    let images: Vec<Tensor> = train.iter().map(|i| flat_image(&i.image)).collect::<Result<_>>()?;
    let mut rng = stream(seed, 0xCB);
    let mut order: Vec<usize> = (0..train_n).collect();
    for _epoch in 0..epochs {
        for i in 0..train_n {
            let j = rng.random_range(i..train_n);
            order.swap(i, j);
        }
        for &idx in &order {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let img = tape.constant(images[idx].clone());
            let loss = model.caption_loss_on(&mut tape, &vars, img, &train[idx].caption)?;
            let grads = tape.backward(loss)?;
            sgd_step(vars.into_iter().zip(model.params_mut()), &grads, lr)?;
        }
    }

    let mut total = 0.0;
    for (image, item) in images.iter().zip(train) {
        total += model.caption_loss(image, &item.caption)?;
    }
    let final_loss = total / train_n as f64;

    let (eval_split, on_training_set) =
        if holdout_n > 0 { (holdout, false) } else { (train, true) };
    let correct = eval_split
        .iter()
        .map(|item| {
            let decoded = model.greedy_decode(&item.image)?;
            Ok(usize::from(decoded == item.caption))
        })
        .sum::<Result<usize>>()?;
    let holdout_report =
        HoldoutReport { correct, total: eval_split.len(), on_training_set };

    Ok(CaptionerTraining { model, final_loss, holdout: holdout_report })
}
