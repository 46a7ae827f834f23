//! Scene classifier over shape x color categories; backbone for the
//! inception-style score.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, Tape, Tensor, VarId};
use crate::corpus::manifest::LoadedDataset;
use crate::corpus::{CATEGORY_COUNT, IMAGE_LEN};
use crate::rng::stream;
use crate::{Error, Result};

use super::{flat_image, init_affine};

pub const DEFAULT_HIDDEN_DIM: usize = 48;
pub const DEFAULT_EPOCHS: usize = 150;
pub const DEFAULT_LR: f64 = 0.01;

const KIND: &str = "classifier";
const PARAM_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

/// Training-time pixel-noise augmentation; see the detector for rationale.
const AUG_NOISE_STD: f64 = 0.08;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Hyper {
    hidden_dim: usize,
    classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    hidden_dim: usize,
}

impl ClassifierModel {
    pub fn new(hidden_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0xC1);
        let (w1, b1) = init_affine(&mut rng, hidden_dim, IMAGE_LEN, 1.0);
        let (w2, b2) = init_affine(&mut rng, CATEGORY_COUNT, hidden_dim, 0.5);
        Self { w1, b1, w2, b2, hidden_dim }
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

    fn posterior_on(&self, tape: &mut Tape, vars: &[VarId], image: VarId) -> Result<VarId> {
        let pre = tape.affine(vars[0], vars[1], image)?;
        let hidden = tape.tanh(pre)?;
        let logits = tape.affine(vars[2], vars[3], hidden)?;
        tape.softmax(logits)
    }

    /// Class posterior p(y|x) for an image. Always a distribution.
    pub fn posterior(&self, image: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let img = tape.constant(flat_image(image)?);
        let vars = self.bind(&mut tape, false);
        let probs = self.posterior_on(&mut tape, &vars, img)?;
        Ok(tape.value(probs).data().to_vec())
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

    /// Cross-entropy of the true category — the per-example training
    /// objective.
    pub fn training_loss(&self, image: &Tensor, category: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let img = tape.constant(flat_image(image)?);
        let probs = self.posterior_on(&mut tape, &vars, img)?;
        let loss = tape.cross_entropy(probs, category)?;
        Ok(tape.value(loss).item())
    }

    /// (loss, gradient wrt flat params, gradient wrt the image).
    pub fn training_gradients(
        &self,
        image: &Tensor,
        category: usize,
    ) -> Result<(f64, Vec<f64>, Tensor)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let img = tape.leaf(flat_image(image)?.with_grad());
        let probs = self.posterior_on(&mut tape, &vars, img)?;
        let loss = tape.cross_entropy(probs, category)?;
        let grads = tape.backward(loss)?;
        let mut param_grad = Vec::new();
        for &v in &vars {
            param_grad.extend_from_slice(grads.wrt(v)?.data());
        }
        Ok((tape.value(loss).item(), param_grad, grads.wrt(img)?.clone()))
    }

    pub fn to_checkpoint(&self, seed: u64) -> super::ModelCheckpoint {
        let hyper =
            serde_json::to_value(Hyper { hidden_dim: self.hidden_dim, classes: CATEGORY_COUNT })
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
        if hyper.classes != CATEGORY_COUNT {
            return Err(Error::Checkpoint(format!(
                "classifier with {} classes unsupported (expected {CATEGORY_COUNT})",
                hyper.classes
            )));
        }
        let mut model = Self::new(hyper.hidden_dim, 0);
        for (name, slot) in PARAM_NAMES.iter().zip(model.params_mut()) {
            *slot = ckpt.block(name)?.clone();
        }
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierTraining {
    pub model: ClassifierModel,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Cross-entropy training on the primary-object category of each scene.
pub fn train_classifier(
    dataset: &LoadedDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ClassifierTraining> {
    train_classifier_sized(dataset, DEFAULT_HIDDEN_DIM, epochs, lr, seed)
}

pub fn train_classifier_sized(
    dataset: &LoadedDataset,
    hidden_dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ClassifierTraining> {
    if dataset.is_empty() {
        return Err(Error::Config("classifier training needs a non-empty dataset".into()));
    }
    let mut model = ClassifierModel::new(hidden_dim, seed);
    let n = dataset.len();
    let images: Vec<Tensor> =
        dataset.items.iter().map(|i| flat_image(&i.image)).collect::<Result<_>>()?;

    let mut rng = stream(seed, 0xC2);
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..epochs {
        for i in 0..n {
            let j = rng.random_range(i..n);
            order.swap(i, j);
        }
        for &idx in &order {
            let jitter = crate::rng::normal_vec(&mut rng, images[idx].len(), AUG_NOISE_STD);
            let noisy: Vec<f64> =
                images[idx].data().iter().zip(&jitter).map(|(v, e)| v + e).collect();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let img = tape.constant(Tensor::vector(noisy)?);
            let probs = model.posterior_on(&mut tape, &vars, img)?;
            let loss = tape.cross_entropy(probs, dataset.items[idx].category)?;
            let grads = tape.backward(loss)?;
            sgd_step(vars.into_iter().zip(model.params_mut()), &grads, lr)?;
        }
    }

    let mut total = 0.0;
    let mut correct = 0usize;
    for (image, item) in images.iter().zip(&dataset.items) {
        let p = model.posterior(image)?;
        total += -p[item.category].max(f64::MIN_POSITIVE).ln();
        let argmax =
            p.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(i, _)| i);
        if argmax == Some(item.category) {
            correct += 1;
        }
    }
    Ok(ClassifierTraining {
        model,
        final_loss: total / n as f64,
        train_accuracy: correct as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::tiny_dataset;

    #[test]
    fn posterior_is_a_distribution() {
        let data = tiny_dataset(1, 1);
        let model = ClassifierModel::new(16, 3);
        let p = model.posterior(&data.items[0].image).unwrap();
        assert_eq!(p.len(), CATEGORY_COUNT);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn training_improves_accuracy() {
        let data = tiny_dataset(30, 12);
        let trained = train_classifier_sized(&data, 32, 150, 0.01, 7).unwrap();
        assert!(
            trained.train_accuracy >= 0.8,
            "train accuracy {} too low",
            trained.train_accuracy
        );
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = ClassifierModel::new(16, 4);
        let back = ClassifierModel::from_checkpoint(&model.to_checkpoint(4)).unwrap();
        assert_eq!(back, model);
    }
}
