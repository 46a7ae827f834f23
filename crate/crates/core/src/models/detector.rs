//! Single-shot grid object detector: for each cell of the 4x4 grid the head
//! predicts an objectness confidence, a class distribution over shape/color
//! categories, and a normalized box. One box per cell, no anchors — the
//! minimal detector shape sufficient for the area-weighted detection metric.
//!
//! Training uses sum-squared error on the activated head (objectness,
//! class probabilities, and box coordinates all regressed in [0, 1]), with
//! down-weighted objectness on empty cells.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, Tape, Tensor, VarId};
use crate::corpus::manifest::LoadedDataset;
use crate::corpus::{object_box, SceneSpec, CATEGORY_COUNT, GRID, IMAGE_LEN, NUM_CELLS};
use crate::eval::Detection;
use crate::rng::stream;
use crate::{Error, Result};

use super::{flat_image, init_affine};

pub const DEFAULT_HIDDEN_DIM: usize = 96;
pub const DEFAULT_EPOCHS: usize = 300;
pub const DEFAULT_LR: f64 = 0.15;

/// Per-cell head width: objectness + class distribution + (x, y, w, h).
pub const CELL_WIDTH: usize = 1 + CATEGORY_COUNT + 4;

const KIND: &str = "detector";
const PARAM_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

const W_NOOBJ: f64 = 0.5;
const W_CLASS: f64 = 1.0;
const W_BOX: f64 = 2.0;

/// Training-time robustness augmentation. The pretrained detectors this one
/// stands in for are robust to generator artifacts by sheer scale; the toy
/// gets there by training on noisy and blurred positives (soft generated
/// shapes still count) and on object-free noise negatives (high-contrast
/// garbage does not).
const AUG_NOISE_STD: f64 = 0.08;
const NEGATIVE_FRACTION: f64 = 0.25;
const NEGATIVE_NOISE_STD: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct Hyper {
    hidden_dim: usize,
    grid: usize,
    classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    hidden_dim: usize,
}

impl DetectorModel {
    pub fn new(hidden_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0xDE);
        let (w1, b1) = init_affine(&mut rng, hidden_dim, IMAGE_LEN, 1.0);
        let (w2, b2) = init_affine(&mut rng, NUM_CELLS * CELL_WIDTH, hidden_dim, 0.5);
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

    /// Activated head: per cell [sigmoid objectness, softmax class
    /// distribution, sigmoid (x, y, w, h)], cells concatenated in row-major
    /// order. Length `NUM_CELLS * CELL_WIDTH`.
    fn head_on(&self, tape: &mut Tape, vars: &[VarId], image: VarId) -> Result<VarId> {
        let pre = tape.affine(vars[0], vars[1], image)?;
        let hidden = tape.tanh(pre)?;
        let raw = tape.affine(vars[2], vars[3], hidden)?;
        let mut parts = Vec::with_capacity(NUM_CELLS * 3);
        for cell in 0..NUM_CELLS {
            let base = cell * CELL_WIDTH;
            let conf_raw = tape.slice(raw, base, 1)?;
            parts.push(tape.sigmoid(conf_raw)?);
            let class_raw = tape.slice(raw, base + 1, CATEGORY_COUNT)?;
            parts.push(tape.softmax(class_raw)?);
            let box_raw = tape.slice(raw, base + 1 + CATEGORY_COUNT, 4)?;
            parts.push(tape.sigmoid(box_raw)?);
        }
        tape.concat(&parts)
    }

    /// All 16 cell predictions for an image — no thresholding here; the
    /// detection metric applies its own confidence threshold.
    pub fn detect(&self, image: &Tensor) -> Result<Vec<Detection>> {
        let mut tape = Tape::new();
        let img = tape.constant(flat_image(image)?);
        let vars = self.bind(&mut tape, false);
        let head = self.head_on(&mut tape, &vars, img)?;
        let head = tape.value(head).data();

        let mut detections = Vec::with_capacity(NUM_CELLS);
        for cell in 0..NUM_CELLS {
            let base = cell * CELL_WIDTH;
            let objectness = head[base];
            let class = &head[base + 1..base + 1 + CATEGORY_COUNT];
            let (class_id, class_prob) = class
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("probabilities are finite"))
                .map(|(i, &p)| (i, p))
                .expect("non-empty class distribution");
            let b = &head[base + 1 + CATEGORY_COUNT..base + CELL_WIDTH];
            let (row, col) = (cell / GRID, cell % GRID);
            // Box center lives inside the predicting cell; width/height span
            // the unit square.
            let cx = (col as f64 + b[0]) / GRID as f64;
            let cy = (row as f64 + b[1]) / GRID as f64;
            let (w, h) = (b[2], b[3]);
            let x0 = (cx - w / 2.0).clamp(0.0, 1.0);
            let y0 = (cy - h / 2.0).clamp(0.0, 1.0);
            let x1 = (cx + w / 2.0).clamp(0.0, 1.0);
            let y1 = (cy + h / 2.0).clamp(0.0, 1.0);
            detections.push(Detection {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
                class_id,
                confidence: objectness * class_prob,
            });
        }
        Ok(detections)
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

    /// Weighted SSE of the activated head against a scene's targets —
    /// the per-example training objective.
    pub fn training_loss(&self, image: &Tensor, scene: &SceneSpec) -> Result<f64> {
        let (t, w) = targets_for(scene);
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let img = tape.constant(flat_image(image)?);
        let head = self.head_on(&mut tape, &vars, img)?;
        let loss = weighted_sse(&mut tape, head, &Tensor::vector(t)?, &Tensor::vector(w)?)?;
        Ok(tape.value(loss).item())
    }

    /// (loss, gradient wrt flat params, gradient wrt the image).
    pub fn training_gradients(
        &self,
        image: &Tensor,
        scene: &SceneSpec,
    ) -> Result<(f64, Vec<f64>, Tensor)> {
        let (t, w) = targets_for(scene);
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let img = tape.leaf(flat_image(image)?.with_grad());
        let head = self.head_on(&mut tape, &vars, img)?;
        let loss = weighted_sse(&mut tape, head, &Tensor::vector(t)?, &Tensor::vector(w)?)?;
        let grads = tape.backward(loss)?;
        let mut param_grad = Vec::new();
        for &v in &vars {
            param_grad.extend_from_slice(grads.wrt(v)?.data());
        }
        Ok((tape.value(loss).item(), param_grad, grads.wrt(img)?.clone()))
    }

    pub fn to_checkpoint(&self, seed: u64) -> super::ModelCheckpoint {
        let hyper = serde_json::to_value(Hyper {
            hidden_dim: self.hidden_dim,
            grid: GRID,
            classes: CATEGORY_COUNT,
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
        if hyper.grid != GRID || hyper.classes != CATEGORY_COUNT {
            return Err(Error::Checkpoint(format!(
                "detector geometry {}x{} grid / {} classes unsupported",
                hyper.grid, hyper.grid, hyper.classes
            )));
        }
        let mut model = Self::new(hyper.hidden_dim, 0);
        for (name, slot) in PARAM_NAMES.iter().zip(model.params_mut()) {
            *slot = ckpt.block(name)?.clone();
        }
        Ok(model)
    }
}

/// 3x3 box blur over a flat [32, 32, 3] image.
fn box_blur(src: &[f64]) -> Vec<f64> {
    let (h, w) = (crate::corpus::IMAGE_H as i32, crate::corpus::IMAGE_W as i32);
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3usize {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (yy, xx) = (y + dy, x + dx);
                        if (0..h).contains(&yy) && (0..w).contains(&xx) {
                            acc += src[((yy * w + xx) as usize) * 3 + ch];
                            n += 1.0;
                        }
                    }
                }
                out[((y * w + x) as usize) * 3 + ch] = acc / n;
            }
        }
    }
    out
}

/// Targets for an object-free negative: zero objectness everywhere, class
/// and box unsupervised.
fn negative_targets() -> (Vec<f64>, Vec<f64>) {
    let target = vec![0.0; NUM_CELLS * CELL_WIDTH];
    let mut weight = vec![0.0; NUM_CELLS * CELL_WIDTH];
    for cell in 0..NUM_CELLS {
        weight[cell * CELL_WIDTH] = W_NOOBJ;
    }
    (target, weight)
}

/// Regression target and weight vectors over the activated head.
fn targets_for(scene: &SceneSpec) -> (Vec<f64>, Vec<f64>) {
    let mut target = vec![0.0; NUM_CELLS * CELL_WIDTH];
    let mut weight = vec![0.0; NUM_CELLS * CELL_WIDTH];
    for cell in 0..NUM_CELLS {
        weight[cell * CELL_WIDTH] = W_NOOBJ;
    }
    for obj in scene.objects() {
        let cell = obj.cell as usize;
        let base = cell * CELL_WIDTH;
        let (row, col) = (cell / GRID, cell % GRID);
        target[base] = 1.0;
        weight[base] = 1.0;
        let class = obj.shape.index() * 4 + obj.color.index();
        for k in 0..CATEGORY_COUNT {
            target[base + 1 + k] = if k == class { 1.0 } else { 0.0 };
            weight[base + 1 + k] = W_CLASS;
        }
        let (cx, cy, w, h) = object_box(obj);
        let bb = base + 1 + CATEGORY_COUNT;
        target[bb] = cx * GRID as f64 - col as f64;
        target[bb + 1] = cy * GRID as f64 - row as f64;
        target[bb + 2] = w;
        target[bb + 3] = h;
        for k in 0..4 {
            weight[bb + k] = W_BOX;
        }
    }
    (target, weight)
}

#[derive(Debug, Clone)]
pub struct DetectorTraining {
    pub model: DetectorModel,
    pub final_loss: f64,
}

pub fn train_detector(
    dataset: &LoadedDataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<DetectorTraining> {
    train_detector_sized(dataset, DEFAULT_HIDDEN_DIM, epochs, lr, seed)
}

pub fn train_detector_sized(
    dataset: &LoadedDataset,
    hidden_dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<DetectorTraining> {
    if dataset.is_empty() {
        return Err(Error::Config("detector training needs a non-empty dataset".into()));
    }
    let mut model = DetectorModel::new(hidden_dim, seed);
    let n = dataset.len();
    let images: Vec<Tensor> =
        dataset.items.iter().map(|i| flat_image(&i.image)).collect::<Result<_>>()?;
    let blurred: Vec<Vec<f64>> = images.iter().map(|img| box_blur(img.data())).collect();
    let double_blurred: Vec<Vec<f64>> = blurred.iter().map(|img| box_blur(img)).collect();
    let targets: Vec<(Tensor, Tensor)> = dataset
        .items
        .iter()
        .map(|item| {
            let (t, w) = targets_for(&item.scene);
            Ok((Tensor::vector(t)?, Tensor::vector(w)?))
        })
        .collect::<Result<_>>()?;
    let (neg_t, neg_w) = negative_targets();
    let negative = (Tensor::vector(neg_t)?, Tensor::vector(neg_w)?);
    let background = crate::corpus::BACKGROUND[0];

    let mut rng = stream(seed, 0xDF);
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..epochs {
        for i in 0..n {
            let j = rng.random_range(i..n);
            order.swap(i, j);
        }
        for &idx in &order {
            let negative_step = rng.random::<f64>() < NEGATIVE_FRACTION;
            let (pixels, target, weight) = if negative_step {
                let jitter =
                    crate::rng::normal_vec(&mut rng, images[idx].len(), NEGATIVE_NOISE_STD);
                let noise_img: Vec<f64> = jitter.iter().map(|e| background + e).collect();
                (noise_img, &negative.0, &negative.1)
            } else {
                let base = match rng.random_range(0..3u8) {
                    0 => images[idx].data(),
                    1 => &blurred[idx][..],
                    _ => &double_blurred[idx][..],
                };
                let jitter = crate::rng::normal_vec(&mut rng, base.len(), AUG_NOISE_STD);
                let noisy: Vec<f64> = base.iter().zip(&jitter).map(|(v, e)| v + e).collect();
                (noisy, &targets[idx].0, &targets[idx].1)
            };
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let img = tape.constant(Tensor::vector(pixels)?);
            let head = model.head_on(&mut tape, &vars, img)?;
            let loss = weighted_sse(&mut tape, head, target, weight)?;
            let grads = tape.backward(loss)?;
            sgd_step(vars.into_iter().zip(model.params_mut()), &grads, lr)?;
        }
    }

    let mut total = 0.0;
    for (image, (t, w)) in images.iter().zip(&targets) {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, false);
        let img = tape.constant(image.clone());
        let head = model.head_on(&mut tape, &vars, img)?;
        let loss = weighted_sse(&mut tape, head, t, w)?;
        total += tape.value(loss).item();
    }

    Ok(DetectorTraining { model, final_loss: total / n as f64 })
}

/// Sum-squared error over the activated head with per-component weights,
/// expressed as mean * N so it stays within the core op set.
fn weighted_sse(tape: &mut Tape, head: VarId, target: &Tensor, weight: &Tensor) -> Result<VarId> {
    let neg =
        Tensor::new(target.shape().to_vec(), target.data().iter().map(|v| -v).collect())?;
    let neg = tape.constant(neg);
    let diff = tape.add(head, neg)?;
    let sq = tape.mul(diff, diff)?;
    let w = tape.constant(weight.clone());
    let weighted = tape.mul(sq, w)?;
    let mean = tape.mean(weighted)?;
    let n = tape.constant(Tensor::scalar(weight.len() as f64));
    tape.mul(mean, n)
}
