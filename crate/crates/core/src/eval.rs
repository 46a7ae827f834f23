//! Quantitative evaluation: the area-weighted detection score, the
//! inception-style score over the toy classifier, and the experiment
//! harness that sweeps method variants over a caption set.

use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::Tensor;
use crate::caption::{Caption, Vocabulary};
use crate::corpus::paraphrase;
use crate::models::{CaptionerModel, ClassifierModel, DaeModel, DetectorModel, GeneratorModel};
use crate::optim::{generate, Models, UpdateConfig};
use crate::{Error, Result};

/// Confidence threshold of the detection metric.
pub const DETECTION_THRESHOLD: f64 = 0.1;
/// Stricter threshold conventionally used when displaying detections.
pub const DISPLAY_THRESHOLD: f64 = 0.5;

/// One detector output: a box normalized to the unit square, a class id,
/// and a confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    /// Top-left corner.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: usize,
    pub confidence: f64,
}

impl Detection {
    /// Fraction of the image the box covers.
    pub fn area_ratio(&self) -> f64 {
        self.w * self.h
    }
}

/// Area-weighted sum of confidences over detections above the threshold:
/// each detection with confidence p > threshold contributes (area ratio) * p.
/// Contributions are summed in sorted order so the score is exactly
/// invariant to the detection list order.
pub fn detection_score(detections: &[Detection], threshold: f64) -> f64 {
    let mut terms: Vec<f64> = detections
        .iter()
        .filter(|d| d.confidence > threshold)
        .map(|d| d.area_ratio() * d.confidence)
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Inception-style score over class posteriors: per split,
/// exp(mean_i KL(p(y|x_i) || p(y))) with p(y) the split marginal; returns
/// mean and standard deviation across splits.
pub fn inception_score_from_posteriors(
    posteriors: &[Vec<f64>],
    splits: usize,
) -> Result<(f64, f64)> {
    if splits == 0 {
        return Err(Error::Config("inception score needs at least one split".into()));
    }
    let n = posteriors.len();
    if n < splits {
        return Err(Error::Config(format!(
            "inception score needs at least {splits} images, got {n}"
        )));
    }
    let mut scores = Vec::with_capacity(splits);
    for s in 0..splits {
        let chunk = &posteriors[s * n / splits..(s + 1) * n / splits];
        let k = chunk[0].len();
        let mut marginal = vec![0.0; k];
        for p in chunk {
            for (m, v) in marginal.iter_mut().zip(p) {
                *m += v;
            }
        }
        for m in &mut marginal {
            *m /= chunk.len() as f64;
        }
        let mean_kl = chunk
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&marginal)
                    .filter(|(&pv, _)| pv > 0.0)
                    .map(|(&pv, &qv)| pv * (pv / qv).ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / chunk.len() as f64;
        scores.push(mean_kl.exp());
    }
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

/// Inception-style score of images under the toy classifier.
pub fn inception_score(
    images: &[Tensor],
    classifier: &ClassifierModel,
    splits: usize,
) -> Result<(f64, f64)> {
    let posteriors: Vec<Vec<f64>> =
        images.iter().map(|img| classifier.posterior(img)).collect::<Result<_>>()?;
    inception_score_from_posteriors(&posteriors, splits)
}

/// Method variants of the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Prior and noise only: the caption term is switched off. The toy
    /// analogue of a no-conditioning baseline.
    Baseline,
    /// Plain caption-gradient conditioning, no scaling, one caption.
    Ppgn,
    /// Caption gradient scaled by (1 - BLEU-n) / n.
    BleuScaled(usize),
    /// Gradient averaged over this many paraphrases, no scaling.
    MultiCaption(usize),
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Baseline => "baseline (prior-only)".into(),
            Variant::Ppgn => "ppgn".into(),
            Variant::BleuScaled(n) => format!("bleu-{n} scaled"),
            Variant::MultiCaption(k) => format!("multi-caption (n_c={k})"),
        }
    }
}

/// The model set the harness reads from.
#[derive(Clone, Copy)]
pub struct EvalModels<'a> {
    pub generator: &'a GeneratorModel,
    pub captioner: &'a CaptionerModel,
    pub dae: &'a DaeModel,
    pub detector: &'a DetectorModel,
    pub classifier: &'a ClassifierModel,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub iterations: usize,
    /// One generation run per (caption, seed) pair.
    pub seeds: Vec<u64>,
    pub splits: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl ExperimentConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            iterations: 200,
            seeds: vec![0, 1],
            splits: 10,
            gamma1: 1.0,
            gamma2: 1e-3,
            gamma3: 1e-5,
        }
    }
}

/// Scores of one method variant over an evaluation caption set.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub method: String,
    pub inception_mean: f64,
    pub inception_std: f64,
    pub detection_mean: f64,
    pub samples: usize,
}

fn update_config_for(
    cfg: &ExperimentConfig,
    caption: &Caption,
    caption_index: usize,
    run_seed: u64,
) -> Result<UpdateConfig> {
    let captions = match cfg.variant {
        Variant::Baseline | Variant::Ppgn | Variant::BleuScaled(_) => vec![caption.clone()],
        Variant::MultiCaption(k) => {
            // Paraphrase seed depends only on the caption so every run of a
            // caption sees the same conditioning set.
            paraphrase(&Vocabulary::v1(), caption, k, crate::rng::mix(0x5E7, caption_index as u64))?
        }
    };
    let mut update = UpdateConfig::new(captions);
    update.gamma1 = if cfg.variant == Variant::Baseline { 0.0 } else { cfg.gamma1 };
    update.gamma2 = cfg.gamma2;
    update.gamma3 = cfg.gamma3;
    update.iterations = cfg.iterations;
    update.ngram_order = match cfg.variant {
        Variant::BleuScaled(n) => n,
        _ => 0,
    };
    update.seed = run_seed;
    Ok(update)
}

/// Generate one image per (caption, seed) pair under the variant's update
/// config and score the batch with both metrics. Runs are independent and
/// execute in parallel; the collected order (and hence the report) is
/// deterministic.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    eval_captions: &[Caption],
    models: &EvalModels,
) -> Result<ScoreReport> {
    if eval_captions.is_empty() {
        return Err(Error::Config("run_experiment needs at least one caption".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Config("run_experiment needs at least one seed".into()));
    }
    let gen_models =
        Models { generator: models.generator, captioner: models.captioner, dae: models.dae };

    let pairs: Vec<(usize, u64)> = eval_captions
        .iter()
        .enumerate()
        .flat_map(|(i, _)| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();

    let images: Vec<Tensor> = pairs
        .par_iter()
        .map(|&(caption_index, seed)| {
            // Run seed mixes the sweep seed with the caption index, never the
            // variant, so variant comparisons share their random draws.
            let run_seed = crate::rng::mix(seed, caption_index as u64);
            let update =
                update_config_for(cfg, &eval_captions[caption_index], caption_index, run_seed)?;
            let trace = generate(&update, &gen_models)?;
            trace.final_image.ok_or_else(|| Error::Config("run produced no image".into()))
        })
        .collect::<Result<_>>()?;

    let mut detection_total = 0.0;
    for image in &images {
        let detections = models.detector.detect(image)?;
        detection_total += detection_score(&detections, DETECTION_THRESHOLD);
    }
    let detection_mean = detection_total / images.len() as f64;
    let (inception_mean, inception_std) =
        inception_score(&images, models.classifier, cfg.splits.min(images.len()))?;

    Ok(ScoreReport {
        method: cfg.variant.label(),
        inception_mean,
        inception_std,
        detection_mean,
        samples: images.len(),
    })
}

/// Aligned text table over several reports: Method | Inception | Detection.
pub fn format_table(reports: &[ScoreReport]) -> String {
    let rows: Vec<(String, String, String)> = reports
        .iter()
        .map(|r| {
            (
                r.method.clone(),
                format!("{:.3} ± {:.3}", r.inception_mean, r.inception_std),
                format!("{:.4}", r.detection_mean),
            )
        })
        .collect();
    let w0 = rows.iter().map(|r| r.0.len()).chain(["Method".len()]).max().unwrap();
    let w1 = rows.iter().map(|r| r.1.chars().count()).chain(["Inception".len()]).max().unwrap();
    let w2 = rows.iter().map(|r| r.2.len()).chain(["Detection".len()]).max().unwrap();
    let mut out = format!(
        "{:<w0$} | {:<w1$} | {:<w2$}\n{}\n",
        "Method",
        "Inception",
        "Detection",
        "-".repeat(w0 + w1 + w2 + 6)
    );
    for (m, i, d) in rows {
        let pad1 = w1 - i.chars().count();
        out.push_str(&format!("{m:<w0$} | {i}{} | {d:<w2$}\n", " ".repeat(pad1)));
    }
    out
}
