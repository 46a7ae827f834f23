//! The caption-conditioned inference loop: iteratively update a latent
//! vector so the captioner's description of the generated image approaches
//! the target caption.
//!
//! One step combines four terms: a descent step on the teacher-forced
//! caption loss (optionally averaged over several paraphrases and scaled by
//! the n-gram factor (1 - F) / n), a pull toward the DAE's reconstruction of
//! the latent, and Gaussian exploration noise.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Tape, Tensor};
use crate::caption::Caption;
use crate::models::{CaptionerModel, DaeModel, GeneratorModel};
use crate::rng::{normal_vec, stream};
use crate::text::scale_factor;
use crate::{Error, Result};

/// The three fixed models a generation run reads from.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub generator: &'a GeneratorModel,
    pub captioner: &'a CaptionerModel,
    pub dae: &'a DaeModel,
}

impl Models<'_> {
    fn validate(&self) -> Result<()> {
        if self.generator.latent_dim() != self.dae.latent_dim() {
            return Err(Error::Config(format!(
                "generator latent dim {} vs DAE latent dim {}",
                self.generator.latent_dim(),
                self.dae.latent_dim()
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of the latent update.
///
/// Defaults mirror the inference schedule: gamma1 = 1, gamma2 = 1e-3,
/// 200 iterations. `ngram_order` 0 disables metric scaling; 1..=4 selects
/// the BLEU order of the scale factor.
#[derive(Debug, Clone)]
pub struct UpdateConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Standard deviation of the per-coordinate Gaussian noise term.
    pub gamma3: f64,
    pub iterations: usize,
    pub ngram_order: usize,
    pub captions: Vec<Caption>,
    pub seed: u64,
}

impl UpdateConfig {
    pub fn new(captions: Vec<Caption>) -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1e-3,
            gamma3: 1e-5,
            iterations: 200,
            ngram_order: 0,
            captions,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.captions.is_empty() {
            return Err(Error::Config("at least one target caption is required".into()));
        }
        if self.ngram_order > 4 {
            return Err(Error::Config(format!(
                "ngram_order must be 0 (off) or 1..=4, got {}",
                self.ngram_order
            )));
        }
        if !(self.gamma1.is_finite() && self.gamma2.is_finite() && self.gamma3.is_finite()) {
            return Err(Error::Config("gamma values must be finite".into()));
        }
        if self.gamma3 < 0.0 {
            return Err(Error::Config("gamma3 (noise std) must be non-negative".into()));
        }
        Ok(())
    }
}

/// The evolving latent vector plus iteration counter and noise stream.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub h: Tensor,
    pub iteration: usize,
    rng: ChaCha8Rng,
}

impl LatentState {
    /// Standard-Gaussian initial latent drawn from the config seed.
    pub fn init(cfg: &UpdateConfig, latent_dim: usize) -> Self {
        let mut rng = stream(cfg.seed, 0x4D);
        let h = Tensor::vector(normal_vec(&mut rng, latent_dim, 1.0))
            .expect("Gaussian init is finite");
        Self { h, iteration: 0, rng }
    }
}

/// Scalars recorded at each iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_caption_loss: f64,
    pub scale_factor: f64,
    pub caption_grad_norm: f64,
    pub dae_residual_norm: f64,
}

/// Full record of one generation run.
#[derive(Debug, Clone)]
pub struct GenerationTrace {
    pub records: Vec<IterationRecord>,
    pub final_latent: Tensor,
    /// Absent when the run aborted before producing a final image.
    pub final_image: Option<Tensor>,
}

#[derive(Serialize)]
struct TraceJson<'a> {
    records: &'a [IterationRecord],
    final_latent: &'a [f64],
}

impl GenerationTrace {
    /// Per-iteration scalars plus the final latent; the final image is
    /// exported separately as a pixmap.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&TraceJson {
            records: &self.records,
            final_latent: self.final_latent.data(),
        })?;
        s.push('\n');
        Ok(s)
    }
}

/// Gradient of the teacher-forced caption loss with respect to the latent,
/// through generator and captioner in one forward/backward pass. Returns
/// the gradient (latent-shaped) and the loss value.
pub fn caption_gradient(
    models: &Models,
    h: &Tensor,
    target: &Caption,
) -> Result<(Tensor, f64)> {
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone().with_grad());
    let image = models.generator.image_var(&mut tape, hv)?;
    let loss = models.captioner.caption_loss_var(&mut tape, image, target)?;
    let grads = tape.backward(loss)?;
    Ok((grads.wrt(hv)?.clone(), tape.value(loss).item()))
}

/// Arithmetic mean of `caption_gradient` over all captions; also returns the
/// mean loss.
pub fn averaged_caption_gradient(
    models: &Models,
    h: &Tensor,
    captions: &[Caption],
) -> Result<(Tensor, f64)> {
    if captions.is_empty() {
        return Err(Error::Config("averaged gradient needs at least one caption".into()));
    }
    let mut acc = vec![0.0; h.len()];
    let mut loss_acc = 0.0;
    for caption in captions {
        let (grad, loss) = caption_gradient(models, h, caption)?;
        for (a, g) in acc.iter_mut().zip(grad.data()) {
            *a += g;
        }
        loss_acc += loss;
    }
    let n = captions.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok((Tensor::vector(acc)?, loss_acc / n))
}

/// One latent update. The state is advanced only if the new latent is
/// finite; otherwise the step fails with a diagnostic naming the iteration
/// and the state keeps the last finite latent.
pub fn update_step(
    state: &mut LatentState,
    cfg: &UpdateConfig,
    models: &Models,
) -> Result<IterationRecord> {
    let scale = if cfg.ngram_order >= 1 {
        let image = models.generator.generate(&state.h)?;
        let decoded = models.captioner.greedy_decode(&image)?;
        scale_factor(&decoded, &cfg.captions, cfg.ngram_order)?
    } else {
        1.0
    };

    let (grad, mean_loss) = averaged_caption_gradient(models, &state.h, &cfg.captions)?;
    let residual = models.dae.residual(&state.h)?;
    let noise = normal_vec(&mut state.rng, state.h.len(), cfg.gamma3);

    let next: Vec<f64> = state
        .h
        .data()
        .iter()
        .zip(grad.data())
        .zip(residual.data())
        .zip(&noise)
        .map(|(((h, g), r), e)| h - cfg.gamma1 * scale * g + cfg.gamma2 * r + e)
        .collect();
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            op: format!("latent update at iteration {}", state.iteration),
        });
    }

    state.h = Tensor::vector(next)?;
    state.iteration += 1;
    Ok(IterationRecord {
        iteration: state.iteration - 1,
        mean_caption_loss: mean_loss,
        scale_factor: scale,
        caption_grad_norm: grad.l2_norm(),
        dae_residual_norm: residual.l2_norm(),
    })
}

/// Run a full generation: Gaussian initial latent from the config seed,
/// `iterations` update steps, final image from the final latent.
pub fn generate(cfg: &UpdateConfig, models: &Models) -> Result<GenerationTrace> {
    cfg.validate()?;
    models.validate()?;
    let mut state = LatentState::init(cfg, models.generator.latent_dim());
    let mut records = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        match update_step(&mut state, cfg, models) {
            Ok(record) => records.push(record),
            Err(e) => {
                let iteration = state.iteration;
                return Err(Error::Aborted {
                    iteration,
                    reason: e.to_string(),
                    trace: Box::new(GenerationTrace {
                        records,
                        final_latent: state.h.clone(),
                        final_image: None,
                    }),
                });
            }
        }
    }
    let final_image = models.generator.generate(&state.h)?;
    Ok(GenerationTrace {
        records,
        final_latent: state.h.clone(),
        final_image: Some(final_image),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::Vocabulary;
    use crate::models::{CaptionerModel, DaeModel, GeneratorModel};

    fn toy_models() -> (GeneratorModel, CaptionerModel, DaeModel) {
        (GeneratorModel::new(8, 16, 1), CaptionerModel::new(16, 8, 2), DaeModel::new(8, 4, 3))
    }

    fn cfg_for(text: &str) -> UpdateConfig {
        UpdateConfig::new(vec![Vocabulary::v1().encode(text).unwrap()])
    }

    #[test]
    fn all_zero_gammas_fix_the_latent() {
        let (g, c, d) = toy_models();
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let mut cfg = cfg_for("a red circle");
        cfg.gamma1 = 0.0;
        cfg.gamma2 = 0.0;
        cfg.gamma3 = 0.0;
        let mut state = LatentState::init(&cfg, 8);
        let before = state.h.clone();
        let record = update_step(&mut state, &cfg, &models).unwrap();
        assert_eq!(state.h, before);
        assert_eq!(state.iteration, 1);
        assert_eq!(record.scale_factor, 1.0);
    }

    #[test]
    fn matching_decode_with_scaling_on_fixes_the_latent() {
        // Fresh DAE is the identity (zero residual); gamma3 = 0; the target
        // caption is whatever the untrained pipeline decodes, so F = 1 and
        // the scaled caption term vanishes.
        let (g, c, d) = toy_models();
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let mut probe = cfg_for("a red circle");
        probe.gamma3 = 0.0;
        let state = LatentState::init(&probe, 8);
        let decoded = c.greedy_decode(&g.generate(&state.h).unwrap()).unwrap();
        if decoded.content_ids().is_empty() {
            // Degenerate decode cannot have F = 1; nothing to assert here.
            return;
        }
        let mut cfg = UpdateConfig::new(vec![decoded]);
        cfg.gamma3 = 0.0;
        cfg.ngram_order = 1;
        cfg.seed = probe.seed;
        let mut state = LatentState::init(&cfg, 8);
        let before = state.h.clone();
        let record = update_step(&mut state, &cfg, &models).unwrap();
        assert_eq!(record.scale_factor, 0.0);
        assert_eq!(state.h, before);
    }

    #[test]
    fn single_caption_average_equals_caption_gradient() {
        let (g, c, d) = toy_models();
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let caption = Vocabulary::v1().encode("a red circle").unwrap();
        let h = LatentState::init(&cfg_for("a red circle"), 8).h;
        let (g1, l1) = caption_gradient(&models, &h, &caption).unwrap();
        let (g5, l5) =
            averaged_caption_gradient(&models, &h, &vec![caption.clone(); 5]).unwrap();
        let (ga, la) =
            averaged_caption_gradient(&models, &h, std::slice::from_ref(&caption)).unwrap();
        assert_eq!(g1, ga);
        assert_eq!(l1, la);
        for (a, b) in g1.data().iter().zip(g5.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((l1 - l5).abs() < 1e-12);
    }

    #[test]
    fn two_caption_average_is_component_mean() {
        let (g, c, d) = toy_models();
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let v = Vocabulary::v1();
        let c1 = v.encode("a red circle").unwrap();
        let c2 = v.encode("two blue squares").unwrap();
        let h = LatentState::init(&cfg_for("a red circle"), 8).h;
        let (g1, _) = caption_gradient(&models, &h, &c1).unwrap();
        let (g2, _) = caption_gradient(&models, &h, &c2).unwrap();
        let (avg, _) =
            averaged_caption_gradient(&models, &h, &[c1.clone(), c2.clone()]).unwrap();
        for ((a, b), m) in g1.data().iter().zip(g2.data()).zip(avg.data()) {
            assert!(((a + b) / 2.0 - m).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_caption_list_rejected() {
        let (g, c, d) = toy_models();
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let h = Tensor::vector(vec![0.0; 8]).unwrap();
        assert!(averaged_caption_gradient(&models, &h, &[]).is_err());
    }

    #[test]
    fn traces_are_deterministic_and_sized() {
        let (g, c, d) = toy_models();
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let mut cfg = cfg_for("a red circle");
        cfg.iterations = 3;
        cfg.seed = 17;
        let a = generate(&cfg, &models).unwrap();
        let b = generate(&cfg, &models).unwrap();
        assert_eq!(a.records.len(), 3);
        assert_eq!(a.final_latent, b.final_latent);
        assert_eq!(a.final_image, b.final_image);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());

        cfg.iterations = 1;
        let single = generate(&cfg, &models).unwrap();
        assert_eq!(single.records.len(), 1);
    }

    #[test]
    fn latent_dim_mismatch_rejected() {
        let g = GeneratorModel::new(8, 16, 1);
        let c = CaptionerModel::new(16, 8, 2);
        let d = DaeModel::new(9, 4, 3);
        let models = Models { generator: &g, captioner: &c, dae: &d };
        let cfg = cfg_for("a red circle");
        assert!(matches!(generate(&cfg, &models), Err(Error::Config(_))));
    }
}
