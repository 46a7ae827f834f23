// Temporary tuning probes. Removed before release.
use std::path::Path;
use std::time::Instant;

use mmvr_core::corpus::manifest::{generate_dataset, load_dataset, LoadedDataset};
use mmvr_core::corpus::write_ppm;
use mmvr_core::eval::detection_score;
use mmvr_core::models::{
    captioner::train_captioner_sized, generator::train_generator_sized, train_dae,
    CaptionerModel, DaeModel, GeneratorModel, ModelCheckpoint,
};
use mmvr_core::optim::{generate, Models, UpdateConfig};
use mmvr_core::Tensor;

const CACHE: &str = "/tmp/mmvr_probe_cache";

fn cached_dataset() -> LoadedDataset {
    let dir = Path::new(CACHE);
    std::fs::create_dir_all(dir).unwrap();
    let manifest = dir.join("data/manifest.json");
    if !manifest.exists() {
        generate_dataset(300, 42, &dir.join("data")).unwrap();
    }
    load_dataset(&manifest).unwrap()
}

fn cached_models(data: &LoadedDataset) -> (GeneratorModel, Tensor, CaptionerModel, DaeModel) {
    let dir = Path::new(CACHE);
    let gen_path = dir.join("generator.ckpt");
    let cap_path = dir.join("captioner.ckpt");
    let dae_path = dir.join("dae.ckpt");
    if !gen_path.exists() {
        let t = Instant::now();
        let gen = train_generator_sized(data, 64, 128, 150, 0.5, 1).unwrap();
        gen.model.to_checkpoint(1, &gen.latents).write(&gen_path).unwrap();
        let cap = train_captioner_sized(data, 64, 16, 250, 0.2, 2).unwrap();
        cap.model.to_checkpoint(2).write(&cap_path).unwrap();
        let dae = train_dae(&gen.latents, 64, 0.1, 500, 0.05, 3).unwrap();
        dae.model.to_checkpoint(3).write(&dae_path).unwrap();
        println!("trained + cached in {:?}", t.elapsed());
    }
    let (gen, latents) =
        GeneratorModel::from_checkpoint(&ModelCheckpoint::read(&gen_path).unwrap()).unwrap();
    let cap = CaptionerModel::from_checkpoint(&ModelCheckpoint::read(&cap_path).unwrap()).unwrap();
    let dae = DaeModel::from_checkpoint(&ModelCheckpoint::read(&dae_path).unwrap()).unwrap();
    (gen, latents, cap, dae)
}

#[test]
#[ignore]
fn probe_image_quality() {
    let data = cached_dataset();
    let (gen, latents, cap, dae) = cached_models(&data);
    let models = Models { generator: &gen, captioner: &cap, dae: &dae };

    let out = Path::new(CACHE).join("imgs");
    std::fs::create_dir_all(&out).unwrap();

    // Reconstruction from a training latent (best case for the generator).
    let z0 = Tensor::vector(latents.data()[..64].to_vec()).unwrap();
    let recon = gen.generate(&z0).unwrap();
    write_ppm(&out.join("recon0.ppm"), &recon).unwrap();
    write_ppm(&out.join("real0.ppm"), &data.items[0].image).unwrap();

    // Pixel statistics of generated vs real images.
    for (i, seed) in [(0usize, 50u64), (1, 51), (2, 52)] {
        let mut cfg = UpdateConfig::new(vec![data.items[i].caption.clone()]);
        cfg.seed = seed;
        let trace = generate(&cfg, &models).unwrap();
        let img = trace.final_image.unwrap();
        write_ppm(&out.join(format!("gen{i}.ppm")), &img).unwrap();
        let px = img.data();
        let mean: f64 = px.iter().sum::<f64>() / px.len() as f64;
        let bright = px.iter().filter(|&&v| v > 0.35).count();
        let real_bright = data.items[i].image.data().iter().filter(|&&v| v > 0.35).count();
        let decoded = cap.greedy_decode(&img).unwrap();
        println!(
            "gen{i}: target={:?} decoded={:?} mean_px={mean:.3} bright_px={bright} (real {real_bright}) h_norm={:.2}",
            data.items[i].caption.text(),
            decoded.text(),
            trace.final_latent.l2_norm(),
        );
    }
    println!("images dumped under {}", out.display());

    // How far is the final latent from the training manifold?
    let mut cfg = UpdateConfig::new(vec![data.items[0].caption.clone()]);
    cfg.seed = 50;
    let trace = generate(&cfg, &models).unwrap();
    let h = &trace.final_latent;
    let res = dae.residual(h).unwrap();
    let z_res = dae.residual(&z0).unwrap();
    println!(
        "dae residual at final h: {:.3}; at a training latent: {:.3}; ||h||={:.2} ||z0||={:.2}",
        res.l2_norm(),
        z_res.l2_norm(),
        h.l2_norm(),
        z0.l2_norm()
    );
}

#[test]
#[ignore]
fn probe_full_trend() {
    let data = cached_dataset();
    let (gen, _latents, cap, dae) = cached_models(&data);
    let t = Instant::now();
    let det = mmvr_core::models::train_detector(&data, 300, 0.15, 4).unwrap();
    let cls = mmvr_core::models::train_classifier(&data, 150, 0.01, 5).unwrap();
    println!("metric models in {:?} (det loss {:.4}, cls acc {:.3})", t.elapsed(), det.final_loss, cls.train_accuracy);
    let eval_models = mmvr_core::eval::EvalModels {
        generator: &gen,
        captioner: &cap,
        dae: &dae,
        detector: &det.model,
        classifier: &cls.model,
    };
    let eval_captions: Vec<_> =
        data.items.iter().take(50).map(|i| i.caption.clone()).collect();
    let mut det_wins = 0;
    let mut inc_wins = 0;
    for rep in 0..3u64 {
        let t = Instant::now();
        let mut reports = Vec::new();
        for nc in [1usize, 5] {
            let mut cfg =
                mmvr_core::eval::ExperimentConfig::new(mmvr_core::eval::Variant::MultiCaption(nc));
            cfg.seeds = vec![2 * rep, 2 * rep + 1];
            reports.push(
                mmvr_core::eval::run_experiment(&cfg, &eval_captions, &eval_models).unwrap(),
            );
        }
        let (r1, r5) = (&reports[0], &reports[1]);
        if r5.detection_mean >= r1.detection_mean {
            det_wins += 1;
        }
        if r5.inception_mean >= r1.inception_mean {
            inc_wins += 1;
        }
        println!(
            "rep {rep}: nc1 det={:.5} inc={:.3} | nc5 det={:.5} inc={:.3} in {:?}",
            r1.detection_mean, r1.inception_mean, r5.detection_mean, r5.inception_mean, t.elapsed()
        );
    }
    println!("trend: detection {det_wins}/3 inception {inc_wins}/3");
}

fn box_blur(image: &Tensor) -> Tensor {
    let (h, w) = (32usize, 32usize);
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let (yy, xx) = (y as i32 + dy, x as i32 + dx);
                        if (0..h as i32).contains(&yy) && (0..w as i32).contains(&xx) {
                            acc += src[((yy as usize) * w + xx as usize) * 3 + ch];
                            n += 1.0;
                        }
                    }
                }
                out[(y * w + x) * 3 + ch] = acc / n;
            }
        }
    }
    Tensor::new(image.shape().to_vec(), out).unwrap()
}

#[test]
#[ignore]
fn probe_blur_augmentation() {
    use mmvr_core::rng::{normal_vec, stream};
    let data = cached_dataset();
    let (gen, _latents, cap, dae) = cached_models(&data);
    let models = Models { generator: &gen, captioner: &cap, dae: &dae };

    let generated: Vec<Tensor> = (0..20u64)
        .map(|i| {
            let mut cfg = UpdateConfig::new(vec![data.items[i as usize].caption.clone()]);
            cfg.seed = 50 + i;
            generate(&cfg, &models).unwrap().final_image.unwrap()
        })
        .collect();

    for blur in [false, true] {
        // Approximate on-the-fly augmentation with an expanded dataset:
        // originals + noisy (+ blurred + blurred-noisy when enabled).
        let mut rng = stream(0xB1, 0);
        let mut aug = data.clone();
        let noise_of = |rng: &mut rand_chacha::ChaCha8Rng, img: &Tensor| {
            let jitter = normal_vec(rng, img.len(), 0.08);
            Tensor::new(
                img.shape().to_vec(),
                img.data().iter().zip(&jitter).map(|(v, e)| v + e).collect(),
            )
            .unwrap()
        };
        let mut extra = Vec::new();
        for item in &data.items {
            let mut noisy = item.clone();
            noisy.image = noise_of(&mut rng, &item.image);
            extra.push(noisy);
            if blur {
                let mut blurred = item.clone();
                blurred.image = box_blur(&item.image);
                extra.push(blurred.clone());
                let mut bn = item.clone();
                bn.image = noise_of(&mut rng, &box_blur(&box_blur(&item.image)));
                extra.push(bn);
            }
        }
        aug.items.extend(extra);
        let epochs = if blur { 150 } else { 300 };
        let det = mmvr_core::models::detector::train_detector_sized(&aug, 96, epochs, 0.15, 4)
            .unwrap()
            .model;
        let mut gen_score = 0.0;
        let mut real_score = 0.0;
        for img in &generated {
            gen_score += detection_score(&det.detect(img).unwrap(), 0.1);
        }
        for item in data.items.iter().take(20) {
            real_score += detection_score(&det.detect(&item.image).unwrap(), 0.1);
        }
        println!(
            "blur={blur}: generated det={:.4} real det={:.4}",
            gen_score / 20.0,
            real_score / 20.0
        );
    }
}

#[test]
#[ignore]
fn probe_trend_blur() {
    use mmvr_core::corpus::paraphrase;
    use mmvr_core::rng::{mix, normal_vec, stream};
    let data = cached_dataset();
    let (gen, _latents, cap, dae) = cached_models(&data);
    let models = Models { generator: &gen, captioner: &cap, dae: &dae };
    let vocab = mmvr_core::Vocabulary::v1();

    // Detector with the built-in robustness augmentation.
    let _ = normal_vec(&mut stream(0, 0), 1, 0.0);
    let det = mmvr_core::models::train_detector(&data, 300, 0.15, 4).unwrap().model;
    let mut real_total = 0.0;
    let mut garbage_total = 0.0;
    let mut rng = stream(0xB3, 0);
    for item in data.items.iter().take(20) {
        real_total += detection_score(&det.detect(&item.image).unwrap(), 0.1);
        let noise = normal_vec(&mut rng, item.image.len(), 0.25);
        let garbage =
            Tensor::new(item.image.shape().to_vec(), noise.iter().map(|e| 0.1 + e).collect())
                .unwrap();
        garbage_total += detection_score(&det.detect(&garbage).unwrap(), 0.1);
    }
    println!(
        "detector sanity: real={:.4} garbage={:.5}",
        real_total / 20.0,
        garbage_total / 20.0
    );

    for rep in 0..3u64 {
        let mut nc1_total = 0.0;
        let mut nc5_total = 0.0;
        for i in 0..30usize {
            let caption = data.items[i].caption.clone();
            let run_seed = mix(rep, i as u64);
            for nc in [1usize, 5] {
                let captions = if nc == 1 {
                    vec![caption.clone()]
                } else {
                    paraphrase(&vocab, &caption, 5, mix(0x5E7, i as u64)).unwrap()
                };
                let mut cfg = UpdateConfig::new(captions);
                cfg.seed = run_seed;
                let img = generate(&cfg, &models).unwrap().final_image.unwrap();
                let s = detection_score(&det.detect(&img).unwrap(), 0.1);
                if nc == 1 {
                    nc1_total += s;
                } else {
                    nc5_total += s;
                }
            }
        }
        println!(
            "blur-det rep {rep}: nc1={:.5} nc5={:.5} ({})",
            nc1_total / 30.0,
            nc5_total / 30.0,
            if nc5_total >= nc1_total { "nc5 wins" } else { "nc1 wins" }
        );
    }
}

#[test]
#[ignore]
fn probe_gamma2_strength() {
    let data = cached_dataset();
    let (gen, latents, cap, dae) = cached_models(&data);
    let models = Models { generator: &gen, captioner: &cap, dae: &dae };
    let det = {
        // quick detector with noise augmentation baked in is not in the API;
        // use the plain one for relative comparisons here.
        mmvr_core::models::train_detector(&data, 300, 0.15, 4).unwrap().model
    };
    let _ = latents;
    for gamma2 in [1e-3, 1e-2, 5e-2] {
        let mut det_total = 0.0;
        let mut loss_total = 0.0;
        for i in 0..10usize {
            let mut cfg = UpdateConfig::new(vec![data.items[i].caption.clone()]);
            cfg.gamma2 = gamma2;
            cfg.seed = 70 + i as u64;
            let trace = generate(&cfg, &models).unwrap();
            let img = trace.final_image.unwrap();
            det_total += detection_score(&det.detect(&img).unwrap(), 0.1);
            loss_total += trace.records.last().unwrap().mean_caption_loss;
        }
        println!(
            "gamma2={gamma2}: mean det={:.4} mean final loss={:.3}",
            det_total / 10.0,
            loss_total / 10.0
        );
    }
}
