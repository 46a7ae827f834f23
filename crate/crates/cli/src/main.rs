//! `mmvr`: dataset synthesis, model training, caption-conditioned image
//! generation, paraphrasing, and evaluation from one binary.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical abort during
//! generation. All subcommands are deterministic given identical flags and
//! inputs; `MMVR_SEED` overrides the default seed when `--seed` is absent.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmvr_core::caption::Vocabulary;
use mmvr_core::corpus::{self, manifest::LoadedDataset};
use mmvr_core::eval::{self, EvalModels, ExperimentConfig, Variant};
use mmvr_core::models::{
    captioner, classifier, dae, detector, generator, CaptionerModel, ClassifierModel, DaeModel,
    DetectorModel, GeneratorModel, ModelCheckpoint,
};
use mmvr_core::optim::{generate, Models, UpdateConfig};
use mmvr_core::Error;

#[derive(Parser)]
#[command(name = "mmvr", version, about = "Caption-conditioned image generation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shapes-and-captions dataset.
    Dataset(DatasetArgs),
    /// Train one model kind and write its checkpoint.
    Train(TrainArgs),
    /// Optimize a latent for a caption and write the image plus trace.
    Generate(GenerateArgs),
    /// Print grammar paraphrases of a caption.
    Paraphrase(ParaphraseArgs),
    /// Score a method variant over an evaluation caption set.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Number of entries to generate.
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (manifest.json and images/ are written here).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Generator,
    Captioner,
    Dae,
    Detector,
    Classifier,
}

#[derive(Args)]
struct TrainArgs {
    /// Which model to train.
    #[arg(value_enum)]
    kind: ModelKind,
    /// Dataset directory or manifest path.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Generator checkpoint providing the latent table (DAE only).
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Target caption, e.g. "a red circle".
    caption: String,
    /// Directory holding generator.ckpt, captioner.ckpt, dae.ckpt.
    #[arg(long)]
    checkpoints: PathBuf,
    /// Output directory for image.ppm and trace.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 1e-3)]
    gamma2: f64,
    #[arg(long, default_value_t = 1e-5)]
    gamma3: f64,
    /// 0 disables n-gram scaling; 1..=4 selects the BLEU order.
    #[arg(long, default_value_t = 0)]
    bleu_order: usize,
    /// Condition on this many paraphrases of the caption.
    #[arg(long, default_value_t = 1)]
    num_captions: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ParaphraseArgs {
    caption: String,
    /// How many captions to produce (the first is the input itself).
    #[arg(short = 'k', long, default_value_t = 5)]
    count: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Baseline,
    Ppgn,
    Bleu,
    MultiCaption,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Method variant to score.
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// BLEU order for the bleu variant.
    #[arg(long, default_value_t = 1)]
    bleu_order: usize,
    /// Paraphrase count for the multi-caption variant.
    #[arg(long, default_value_t = 5)]
    nc: usize,
    /// Dataset directory or manifest path; supplies the eval captions.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory holding all five checkpoints.
    #[arg(long)]
    checkpoints: PathBuf,
    /// Number of captions drawn from the dataset.
    #[arg(long, default_value_t = 50)]
    captions: usize,
    /// Number of seeds; runs captions x seeds generations.
    #[arg(long, default_value_t = 2)]
    seeds: usize,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Worker threads for generation runs (default: logical processors).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; everything else is a usage
            // error and exits 1 per the CLI contract.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Dataset(args) => cmd_dataset(args),
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Paraphrase(args) => cmd_paraphrase(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<Error>().is_some_and(|err| matches!(err, Error::Aborted { .. }))
            {
                2
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}

/// Default seed: `MMVR_SEED` when set, else 0.
fn default_seed() -> u64 {
    std::env::var("MMVR_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(default_seed)
}

fn manifest_path(dataset: &Path) -> PathBuf {
    if dataset.is_dir() {
        dataset.join(corpus::MANIFEST_FILE)
    } else {
        dataset.to_path_buf()
    }
}

fn load_data(dataset: &Path) -> anyhow::Result<LoadedDataset> {
    Ok(corpus::load_dataset(&manifest_path(dataset))?)
}

fn cmd_dataset(args: DatasetArgs) -> anyhow::Result<()> {
    let seed = seed_or_default(args.seed);
    let manifest = corpus::generate_dataset(args.count, seed, &args.out)?;
    let manifest_file = args.out.join(corpus::MANIFEST_FILE);
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "manifest": manifest_file,
                "entries": manifest.entries.len(),
                "seed": seed,
            })
        );
    } else {
        println!("wrote {} entries to {}", manifest.entries.len(), manifest_file.display());
    }
    Ok(())
}

fn require_dataset(args: &TrainArgs) -> anyhow::Result<LoadedDataset> {
    let path = args
        .dataset
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--dataset is required for this model kind"))?;
    load_data(path)
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let seed = seed_or_default(args.seed);
    let mut extras = serde_json::Map::new();
    let (kind, final_loss, ckpt): (&str, f64, ModelCheckpoint) = match args.kind {
        ModelKind::Generator => {
            let data = require_dataset(&args)?;
            let epochs = args.epochs.unwrap_or(generator::DEFAULT_EPOCHS);
            let lr = args.lr.unwrap_or(generator::DEFAULT_LR);
            let trained = generator::train_generator(&data, epochs, lr, seed)?;
            ("generator", trained.final_loss, trained.model.to_checkpoint(seed, &trained.latents))
        }
        ModelKind::Captioner => {
            let data = require_dataset(&args)?;
            let epochs = args.epochs.unwrap_or(captioner::DEFAULT_EPOCHS);
            let lr = args.lr.unwrap_or(captioner::DEFAULT_LR);
            let trained = captioner::train_captioner(&data, epochs, lr, seed)?;
            let h = trained.holdout;
            extras.insert(
                "exact_match".into(),
                serde_json::json!({
                    "correct": h.correct,
                    "total": h.total,
                    "split": if h.on_training_set { "train" } else { "held-out" },
                }),
            );
            ("captioner", trained.final_loss, trained.model.to_checkpoint(seed))
        }
        ModelKind::Dae => {
            let gen_path = args.generator.as_ref().ok_or_else(|| {
                anyhow::anyhow!("--generator <checkpoint> is required to train the DAE")
            })?;
            let (_, latents) = GeneratorModel::from_checkpoint(&ModelCheckpoint::read(gen_path)?)?;
            let epochs = args.epochs.unwrap_or(dae::DEFAULT_EPOCHS);
            let lr = args.lr.unwrap_or(dae::DEFAULT_LR);
            let trained = dae::train_dae(
                &latents,
                dae::DEFAULT_HIDDEN_DIM,
                dae::DEFAULT_NOISE_STD,
                epochs,
                lr,
                seed,
            )?;
            ("dae", trained.final_loss, trained.model.to_checkpoint(seed))
        }
        ModelKind::Detector => {
            let data = require_dataset(&args)?;
            let epochs = args.epochs.unwrap_or(detector::DEFAULT_EPOCHS);
            let lr = args.lr.unwrap_or(detector::DEFAULT_LR);
            let trained = detector::train_detector(&data, epochs, lr, seed)?;
            ("detector", trained.final_loss, trained.model.to_checkpoint(seed))
        }
        ModelKind::Classifier => {
            let data = require_dataset(&args)?;
            let epochs = args.epochs.unwrap_or(classifier::DEFAULT_EPOCHS);
            let lr = args.lr.unwrap_or(classifier::DEFAULT_LR);
            let trained = classifier::train_classifier(&data, epochs, lr, seed)?;
            extras.insert("train_accuracy".into(), serde_json::json!(trained.train_accuracy));
            ("classifier", trained.final_loss, trained.model.to_checkpoint(seed))
        }
    };
    ckpt.write(&args.out)?;
    if args.json {
        let mut obj = serde_json::json!({
            "kind": kind,
            "checkpoint": args.out,
            "final_loss": final_loss,
            "seed": seed,
        });
        obj.as_object_mut().unwrap().extend(extras);
        println!("{obj}");
    } else {
        println!("trained {kind}: final loss {final_loss:.6}");
        for (k, v) in &extras {
            println!("{k}: {v}");
        }
        println!("checkpoint written to {}", args.out.display());
    }
    Ok(())
}

fn read_ckpt(dir: &Path, name: &str) -> anyhow::Result<ModelCheckpoint> {
    let path = dir.join(name);
    ModelCheckpoint::read(&path)
        .map_err(|e| anyhow::anyhow!("cannot load {}: {e}", path.display()))
}

fn load_generation_models(dir: &Path) -> anyhow::Result<(GeneratorModel, CaptionerModel, DaeModel)> {
    let (generator, _) = GeneratorModel::from_checkpoint(&read_ckpt(dir, "generator.ckpt")?)?;
    let captioner = CaptionerModel::from_checkpoint(&read_ckpt(dir, "captioner.ckpt")?)?;
    let dae = DaeModel::from_checkpoint(&read_ckpt(dir, "dae.ckpt")?)?;
    Ok((generator, captioner, dae))
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let seed = seed_or_default(args.seed);
    let vocab = Vocabulary::v1();
    let caption = vocab.encode(&args.caption)?;
    let captions = if args.num_captions > 1 {
        corpus::paraphrase(&vocab, &caption, args.num_captions, seed)?
    } else {
        vec![caption]
    };

    let (generator, captioner, dae) = load_generation_models(&args.checkpoints)?;
    let models = Models { generator: &generator, captioner: &captioner, dae: &dae };

    let mut cfg = UpdateConfig::new(captions);
    cfg.gamma1 = args.gamma1;
    cfg.gamma2 = args.gamma2;
    cfg.gamma3 = args.gamma3;
    cfg.iterations = args.iters;
    cfg.ngram_order = args.bleu_order;
    cfg.seed = seed;

    fs::create_dir_all(&args.out)?;
    let trace_path = args.out.join("trace.json");
    let image_path = args.out.join("image.ppm");

    match generate(&cfg, &models) {
        Ok(trace) => {
            fs::write(&trace_path, trace.to_json()?)?;
            let image = trace.final_image.as_ref().expect("completed runs carry an image");
            corpus::write_ppm(&image_path, image)?;
            let final_loss = trace.records.last().map(|r| r.mean_caption_loss);
            if args.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "image": image_path,
                        "trace": trace_path,
                        "iterations": trace.records.len(),
                        "final_caption_loss": final_loss,
                    })
                );
            } else {
                println!("wrote {} and {}", image_path.display(), trace_path.display());
                if let Some(loss) = final_loss {
                    println!("final caption loss: {loss:.4}");
                }
            }
            Ok(())
        }
        Err(Error::Aborted { iteration, reason, trace }) => {
            // Dump whatever was recorded before the abort, then exit 2.
            fs::write(&trace_path, trace.to_json()?)?;
            eprintln!("trace dumped to {}", trace_path.display());
            Err(Error::Aborted { iteration, reason, trace }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_paraphrase(args: ParaphraseArgs) -> anyhow::Result<()> {
    let vocab = Vocabulary::v1();
    let caption = vocab.encode(&args.caption)?;
    let out = corpus::paraphrase(&vocab, &caption, args.count, seed_or_default(args.seed))?;
    if args.json {
        let texts: Vec<String> = out.iter().map(|c| c.text()).collect();
        println!("{}", serde_json::json!({"paraphrases": texts}));
    } else {
        for c in &out {
            println!("{}", c.text());
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let variant = match args.variant {
        VariantArg::Baseline => Variant::Baseline,
        VariantArg::Ppgn => Variant::Ppgn,
        VariantArg::Bleu => Variant::BleuScaled(args.bleu_order),
        VariantArg::MultiCaption => Variant::MultiCaption(args.nc),
    };
    let data = load_data(&args.dataset)?;
    if data.len() < args.captions {
        anyhow::bail!("dataset provides {} captions, --captions asked for {}", data.len(), args.captions);
    }
    let eval_captions: Vec<_> =
        data.items.iter().take(args.captions).map(|i| i.caption.clone()).collect();

    let dir = &args.checkpoints;
    let (generator, captioner, dae) = load_generation_models(dir)?;
    let detector = DetectorModel::from_checkpoint(&read_ckpt(dir, "detector.ckpt")?)?;
    let classifier = ClassifierModel::from_checkpoint(&read_ckpt(dir, "classifier.ckpt")?)?;
    let models = EvalModels {
        generator: &generator,
        captioner: &captioner,
        dae: &dae,
        detector: &detector,
        classifier: &classifier,
    };

    let base_seed = seed_or_default(args.seed);
    let mut cfg = ExperimentConfig::new(variant);
    cfg.iterations = args.iters;
    cfg.seeds = (0..args.seeds as u64).map(|s| base_seed + s).collect();

    let report = run_with_jobs(args.jobs, || eval::run_experiment(&cfg, &eval_captions, &models))?;

    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if args.json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        print!("{}", eval::format_table(std::slice::from_ref(&report)));
        println!("samples: {}", report.samples);
    }
    Ok(())
}

fn run_with_jobs<T>(
    jobs: Option<usize>,
    f: impl FnOnce() -> mmvr_core::Result<T> + Send,
) -> anyhow::Result<T>
where
    T: Send,
{
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f)?)
        }
        None => Ok(f()?),
    }
}
