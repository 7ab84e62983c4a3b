//! Command-line front end: featurize digits, inspect diagrams, train and
//! evaluate single networks, and run or re-report whole experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tda_stitch::dataset::{self, GrayImage, NoiseConfig, NoiseKind};
use tda_stitch::experiment::{self, DiagramCache, ExperimentConfig, RunOptions};
use tda_stitch::filtration::{self, standard_filtrations, FILTRATION_COUNT};
use tda_stitch::nn::{self, Checkpoint, LabeledInput};
use tda_stitch::{npy, persistence, vectorize, PipelineConfig, Variant};

#[derive(Parser)]
#[command(name = "tda-stitch", version, about = "Persistence-image stitching for noisy digit classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory with the IDX files
    #[arg(long, env = "TDA_STITCH_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Clean,
    Gaussian,
    SaltPepper,
    /// Alternate Gaussian and salt-and-pepper
    Mixed,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute persistence-image stacks of the training pool into one .npy file
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Only the first N pool images
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_enum, default_value = "clean")]
        noise: NoiseArg,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the persistence pairs of one image under one filtration
    Diagram {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        image_index: usize,
        /// Filtration index, 0-7 height, 8-16 radial
        #[arg(long)]
        filtration: usize,
        /// Use an all-black image instead of the data set
        #[arg(long)]
        black: bool,
        #[arg(long, value_enum, default_value = "clean")]
        noise: NoiseArg,
    },
    /// Draw an image and its persistence-image channels (SVG), or one filtered image (PGM)
    Render {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        image_index: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write this filtration of the binarized image as PGM instead
        #[arg(long)]
        filtration: Option<usize>,
        #[arg(long, value_enum, default_value = "clean")]
        noise: NoiseArg,
    },
    /// Train one network on one split
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// raw, tda or vs
        #[arg(long, value_parser = parse_variant)]
        model: Variant,
        #[arg(long, default_value_t = 1000)]
        train_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 1: clean training set, 2: 10% noisy training set
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        experiment: u8,
        #[arg(long, default_value_t = 0)]
        iteration: u32,
        #[arg(long)]
        epochs: Option<usize>,
        /// Write a checkpoint here
        #[arg(long)]
        save: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Accuracy of a checkpoint on noisy test images
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        load: PathBuf,
        #[arg(long, value_enum, default_value = "mixed")]
        test_noise: NoiseArg,
        /// Number of test-file images
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Noise seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment config into a results directory (resumable)
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Regenerate CSV tables and plots from stored records
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown model {s:?}, expected raw, tda or vs"))
}

/// Exit status 1: the invocation itself is wrong.
/// Exit status 2: the data it points at is missing or corrupt.
enum Failure {
    Usage(String),
    Data(String),
}

type Outcome = Result<(), Failure>;

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn data_dir(args: &DataArgs) -> Result<&Path, Failure> {
    args.data_dir
        .as_deref()
        .ok_or_else(|| Failure::Usage("no data directory: pass --data-dir or set TDA_STITCH_DATA_DIR".into()))
}

fn load_pool(args: &DataArgs) -> Result<Vec<GrayImage>, Failure> {
    dataset::load_train(data_dir(args)?).map_err(data_err)
}

fn noisy(img: &GrayImage, noise: NoiseArg, config: &NoiseConfig, id: usize) -> GrayImage {
    let kind = match noise {
        NoiseArg::Clean => return img.clone(),
        NoiseArg::Gaussian => NoiseKind::Gaussian,
        NoiseArg::SaltPepper => NoiseKind::SaltPepper,
        NoiseArg::Mixed if id % 2 == 0 => NoiseKind::Gaussian,
        NoiseArg::Mixed => NoiseKind::SaltPepper,
    };
    config.spec(kind, id).apply(img)
}

fn pool_image(data: &DataArgs, index: usize, noise: NoiseArg) -> Result<GrayImage, Failure> {
    let pool = load_pool(data)?;
    let img = pool
        .get(index)
        .ok_or_else(|| Failure::Usage(format!("image index {index} out of range, pool has {} images", pool.len())))?;
    Ok(noisy(img, noise, &NoiseConfig::default(), index))
}

fn check_filtration(k: usize) -> Result<(), Failure> {
    if k >= FILTRATION_COUNT {
        return Err(Failure::Usage(format!("filtration must be below {FILTRATION_COUNT}, got {k}")));
    }
    Ok(())
}

fn pipeline(data: &DataArgs, out: &Path, count: Option<usize>, noise: NoiseArg, threads: Option<usize>) -> Outcome {
    let pool = load_pool(data)?;
    let n = count.unwrap_or(pool.len()).min(pool.len());
    let noise_config = NoiseConfig::default();
    let images: Vec<GrayImage> = pool[..n].iter().enumerate().map(|(i, img)| noisy(img, noise, &noise_config, i)).collect();
    let config = PipelineConfig::default();
    let (stats, stacks) = experiment::featurize(&images, &config, threads).map_err(data_err)?;
    let r = config.resolution;
    let mut flat = Vec::with_capacity(n * (vectorize::PI_CHANNELS + 1) * r * r);
    for (img, stack) in images.iter().zip(&stacks) {
        flat.extend(vectorize::stitch(img, stack).map_err(data_err)?.data);
    }
    let channels = vectorize::PI_CHANNELS + 1;
    npy::write(out, &[n, channels, r, r], &flat).map_err(data_err)?;
    // the settings that produced the stacks, next to them
    let sidecar = serde_json::json!({ "pipeline": config, "noise": noise_config, "noise_applied": noise.to_possible_value().map(|v| v.get_name().to_string()), "stats": stats });
    let meta = out.with_extension("json");
    fs::write(&meta, serde_json::to_string_pretty(&sidecar).map_err(data_err)? + "\n").map_err(data_err)?;
    println!("wrote {n} stitched inputs of {channels} x {r} x {r} to {} (scale {}), settings in {}", out.display(), stats.scale, meta.display());
    Ok(())
}

fn diagram(data: &DataArgs, index: usize, k: usize, black: bool, noise: NoiseArg) -> Outcome {
    check_filtration(k)?;
    let img = if black { GrayImage::black() } else { pool_image(data, index, noise)? };
    let binary = filtration::binarize(&img, PipelineConfig::default().threshold);
    let spec = &standard_filtrations()[k];
    let (h0, h1) = persistence::diagrams(&spec.apply(&binary));
    print!("{}{}", h0.to_text(), h1.to_text());
    Ok(())
}

fn render(data: &DataArgs, index: usize, out: &Path, k: Option<usize>, noise: NoiseArg) -> Outcome {
    let img = pool_image(data, index, noise)?;
    let config = PipelineConfig::default();
    let bytes = match k {
        Some(k) => {
            check_filtration(k)?;
            let binary = filtration::binarize(&img, config.threshold);
            standard_filtrations()[k].apply(&binary).to_pgm()
        }
        None => {
            let diagrams = vectorize::image_diagrams(&img, &config);
            let stats = tda_stitch::TrainingStats::from_diagrams([&diagrams]);
            let stack = vectorize::render_stack(&diagrams, &stats, &config).map_err(data_err)?;
            let label = img.label.map_or_else(String::new, |l| format!(", label {l}"));
            experiment::stack_svg(&img, &stack, &format!("image {index}{label}")).into_bytes()
        }
    };
    fs::write(out, bytes).map_err(data_err)
}

#[allow(clippy::too_many_arguments)]
fn train(
    data: &DataArgs,
    model: Variant,
    train_size: usize,
    seed: u64,
    exp: u8,
    iteration: u32,
    epochs: Option<usize>,
    save: Option<&Path>,
    threads: Option<usize>,
) -> Outcome {
    let pool = load_pool(data)?;
    let mut config = ExperimentConfig { seed, ..ExperimentConfig::paper(exp) };
    if let Some(e) = epochs {
        if e == 0 {
            return Err(Failure::Usage("epochs must be positive".into()));
        }
        config.training.epochs = e;
    }
    if train_size == 0 {
        return Err(Failure::Usage("train size must be positive".into()));
    }
    let cache = DiagramCache::new(None, &config.pipeline, &config.noise).map_err(data_err)?;
    let workers = experiment::thread_pool(threads).map_err(data_err)?;
    let run = workers
        .install(|| experiment::run_single(&config, &pool, &cache, model, train_size, iteration))
        .map_err(data_err)?;
    for (e, acc) in run.record.epoch_accuracies.iter().enumerate() {
        println!("epoch {:>2}  test accuracy {acc:.4}", e + 1);
    }
    println!("{model}: {} parameters, final test accuracy {:.4}", run.model.param_count(), run.record.final_accuracy);
    if let Some(path) = save {
        let stats = run.stats.map(|s| (s, config.pipeline));
        nn::save_checkpoint(path, &Checkpoint { model: run.model, stats }).map_err(data_err)?;
    }
    Ok(())
}

fn evaluate(data: &DataArgs, load: &Path, noise: NoiseArg, count: usize, seed: Option<u64>) -> Outcome {
    let mut ckpt = nn::load_checkpoint(load).map_err(data_err)?;
    let test = dataset::load_test(data_dir(data)?).map_err(data_err)?;
    if count == 0 || count > test.len() {
        return Err(Failure::Usage(format!("count must be in 1..={}", test.len())));
    }
    let noise_config = NoiseConfig { seed: seed.unwrap_or(NoiseConfig::default().seed), ..NoiseConfig::default() };
    let variant = ckpt.model.spec.variant;
    let mut set = LabeledInput::empty(variant.channels(), dataset::SIDE);
    for (i, img) in test[..count].iter().enumerate() {
        let img = noisy(img, noise, &noise_config, i);
        let stack = match (&ckpt.stats, variant) {
            (_, Variant::Raw) => None,
            (Some((stats, pipeline)), _) => {
                Some(vectorize::render_stack(&vectorize::image_diagrams(&img, pipeline), stats, pipeline).map_err(data_err)?)
            }
            (None, _) => return Err(Failure::Data("checkpoint lacks persistence-image statistics".into())),
        };
        let input = vectorize::model_input(variant, &img, stack.as_ref()).map_err(data_err)?;
        set.push(&input, usize::from(img.label.unwrap_or(0))).map_err(data_err)?;
    }
    let acc = nn::evaluate(&mut ckpt.model, &set).map_err(data_err)?;
    println!("{variant}: accuracy {acc:.4} on {count} test images");
    Ok(())
}

fn run_experiment(data: &DataArgs, config_path: &Path, out: &Path, threads: Option<usize>, quiet: bool) -> Outcome {
    let config = ExperimentConfig::load(config_path).map_err(|e| Failure::Usage(format!("{}: {e}", config_path.display())))?;
    let pool = load_pool(data)?;
    let options = RunOptions { threads, progress: !quiet };
    let records = experiment::run_experiment(&config, &pool, out, &options).map_err(|e| match e {
        experiment::ExperimentError::ConfigMismatch(_) => Failure::Usage(e.to_string()),
        e => data_err(e),
    })?;
    println!("{} records in {}", records.len(), out.display());
    print_summary(out, &config, &records)
}

fn print_summary(dir: &Path, config: &ExperimentConfig, records: &[experiment::RunRecord]) -> Outcome {
    let (summaries, incomplete) = experiment::write_report(dir, records, config.iterations as usize, &config.title()).map_err(data_err)?;
    for s in summaries {
        println!("{:<8} {:>5}  {:.4} ± {:.4}  ({:.4}, {:.4})", s.model.name(), s.train_size, s.mean, s.std, s.ci_low, s.ci_high);
    }
    for (m, size, found) in incomplete {
        eprintln!("incomplete: {m} at size {size} has {found}/{} iterations", config.iterations);
    }
    Ok(())
}

fn report(dir: &Path) -> Outcome {
    let config_path = dir.join("config.json");
    if !config_path.exists() {
        return Err(Failure::Usage(format!("{} is not a results directory", dir.display())));
    }
    let config = ExperimentConfig::load(&config_path).map_err(data_err)?;
    let records = experiment::load_records(dir, &config).map_err(data_err)?;
    print_summary(dir, &config, &records)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Pipeline { data, out, count, noise, threads } => pipeline(&data, &out, count, noise, threads),
        Command::Diagram { data, image_index, filtration, black, noise } => diagram(&data, image_index, filtration, black, noise),
        Command::Render { data, image_index, out, filtration, noise } => render(&data, image_index, &out, filtration, noise),
        Command::Train { data, model, train_size, seed, experiment, iteration, epochs, save, threads } => {
            train(&data, model, train_size, seed, experiment, iteration, epochs, save.as_deref(), threads)
        }
        Command::Evaluate { data, load, test_noise, count, seed } => evaluate(&data, &load, test_noise, count, seed),
        Command::Experiment { data, config, out, threads, quiet } => run_experiment(&data, &config, &out, threads, quiet),
        Command::Report { dir } => report(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: tda-stitch <COMMAND> [OPTIONS]; see tda-stitch --help");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
