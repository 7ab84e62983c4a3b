//! The two noisy-digit experiments: draw splits, featurize, train the three
//! networks for every training size and iteration, then summarize.
//!
//! A results directory holds `config.json`, one `records/<model>-<size>-<iteration>.json`
//! per finished run, `cache/*.npy` persistence diagrams, `runs.csv`,
//! `summary.csv` and `plots/*.svg`. Re-running into the same directory only
//! computes the missing records.

mod report;
mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, GrayImage, NoiseConfig, NoiseKind, Sample, Split, SplitSpec};
use crate::nn::{self, LabeledInput, Model, NnError, TrainConfig};
use crate::npy::{self, NpyError};
use crate::rng;
use crate::vectorize::{self, ImageDiagrams, PIStack, PipelineConfig, TrainingStats, Variant, VectorizeError};

pub use report::{
    accuracy_vs_size_svg, emit_csv, emit_plots, epoch_curves_svg, incomplete_groups, read_summary_csv, stack_svg, write_report,
    write_runs_csv, write_summary_csv, PlotFiles,
};
pub use stats::{confidence_interval, mean_std, round4, summarize, summarize_with, Summary, Z95};

/// Training-set sizes of both experiments.
pub const PAPER_SIZES: [usize; 4] = [100, 250, 500, 1000];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("{} holds results of a different experiment config", .0.display())]
    ConfigMismatch(PathBuf),
    #[error("{model} at size {train_size} has {found} iterations, expected {expected}")]
    IncompleteGroup { model: Variant, train_size: usize, found: usize, expected: usize },
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

fn default_sizes() -> Vec<usize> {
    PAPER_SIZES.to_vec()
}

fn default_models() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_iterations() -> u32 {
    10
}

fn default_test_size() -> usize {
    100
}

/// Experiment description as stored in `config.json`.
///
/// Experiment 1 trains on clean images only; experiment 2 makes 10% of every
/// training set noisy. Test sets are always fully noisy. `training.seed` is
/// not used: each run derives its seeds from `seed`, the model, the size and
/// the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: u8,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_models")]
    pub models: Vec<Variant>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub training: TrainConfig,
}

impl ExperimentConfig {
    /// Full-size defaults for experiment 1 or 2.
    pub fn paper(experiment: u8) -> Self {
        Self {
            experiment,
            sizes: default_sizes(),
            models: default_models(),
            iterations: default_iterations(),
            test_size: default_test_size(),
            seed: 0,
            noise: NoiseConfig::default(),
            pipeline: PipelineConfig::default(),
            training: TrainConfig::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let config: Self = serde_json::from_slice(&fs::read(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn mix_ratio(&self) -> f64 {
        if self.experiment == 2 {
            0.1
        } else {
            0.0
        }
    }

    pub fn title(&self) -> String {
        match self.experiment {
            1 => "Experiment 1: clean training, noisy test".to_string(),
            _ => "Experiment 2: 90/10 clean/noisy training, noisy test".to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if !matches!(self.experiment, 1 | 2) {
            return bad(format!("experiment must be 1 or 2, got {}", self.experiment));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|s| !PAPER_SIZES.contains(s)) {
            return bad(format!("sizes must be a non-empty subset of {PAPER_SIZES:?}, got {:?}", self.sizes));
        }
        if self.models.is_empty() {
            return bad("no models".into());
        }
        let mut models = self.models.clone();
        models.sort();
        models.dedup();
        if models.len() != self.models.len() {
            return bad(format!("duplicate models in {:?}", self.models));
        }
        if self.iterations == 0 || self.test_size == 0 {
            return bad("iterations and test_size must be positive".into());
        }
        if self.training.epochs == 0 || self.training.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.pipeline.sigma > 0.0 && self.pipeline.window > 0.0 && self.pipeline.resolution > 0) {
            return bad("pipeline sigma, window and resolution must be positive".into());
        }
        Ok(())
    }

    fn split_spec(&self, train_size: usize, iteration: u32) -> SplitSpec {
        SplitSpec { train_size, test_size: self.test_size, mix_ratio: self.mix_ratio(), iteration, seed: self.seed }
    }

    fn run_keys(model: Variant, train_size: usize, iteration: u32) -> [u64; 3] {
        let m = Variant::ALL.iter().position(|&v| v == model).unwrap_or(0);
        [m as u64, train_size as u64, u64::from(iteration)]
    }

    /// Seed of the initial parameters of one run.
    pub fn init_seed(&self, model: Variant, train_size: usize, iteration: u32) -> u64 {
        rng::derive_seed(self.seed, "init", &Self::run_keys(model, train_size, iteration))
    }

    /// Seed of the mini-batch order of one run.
    pub fn train_seed(&self, model: Variant, train_size: usize, iteration: u32) -> u64 {
        rng::derive_seed(self.seed, "train", &Self::run_keys(model, train_size, iteration))
    }
}

/// Outcome of training one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: Variant,
    pub train_size: usize,
    pub iteration: u32,
    pub epoch_accuracies: Vec<f64>,
    /// Equal to the last epoch accuracy.
    pub final_accuracy: f64,
    pub test_size: usize,
    pub noisy_train: usize,
}

impl RunRecord {
    pub fn new(model: Variant, train_size: usize, iteration: u32, epoch_accuracies: Vec<f64>, test_size: usize, noisy_train: usize) -> Self {
        let final_accuracy = epoch_accuracies.last().copied().unwrap_or(0.0);
        Self { model, train_size, iteration, epoch_accuracies, final_accuracy, test_size, noisy_train }
    }

    pub fn file_name(model: Variant, train_size: usize, iteration: u32) -> String {
        format!("{model}-{train_size}-{iteration}.json")
    }
}

type CacheKey = (usize, Option<NoiseKind>);

/// Persistence diagrams per (pool image, noise application), kept in memory
/// and optionally mirrored to `.npy` files.
///
/// Diagrams rather than rendered stacks are cached because rendering depends
/// on the training-set statistics of each split.
pub struct DiagramCache {
    dir: Option<PathBuf>,
    tag: u64,
    pipeline: PipelineConfig,
    memory: Mutex<HashMap<CacheKey, Arc<ImageDiagrams>>>,
}

impl DiagramCache {
    pub fn new(dir: Option<PathBuf>, pipeline: &PipelineConfig, noise: &NoiseConfig) -> io::Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        // the diagrams depend on the binarization threshold and the noise only
        let tag = rng::derive_seed(
            noise.seed,
            "diagram-cache-v1",
            &[pipeline.threshold.to_bits(), noise.gaussian_sigma.to_bits(), noise.sp_fraction.to_bits()],
        );
        Ok(Self { dir, tag, pipeline: *pipeline, memory: Mutex::new(HashMap::new()) })
    }

    fn path(&self, sample: &Sample) -> Option<PathBuf> {
        let kind = sample.noise.map_or("clean", NoiseKind::name);
        let content = rng::derive_seed(0, "image", &sample.image.pixels().iter().map(|p| u64::from(p.to_bits())).collect::<Vec<_>>());
        self.dir.as_ref().map(|d| d.join(format!("{:016x}-{}-{kind}-{content:016x}.npy", self.tag, sample.id)))
    }

    pub fn get(&self, sample: &Sample) -> Result<Arc<ImageDiagrams>, ExperimentError> {
        let key = (sample.id, sample.noise);
        if let Some(d) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(d));
        }
        let path = self.path(sample);
        let diagrams = match path.as_ref().filter(|p| p.exists()) {
            Some(p) => {
                let (_, rows) = npy::read::<f64>(p)?;
                ImageDiagrams::from_rows(&rows)
            }
            None => {
                let d = vectorize::image_diagrams(&sample.image, &self.pipeline);
                if let Some(p) = &path {
                    let rows = d.to_rows();
                    let tmp = p.with_extension("npy.partial");
                    npy::write(&tmp, &[rows.len() / 4, 4], &rows)?;
                    fs::rename(&tmp, p)?;
                }
                d
            }
        };
        let d = Arc::new(diagrams);
        self.memory.lock().expect("cache lock").insert(key, Arc::clone(&d));
        Ok(d)
    }

    /// Fill the cache for `samples` in parallel.
    pub fn prefetch<'a>(&self, samples: impl IntoIterator<Item = &'a Sample>) -> Result<(), ExperimentError> {
        let mut unique: BTreeMap<CacheKey, &Sample> = BTreeMap::new();
        for s in samples {
            unique.entry((s.id, s.noise)).or_insert(s);
        }
        unique.into_values().collect::<Vec<_>>().par_iter().try_for_each(|s| self.get(s).map(drop))
    }
}

/// Training and test sets of one variant, plus the statistics used to
/// render persistence images (absent for the raw variant).
pub struct PreparedData {
    pub train: LabeledInput,
    pub test: LabeledInput,
    pub stats: Option<TrainingStats>,
}

fn labeled(variant: Variant, samples: &[Sample], diagrams: Option<(&[Arc<ImageDiagrams>], &TrainingStats, &PipelineConfig)>) -> Result<LabeledInput, ExperimentError> {
    let mut set = LabeledInput::empty(variant.channels(), dataset::SIDE);
    for (i, s) in samples.iter().enumerate() {
        let stack = match diagrams {
            Some((ds, stats, cfg)) => Some(vectorize::render_stack(&ds[i], stats, cfg)?),
            None => None,
        };
        let input = vectorize::model_input(variant, &s.image, stack.as_ref())?;
        set.push(&input, usize::from(s.label()))?;
    }
    Ok(set)
}

/// Featurize a split for `variant`. Persistence-image normalization comes
/// from the training half only.
pub fn prepare(variant: Variant, split: &Split, cache: &DiagramCache) -> Result<PreparedData, ExperimentError> {
    if variant == Variant::Raw {
        return Ok(PreparedData { train: labeled(variant, &split.train, None)?, test: labeled(variant, &split.test, None)?, stats: None });
    }
    cache.prefetch(split.train.iter().chain(&split.test))?;
    let fetch = |ss: &[Sample]| ss.iter().map(|s| cache.get(s)).collect::<Result<Vec<_>, _>>();
    let (train_d, test_d) = (fetch(&split.train)?, fetch(&split.test)?);
    let stats = TrainingStats::from_diagrams(train_d.iter().map(|d| &**d));
    let cfg = &cache.pipeline;
    Ok(PreparedData {
        train: labeled(variant, &split.train, Some((&train_d, &stats, cfg)))?,
        test: labeled(variant, &split.test, Some((&test_d, &stats, cfg)))?,
        stats: Some(stats),
    })
}

/// A finished run with its trained network.
pub struct RunOutput {
    pub record: RunRecord,
    pub model: Model<f32>,
    pub stats: Option<TrainingStats>,
}

/// Train one model on one split; a pure function of the config, the pool and
/// `(model, train_size, iteration)`.
pub fn run_single(config: &ExperimentConfig, pool: &[GrayImage], cache: &DiagramCache, variant: Variant, train_size: usize, iteration: u32) -> Result<RunOutput, ExperimentError> {
    let split = dataset::draw_split(pool, &config.split_spec(train_size, iteration), &config.noise)?;
    let data = prepare(variant, &split, cache)?;
    let mut model = nn::build_model(variant, config.init_seed(variant, train_size, iteration));
    let training = TrainConfig { seed: config.train_seed(variant, train_size, iteration), ..config.training.clone() };
    let log = nn::train(&mut model, &data.train, Some(&data.test), &training)?;
    let noisy = split.train.iter().filter(|s| s.noise.is_some()).count();
    let record = RunRecord::new(variant, train_size, iteration, log.epoch_accuracies, split.test.len(), noisy);
    Ok(RunOutput { record, model, stats: data.stats })
}

/// Persistence-image stacks of `images` with training statistics taken from
/// the same images, computed on `threads` workers.
pub fn featurize(images: &[GrayImage], pipeline: &PipelineConfig, threads: Option<usize>) -> Result<(TrainingStats, Vec<PIStack>), ExperimentError> {
    let workers = thread_pool(threads)?;
    workers.install(|| {
        let diagrams: Vec<ImageDiagrams> = images.par_iter().map(|img| vectorize::image_diagrams(img, pipeline)).collect();
        let stats = TrainingStats::from_diagrams(&diagrams);
        let stacks = diagrams.par_iter().map(|d| vectorize::render_stack(d, &stats, pipeline)).collect::<Result<Vec<_>, _>>()?;
        Ok((stats, stacks))
    })
}

/// How [`run_experiment`] executes.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per logical core.
    pub threads: Option<usize>,
    /// Print one line per finished record to standard error.
    pub progress: bool,
}

/// Build a bounded worker pool.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

/// Check or record the config a results directory belongs to.
fn claim_directory(config: &ExperimentConfig, out: &Path) -> Result<(), ExperimentError> {
    let path = out.join("config.json");
    let ours = serde_json::to_value(config)?;
    if path.exists() {
        let theirs: serde_json::Value = serde_json::from_slice(&fs::read(&path)?)?;
        if theirs != ours {
            return Err(ExperimentError::ConfigMismatch(out.to_path_buf()));
        }
        return Ok(());
    }
    let mut text = serde_json::to_string_pretty(&ours)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(())
}

/// Read the records of a results directory that belong to `config`, sorted by
/// model, size and iteration.
pub fn load_records(out: &Path, config: &ExperimentConfig) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut records = Vec::new();
    for model in &config.models {
        for &size in &config.sizes {
            for it in 0..config.iterations {
                let path = out.join("records").join(RunRecord::file_name(*model, size, it));
                if path.exists() {
                    records.push(serde_json::from_slice(&fs::read(&path)?)?);
                }
            }
        }
    }
    Ok(records)
}

/// Run every missing (model, size, iteration) record of `config` into `out`,
/// then regenerate the CSV tables and plots. Returns all records.
pub fn run_experiment(config: &ExperimentConfig, pool: &[GrayImage], out: &Path, options: &RunOptions) -> Result<Vec<RunRecord>, ExperimentError> {
    config.validate()?;
    let records_dir = out.join("records");
    fs::create_dir_all(&records_dir)?;
    claim_directory(config, out)?;

    let mut jobs = Vec::new();
    for &size in &config.sizes {
        for it in 0..config.iterations {
            for &model in &config.models {
                if !records_dir.join(RunRecord::file_name(model, size, it)).exists() {
                    jobs.push((model, size, it));
                }
            }
        }
    }
    let cache = DiagramCache::new(Some(out.join("cache")), &config.pipeline, &config.noise)?;
    let workers = thread_pool(options.threads)?;
    let done = AtomicUsize::new(0);
    workers.install(|| -> Result<(), ExperimentError> {
        // featurize every image any pending topological run needs, in parallel
        let mut splits = Vec::new();
        for &(model, size, it) in &jobs {
            if model != Variant::Raw {
                splits.push(dataset::draw_split(pool, &config.split_spec(size, it), &config.noise)?);
            }
        }
        cache.prefetch(splits.iter().flat_map(|s| s.train.iter().chain(&s.test)))?;
        drop(splits);
        jobs.par_iter().try_for_each(|&(model, size, it)| {
            let run = run_single(config, pool, &cache, model, size, it)?;
            let mut text = serde_json::to_string_pretty(&run.record)?;
            text.push('\n');
            write_atomic(&records_dir.join(RunRecord::file_name(model, size, it)), text.as_bytes())?;
            let n = done.fetch_add(1, Ordering::SeqCst) + 1;
            if options.progress {
                eprintln!("[{n}/{}] {model} size {size} iteration {it}: accuracy {:.3}", jobs.len(), run.record.final_accuracy);
            }
            Ok(())
        })
    })?;
    let records = load_records(out, config)?;
    write_report(out, &records, config.iterations as usize, &config.title())?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"experiment": 2, "models": ["raw", "vs"]}"#).unwrap();
        assert_eq!(c.sizes, vec![100, 250, 500, 1000]);
        assert_eq!(c.models, vec![Variant::Raw, Variant::Stitched]);
        assert_eq!((c.iterations, c.test_size, c.mix_ratio()), (10, 100, 0.1));
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::paper(1).mix_ratio(), 0.0);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"experiment": 1, "bogus": 3}"#).is_err());
        for bad in [r#"{"experiment": 3}"#, r#"{"experiment": 1, "sizes": [100, 7]}"#, r#"{"experiment": 1, "models": ["raw", "raw"]}"#] {
            let c: ExperimentConfig = serde_json::from_str(bad).unwrap();
            assert!(matches!(c.validate(), Err(ExperimentError::InvalidConfig(_))), "{bad}");
        }
    }

    #[test]
    fn run_seeds_are_distinct() {
        let c = ExperimentConfig::paper(1);
        let mut seeds = std::collections::HashSet::new();
        for m in Variant::ALL {
            for s in PAPER_SIZES {
                for it in 0..10 {
                    assert!(seeds.insert(c.init_seed(m, s, it)));
                    assert!(seeds.insert(c.train_seed(m, s, it)));
                }
            }
        }
    }

    #[test]
    fn record_final_accuracy() {
        let r = RunRecord::new(Variant::Tda, 100, 3, vec![0.2, 0.5, 0.4], 100, 0);
        assert_eq!(r.final_accuracy, 0.4);
        assert_eq!(RunRecord::file_name(Variant::Stitched, 250, 7), "stitched-250-7.json");
    }
}
