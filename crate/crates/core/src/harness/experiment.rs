use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::checkpoint::{
    load_checkpoint, load_classifier, read_file, save_checkpoint, save_classifier, write_atomic,
};
use super::grid::{enumerate_grid, GridSpec};
use super::manifest::{EntryStatus, RunManifest};
use crate::data::{
    build_symbol_datasets, load_mnist, read_idx_set, read_stroke_jsonl, synth, write_idx_set,
    LabeledImageSet, MnistPaths, RasterConfig, MIN_CLASS_COUNT,
};
use crate::error::{Error, Result};
use crate::generation::{iterate, seed_images, GenerationConfig};
use crate::metrics::{
    delta, digit_vs_symbol_set, objectness_of, symbol_as_digit_rate, train_classifier, Classifier,
    ClassifierHead, ClassifierHyper, ClassifierReport, EvalRecord, RecordStatus, ReconstructionOracle,
    DEFAULT_THETA,
};
use crate::nn::train::{seeded, STREAM_GENERATE};
use crate::nn::{train_autoencoder, Autoencoder, ModelConfig, TrainingHyper};

/// Where the control-set strokes come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolSource {
    /// JSON-lines stroke records.
    Jsonl { path: PathBuf },
    /// The built-in procedural corpus, `per_class` records per class.
    Synthetic { per_class: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub mnist_dir: PathBuf,
    pub symbols: SymbolSource,
    #[serde(default)]
    pub raster: RasterConfig,
    #[serde(default = "default_min_count")]
    pub symbol_min_count: usize,
    /// Symbol records cut off for training the discriminator.
    pub symbol_train: usize,
    #[serde(default)]
    pub split_seed: u64,
    /// MNIST training images used to train each autoencoder.
    pub train_digits: usize,
    /// Size of the digit test set the rates are measured on.
    pub eval_digits: usize,
    /// Size of the symbol test set the rates are measured on.
    pub eval_symbols: usize,
    /// MNIST training images used for the two classifiers.
    pub classifier_digits: usize,
}

fn default_min_count() -> usize {
    MIN_CLASS_COUNT
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_objectness_samples() -> usize {
    1000
}

/// Contents of `experiment.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    /// Keep only the first `limit` configs of the enumerated grid.
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub training: TrainingHyper,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default = "default_objectness_samples")]
    pub objectness_samples: usize,
    #[serde(default)]
    pub classifier: ClassifierHyper,
    pub data: DataSpec,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_file(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn configs(&self) -> Result<Vec<ModelConfig>> {
        let mut all = enumerate_grid(&self.grid)?;
        if let Some(n) = self.limit {
            all.truncate(n);
        }
        Ok(all)
    }
}

/// Every image set an experiment touches.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub digits_train: LabeledImageSet,
    pub digits_test: LabeledImageSet,
    pub symbols_train: LabeledImageSet,
    pub symbols_test: LabeledImageSet,
    pub classifier_digits: LabeledImageSet,
    pub symbol_classes: Vec<String>,
}

fn quantize(mut set: LabeledImageSet) -> LabeledImageSet {
    for img in &mut set.images {
        for v in img.data_mut() {
            *v = (*v * 255.0).round() / 255.0;
        }
    }
    set
}

fn take_checked(set: &LabeledImageSet, n: usize, what: &str) -> Result<LabeledImageSet> {
    if set.len() < n {
        return Err(Error::Dataset(format!("{what}: asked for {n} items, {} has {}", set.name, set.len())));
    }
    Ok(set.take(n))
}

/// Cached symbol split inside `dir`, if all files are present.
fn read_symbol_cache(dir: &Path) -> Result<Option<(LabeledImageSet, LabeledImageSet, Vec<String>)>> {
    let files = symbol_cache_files(dir);
    if !files.iter().all(|f| f.is_file()) {
        return Ok(None);
    }
    let classes: Vec<String> = serde_json::from_slice(&read_file(&files[4])?)?;
    let train = read_idx_set(&files[0], &files[1], "symbols-train")?.with_class_names(classes.clone());
    let test = read_idx_set(&files[2], &files[3], "symbols-test")?.with_class_names(classes.clone());
    Ok(Some((train, test, classes)))
}

fn symbol_cache_files(dir: &Path) -> [PathBuf; 5] {
    [
        dir.join("symbols-train-images-idx3-ubyte"),
        dir.join("symbols-train-labels-idx1-ubyte"),
        dir.join("symbols-test-images-idx3-ubyte"),
        dir.join("symbols-test-labels-idx1-ubyte"),
        dir.join("symbol-classes.json"),
    ]
}

/// Builds (or reads from `cache_dir`) the rasterized symbol split. Pixels
/// are quantized to bytes either way, so cached and fresh runs agree.
pub fn prepare_symbols(
    spec: &DataSpec,
    cache_dir: Option<&Path>,
) -> Result<(LabeledImageSet, LabeledImageSet, Vec<String>)> {
    if let Some(dir) = cache_dir {
        if let Some(cached) = read_symbol_cache(dir)? {
            return Ok(cached);
        }
    }
    let records = match &spec.symbols {
        SymbolSource::Jsonl { path } => {
            let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_stroke_jsonl(std::io::BufReader::new(f))?
        }
        SymbolSource::Synthetic { per_class, seed } => synth::uniform_corpus(*per_class, *seed),
    };
    let split = build_symbol_datasets(
        &records,
        spec.symbol_min_count,
        spec.symbol_train,
        spec.split_seed,
        &spec.raster,
    )?;
    let (train, test) = (quantize(split.train), quantize(split.test));
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let f = symbol_cache_files(dir);
        write_idx_set(&train, &f[0], &f[1])?;
        write_idx_set(&test, &f[2], &f[3])?;
        write_atomic(&f[4], &serde_json::to_vec_pretty(&split.classes)?)?;
    }
    Ok((train, test, split.classes))
}

impl Datasets {
    pub fn load(spec: &DataSpec, cache_dir: Option<&Path>) -> Result<Self> {
        let (mnist_train, mnist_test) = load_mnist(&MnistPaths::in_dir(&spec.mnist_dir))?;
        let (symbols_train, symbols_test, symbol_classes) = prepare_symbols(spec, cache_dir)?;
        Ok(Datasets {
            digits_train: take_checked(&mnist_train, spec.train_digits, "autoencoder training digits")?,
            digits_test: take_checked(&mnist_test, spec.eval_digits, "evaluation digits")?,
            symbols_test: take_checked(&symbols_test, spec.eval_symbols, "evaluation symbols")?,
            symbols_train,
            classifier_digits: take_checked(&mnist_train, spec.classifier_digits, "classifier digits")?,
            symbol_classes,
        })
    }
}

/// The digit-vs-symbol discriminator and the 10-way digit classifier.
#[derive(Clone, Debug)]
pub struct Classifiers {
    pub discriminator: Classifier,
    pub digit: Classifier,
    pub reports: Vec<ClassifierReport>,
}

impl Classifiers {
    pub fn train(data: &Datasets, hyper: &ClassifierHyper) -> Result<Self> {
        let train = digit_vs_symbol_set(
            "discriminator-train",
            &data.classifier_digits.images,
            &data.symbols_train.images,
        );
        let test = digit_vs_symbol_set("discriminator-test", &data.digits_test.images, &data.symbols_test.images);
        let (discriminator, r1) = train_classifier(ClassifierHead::DigitVsSymbol, &train, &test, hyper, |e, l| {
            log::info!("discriminator epoch {e}: loss {l:.4}")
        })?;
        let (digit, r2) = train_classifier(ClassifierHead::Digit, &data.classifier_digits, &data.digits_test, hyper, |e, l| {
            log::info!("digit classifier epoch {e}: loss {l:.4}")
        })?;
        Ok(Classifiers {
            discriminator,
            digit,
            reports: vec![r1, r2],
        })
    }

    fn files(dir: &Path) -> [PathBuf; 3] {
        [
            dir.join("digit_vs_symbol.spcl"),
            dir.join("digit.spcl"),
            dir.join("reports.json"),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let [a, b, r] = Self::files(dir);
        write_atomic(&a, &save_classifier(&self.discriminator)?)?;
        write_atomic(&b, &save_classifier(&self.digit)?)?;
        write_atomic(&r, &serde_json::to_vec_pretty(&self.reports)?)
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let [a, b, r] = Self::files(dir);
        if !(a.is_file() && b.is_file() && r.is_file()) {
            return Ok(None);
        }
        Ok(Some(Classifiers {
            discriminator: load_classifier(&read_file(&a)?)?,
            digit: load_classifier(&read_file(&b)?)?,
            reports: serde_json::from_slice(&read_file(&r)?)?,
        }))
    }
}

/// Evaluation settings shared by every model of a run.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext<'a> {
    pub theta: f64,
    pub generation: GenerationConfig,
    pub objectness_samples: usize,
    pub classifiers: &'a Classifiers,
}

/// Measures a trained model against the digit and symbol test sets.
pub fn evaluate_model(
    model: &Autoencoder<f32>,
    history: Vec<f64>,
    data: &Datasets,
    ctx: &EvalContext<'_>,
) -> Result<EvalRecord> {
    let oracle = ReconstructionOracle::new(model, ctx.theta)?;
    let digits = oracle.irr(&data.digits_test.images)?;
    let symbols = oracle.orr(&data.symbols_test.images)?;
    let (irr, orr) = (digits.rate(), symbols.rate());
    let sad = symbol_as_digit_rate(&oracle, &data.symbols_test.images, &symbols, &ctx.classifiers.discriminator)?;
    let objectness = if ctx.objectness_samples >= 2 {
        let mut rng = seeded(model.config.seed, STREAM_GENERATE);
        let seeds = seed_images(ctx.objectness_samples, &mut rng)?;
        let run = iterate(model, &seeds, &ctx.generation)?;
        let finals: Vec<_> = run
            .finals()
            .into_iter()
            .zip(&run.final_residuals)
            .filter_map(|(x, r)| r.map(|_| x))
            .collect();
        if finals.len() >= 2 {
            Some(objectness_of(&finals, &ctx.classifiers.digit)?)
        } else {
            None
        }
    } else {
        None
    };
    Ok(EvalRecord {
        model_id: model.config.model_id(),
        config: model.config.clone(),
        status: RecordStatus::Done,
        theta: ctx.theta,
        irr: Some(irr),
        orr: Some(orr),
        delta: Some(delta(irr, orr)?),
        objectness,
        symbol_as_digit_rate: sad,
        final_train_loss: history.last().copied(),
        digits_evaluated: digits.len(),
        symbols_evaluated: symbols.len(),
        train_history: history,
        error: None,
    })
}

/// A trained model (absent if training diverged) and its record.
pub struct ExperimentOutcome {
    pub model: Option<Autoencoder<f32>>,
    pub record: EvalRecord,
}

/// Trains one config on the digit training set and evaluates it.
/// Divergence yields a failed record rather than an error.
pub fn run_experiment(
    config: &ModelConfig,
    data: &Datasets,
    hyper: &TrainingHyper,
    ctx: &EvalContext<'_>,
) -> Result<ExperimentOutcome> {
    let id = config.model_id();
    let trained = train_autoencoder(config.clone(), &data.digits_train.images, hyper, |s| {
        log::debug!("{id} epoch {}: loss {:.6}", s.epoch, s.mean_loss)
    });
    match trained {
        Ok(out) => {
            let record = evaluate_model(&out.model, out.history, data, ctx)?;
            Ok(ExperimentOutcome {
                model: Some(out.model),
                record,
            })
        }
        Err(Error::NonFinite(msg)) => {
            log::warn!("{id}: training diverged: {msg}");
            Ok(ExperimentOutcome {
                model: None,
                record: EvalRecord::failed(config.clone(), ctx.theta, Vec::new(), msg),
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Process at most this many pending configs, then return.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    /// Records of every finished config of the run, in grid order.
    pub records: Vec<EvalRecord>,
    pub trained: usize,
    pub skipped: usize,
}

/// A run directory:
///
/// ```text
/// experiment.json        the ExperimentConfig
/// manifest.json          per-config status
/// checkpoints/<id>.spae  model parameters
/// records/<id>.json      EvalRecords
/// classifiers/           discriminator, digit classifier, their reports
/// data/                  cached rasterized symbol split (IDX)
/// ```
pub struct Runner {
    dir: PathBuf,
    pub config: ExperimentConfig,
}

impl Runner {
    /// Opens `dir`, creating it with `config` when it has no experiment yet.
    /// An existing run must have been created with an identical config.
    pub fn create(dir: impl Into<PathBuf>, config: ExperimentConfig) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("experiment.json");
        if path.is_file() {
            let existing = ExperimentConfig::from_json_file(&path)?;
            if existing != config {
                return Err(Error::Config(format!(
                    "{} was created with a different experiment config",
                    dir.display()
                )));
            }
        } else {
            write_atomic(&path, &serde_json::to_vec_pretty(&config)?)?;
        }
        Ok(Runner { dir, config })
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let config = ExperimentConfig::from_json_file(&dir.join("experiment.json"))?;
        Ok(Runner { dir, config })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    pub fn checkpoint_rel(model_id: &str) -> String {
        format!("checkpoints/{model_id}.spae")
    }

    pub fn record_rel(model_id: &str) -> String {
        format!("records/{model_id}.json")
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        let p = self.manifest_path();
        if p.is_file() {
            RunManifest::load(&p)
        } else {
            Ok(RunManifest::new(&self.config.configs()?))
        }
    }

    pub fn datasets(&self) -> Result<Datasets> {
        Datasets::load(&self.config.data, Some(&self.dir.join("data")))
    }

    /// Loads the run's classifiers, training and saving them on first use.
    pub fn classifiers(&self, data: &Datasets) -> Result<Classifiers> {
        let dir = self.dir.join("classifiers");
        if let Some(c) = Classifiers::load(&dir)? {
            return Ok(c);
        }
        log::info!("training classifiers");
        let c = Classifiers::train(data, &self.config.classifier)?;
        for r in &c.reports {
            log::info!("{} classifier test error {:.4}", r.head.name(), r.test_error);
        }
        c.save(&dir)?;
        Ok(c)
    }

    pub fn load_model(&self, model_id: &str) -> Result<Autoencoder<f32>> {
        load_checkpoint(&read_file(&self.dir.join(Self::checkpoint_rel(model_id)))?)
    }

    pub fn load_record(&self, model_id: &str) -> Result<EvalRecord> {
        Ok(serde_json::from_slice(&read_file(&self.dir.join(Self::record_rel(model_id)))?)?)
    }

    /// Records of every done or failed entry, in manifest order.
    pub fn records(&self) -> Result<Vec<EvalRecord>> {
        let m = self.manifest()?;
        m.entries
            .iter()
            .filter(|e| matches!(e.status, EntryStatus::Done | EntryStatus::Failed))
            .map(|e| self.load_record(&e.model_id))
            .collect()
    }

    fn eval_context<'a>(&self, classifiers: &'a Classifiers, theta: f64) -> EvalContext<'a> {
        EvalContext {
            theta,
            generation: self.config.generation,
            objectness_samples: self.config.objectness_samples,
            classifiers,
        }
    }

    /// Trains and evaluates every pending config, skipping finished ones.
    pub fn run(&self, data: &Datasets, classifiers: &Classifiers, opts: RunOptions) -> Result<RunSummary> {
        let configs = self.config.configs()?;
        let mut manifest = self.manifest()?;
        manifest.reconcile(&configs, &self.dir);
        manifest.save(&self.manifest_path())?;
        let wanted: Vec<String> = configs.iter().map(ModelConfig::model_id).collect();
        let mut pending: VecDeque<ModelConfig> = configs
            .iter()
            .filter(|c| manifest.entry(&c.model_id()).is_some_and(|e| e.status == EntryStatus::Pending))
            .cloned()
            .collect();
        let skipped = configs.len() - pending.len();
        if let Some(n) = opts.stop_after {
            pending.truncate(n);
        }
        let trained = pending.len();
        let workers = if opts.workers == 0 {
            thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            opts.workers
        }
        .clamp(1, trained.max(1));
        log::info!(
            "{}: {trained} configs to train on {workers} workers, {skipped} already finished",
            self.dir.display()
        );

        let queue = Mutex::new(pending);
        let manifest = Mutex::new(manifest);
        let ctx = self.eval_context(classifiers, self.config.theta);
        let hyper = &self.config.training;
        let worker = || -> Result<()> {
            loop {
                let Some(cfg) = queue.lock().expect("queue lock").pop_front() else {
                    return Ok(());
                };
                let id = cfg.model_id();
                self.update(&manifest, &id, |e| e.status = EntryStatus::Training)?;
                log::info!("{id}: training");
                let out = run_experiment(&cfg, data, hyper, &ctx)?;
                let ckpt = match &out.model {
                    Some(m) => {
                        let rel = Self::checkpoint_rel(&id);
                        write_atomic(&self.dir.join(&rel), &save_checkpoint(m)?)?;
                        Some(rel)
                    }
                    None => None,
                };
                let rec_rel = Self::record_rel(&id);
                write_atomic(&self.dir.join(&rec_rel), &serde_json::to_vec_pretty(&out.record)?)?;
                log::info!(
                    "{id}: irr {:?} orr {:?} delta {:?}",
                    out.record.irr,
                    out.record.orr,
                    out.record.delta
                );
                self.update(&manifest, &id, |e| {
                    e.status = if out.record.is_done() {
                        EntryStatus::Done
                    } else {
                        EntryStatus::Failed
                    };
                    e.checkpoint = ckpt.clone();
                    e.record = Some(rec_rel.clone());
                    e.error = out.record.error.clone();
                })?;
            }
        };
        let results: Vec<Result<()>> = if workers == 1 {
            vec![worker()]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = (0..workers).map(|_| s.spawn(worker)).collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        results.into_iter().collect::<Result<()>>()?;

        let manifest = manifest.into_inner().expect("manifest lock");
        let records = wanted
            .iter()
            .filter(|id| {
                manifest
                    .entry(id)
                    .is_some_and(|e| matches!(e.status, EntryStatus::Done | EntryStatus::Failed))
            })
            .map(|id| self.load_record(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunSummary {
            records,
            trained,
            skipped,
        })
    }

    fn update(
        &self,
        manifest: &Mutex<RunManifest>,
        id: &str,
        f: impl FnOnce(&mut super::manifest::ManifestEntry),
    ) -> Result<()> {
        let mut m = manifest.lock().expect("manifest lock");
        let e = m
            .entry_mut(id)
            .ok_or_else(|| Error::Config(format!("{id} missing from manifest")))?;
        f(e);
        m.save(&self.manifest_path())
    }

    /// Recomputes the record of every done entry from its checkpoint at
    /// `theta` and rewrites it.
    pub fn reevaluate(&self, data: &Datasets, classifiers: &Classifiers, theta: f64) -> Result<Vec<EvalRecord>> {
        let ctx = self.eval_context(classifiers, theta);
        let manifest = self.manifest()?;
        let mut out = Vec::new();
        for e in manifest.entries.iter().filter(|e| e.status == EntryStatus::Done) {
            let model = self.load_model(&e.model_id)?;
            let history = self.load_record(&e.model_id).map(|r| r.train_history).unwrap_or_default();
            let rec = evaluate_model(&model, history, data, &ctx)?;
            write_atomic(
                &self.dir.join(Self::record_rel(&e.model_id)),
                &serde_json::to_vec_pretty(&rec)?,
            )?;
            out.push(rec);
        }
        Ok(out)
    }
}
