use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spurious_core::data::{
    build_symbol_datasets, class_counts, convert_hwrt_csv, read_stroke_jsonl, synth, write_idx_set,
    write_stroke_jsonl, RasterConfig, MIN_CLASS_COUNT,
};
use spurious_core::generation::{iterate, median, seeded_images, GenerationConfig};
use spurious_core::harness::{DataSpec, ExperimentConfig, GridSpec, RunOptions, Runner, SymbolSource};
use spurious_core::metrics::DEFAULT_THETA;
use spurious_core::nn::{gradcheck_suite, TrainingHyper};
use spurious_core::report::{
    generation_panel, rank_by_delta, write_run_report, PanelKind, PanelSpec, ReportOptions,
};

#[derive(Parser)]
#[command(name = "spurious", version, about = "Train and audit sparse autoencoder grids as reconstruction oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert, generate or rasterize stroke corpora.
    Ingest {
        #[command(subcommand)]
        action: Ingest,
    },
    /// Train and evaluate every pending model of a run, resuming where it stopped.
    Train(TrainArgs),
    /// Re-evaluate finished models at a new threshold, overwriting their records.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
    },
    /// Iterate a trained model from random seeds and draw the trajectories.
    Generate {
        #[arg(long)]
        run: PathBuf,
        /// Model id; defaults to the model with the largest Δ.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
    },
    /// Write scatter data and panels for a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 3)]
        top: usize,
        #[arg(long, default_value_t = 8)]
        per_row: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Show per-status model counts of a run.
    Status {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Subcommand)]
enum Ingest {
    /// Convert an HWRT-style CSV export to stroke JSON lines.
    Hwrt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the built-in procedural symbol corpus as stroke JSON lines.
    Synth {
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Filter, split and rasterize stroke records into IDX files.
    Rasterize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = MIN_CLASS_COUNT)]
        min_count: usize,
        #[arg(long)]
        train_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GridChoice {
    Full,
    Sample,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    run: PathBuf,
    /// Experiment JSON; required unless the run exists or --grid is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the published grid, whole or subsampled, instead of a config file.
    #[arg(long, value_enum, conflicts_with = "config")]
    grid: Option<GridChoice>,
    /// Keep only the first N configs.
    #[arg(long)]
    limit: Option<usize>,
    /// Master seed for grid subsampling and per-model seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// MNIST directory used with --grid.
    #[arg(long, default_value = "data/mnist")]
    mnist: PathBuf,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Train at most N models in this invocation.
    #[arg(long)]
    stop_after: Option<usize>,
}

fn published_experiment(args: &TrainArgs, grid: GridChoice) -> ExperimentConfig {
    let seed = args.seed.unwrap_or(0);
    let grid = match grid {
        GridChoice::Full => GridSpec {
            master_seed: seed,
            ..GridSpec::paper()
        },
        GridChoice::Sample => GridSpec::paper_sample(seed),
    };
    ExperimentConfig {
        grid,
        limit: args.limit,
        training: TrainingHyper::default(),
        theta: args.theta,
        generation: GenerationConfig::default(),
        objectness_samples: 1000,
        classifier: Default::default(),
        data: DataSpec {
            mnist_dir: args.mnist.clone(),
            symbols: SymbolSource::Synthetic {
                per_class: 300,
                seed: 0,
            },
            raster: RasterConfig::default(),
            symbol_min_count: MIN_CLASS_COUNT,
            symbol_train: 5000,
            split_seed: 0,
            train_digits: 60_000,
            eval_digits: 10_000,
            eval_symbols: 10_000,
            classifier_digits: 60_000,
        },
    }
}

fn open_or_create(args: &TrainArgs) -> Result<Runner> {
    let config = match (&args.config, args.grid) {
        (Some(path), _) => {
            let mut c = ExperimentConfig::from_json_file(path)?;
            if args.limit.is_some() {
                c.limit = args.limit;
            }
            if let Some(s) = args.seed {
                c.grid.master_seed = s;
            }
            Some(c)
        }
        (None, Some(g)) => Some(published_experiment(args, g)),
        (None, None) => None,
    };
    match config {
        Some(c) => Ok(Runner::create(&args.run, c)?),
        None if args.run.join("experiment.json").is_file() => Ok(Runner::open(&args.run)?),
        None => bail!("{} has no experiment yet; pass --config or --grid", args.run.display()),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let runner = open_or_create(&args)?;
    let data = runner.datasets()?;
    let classifiers = runner.classifiers(&data)?;
    for r in &classifiers.reports {
        println!(
            "classifier {}: test error {:.4} (majority baseline {:.4})",
            r.head.name(),
            r.test_error,
            r.majority_error
        );
    }
    let summary = runner.run(
        &data,
        &classifiers,
        RunOptions {
            workers: args.workers,
            stop_after: args.stop_after,
        },
    )?;
    println!(
        "trained {}, skipped {}, {} records",
        summary.trained,
        summary.skipped,
        summary.records.len()
    );
    print_table(&summary.records);
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_table(records: &[spurious_core::metrics::EvalRecord]) {
    println!("{:<36} {:>7} {:>7} {:>7} {:>7}", "model", "irr", "orr", "delta", "object");
    for r in records {
        println!(
            "{:<36} {:>7} {:>7} {:>7} {:>7}",
            r.model_id,
            fmt(r.irr),
            fmt(r.orr),
            fmt(r.delta),
            fmt(r.objectness)
        );
    }
}

fn ingest(action: Ingest) -> Result<()> {
    match action {
        Ingest::Hwrt { input, output } => {
            let f = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let records = convert_hwrt_csv(BufReader::new(f))?;
            write_jsonl(&records, &output)?;
            println!("{} records, {} classes", records.len(), class_counts(&records).len());
        }
        Ingest::Synth {
            per_class,
            seed,
            output,
        } => {
            let records = synth::uniform_corpus(per_class, seed);
            write_jsonl(&records, &output)?;
            println!("{} records, {} classes", records.len(), class_counts(&records).len());
        }
        Ingest::Rasterize {
            input,
            out_dir,
            min_count,
            train_count,
            seed,
        } => {
            let f = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let records = read_stroke_jsonl(BufReader::new(f))?;
            let split = build_symbol_datasets(&records, min_count, train_count, seed, &RasterConfig::default())?;
            fs::create_dir_all(&out_dir)?;
            write_idx_set(
                &split.train,
                &out_dir.join("symbols-train-images-idx3-ubyte"),
                &out_dir.join("symbols-train-labels-idx1-ubyte"),
            )?;
            write_idx_set(
                &split.test,
                &out_dir.join("symbols-test-images-idx3-ubyte"),
                &out_dir.join("symbols-test-labels-idx1-ubyte"),
            )?;
            fs::write(out_dir.join("symbol-classes.json"), serde_json::to_vec_pretty(&split.classes)?)?;
            println!(
                "{} classes, {} examples, {} train, {} test",
                split.classes.len(),
                split.total(),
                split.train.len(),
                split.test.len()
            );
        }
    }
    Ok(())
}

fn write_jsonl(records: &[spurious_core::data::StrokeRecord], path: &Path) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_stroke_jsonl(records, BufWriter::new(f))?;
    Ok(())
}

fn generate(run: PathBuf, model: Option<String>, iters: usize, seed: u64, count: usize, theta: f64) -> Result<()> {
    let runner = Runner::open(&run)?;
    let id = match model {
        Some(id) => id,
        None => {
            let records = runner.records()?;
            let best = rank_by_delta(&records).first().map(|r| r.model_id.clone());
            best.context("the run has no evaluated model")?
        }
    };
    let model = runner.load_model(&id)?;
    let cfg = GenerationConfig {
        n_iters: iters,
        ..runner.config.generation
    };
    let seeds = seeded_images(count, seed)?;
    let out = iterate(&model, &seeds, &cfg)?;
    let dir = run.join("generation");
    let spec = PanelSpec {
        model_id: id.clone(),
        kind: PanelKind::Generation,
        per_row: count,
        seed,
    };
    let panel = generation_panel(&out, &spec, 11, &dir)?;
    let finals: Vec<f64> = out.final_residuals.iter().flatten().copied().collect();
    let accepted = finals.iter().filter(|&&r| r < theta).count();
    println!("model {id}");
    println!(
        "median residual: initial {:.2}, final {:.2}",
        median(out.initial_residuals.iter().copied()).unwrap_or(f64::NAN),
        median(finals.iter().copied()).unwrap_or(f64::NAN)
    );
    println!("{accepted}/{count} fixed points under theta {theta}; {} diverged", out.failed());
    println!("panel: {}", panel.image.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { action } => ingest(action),
        Command::Train(args) => train(args),
        Command::Eval { run, theta } => {
            let runner = Runner::open(&run)?;
            let data = runner.datasets()?;
            let classifiers = runner.classifiers(&data)?;
            let records = runner.reevaluate(&data, &classifiers, theta)?;
            print_table(&records);
            Ok(())
        }
        Command::Generate {
            run,
            model,
            iters,
            seed,
            count,
            theta,
        } => generate(run, model, iters, seed, count, theta),
        Command::Report {
            run,
            top,
            per_row,
            seed,
            theta,
        } => {
            let runner = Runner::open(&run)?;
            let opts = ReportOptions {
                top_models: top,
                per_row,
                seed,
                theta,
                ..Default::default()
            };
            let summary = write_run_report(&runner, None, &opts)?;
            println!(
                "{} records, {} panels in {}",
                summary.records.len(),
                summary.panels.len(),
                summary.dir.display()
            );
            Ok(())
        }
        Command::Gradcheck { seed } => {
            let cases = gradcheck_suite(seed)?;
            let mut ok = true;
            for c in &cases {
                println!(
                    "{} rho={} p={}: max rel err {:.3e} (tol {:.0e}, {} checked) {}",
                    c.precision,
                    c.rho,
                    c.p_corruption,
                    c.report.max_relative_error,
                    c.tolerance,
                    c.report.checked,
                    if c.passed() { "ok" } else { "FAIL" }
                );
                ok &= c.passed();
            }
            if !ok {
                bail!("gradient check failed");
            }
            Ok(())
        }
        Command::Status { run } => {
            let runner = Runner::open(&run)?;
            let c = runner.manifest()?.counts();
            println!(
                "pending {} training {} done {} failed {}",
                c.pending, c.training, c.done, c.failed
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
