//! Batch commands of the `ltae` tool.
//!
//! Every command reads its inputs, validates all of them, and only then
//! computes. Failures print one JSON line on standard error and exit with
//! 2 (configuration), 3 (data) or 4 (numeric).

pub mod config;
pub mod error;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use ltae_core::complexity::{count_flops, preset, presets, FLOP_CONVENTION};
use ltae_core::data::{
    dataset_shape, generate_synthetic, parse_dataset, save_dataset, SequenceSample, SynthSpec,
};
use ltae_core::train::{evaluate, kfold_split, metric_log_csv, train, EpochMetrics, Evaluation};
use ltae_core::{DataError, Model, PipelineConfig};

pub use config::{Overrides, RunConfig, TrainSection};
pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC};

#[derive(Debug, Parser)]
#[command(
    name = "ltae",
    version,
    about = "Lightweight temporal attention encoder toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a TOML spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes checkpoint(s) and metrics.csv to --out-dir.
    Train(TrainArgs),
    /// Report OA, mIoU and the confusion matrix of a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter and FLOP accounting of a temporal encoder.
    Count(CountArgs),
    /// Per-class average attention masks as CSV.
    InspectAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Validation set for best-epoch selection (single-model runs only).
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Run configuration whose `model.temporal` section is counted.
    #[arg(long, conflicts_with = "preset", required_unless_present_any = ["preset", "list_presets"])]
    pub config: Option<PathBuf>,
    /// Built-in configuration, e.g. `ltae-default`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub list_presets: bool,
    #[arg(long, conflicts_with = "params")]
    pub flops: bool,
    #[arg(long)]
    pub params: bool,
    /// Sequence length; defaults to the configuration's.
    #[arg(long)]
    pub seq_len: Option<usize>,
}

/// Runs one command, returning what it printed on standard output.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate {
            checkpoint,
            data,
            out,
        } => cmd_evaluate(&checkpoint, &data, out.as_deref()),
        Command::Count(args) => cmd_count(&args),
        Command::InspectAttention {
            checkpoint,
            data,
            out,
        } => cmd_inspect_attention(&checkpoint, &data, &out),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_samples(path: &Path) -> CliResult<Vec<SequenceSample>> {
    Ok(parse_dataset(&config::read_text(path)?)?)
}

fn load_model(path: &Path) -> CliResult<Model> {
    let ck = ltae_core::pipeline::Checkpoint::from_text(&config::read_text(path)?)?;
    Ok(Model::from_checkpoint(&ck)?)
}

/// Checks that a non-empty dataset fits the model's input and labels.
fn check_dataset(model: &PipelineConfig, samples: &[SequenceSample]) -> CliResult<()> {
    let shape = dataset_shape(samples)?;
    let expected = (
        model.input_kind(),
        model.temporal.seq_len(),
        model.input_width(),
    );
    let found = (shape.kind, shape.seq_len, shape.width);
    if found != expected {
        return Err(DataError::Inconsistent {
            id: samples[0].id.clone(),
            message: format!(
                "dataset (kind, T, width) {found:?} does not fit the model's {expected:?}"
            ),
        }
        .into());
    }
    if shape.n_labels > model.n_classes {
        return Err(DataError::Inconsistent {
            id: samples
                .iter()
                .find(|s| s.label >= model.n_classes)
                .unwrap()
                .id
                .clone(),
            message: format!("label outside the {} model classes", model.n_classes),
        }
        .into());
    }
    Ok(())
}

pub fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<String> {
    let mut spec: SynthSpec = config::load_toml(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let samples = generate_synthetic(&spec)?;
    save_dataset(out, &samples).map_err(|e| match e {
        ltae_core::Error::Io(io) => CliError::io(out, io),
        other => other.into(),
    })?;
    Ok(format!(
        "wrote {} samples to {}\n",
        samples.len(),
        out.display()
    ))
}

fn prefixed(rows: &[EpochMetrics], prefix: &str) -> Vec<EpochMetrics> {
    rows.iter()
        .map(|r| EpochMetrics {
            split: format!("{prefix}{}", r.split),
            ..r.clone()
        })
        .collect()
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<String> {
    let mut cfg: RunConfig = config::load_toml(&args.config)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        folds: args.folds,
    });
    cfg.validate()?;
    let settings = cfg.settings();
    if settings.folds > 1 && args.val.is_some() {
        return Err(CliError::config(
            "conflicting_options",
            "--val cannot be combined with cross-validation folds",
        ));
    }
    let samples = load_samples(&args.data)?;
    check_dataset(&cfg.model, &samples)?;
    let validation = match &args.val {
        Some(p) => {
            let v = load_samples(p)?;
            check_dataset(&cfg.model, &v)?;
            v
        }
        None => Vec::new(),
    };
    let folds = if settings.folds > 1 {
        Some(kfold_split(samples.len(), settings.folds, cfg.seed)?)
    } else {
        None
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;

    let mut out = String::new();
    match folds {
        None => {
            let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
            let report = train(&mut model, &samples, &validation, &settings)?;
            model.save(args.out_dir.join("checkpoint.json"))?;
            write_file(
                &args.out_dir.join("metrics.csv"),
                &metric_log_csv(&report.log),
            )?;
            let _ = writeln!(out, "best_epoch = {}", report.best_epoch);
            let _ = writeln!(out, "best_oa = {}", report.best_oa);
        }
        Some(folds) => {
            let mut log = Vec::new();
            let mut summary = String::from("fold,best_epoch,val_oa,val_miou\n");
            let (mut oa_sum, mut miou_sum) = (0.0, 0.0);
            for (i, fold) in folds.iter().enumerate() {
                let n = i + 1;
                info!("fold {n}/{}", folds.len());
                let pick =
                    |idx: &[usize]| idx.iter().map(|&j| samples[j].clone()).collect::<Vec<_>>();
                let (tr, va) = (pick(&fold.train), pick(&fold.validation));
                let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
                let report = train(&mut model, &tr, &va, &settings)?;
                let eval = evaluate(&model, &va)?;
                let (oa, miou) = (eval.oa()?, eval.miou()?);
                oa_sum += oa;
                miou_sum += miou;
                log.extend(prefixed(&report.log, &format!("fold{n}/")));
                let _ = writeln!(summary, "{n},{},{oa},{miou}", report.best_epoch);
                model.save(args.out_dir.join(format!("checkpoint_fold{n}.json")))?;
            }
            write_file(&args.out_dir.join("metrics.csv"), &metric_log_csv(&log))?;
            write_file(&args.out_dir.join("folds.csv"), &summary)?;
            let k = folds.len() as f64;
            let _ = writeln!(out, "folds = {}", folds.len());
            let _ = writeln!(out, "mean_val_oa = {}", oa_sum / k);
            let _ = writeln!(out, "mean_val_miou = {}", miou_sum / k);
        }
    }
    Ok(out)
}

/// TOML-compatible evaluation report.
pub fn evaluation_report(eval: &Evaluation) -> CliResult<String> {
    let cm = &eval.confusion;
    let n = cm.n_classes();
    let mut out = String::new();
    let _ = writeln!(out, "oa = {}", eval.oa()?);
    let _ = writeln!(out, "miou = {}", eval.miou()?);
    let _ = writeln!(out, "loss = {}", eval.loss);
    let _ = writeln!(out, "samples = {}", cm.total());
    let ious: Vec<String> = cm
        .per_class_iou()
        .iter()
        .map(|v| v.map_or_else(|| "nan".to_string(), |x| format!("{x:?}")))
        .collect();
    let _ = writeln!(out, "class_iou = [{}]", ious.join(", "));
    let _ = writeln!(out, "# rows are true classes, columns predictions");
    let rows: Vec<String> = (0..n)
        .map(|t| {
            let r: Vec<String> = (0..n).map(|p| cm.get(t, p).to_string()).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    let _ = writeln!(out, "confusion = [{}]", rows.join(", "));
    Ok(out)
}

pub fn cmd_evaluate(checkpoint: &Path, data: &Path, out: Option<&Path>) -> CliResult<String> {
    let model = load_model(checkpoint)?;
    let samples = load_samples(data)?;
    check_dataset(model.config(), &samples)?;
    let report = evaluation_report(&evaluate(&model, &samples)?)?;
    if let Some(path) = out {
        write_file(path, &report)?;
    }
    Ok(report)
}

pub fn cmd_count(args: &CountArgs) -> CliResult<String> {
    if args.list_presets {
        let mut out = String::new();
        for p in presets() {
            let _ = writeln!(out, "{} ({})", p.name, p.label);
        }
        return Ok(out);
    }
    let (name, temporal) = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let p = preset(name).ok_or_else(|| {
                CliError::config("unknown_preset", format!("no preset named {name:?}"))
            })?;
            (p.name.to_string(), p.config)
        }
        (None, Some(path)) => {
            let cfg: RunConfig = config::load_toml(path)?;
            (path.display().to_string(), cfg.model.temporal)
        }
        (None, None) => {
            return Err(CliError::config(
                "missing_option",
                "pass --config or --preset",
            ))
        }
    };
    let seq_len = args.seq_len.unwrap_or_else(|| temporal.seq_len());
    let report = count_flops(&temporal, seq_len)?;
    let mut out = format!("config = \"{name}\"\n");
    if args.params {
        let _ = writeln!(out, "method = \"{}\"", report.method);
        let _ = writeln!(out, "param_count = {}", report.param_count);
    } else if args.flops {
        out.push_str(
            &report
                .to_text()
                .replace(&format!("param_count = {}\n", report.param_count), ""),
        );
    } else {
        out.push_str(&report.to_text());
    }
    debug_assert!(!args.flops || out.contains(FLOP_CONVENTION));
    Ok(out)
}

pub fn cmd_inspect_attention(checkpoint: &Path, data: &Path, out: &Path) -> CliResult<String> {
    let model = load_model(checkpoint)?;
    let samples = load_samples(data)?;
    check_dataset(model.config(), &samples)?;
    let (heads, steps) = (
        model.config().temporal.n_head(),
        model.config().temporal.seq_len(),
    );
    let n_classes = model.config().n_classes;
    let mut sums = vec![vec![0.0; heads * steps]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for s in &samples {
        let rec = model.attention(s)?;
        for (acc, v) in sums[s.label].iter_mut().zip(rec.masks.data()) {
            *acc += v;
        }
        counts[s.label] += 1;
    }
    let mut csv = String::from("class,head");
    for t in 0..steps {
        let _ = write!(csv, ",step_{t}");
    }
    csv.push('\n');
    for (class, (sum, &n)) in sums.iter().zip(&counts).enumerate() {
        if n == 0 {
            continue;
        }
        for h in 0..heads {
            let _ = write!(csv, "{class},{h}");
            for v in &sum[h * steps..(h + 1) * steps] {
                let _ = write!(csv, ",{}", v / n as f64);
            }
            csv.push('\n');
        }
    }
    write_file(out, &csv)?;
    let present = counts.iter().filter(|&&n| n > 0).count();
    Ok(format!(
        "wrote {} rows ({present} classes x {heads} heads) to {}\n",
        present * heads,
        out.display()
    ))
}
