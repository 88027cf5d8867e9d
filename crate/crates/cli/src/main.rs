//! `petalnet` command-line tool: segment, synth, split, train, eval, predict
//! and compare.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use petalnet::dataset::{
    generate_synthetic_flowers, load_dataset, preprocess, split_dataset, write_dataset, Dataset,
    DatasetSplit, TensorDataset,
};
use petalnet::evaluation::{compare_models, evaluate, most_confused_pairs, EvalReport};
use petalnet::imaging::{read_image, write_png};
use petalnet::models::{count_parameters, Architecture};
use petalnet::segmentation::{segment, SegmentationConfig};
use petalnet::training::{load_checkpoint, save_checkpoint, train_with_progress, Checkpoint, TrainConfig};
use petalnet::Error;

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const VAL_FRACTION: f64 = 0.15;
const TEST_FRACTION: f64 = 0.15;
const EVAL_BATCH: usize = 64;
const CONFUSED_SHOWN: usize = 5;

#[derive(Parser, Debug)]
#[command(name = "petalnet", version, about = "Hue-histogram segmentation and mini-CNN flower classification")]
struct Cli {
    /// Seed for data generation, splitting, initialization and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Suppress progress lines on the error stream.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Remove backgrounds from every PNG/JPEG in a directory.
    Segment(SegmentArgs),
    /// Write a synthetic flower dataset (PNGs plus labels.csv).
    Synth(SynthArgs),
    /// Write a seeded 70/15/15 split manifest for a dataset directory.
    Split(SplitArgs),
    /// Train a mini model and write a checkpoint and learning curve.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a data split.
    Eval(EvalArgs),
    /// Classify one image.
    Predict(PredictArgs),
    /// Evaluate two checkpoints on the same split side by side.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Directory of input images.
    #[arg(long)]
    in_dir: PathBuf,
    /// Number of hue histogram bins.
    #[arg(long, default_value_t = 36)]
    bins: usize,
    /// Border band width as a fraction of the shorter image side.
    #[arg(long, default_value_t = 0.02)]
    border: f64,
    /// Pixels below this saturation count as achromatic.
    #[arg(long, default_value_t = 0.15)]
    sat_floor: f64,
    /// Stop once this fraction of pixels is background.
    #[arg(long, default_value_t = 0.98)]
    stop: f64,
    /// Maximum number of bin-removal iterations.
    #[arg(long, default_value_t = 16)]
    max_iters: usize,
    /// Also write `<stem>.mask.png` with the foreground mask.
    #[arg(long)]
    emit_masks: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of hue classes (2 to 24).
    #[arg(long, default_value_t = 8)]
    classes: usize,
    /// Images per class.
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Directory holding images and labels.csv.
    #[arg(long)]
    data_dir: PathBuf,
    /// Manifest path [default: <out-dir>/split.json].
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

/// Exactly one data source. Without either flag, eval and compare reuse the
/// source recorded in the checkpoint.
#[derive(Args, Debug, Clone)]
struct DataSource {
    /// Directory holding images and labels.csv.
    #[arg(long, conflicts_with = "synthetic")]
    data_dir: Option<PathBuf>,
    /// Generate synthetic data as `classes,per_class`.
    #[arg(long, value_name = "CLASSES,PER_CLASS", value_parser = parse_synthetic)]
    synthetic: Option<(usize, usize)>,
}

fn parse_synthetic(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected CLASSES,PER_CLASS")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Arch {
    Plain,
    Inception,
}

impl From<Arch> for Architecture {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Plain => Architecture::Plain,
            Arch::Inception => Architecture::Inception,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataSource,
    /// Model architecture.
    #[arg(long, value_enum, default_value_t = Arch::Plain)]
    arch: Arch,
    /// Number of training epochs.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Base learning rate, decayed linearly to zero.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Mini-batch size.
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Dropout ratio before the classifier.
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    /// Input side length (images are resized to size×size).
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Checkpoint path [default: <out-dir>/<arch>.ckpt].
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Learning-curve CSV path [default: <out-dir>/<arch>.curve.csv].
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataSource,
    /// Which part of the split to evaluate.
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    split: SplitName,
    /// Write the JSON report here.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint to use.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image to classify.
    #[arg(long)]
    image: PathBuf,
    /// Remove the background before classifying.
    #[arg(long)]
    segment_first: bool,
    /// Number of classes to list.
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// First checkpoint.
    #[arg(long)]
    checkpoint_a: PathBuf,
    /// Second checkpoint.
    #[arg(long)]
    checkpoint_b: PathBuf,
    #[command(flatten)]
    data: DataSource,
    /// Which part of the split to evaluate.
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    split: SplitName,
    /// Write the JSON comparison here.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

/// Failure with its exit code: 2 for bad input, 1 for internal faults.
#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ShapeMismatch(_)
            | Error::BadShape(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyHistogram
            | Error::LabelOutOfRange { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn progress(&self, msg: impl fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> CliResult<PathBuf> {
        let path = explicit.clone().unwrap_or_else(|| self.out_dir.join(default_name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| input(format!("{}: {e}", parent.display())))?;
        }
        Ok(path)
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, contents).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn percent(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Segment(a) => cmd_segment(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Split(a) => cmd_split(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Predict(a) => cmd_predict(a),
        Command::Compare(a) => cmd_compare(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn cmd_segment(ctx: &Ctx, a: SegmentArgs) -> CliResult {
    let config = SegmentationConfig {
        bin_count: a.bins,
        border_band_fraction: a.border,
        saturation_floor: a.sat_floor,
        background_stop_fraction: a.stop,
        max_iterations: a.max_iters,
    };
    config.validate()?;
    let entries = std::fs::read_dir(&a.in_dir).map_err(|e| input(format!("{}: {e}", a.in_dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(input(format!("no PNG or JPEG images in {}", a.in_dir.display())));
    }
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| input(format!("{}: {e}", ctx.out_dir.display())))?;

    let mut failed = Vec::new();
    for path in &files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let stem = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let outcome = read_image(path).and_then(|img| segment(&img, &config)).and_then(|r| {
            write_png(ctx.out_dir.join(format!("{stem}.seg.png")), &r.output)?;
            if a.emit_masks {
                write_png(ctx.out_dir.join(format!("{stem}.mask.png")), &r.mask.to_image())?;
            }
            Ok(r)
        });
        match outcome {
            Ok(r) => out!(
                "{name}\titerations={}\tforeground={:.4}",
                r.iterations_used,
                r.foreground_fraction()
            ),
            Err(e) => {
                eprintln!("skipped {name}: {e}");
                failed.push(name);
            }
        }
    }
    if failed.len() == files.len() {
        return Err(input(format!("no image segmented; failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> CliResult {
    let ds = generate_synthetic_flowers(a.classes, a.per_class, a.size, ctx.seed)?;
    write_dataset(&ds, &ctx.out_dir)?;
    out!(
        "wrote {} images in {} classes to {}",
        ds.len(),
        ds.num_classes(),
        ctx.out_dir.display()
    );
    Ok(())
}

fn load_dir(dir: &Path) -> CliResult<Dataset> {
    Ok(load_dataset(dir, dir.join("labels.csv"))?)
}

fn cmd_split(ctx: &Ctx, a: SplitArgs) -> CliResult {
    let ds = load_dir(&a.data_dir)?;
    let split = split_dataset(&ds, VAL_FRACTION, TEST_FRACTION, ctx.seed)?;
    let path = ctx.out_path(&a.manifest_out, "split.json")?;
    write_file(&path, split.to_json() + "\n")?;
    out!(
        "train {}  val {}  test {}  -> {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        path.display()
    );
    Ok(())
}

/// Where a dataset came from, stored in checkpoint metadata so evaluation
/// can regenerate the identical split.
#[derive(Debug, Clone, PartialEq)]
enum Source {
    Dir(PathBuf),
    Synthetic {
        classes: usize,
        per_class: usize,
        size: usize,
        seed: u64,
    },
}

impl Source {
    fn from_flags(data: &DataSource, size: usize, seed: u64) -> Option<Self> {
        match (&data.data_dir, data.synthetic) {
            (Some(dir), _) => Some(Source::Dir(dir.clone())),
            (None, Some((classes, per_class))) => Some(Source::Synthetic {
                classes,
                per_class,
                size,
                seed,
            }),
            (None, None) => None,
        }
    }

    fn record(&self, meta: &mut BTreeMap<String, String>) {
        match self {
            Source::Dir(dir) => {
                meta.insert("data.dir".into(), dir.display().to_string());
            }
            Source::Synthetic {
                classes,
                per_class,
                size,
                seed,
            } => {
                meta.insert("data.synthetic".into(), format!("{classes},{per_class},{size},{seed}"));
            }
        }
    }

    fn recorded(meta: &BTreeMap<String, String>) -> CliResult<Self> {
        if let Some(dir) = meta.get("data.dir") {
            return Ok(Source::Dir(PathBuf::from(dir)));
        }
        let recorded = meta
            .get("data.synthetic")
            .ok_or_else(|| input("checkpoint records no data source; pass --data-dir or --synthetic"))?;
        let parts: Vec<u64> = recorded
            .split(',')
            .map(|p| p.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| input(format!("unreadable data source {recorded:?} in checkpoint")))?;
        match parts[..] {
            [classes, per_class, size, seed] => Ok(Source::Synthetic {
                classes: classes as usize,
                per_class: per_class as usize,
                size: size as usize,
                seed,
            }),
            _ => Err(input(format!("unreadable data source {recorded:?} in checkpoint"))),
        }
    }

    fn load(&self) -> CliResult<Dataset> {
        match self {
            Source::Dir(dir) => load_dir(dir),
            Source::Synthetic {
                classes,
                per_class,
                size,
                seed,
            } => Ok(generate_synthetic_flowers(*classes, *per_class, *size, *seed)?),
        }
    }
}

fn split_part<'a>(split: &'a DatasetSplit, which: SplitName) -> &'a [String] {
    match which {
        SplitName::Train => &split.train,
        SplitName::Val => &split.val,
        SplitName::Test => &split.test,
    }
}

fn tensors(ds: &Dataset, ids: &[String], size: usize) -> CliResult<TensorDataset> {
    Ok(TensorDataset::from_items(&ds.select(ids)?, size, ds.num_classes())?)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> CliResult {
    let source = Source::from_flags(&a.data, a.size, ctx.seed)
        .ok_or_else(|| input("pass exactly one of --data-dir or --synthetic"))?;
    let config = TrainConfig {
        base_lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        dropout_ratio: a.dropout,
        seed: ctx.seed,
        shuffle: true,
    };
    config.validate()?;
    let arch: Architecture = a.arch.into();
    out!(
        "config: arch={} epochs={} lr={} batch={} dropout={} seed={}",
        arch.name(),
        config.epochs,
        config.base_lr,
        config.batch_size,
        config.dropout_ratio,
        config.seed
    );

    let ds = source.load()?;
    let split = split_dataset(&ds, VAL_FRACTION, TEST_FRACTION, ctx.seed)?;
    let train_set = tensors(&ds, &split.train, a.size)?;
    let val_set = tensors(&ds, &split.val, a.size)?;
    let model = arch.build(ds.num_classes(), [3, a.size, a.size], config.dropout_ratio, ctx.seed)?;
    ctx.progress(format!(
        "{} parameters; train {} / val {} / test {}",
        count_parameters(&model),
        split.train.len(),
        split.val.len(),
        split.test.len()
    ));
    let (model, curve) = train_with_progress(model, &train_set, &val_set, &config, |r| {
        ctx.progress(format!(
            "epoch {:>3}  lr {:.5}  loss {:.4}  train {}  val {}",
            r.epoch,
            r.lr,
            r.train_loss,
            percent(r.train_top1),
            percent(r.val_top1)
        ))
    })?;

    let mut checkpoint = Checkpoint::from_model(&model, &config, config.epochs, ds.class_names().to_vec())?;
    source.record(&mut checkpoint.metadata);
    checkpoint.metadata.insert("split.seed".into(), ctx.seed.to_string());
    checkpoint.metadata.insert("split.val".into(), VAL_FRACTION.to_string());
    checkpoint.metadata.insert("split.test".into(), TEST_FRACTION.to_string());
    let ckpt_path = ctx.out_path(&a.checkpoint_out, &format!("{}.ckpt", arch.name()))?;
    save_checkpoint(&checkpoint, &ckpt_path)?;
    let curve_path = ctx.out_path(&a.curve_out, &format!("{}.curve.csv", arch.name()))?;
    write_file(&curve_path, curve.to_csv())?;

    if val_set.is_empty() {
        out!("val: no samples");
    } else {
        let report = evaluate(&model, &val_set, EVAL_BATCH)?;
        out!("val top-1: {}  top-5: {}", percent(report.top1), percent(report.top5));
    }
    ctx.progress(format!("wrote {} and {}", ckpt_path.display(), curve_path.display()));
    Ok(())
}

/// Loads a checkpoint and rebuilds the split it was trained with, or the
/// one implied by explicit data flags.
fn checkpoint_split(
    ctx: &Ctx,
    checkpoint: &Checkpoint,
    data: &DataSource,
    which: SplitName,
) -> CliResult<TensorDataset> {
    let [_, size, _] = checkpoint.input_shape;
    let source = match Source::from_flags(data, size, ctx.seed) {
        Some(s) => s,
        None => Source::recorded(&checkpoint.metadata)?,
    };
    let meta_f64 = |key: &str, default: f64| {
        checkpoint.metadata.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    };
    let split_seed = match (&data.data_dir, data.synthetic) {
        (None, None) => checkpoint
            .metadata
            .get("split.seed")
            .and_then(|v| v.parse().ok())
            .unwrap_or(ctx.seed),
        _ => ctx.seed,
    };
    let ds = source.load()?;
    if ds.class_names() != checkpoint.class_names.as_slice() {
        return Err(input(format!(
            "data classes {:?} do not match checkpoint classes {:?}",
            ds.class_names(),
            checkpoint.class_names
        )));
    }
    let split = split_dataset(&ds, meta_f64("split.val", VAL_FRACTION), meta_f64("split.test", TEST_FRACTION), split_seed)?;
    let ids = split_part(&split, which);
    if ids.is_empty() {
        return Err(input(format!("the {which:?} split is empty")));
    }
    tensors(&ds, ids, size)
}

fn report_json(report: &EvalReport, class_names: &[String]) -> serde_json::Value {
    let mut v = report.to_json();
    v["class_names"] = json!(class_names);
    v
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> CliResult {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let model = checkpoint.model()?;
    let data = checkpoint_split(ctx, &checkpoint, &a.data, a.split)?;
    let report = evaluate(&model, &data, EVAL_BATCH)?;
    out!("top-1: {}  top-5: {}", percent(report.top1), percent(report.top5));
    if let Some(path) = &a.json_out {
        let path = ctx.out_path(&Some(path.clone()), "")?;
        let text = serde_json::to_string_pretty(&report_json(&report, &checkpoint.class_names))
            .map_err(|e| Failure::Internal(e.to_string()))?;
        write_file(&path, text + "\n")?;
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    if a.top == 0 {
        return Err(input("--top must be at least 1"));
    }
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let model = checkpoint.model()?;
    let mut image = read_image(&a.image)?;
    if a.segment_first {
        match segment(&image, &SegmentationConfig::default()) {
            Ok(r) => image = r.output,
            Err(Error::EmptyForeground) => {
                eprintln!("warning: segmentation left no foreground; classifying the unsegmented image")
            }
            Err(e) => return Err(e.into()),
        }
    }
    let [_, size, _] = checkpoint.input_shape;
    let x = preprocess(&image, size)?.reshape(&[1, 3, size, size])?;
    let probs = model.predict_probabilities(&x)?;
    let mut ranked: Vec<(usize, f64)> = probs.data().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out!("Predictions");
    for (class, p) in ranked.into_iter().take(a.top) {
        out!("{}\t{}", checkpoint.class_names[class], percent(p));
    }
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> CliResult {
    let ck_a = load_checkpoint(&a.checkpoint_a)?;
    let ck_b = load_checkpoint(&a.checkpoint_b)?;
    if ck_a.class_names != ck_b.class_names {
        return Err(input(format!(
            "class sets differ: {} classes vs {} classes",
            ck_a.class_names.len(),
            ck_b.class_names.len()
        )));
    }
    if ck_a.input_shape != ck_b.input_shape {
        return Err(input("checkpoints expect different input sizes"));
    }
    let (model_a, model_b) = (ck_a.model()?, ck_b.model()?);
    let data = checkpoint_split(ctx, &ck_a, &a.data, a.split)?;
    let cmp = compare_models(&model_a, &model_b, &data, EVAL_BATCH)?;

    let names = &ck_a.class_names;
    let (ra, rb) = (&cmp.report_a, &cmp.report_b);
    let label_a = format!("A ({})", ra.model);
    let label_b = format!("B ({})", rb.model);
    out!("{:<12}{:>16}{:>16}{:>10}", "", label_a, label_b, "B-A");
    out!("{:<12}{:>16}{:>16}{:>10}", "top-1", percent(ra.top1), percent(rb.top1), percent(cmp.top1_delta));
    out!("{:<12}{:>16}{:>16}{:>10}", "top-5", percent(ra.top5), percent(rb.top5), percent(cmp.top5_delta));
    out!("{:<12}{:>16}{:>16}", "parameters", cmp.parameters_a, cmp.parameters_b);
    for (label, report) in [(&label_a, ra), (&label_b, rb)] {
        let pairs = most_confused_pairs(report, CONFUSED_SHOWN);
        if pairs.is_empty() {
            out!("{label} confused pairs: none");
        }
        for p in pairs {
            out!(
                "{label} confused: {} -> {} ({})",
                names[p.true_class], names[p.predicted_class], p.count
            );
        }
    }

    if let Some(path) = &a.json_out {
        let path = ctx.out_path(&Some(path.clone()), "")?;
        let value = json!({
            "a": report_json(ra, names),
            "b": report_json(rb, names),
            "parameters": {"a": cmp.parameters_a, "b": cmp.parameters_b},
            "top1_delta": cmp.top1_delta,
            "top5_delta": cmp.top5_delta,
            "per_class_delta": cmp.per_class_delta,
            "fixed_by_b": cmp.fixed_by_b,
            "fixed_by_a": cmp.fixed_by_a,
        });
        let text = serde_json::to_string_pretty(&value).map_err(|e| Failure::Internal(e.to_string()))?;
        write_file(&path, text + "\n")?;
    }
    Ok(())
}
