//! The `vcnet` command-line tool: dataset generation, training, evaluation,
//! prediction, statistics and loss-curve plots.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the command itself
//! fails. Failures print the `module::operation` that raised them.

pub mod plot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use vcnet_core::datagen::{build_dataset, DatasetManifest, DatasetParams, SceneParams, Split, MANIFEST_FILE};
use vcnet_core::losses::ScheduleMode;
use vcnet_core::metrics::{evaluate_dataset, EvalOptions, Hd95Variant, MetricsReport, MACRO};
use vcnet_core::model::Checkpoint;
use vcnet_core::raster::{read_gray_png, write_mask_png};
use vcnet_core::trainer::{self, LrSchedule, TrainConfig, TrainLog, CHECKPOINT_FILE, LOG_FILE};

/// Environment variable naming the directory for default checkpoint and
/// report locations.
pub const CACHE_ENV: &str = "VCNET_CACHE_DIR";
pub const DEFAULT_CACHE: &str = "vcnet-cache";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] vcnet_core::Error),

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("{op}: {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(op: &'static str, msg: impl Into<String>) -> CliError {
    CliError::Invalid { op, msg: msg.into() }
}

#[derive(Debug, Parser)]
#[command(name = "vcnet", version, about = "Vessel connectivity segmentation", propagate_version = true)]
pub struct Cli {
    /// Log filter (error, warn, info, debug, trace); RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (images, masks, manifest).
    Datagen(DatagenArgs),
    /// Train a network on a generated dataset.
    Train(TrainArgs),
    /// Predict the test split with a checkpoint and score it.
    Eval(EvalArgs),
    /// Write predicted masks for one image or a dataset split.
    Predict(PredictArgs),
    /// Score a directory of predicted masks against a manifest.
    Stats(StatsArgs),
    /// Plot loss curves (and optionally the weight schedule) from a training log.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// Number of scenes.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Master seed; every sample seed derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Canvas size as HxW (or a single number for square).
    #[arg(long, default_value = "256x256", value_parser = parse_size)]
    pub size: (usize, usize),
    /// Fraction of scenes in the training split.
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Profile {
    /// 128x128-scale network, batch 4, 50 epochs.
    Desk,
    /// Full-width network, batch 8, 1000 epochs.
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LrArg {
    Constant,
    Poly,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with training config fields; overrides the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base preset the config file and flags are applied on top of.
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    /// Output directory [default: $VCNET_CACHE_DIR/run, or vcnet-cache/run].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Epoch count; also rescales the reweighting ramp to 10%/20% of it [default: from profile/config].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Training seed [default: from profile/config].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learning rate [default: from profile/config].
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum [default: from profile/config].
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Weight decay [default: from profile/config].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Batch size [default: from profile/config].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning-rate schedule [default: from profile/config].
    #[arg(long, value_enum)]
    pub lr_schedule: Option<LrArg>,
    /// Class weighting: none, rw, drw or ppw [default: from profile/config].
    #[arg(long)]
    pub imbalance: Option<ScheduleMode>,
    /// Last epoch with unit weights [default: from profile/config].
    #[arg(long)]
    pub e_min: Option<usize>,
    /// First epoch with full reweighting [default: from profile/config].
    #[arg(long)]
    pub e_max: Option<usize>,
    /// Deferred reweighting switch epoch [default: from profile/config, else e-min].
    #[arg(long)]
    pub e_switch: Option<usize>,
    /// Validate every N epochs, 0 disables [default: from profile/config].
    #[arg(long)]
    pub val_every: Option<usize>,
    /// Extra checkpoint every N epochs, 0 disables [default: from profile/config].
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// HD95 definition: percentile or literal.
    #[arg(long, default_value = "percentile")]
    pub hd95_variant: Hd95Variant,
    /// Distance substituted when a class is missing from one mask [default: image diagonal].
    #[arg(long)]
    pub penalty: Option<f64>,
    /// JSON report path [default: $VCNET_CACHE_DIR/report.json, or vcnet-cache/report.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a per-sample, per-class CSV here [default: none].
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint [default: $VCNET_CACHE_DIR/run/model.ckpt, or vcnet-cache/run/model.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// Where predicted masks go [default: $VCNET_CACHE_DIR/predictions, or vcnet-cache/predictions].
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    #[command(flatten)]
    pub score: ScoreArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["image", "data"])))]
pub struct PredictArgs {
    /// Checkpoint [default: $VCNET_CACHE_DIR/run/model.ckpt, or vcnet-cache/run/model.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Single grayscale PNG; --out is then the mask file.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Dataset directory or manifest; --out is then a directory of `<id>.png` masks.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split to predict with --data.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Output mask file or directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Directory of predicted masks named `<id>.png`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset manifest file or directory.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub score: ScoreArgs,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Training log CSV.
    #[arg(long)]
    pub log: PathBuf,
    /// SVG with the contrastive and total losses [default: $VCNET_CACHE_DIR/curves.svg, or vcnet-cache/curves.svg].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also plot beta and the class weights to this SVG [default: none].
    #[arg(long)]
    pub schedule: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("invalid size {s:?}, expected HxW"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

/// Default location for outputs: `$VCNET_CACHE_DIR` or `./vcnet-cache`.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE))
}

fn manifest_at(path: &Path) -> Result<DatasetManifest> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    Ok(DatasetManifest::load(&file)?)
}

fn write_file(op: &'static str, path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { op, path: parent.into(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io { op, path: path.into(), source })
}

/// Parses `argv` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let env = env_logger::Env::default().default_filter_or(cli.log_level.as_str());
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Datagen(a) => datagen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Stats(a) => stats(a),
        Command::Curves(a) => curves(a),
    }
}

fn datagen(a: DatagenArgs) -> Result<()> {
    let params = DatasetParams { scene: SceneParams::with_canvas(a.size.0, a.size.1), ..Default::default() };
    let m = build_dataset(a.n, a.split, a.seed, &a.out, &params)?;
    let counts = m.class_counts();
    let total: u64 = counts.iter().sum();
    println!(
        "wrote {} train / {} test samples to {}; train class shares {:.3} / {:.3} / {:.3}",
        m.info.n_train,
        m.info.n_test,
        a.out.display(),
        counts[0] as f64 / total as f64,
        counts[1] as f64 / total as f64,
        counts[2] as f64 / total as f64
    );
    Ok(())
}

/// Overlays `over` onto `base`, recursing into objects.
fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Profile preset, then the config file, then individual flags.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    const OP: &str = "cli::resolve_config";
    let mut cfg = match a.profile {
        Profile::Desk => TrainConfig::desk(),
        Profile::Full => TrainConfig::full(),
    };
    if let Some(path) = &a.config {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::Io { op: OP, path: path.clone(), source })?;
        let file: Value = serde_json::from_str(&text).map_err(|e| invalid(OP, format!("{}: {e}", path.display())))?;
        let mut merged = serde_json::to_value(&cfg).expect("config serialises");
        merge_json(&mut merged, file);
        cfg = serde_json::from_value(merged).map_err(|e| invalid(OP, format!("{}: {e}", path.display())))?;
    }
    if let Some(e) = a.epochs {
        cfg.set_epochs(e);
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(seed => seed, lr => lr, momentum => momentum, weight_decay => weight_decay, batch_size => batch_size,
         imbalance => imbalance.mode, e_min => imbalance.e_min, e_max => imbalance.e_max,
         val_every => val_every, checkpoint_every => checkpoint_every);
    if a.e_switch.is_some() {
        cfg.imbalance.e_switch = a.e_switch;
    }
    if let Some(s) = a.lr_schedule {
        cfg.lr_schedule = match s {
            LrArg::Constant => LrSchedule::Constant,
            LrArg::Poly => LrSchedule::Poly,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let manifest = manifest_at(&a.data)?;
    let out = a.out.clone().unwrap_or_else(|| cache_dir().join("run"));
    let text = serde_json::to_string_pretty(&cfg).expect("config serialises");
    write_file("cli::train", &out.join(CONFIG_FILE), &(text + "\n"))?;
    let outcome = trainer::train(&cfg, &manifest, Some(&out))?;
    let first = &outcome.log.records[0];
    let last = outcome.log.records.last().unwrap_or(first);
    println!(
        "trained {} epochs: total loss {:.4} -> {:.4}; wrote {} and {} in {}",
        cfg.epochs,
        first.total,
        last.total,
        CHECKPOINT_FILE,
        LOG_FILE,
        out.display()
    );
    Ok(())
}

fn options(s: &ScoreArgs) -> EvalOptions {
    EvalOptions { hd95_variant: s.hd95_variant, penalty: s.penalty }
}

fn write_report(report: &MetricsReport, s: &ScoreArgs) -> Result<()> {
    let out = s.out.clone().unwrap_or_else(|| cache_dir().join("report.json"));
    write_file("cli::write_report", &out, &report.to_json())?;
    if let Some(csv) = &s.csv {
        if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                op: "cli::write_report",
                path: parent.into(),
                source,
            })?;
        }
        report.write_csv(csv)?;
    }
    let m = &report.macro_avg;
    println!(
        "{} samples, {MACRO} dice {:.4} iou {:.4} hd95 {:.3} asd {:.3} acc {:.4}; report in {}",
        report.per_sample.len(),
        m["dice"],
        m["iou"],
        m["hd95"],
        m["asd"],
        m["acc"],
        out.display()
    );
    Ok(())
}

fn checkpoint_path(p: &Option<PathBuf>) -> PathBuf {
    p.clone().unwrap_or_else(|| cache_dir().join("run").join(CHECKPOINT_FILE))
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&checkpoint_path(&a.checkpoint))?;
    let manifest = manifest_at(&a.data)?;
    let pred_dir = a.pred_dir.clone().unwrap_or_else(|| cache_dir().join("predictions"));
    let report = trainer::evaluate(&ckpt, &manifest, &pred_dir, &options(&a.score))?;
    write_report(&report, &a.score)
}

fn predict(a: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&checkpoint_path(&a.checkpoint))?;
    let mut net = ckpt.network()?;
    if let Some(image) = &a.image {
        let mask = trainer::predict(&mut net, &read_gray_png(image)?)?;
        if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                op: "cli::predict",
                path: parent.into(),
                source,
            })?;
        }
        write_mask_png(&a.out, &mask)?;
        println!("wrote {}", a.out.display());
    } else if let Some(data) = &a.data {
        let manifest = manifest_at(data)?;
        let split = match a.split {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        };
        let paths = trainer::predict_split(&mut net, &manifest, split, &a.out)?;
        println!("wrote {} masks to {}", paths.len(), a.out.display());
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let manifest = manifest_at(&a.manifest)?;
    let report = evaluate_dataset(&a.pred, &manifest, &options(&a.score))?;
    write_report(&report, &a.score)
}

fn curves(a: CurvesArgs) -> Result<()> {
    let log = TrainLog::read_csv(&a.log)?;
    if log.records.is_empty() {
        return Err(invalid("cli::curves", format!("{} has no epochs", a.log.display())));
    }
    let out = a.out.clone().unwrap_or_else(|| cache_dir().join("curves.svg"));
    write_file("cli::curves", &out, &plot::render_svg(&plot::loss_chart(&log)))?;
    println!("wrote {}", out.display());
    if let Some(path) = &a.schedule {
        write_file("cli::curves", path, &plot::render_svg(&plot::schedule_chart(&log)))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
