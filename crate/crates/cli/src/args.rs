use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use sgval_core::{ClfConfig, LrSchedule, RelabelConfig, SynthConfig, ValConfig};

const EXIT_HELP: &str = "Exit codes:\n  0  success\n  2  usage error (bad flag or \
hyperparameter)\n  3  data or file error\n  4  numeric divergence during training";

#[derive(Parser)]
#[command(
    name = "sgval",
    version,
    about = "Noisy multi-label pipeline: learn attributes, detect and relabel \
             noisy samples, retrain, evaluate",
    after_help = EXIT_HELP,
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores). Results do
    /// not depend on this.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Plain key=value file supplying flag defaults for the subcommand;
    /// explicit flags win. Lines starting with # are ignored.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate a synthetic corpus with injected label noise.
    Synth(SynthArgs),
    /// Learn the attribute heads against the class embeddings.
    TrainVal(TrainValArgs),
    /// Split samples into clean and noisy by ranking agreement.
    Detect(DetectArgs),
    /// Rewrite the labels of noisy samples from their graph neighbours.
    Relabel(RelabelArgs),
    /// Train the downstream multi-label classifier.
    TrainClf(TrainClfArgs),
    /// Score a trained classifier on a labelled test set.
    Eval(EvalArgs),
    /// Run every stage end to end and emit a recovery report.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Cosine,
    Constant,
}

impl From<ScheduleArg> for LrSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Cosine => LrSchedule::Cosine,
            ScheduleArg::Constant => LrSchedule::Constant,
        }
    }
}

#[derive(clap::Args)]
pub struct SynthArgs {
    /// Training samples.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Number of classes.
    #[arg(long, default_value_t = 13)]
    pub classes: usize,
    /// Class-embedding dimension.
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
    /// Positives per sample are drawn uniformly from 1..=this.
    #[arg(long, default_value_t = 5)]
    pub max_positives: usize,
    /// Fraction of samples whose labels get corrupted.
    #[arg(long, default_value_t = 0.3)]
    pub noise_rate: f64,
    /// Per-class flip probability inside a corrupted sample.
    #[arg(long, default_value_t = 0.3)]
    pub flip_prob: f64,
    /// Scale of the Gaussian feature noise.
    #[arg(long, default_value_t = 0.05)]
    pub feature_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also emit a clean test split with this many samples.
    #[arg(long, value_name = "N")]
    pub test_n: Option<usize>,
    /// Directory receiving the generated files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl SynthArgs {
    pub fn to_config(&self) -> SynthConfig {
        SynthConfig {
            n: self.n,
            c: self.classes,
            z: self.embed_dim,
            d: self.feature_dim,
            max_positives: self.max_positives,
            noise_rate: self.noise_rate,
            flip_prob: self.flip_prob,
            feature_noise: self.feature_noise,
            seed: self.seed,
        }
    }
}

#[derive(clap::Args)]
pub struct TrainValArgs {
    /// Feature file (.sgvf).
    #[arg(long)]
    pub features: PathBuf,
    /// Class-embedding file (.sgvw).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Annotated 0/1 labels (CSV).
    #[arg(long)]
    pub labels: PathBuf,
    /// Attribute heads per image (M).
    #[arg(long, default_value_t = 3)]
    pub attributes: usize,
    /// Weight of the attribute-variance penalty.
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Cosine)]
    pub schedule: ScheduleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output checkpoint (.sgvm).
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress per-epoch loss lines.
    #[arg(long)]
    pub quiet: bool,
}

impl TrainValArgs {
    pub fn to_config(&self) -> ValConfig {
        ValConfig {
            attributes: self.attributes,
            beta: self.beta,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            schedule: self.schedule.into(),
            seed: self.seed,
        }
    }
}

#[derive(clap::Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Annotated 0/1 labels (CSV).
    #[arg(long)]
    pub labels: PathBuf,
    /// Attribute checkpoint from train-val (.sgvm).
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV: sample_index, clean flag, full class ranking.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct RelabelArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Annotated 0/1 labels (CSV).
    #[arg(long)]
    pub labels: PathBuf,
    /// Attribute checkpoint from train-val (.sgvm).
    #[arg(long)]
    pub model: PathBuf,
    /// Weight of the original annotation in the soft mix.
    #[arg(long, default_value_t = 0.7)]
    pub lambda: f64,
    /// Neighbour nodes consulted per noisy sample.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Output labels (CSV, soft).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV listing the detected-noisy sample indices.
    #[arg(long)]
    pub noisy_out: Option<PathBuf>,
}

impl RelabelArgs {
    pub fn to_config(&self) -> RelabelConfig {
        RelabelConfig { lambda: self.lambda, k: self.k }
    }
}

#[derive(clap::Args)]
pub struct TrainClfArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Training labels (CSV, 0/1 or soft).
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Comma-separated epochs at which the rate is multiplied by --decay.
    #[arg(long, default_value = "23,27")]
    pub milestones: String,
    #[arg(long, default_value_t = 0.1)]
    pub decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output checkpoint (.sgvc).
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress per-epoch loss lines.
    #[arg(long)]
    pub quiet: bool,
}

impl TrainClfArgs {
    pub fn to_config(&self) -> sgval_core::Result<ClfConfig> {
        Ok(ClfConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            milestones: parse_milestones(&self.milestones)?,
            decay: self.decay,
            seed: self.seed,
        })
    }
}

pub fn parse_milestones(spec: &str) -> sgval_core::Result<Vec<usize>> {
    let trimmed = spec.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|tok| {
            tok.trim().parse::<usize>().map_err(|_| {
                sgval_core::Error::InvalidConfig(format!(
                    "--milestones expects comma-separated epoch indices, got {tok:?}"
                ))
            })
        })
        .collect()
}

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Test features (.sgvf).
    #[arg(long)]
    pub features: PathBuf,
    /// Test labels (CSV, 0/1).
    #[arg(long)]
    pub labels: PathBuf,
    /// Classifier checkpoint (.sgvc).
    #[arg(long)]
    pub classifier: PathBuf,
    /// Optional per-class AUC table (CSV).
    #[arg(long)]
    pub per_class_out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct PipelineArgs {
    /// Use the built-in synthetic scenario (this is already the default
    /// when no input files are given).
    #[arg(long)]
    pub synth_defaults: bool,

    // Synthetic-scenario shape; ignored when input files are given.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 13)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub max_positives: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    pub flip_prob: f64,
    #[arg(long, default_value_t = 0.05)]
    pub feature_noise: f64,
    /// Clean test-split size in synthetic mode.
    #[arg(long, default_value_t = 1000)]
    pub test_n: usize,

    // File mode: give all six paths to run on existing artifacts.
    /// Training features (.sgvf); enables file mode.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Annotated (possibly noisy) 0/1 labels (CSV).
    #[arg(long)]
    pub labels_noisy: Option<PathBuf>,
    /// Ground-truth 0/1 labels (CSV), for the recovery report.
    #[arg(long)]
    pub labels_clean: Option<PathBuf>,
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,

    /// Attribute heads per image (M).
    #[arg(long, default_value_t = 3)]
    pub attributes: usize,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub val_lr: f64,
    #[arg(long, default_value_t = 30)]
    pub val_epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub val_batch: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Cosine)]
    pub schedule: ScheduleArg,
    /// Weight of the original annotation in the soft mix.
    #[arg(long, default_value_t = 0.7)]
    pub lambda: f64,
    /// Neighbour nodes consulted per noisy sample.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub clf_lr: f64,
    #[arg(long, default_value_t = 30)]
    pub clf_epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub clf_batch: usize,
    /// Comma-separated epochs at which the classifier rate decays.
    #[arg(long, default_value = "23,27")]
    pub milestones: String,
    #[arg(long, default_value_t = 0.1)]
    pub decay: f64,
    /// Label-smoothing strength for the baseline classifier.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving every artifact and report.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl PipelineArgs {
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n: self.n,
            c: self.classes,
            z: self.embed_dim,
            d: self.feature_dim,
            max_positives: self.max_positives,
            noise_rate: self.noise_rate,
            flip_prob: self.flip_prob,
            feature_noise: self.feature_noise,
            seed: self.seed,
        }
    }

    pub fn val_config(&self) -> ValConfig {
        ValConfig {
            attributes: self.attributes,
            beta: self.beta,
            learning_rate: self.val_lr,
            epochs: self.val_epochs,
            batch_size: self.val_batch,
            schedule: self.schedule.into(),
            seed: self.seed,
        }
    }

    pub fn relabel_config(&self) -> RelabelConfig {
        RelabelConfig { lambda: self.lambda, k: self.k }
    }

    pub fn clf_config(&self) -> sgval_core::Result<ClfConfig> {
        Ok(ClfConfig {
            learning_rate: self.clf_lr,
            epochs: self.clf_epochs,
            batch_size: self.clf_batch,
            milestones: parse_milestones(&self.milestones)?,
            decay: self.decay,
            seed: self.seed,
        })
    }
}

/// Expands `--config FILE` into flag defaults. The file's key=value lines
/// become `--key value` tokens spliced in right after the subcommand, so
/// flags the user actually typed override them (last occurrence wins).
pub fn with_config_defaults(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut config: Option<PathBuf> = None;
    let mut sub_pos: Option<usize> = None;
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if let Some(rest) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(rest));
        } else if s == "--config" {
            if let Some(v) = argv.get(i + 1) {
                config = Some(PathBuf::from(v));
            }
            i += 2;
            continue;
        } else if s == "--threads" {
            i += 2;
            continue;
        } else if s.starts_with('-') {
            // flag without a detached value, or --key=value
        } else if sub_pos.is_none() {
            sub_pos = Some(i);
        }
        i += 1;
    }

    let (Some(path), Some(pos)) = (config, sub_pos) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("config {}: {e}", path.display()))?;
    let mut extra: Vec<OsString> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!(
                "config {} line {}: expected key=value, got {raw:?}",
                path.display(),
                ln + 1
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(format!("config {} line {}: empty key", path.display(), ln + 1));
        }
        extra.push(format!("--{key}").into());
        if !value.is_empty() {
            extra.push(value.into());
        }
    }

    let mut out = argv;
    out.splice(pos + 1..pos + 1, extra);
    Ok(out)
}
