//! `i2gfp` command-line driver: compose, train, infer, eval, audit.
//!
//! Exit status is 0 on success, 1 on runtime or I/O failure and 2 on a
//! configuration error.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use i2gfp::data::{load_dataset, synthesize_dataset, AugmentationConfig, DatasetSpec, MANIFEST_NAME};
use i2gfp::inference::infer;
use i2gfp::io::{load_rgb, load_trimap, save_alpha};
use i2gfp::metrics::{evaluate, pair_directories, Region};
use i2gfp::network::{Ablation, ModelConfig, NetworkParams};
use i2gfp::toy::toy_sample;
use i2gfp::trainer::{gradient_audit, load_params, train_stage, TrainConfig};
use i2gfp::MattingError;

use settings::{Settings, SettingsError};

#[derive(Debug, Parser)]
#[command(name = "i2gfp", version, about = "Trimap-based image matting pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.iterations=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Composite foregrounds over backgrounds into a training dataset.
    Compose,
    /// Train one stage of the network.
    Train(TrainArgs),
    /// Predict an alpha matte for one image.
    Infer(InferArgs),
    /// Score predicted mattes against ground truth.
    Eval(EvalArgs),
    /// Check analytic gradients against central differences on a toy sample.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    stage: Option<u8>,
    /// base, base_ic or i2gfp.
    #[arg(long)]
    ablation: Option<String>,
    /// Resolve and print the configuration without training.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    trimap: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    trimap: Option<PathBuf>,
    /// unknown (default) or full.
    #[arg(long)]
    region: Option<String>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Every key some command reads. A command ignores the others' keys so one
/// file can drive the whole pipeline; anything outside this list is a typo.
const KNOWN_KEYS: &[&str] = &[
    "audit.probes",
    "audit.seed",
    "audit.size",
    "audit.threshold",
    "aug.brightness",
    "aug.crop_sizes",
    "aug.flip_probability",
    "aug.hue",
    "aug.identity",
    "aug.rotation_deg",
    "aug.saturation",
    "aug.seed",
    "aug.translation",
    "compose.alpha_dir",
    "compose.background_dir",
    "compose.backgrounds_per_foreground",
    "compose.foreground_dir",
    "compose.output_dir",
    "compose.seed",
    "compose.trimap_radius_max",
    "compose.trimap_radius_min",
    "eval.gt_dir",
    "eval.pred_dir",
    "eval.region",
    "eval.report",
    "eval.trimap_dir",
    "infer.checkpoint",
    "infer.image",
    "infer.out",
    "infer.trimap",
    "model.ablation",
    "model.gfp_channels",
    "model.input_size",
    "model.preset",
    "model.seed",
    "model.shrink_channels",
    "model.width_divisor",
    "train.adam_beta1",
    "train.adam_beta2",
    "train.adam_eps",
    "train.batch_size",
    "train.checkpoint_every",
    "train.data_dir",
    "train.iterations",
    "train.lr_initial",
    "train.lr_min",
    "train.output_dir",
    "train.resume_from",
    "train.seed",
    "train.stage",
    "train.strict",
];

/// Configuration-class failure raised by the CLI itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ConfigError(String);

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<SettingsError>() || cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(m) = cause.downcast_ref::<MattingError>() {
            return if m.is_config() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            log::error!("{err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut s = Settings::load(cli.common.config.as_deref(), std::env::vars(), &cli.common.overrides)?;
    log::debug!("raw settings: {}", s.describe());
    match cli.command {
        Command::Compose => cmd_compose(&s),
        Command::Train(a) => {
            if let Some(stage) = a.stage {
                override_cli(&mut s, "train.stage", toml::Value::Integer(stage.into()));
            }
            if let Some(ab) = a.ablation {
                override_cli(&mut s, "model.ablation", toml::Value::String(ab));
            }
            cmd_train(&s, a.dry_run)
        }
        Command::Infer(a) => {
            for (key, v) in [
                ("infer.checkpoint", a.checkpoint),
                ("infer.image", a.image),
                ("infer.trimap", a.trimap),
                ("infer.out", a.out),
            ] {
                override_path(&mut s, key, v);
            }
            cmd_infer(&s)
        }
        Command::Eval(a) => {
            for (key, v) in [
                ("eval.pred_dir", a.pred),
                ("eval.gt_dir", a.gt),
                ("eval.trimap_dir", a.trimap),
                ("eval.report", a.report),
            ] {
                override_path(&mut s, key, v);
            }
            if let Some(r) = a.region {
                override_cli(&mut s, "eval.region", toml::Value::String(r));
            }
            cmd_eval(&s)
        }
        Command::Audit(a) => {
            for (key, v) in [("audit.size", a.size), ("audit.probes", a.probes)] {
                if let Some(v) = v {
                    override_cli(&mut s, key, toml::Value::Integer(v as i64));
                }
            }
            if let Some(seed) = a.seed {
                override_cli(&mut s, "audit.seed", toml::Value::Integer(seed as i64));
            }
            cmd_audit(&s)
        }
    }
}

/// Command-line flags take precedence over every other source.
fn override_cli(s: &mut Settings, key: &str, value: toml::Value) {
    s.insert(key, value, "flag");
}

fn override_path(s: &mut Settings, key: &str, value: Option<PathBuf>) {
    if let Some(p) = value {
        override_cli(s, key, toml::Value::String(p.to_string_lossy().into_owned()));
    }
}

fn echo(command: &str, effective: &serde_json::Value) {
    log::info!("{command}: effective config {effective}");
}

fn cmd_compose(s: &Settings) -> Result<ExitCode> {
    let lo = s.usize("compose.trimap_radius_min")?.unwrap_or(1);
    let hi = s.usize("compose.trimap_radius_max")?.unwrap_or(15);
    let spec = DatasetSpec {
        foreground_dir: s.required_path("compose.foreground_dir")?,
        alpha_dir: s.required_path("compose.alpha_dir")?,
        background_dir: s.required_path("compose.background_dir")?,
        backgrounds_per_foreground: s.usize("compose.backgrounds_per_foreground")?.unwrap_or(1),
        output_dir: s.required_path("compose.output_dir")?,
        seed: s.uint("compose.seed")?.unwrap_or(0),
        trimap_radius: (lo, hi),
    };
    s.reject_unused(KNOWN_KEYS)?;
    echo("compose", &serde_json::to_value(&spec)?);
    let records = synthesize_dataset(&spec)?;
    log::info!(
        "wrote {} samples and {}",
        records.len(),
        spec.output_dir.join(MANIFEST_NAME).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn model_config(s: &Settings) -> Result<ModelConfig> {
    let preset = s.string("model.preset")?.unwrap_or_else(|| "desk".into());
    let mut m = match preset.as_str() {
        "desk" => ModelConfig::desk(s.usize("model.input_size")?.unwrap_or(64)),
        "full" => {
            let mut m = ModelConfig::full_scale();
            if let Some(size) = s.usize("model.input_size")? {
                m.input_size = size;
            }
            m
        }
        other => return Err(config_err(format!("model.preset {other:?} (expected desk or full)"))),
    };
    if let Some(v) = s.usize("model.width_divisor")? {
        m.width_divisor = v;
    }
    if let Some(v) = s.usize("model.shrink_channels")? {
        m.shrink_channels = v;
    }
    if let Some(v) = s.usize("model.gfp_channels")? {
        m.gfp_channels = v;
    }
    if let Some(v) = s.uint("model.seed")? {
        m.seed = v;
    }
    let ablation = s.string("model.ablation")?.unwrap_or_else(|| "i2gfp".into());
    m = m.with_ablation(Ablation::parse(&ablation)?);
    m.validate()?;
    Ok(m)
}

fn augmentation_config(s: &Settings, train_size: usize) -> Result<AugmentationConfig> {
    let mut a = if s.boolean("aug.identity")?.unwrap_or(false) {
        AugmentationConfig::identity(train_size)
    } else {
        AugmentationConfig::scaled(train_size)
    };
    if let Some(v) = s.usize_list("aug.crop_sizes")? {
        a.crop_sizes = v;
    }
    if let Some(v) = s.float("aug.flip_probability")? {
        a.flip_probability = v;
    }
    if let Some(v) = s.float("aug.hue")? {
        a.jitter.hue = v;
    }
    if let Some(v) = s.float("aug.saturation")? {
        a.jitter.saturation = v;
    }
    if let Some(v) = s.float("aug.brightness")? {
        a.jitter.brightness = v;
    }
    if let Some(v) = s.float("aug.rotation_deg")? {
        a.affine.rotation_deg = v;
    }
    if let Some(v) = s.float("aug.translation")? {
        a.affine.translation = v;
    }
    if let Some(v) = s.uint("aug.seed")? {
        a.seed = v;
    }
    Ok(a)
}

fn train_config(s: &Settings, model: &ModelConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let stage = s.uint("train.stage")?.unwrap_or(1);
    let stage = u8::try_from(stage).map_err(|_| config_err(format!("train.stage {stage} out of range")))?;
    let cfg = TrainConfig {
        stage,
        iterations: s.usize("train.iterations")?.unwrap_or(d.iterations),
        batch_size: s.usize("train.batch_size")?.unwrap_or(d.batch_size),
        lr_initial: s.float("train.lr_initial")?.unwrap_or(d.lr_initial),
        lr_min: s.float("train.lr_min")?.unwrap_or(d.lr_min),
        adam_betas: (
            s.float("train.adam_beta1")?.unwrap_or(d.adam_betas.0),
            s.float("train.adam_beta2")?.unwrap_or(d.adam_betas.1),
        ),
        adam_eps: s.float("train.adam_eps")?.unwrap_or(d.adam_eps),
        checkpoint_every: s.usize("train.checkpoint_every")?.unwrap_or(d.checkpoint_every),
        seed: s.uint("train.seed")?.unwrap_or(d.seed),
        resume_from: s.path("train.resume_from")?,
        output_dir: Some(s.required_path("train.output_dir")?),
        strict: s.boolean("train.strict")?.unwrap_or(false),
        augmentation: augmentation_config(s, model.input_size)?,
    };
    cfg.validate()?;
    if cfg.stage == 2 {
        if !model.use_gfp {
            return Err(config_err("stage 2 trains the GFP branch; use --ablation i2gfp"));
        }
        match &cfg.resume_from {
            None => {
                return Err(config_err(
                    "stage 2 needs a checkpoint: set train.resume_from to a stage-1 or stage-2 checkpoint",
                ))
            }
            Some(p) if !p.is_file() => {
                return Err(config_err(format!("checkpoint {} does not exist", p.display())))
            }
            _ => {}
        }
    }
    Ok(cfg)
}

fn cmd_train(s: &Settings, dry_run: bool) -> Result<ExitCode> {
    let model = model_config(s)?;
    let data_dir = s.required_path("train.data_dir")?;
    let cfg = train_config(s, &model)?;
    s.reject_unused(KNOWN_KEYS)?;
    echo(
        "train",
        &json!({"data_dir": data_dir, "model": model, "train": cfg}),
    );
    if dry_run {
        return Ok(ExitCode::SUCCESS);
    }
    let dataset: Vec<_> = load_dataset(&data_dir)
        .with_context(|| format!("loading dataset {}", data_dir.display()))?
        .into_iter()
        .map(|(_, sample)| sample)
        .collect();
    log::info!("training stage {} on {} samples", cfg.stage, dataset.len());
    let out = train_stage(&dataset, &model, &cfg)?;
    if let Some(last) = out.log.last() {
        log::info!("final iteration {}: total loss {:.6}", last.iter, last.total);
    }
    for (iter, path) in &out.checkpoints {
        if let Some(p) = path {
            log::info!("checkpoint at iteration {iter}: {}", p.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_infer(s: &Settings) -> Result<ExitCode> {
    let checkpoint = s.required_path("infer.checkpoint")?;
    let image = s.required_path("infer.image")?;
    let trimap = s.required_path("infer.trimap")?;
    let out = s.required_path("infer.out")?;
    s.reject_unused(KNOWN_KEYS)?;
    echo(
        "infer",
        &json!({"checkpoint": checkpoint, "image": image, "trimap": trimap, "out": out}),
    );
    let params = load_params(&checkpoint)?;
    let img = load_rgb(&image)?;
    let tri = load_trimap(&trimap)?;
    let alpha = infer(&params, &img, &tri)?;
    save_alpha(&alpha, &out)?;
    log::info!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(s: &Settings) -> Result<ExitCode> {
    let pred = s.required_path("eval.pred_dir")?;
    let gt = s.required_path("eval.gt_dir")?;
    let trimap = s.required_path("eval.trimap_dir")?;
    let report_path = s.path("eval.report")?;
    let region = s.string("eval.region")?.unwrap_or_else(|| "unknown".into());
    s.reject_unused(KNOWN_KEYS)?;
    let region = Region::parse(&region)?;
    echo(
        "eval",
        &json!({"pred_dir": pred, "gt_dir": gt, "trimap_dir": trimap, "region": region, "report": report_path}),
    );
    let entries = pair_directories(&pred, &gt, &trimap)?;
    let report = evaluate(&entries, region);
    let text = report.to_json();
    if let Some(p) = &report_path {
        write_text(p, &text)?;
    }
    println!("{text}");
    eprintln!("{}", report.to_table());
    if report.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        log::error!("{} image(s) failed to evaluate", report.failures.len());
        Ok(ExitCode::from(1))
    }
}

fn cmd_audit(s: &Settings) -> Result<ExitCode> {
    let size = s.usize("audit.size")?.unwrap_or(32);
    let probes = s.usize("audit.probes")?.unwrap_or(20);
    let seed = s.uint("audit.seed")?.unwrap_or(0);
    let threshold = s.float("audit.threshold")?.unwrap_or(1e-2);
    let model = model_config(s)?;
    let model = ModelConfig { input_size: size, gfp_kernels: None, ..model };
    s.reject_unused(KNOWN_KEYS)?;
    echo(
        "audit",
        &json!({"model": model, "probes": probes, "seed": seed, "threshold": threshold}),
    );
    let params = NetworkParams::init(&model)?;
    let sample = toy_sample(size, seed, 2);
    let report = gradient_audit(&params, &sample, probes, seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.max_rel_error < threshold {
        Ok(ExitCode::SUCCESS)
    } else {
        log::error!(
            "max relative error {:e} is not below {threshold:e}",
            report.max_rel_error
        );
        Ok(ExitCode::from(1))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
