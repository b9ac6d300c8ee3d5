//! Two-stage training driver: cosine-annealed Adam, checkpoints, a JSONL
//! loss log, and a finite-difference gradient auditor.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{training_view, AugmentationConfig};
use crate::error::{MattingError, Result};
use crate::losses::{sample_loss, LossBreakdown};
use crate::network::{
    Archive, ModelConfig, Network, NetworkInput, NetworkParams, ParamTensor, Weights,
};
use crate::raster::MattingSample;
use crate::seed::{stream_rng, streams};
use crate::tensor::Tensor;

/// Hyperparameters of one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// 1 trains the encoder and decoder; 2 adds the GFP branch.
    pub stage: u8,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Stage-1 checkpoint (warm start for stage 2) or a checkpoint of the
    /// same stage (resume).
    pub resume_from: Option<PathBuf>,
    /// Directory for checkpoints and the loss log; nothing is written if
    /// unset.
    pub output_dir: Option<PathBuf>,
    /// Evaluates batch samples sequentially on the calling thread.
    pub strict: bool,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage: 1,
            iterations: 200_000,
            batch_size: 10,
            lr_initial: 4e-4,
            lr_min: 0.0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            checkpoint_every: 10_000,
            seed: 0,
            resume_from: None,
            output_dir: None,
            strict: false,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MattingError::Config(m));
        if !matches!(self.stage, 1 | 2) {
            return bad(format!("stage must be 1 or 2, got {}", self.stage));
        }
        if self.iterations == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("iterations, batch_size and checkpoint_every must be positive".into());
        }
        if !(self.lr_initial > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_initial) {
            return bad(format!(
                "learning rates must satisfy 0 <= lr_min ({}) <= lr_initial ({}) and lr_initial > 0",
                self.lr_min, self.lr_initial
            ));
        }
        let (b1, b2) = self.adam_betas;
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return bad(format!("adam betas ({b1}, {b2}) must lie in (0, 1)"));
        }
        if self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive".into());
        }
        self.augmentation.validate()
    }
}

/// `lr_min + (lr_initial − lr_min)·(1 + cos(π·iter/iterations))/2`.
pub fn cosine_lr(iter: usize, cfg: &TrainConfig) -> Result<f64> {
    if iter > cfg.iterations {
        return Err(MattingError::Config(format!(
            "iteration {iter} outside schedule of {} iterations",
            cfg.iterations
        )));
    }
    let phase = std::f64::consts::PI * iter as f64 / cfg.iterations as f64;
    // weighted form hits both endpoints exactly
    let w = (1.0 + phase.cos()) / 2.0;
    Ok(cfg.lr_initial * w + cfg.lr_min * (1.0 - w))
}

/// Adam first and second moments per parameter, plus the update count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, ParamTensor>,
    pub v: BTreeMap<String, ParamTensor>,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: BTreeMap<String, ParamTensor> = params
            .tensors
            .iter()
            .map(|(k, t)| {
                (
                    k.clone(),
                    ParamTensor {
                        shape: t.shape.clone(),
                        data: vec![0.0; t.data.len()],
                    },
                )
            })
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update in double precision, stored back in f32.
pub fn adam_update(
    params: &mut NetworkParams,
    state: &mut AdamState,
    grads: &BTreeMap<String, Vec<f64>>,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    let (b1, b2) = betas;
    state.step += 1;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (name, p) in params.tensors.iter_mut() {
        let g = grads
            .get(name)
            .ok_or_else(|| MattingError::Internal(format!("no gradient for {name}")))?;
        let m = &mut state.m.get_mut(name).expect("moment for every parameter").data;
        let v = &mut state.v.get_mut(name).expect("moment for every parameter").data;
        for i in 0..p.data.len() {
            let mi = b1 * m[i] as f64 + (1.0 - b1) * g[i];
            let vi = b2 * v[i] as f64 + (1.0 - b2) * g[i] * g[i];
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            p.data[i] = (p.data[i] as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Loss and parameter gradients of one sample at fixed weights.
pub fn sample_gradients(
    net: &Network,
    weights: &Weights,
    sample: &MattingSample,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let input = NetworkInput::new(&sample.image, &sample.trimap)?;
    let fwd = net.run(weights, &input)?;
    let pred = fwd.prediction();
    let (breakdown, dpred) = sample_loss(&pred.data, sample)?;
    let seed = Tensor::new(pred.shape.clone(), dpred);
    let grads = fwd
        .graph
        .backward(fwd.output, seed)
        .into_iter()
        .zip(&weights.tensors)
        .map(|(g, w)| g.unwrap_or_else(|| Tensor::zeros(w.shape.clone())))
        .collect();
    Ok((breakdown, grads))
}

/// Batch-mean loss and gradients keyed by parameter name. Samples may be
/// evaluated in parallel; the reduction order is fixed.
pub fn batch_gradients(
    net: &Network,
    weights: &Weights,
    batch: &[MattingSample],
    strict: bool,
) -> Result<(LossBreakdown, BTreeMap<String, Vec<f64>>)> {
    let per_sample: Vec<Result<(LossBreakdown, Vec<Tensor>)>> = if strict {
        batch.iter().map(|s| sample_gradients(net, weights, s)).collect()
    } else {
        batch
            .par_iter()
            .map(|s| sample_gradients(net, weights, s))
            .collect()
    };
    let mut losses = Vec::with_capacity(batch.len());
    let mut sum: Vec<Tensor> = weights
        .tensors
        .iter()
        .map(|t| Tensor::zeros(t.shape.clone()))
        .collect();
    for r in per_sample {
        let (b, g) = r?;
        losses.push(b);
        for (acc, t) in sum.iter_mut().zip(&g) {
            acc.add_assign(t);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = BTreeMap::new();
    for (name, t) in weights.names.iter().zip(sum) {
        let data: Vec<f64> = t.data.iter().map(|v| v * scale).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MattingError::NonFinite {
                term: format!("gradient of {name}"),
            });
        }
        grads.insert(name.clone(), data);
    }
    Ok((LossBreakdown::mean(&losses), grads))
}

/// Applies one optimizer step at iteration `iter` and returns the batch loss.
/// On error the parameters and optimizer state are left untouched.
pub fn train_step(
    net: &Network,
    batch: &[MattingSample],
    params: &mut NetworkParams,
    opt: &mut AdamState,
    iter: usize,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let weights = Weights::from_params(params)?;
    let (loss, grads) = batch_gradients(net, &weights, batch, cfg.strict)?;
    let lr = cosine_lr(iter, cfg)?;
    adam_update(params, opt, &grads, lr, cfg.adam_betas, cfg.adam_eps)?;
    Ok(loss)
}

/// Reproducible position of the `slot`-th sample of iteration `iter`: the
/// dataset is walked through a fresh permutation each epoch.
pub fn batch_indices(n: usize, iter: usize, batch_size: usize, seed: u64) -> Vec<usize> {
    let mut cached: Option<(usize, Vec<usize>)> = None;
    (0..batch_size)
        .map(|slot| {
            let pos = iter * batch_size + slot;
            let epoch = pos / n;
            if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut stream_rng(seed, streams::BATCH_ORDER, epoch as u64));
                cached = Some((epoch, perm));
            }
            cached.as_ref().expect("permutation cached").1[pos % n]
        })
        .collect()
}

/// Augmented batch for iteration `iter`. Samples without a transition region
/// fall back to an unaugmented resize.
pub fn make_batch(
    dataset: &[MattingSample],
    iter: usize,
    cfg: &TrainConfig,
    input_size: usize,
) -> Result<Vec<MattingSample>> {
    let aug = AugmentationConfig {
        train_size: input_size,
        ..cfg.augmentation.clone()
    };
    batch_indices(dataset.len(), iter, cfg.batch_size, cfg.seed)
        .into_iter()
        .enumerate()
        .map(|(slot, idx)| {
            let mut rng = stream_rng(
                cfg.seed ^ aug.seed,
                streams::AUGMENT,
                (iter * cfg.batch_size + slot) as u64,
            );
            match training_view(&dataset[idx], &aug, &mut rng) {
                Err(MattingError::NoTransitionRegion) => {
                    log::warn!("sample {idx} has no transition region; using it unaugmented");
                    Ok(resize_sample(&dataset[idx], input_size))
                }
                other => other,
            }
        })
        .collect()
}

/// Bilinear (nearest for the trimap) resize of every member.
pub fn resize_sample(s: &MattingSample, size: usize) -> MattingSample {
    use crate::resample::{resize_bilinear, resize_nearest};
    let (h, w) = s.dims();
    if (h, w) == (size, size) {
        return s.clone();
    }
    s.map_geometry(
        size,
        size,
        |p| resize_bilinear(p, h, w, size, size),
        |p| resize_nearest(p, h, w, size, size),
    )
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub optimizer: AdamState,
    pub train_config: TrainConfig,
    pub stage: u8,
    /// Number of completed iterations.
    pub iteration: usize,
}

/// Batch order and augmentation are pure functions of these two values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_iteration: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    stage: u8,
    iteration: usize,
    step: u64,
    rng_state: RngState,
    train_config: TrainConfig,
}

const OPTIM_M: &str = "optim/m/";
const OPTIM_V: &str = "optim/v/";

impl Checkpoint {
    pub fn rng_state(&self) -> RngState {
        RngState {
            seed: self.train_config.seed,
            next_iteration: self.iteration,
        }
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let meta = CheckpointMeta {
            kind: "checkpoint".into(),
            stage: self.stage,
            iteration: self.iteration,
            step: self.optimizer.step,
            rng_state: self.rng_state(),
            train_config: self.train_config.clone(),
        };
        let metadata =
            serde_json::to_value(meta).map_err(|e| MattingError::Internal(e.to_string()))?;
        let mut archive = self.params.to_archive(metadata);
        for (prefix, moments) in [(OPTIM_M, &self.optimizer.m), (OPTIM_V, &self.optimizer.v)] {
            for (k, t) in moments {
                archive.tensors.insert(format!("{prefix}{k}"), t.clone());
            }
        }
        Ok(archive)
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(archive.metadata.clone())
            .map_err(|e| MattingError::Archive(format!("not a training checkpoint: {e}")))?;
        let params = NetworkParams::from_archive(archive)?;
        let mut optimizer = AdamState::new(&params);
        optimizer.step = meta.step;
        for (prefix, moments) in [(OPTIM_M, &mut optimizer.m), (OPTIM_V, &mut optimizer.v)] {
            for (k, slot) in moments.iter_mut() {
                let t = archive
                    .tensors
                    .get(&format!("{prefix}{k}"))
                    .ok_or_else(|| MattingError::Archive(format!("missing {prefix}{k}")))?;
                if t.shape != slot.shape {
                    return Err(MattingError::Archive(format!("{prefix}{k} has the wrong shape")));
                }
                *slot = t.clone();
            }
        }
        Ok(Checkpoint {
            params,
            optimizer,
            train_config: meta.train_config,
            stage: meta.stage,
            iteration: meta.iteration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

/// Loads network parameters from either a plain parameter archive or a
/// training checkpoint.
pub fn load_params(path: &Path) -> Result<NetworkParams> {
    NetworkParams::from_archive(&Archive::load(path)?)
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub lr: f64,
    pub l1: f64,
    pub comp: f64,
    pub grad: f64,
    pub lap: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Records produced by this call (resumed runs start mid-stream).
    pub log: Vec<LogRecord>,
    /// Iterations at which checkpoints were taken, with their paths if written.
    pub checkpoints: Vec<(usize, Option<PathBuf>)>,
}

pub fn checkpoint_file_name(stage: u8, iteration: usize) -> String {
    format!("stage{stage}_iter{iteration:08}.ckpt")
}

/// Stage-2 parameters warm-started from stage 1: every tensor present in
/// both with the same shape is copied; the head's first convolution keeps
/// its stage-1 input channels and gets zero weights on the new GFP inputs,
/// so the warm-started network computes the stage-1 function.
pub fn warm_start_stage2(stage1: &NetworkParams, stage2_cfg: &ModelConfig) -> Result<NetworkParams> {
    let mut expected = stage2_cfg.clone();
    expected.use_gfp = false;
    expected.gfp_kernels = stage1.config.gfp_kernels;
    expected.gfp_channels = stage1.config.gfp_channels;
    if stage1.config != expected {
        return Err(MattingError::Config(
            "stage-1 checkpoint architecture differs from the stage-2 model apart from GFP".into(),
        ));
    }
    let mut params = NetworkParams::init(stage2_cfg)?;
    for (name, t) in params.tensors.iter_mut() {
        let Some(old) = stage1.tensors.get(name) else {
            continue;
        };
        if old.shape == t.shape {
            *t = old.clone();
        } else if name == "head.conv1.weight" {
            let (out_c, old_in, kh, kw) = (old.shape[0], old.shape[1], old.shape[2], old.shape[3]);
            let new_in = t.shape[1];
            let k = kh * kw;
            let mut data = vec![0.0f32; out_c * new_in * k];
            for o in 0..out_c {
                data[o * new_in * k..o * new_in * k + old_in * k]
                    .copy_from_slice(&old.data[o * old_in * k..(o + 1) * old_in * k]);
            }
            t.data = data;
        } else {
            return Err(MattingError::Internal(format!(
                "unexpected shape change for {name}"
            )));
        }
    }
    Ok(params)
}

fn starting_state(model: &ModelConfig, cfg: &TrainConfig) -> Result<(ModelConfig, Checkpoint)> {
    let mut model = model.clone();
    if cfg.stage == 1 && model.use_gfp {
        log::info!("stage 1 trains without the GFP branch");
        model.use_gfp = false;
    }
    if cfg.stage == 2 && !model.use_gfp {
        return Err(MattingError::Config(
            "stage 2 trains the GFP branch; the model must enable it".into(),
        ));
    }
    let fresh = |params: NetworkParams| Checkpoint {
        optimizer: AdamState::new(&params),
        params,
        train_config: cfg.clone(),
        stage: cfg.stage,
        iteration: 0,
    };
    let Some(path) = &cfg.resume_from else {
        if cfg.stage == 2 {
            return Err(MattingError::Config(
                "stage 2 requires a stage-1 checkpoint in resume_from".into(),
            ));
        }
        return Ok((model.clone(), fresh(NetworkParams::init(&model)?)));
    };
    let ckpt = Checkpoint::load(path)?;
    match (ckpt.stage, cfg.stage) {
        (s, t) if s == t => {
            if ckpt.params.config != model {
                return Err(MattingError::Config(format!(
                    "checkpoint {} was trained with a different model configuration",
                    path.display()
                )));
            }
            if ckpt.iteration > cfg.iterations {
                return Err(MattingError::Config(format!(
                    "checkpoint is at iteration {} beyond the configured {}",
                    ckpt.iteration, cfg.iterations
                )));
            }
            let mut resumed = ckpt;
            resumed.train_config = cfg.clone();
            Ok((model, resumed))
        }
        (1, 2) => Ok((model.clone(), fresh(warm_start_stage2(&ckpt.params, &model)?))),
        (s, t) => Err(MattingError::Config(format!(
            "cannot start stage {t} from a stage-{s} checkpoint"
        ))),
    }
}

/// Runs one stage to `cfg.iterations`, checkpointing every
/// `checkpoint_every` iterations and at the end.
pub fn train_stage(
    dataset: &[MattingSample],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(MattingError::Config("training dataset is empty".into()));
    }
    let (model, mut state) = starting_state(model, cfg)?;
    let net = Network::new(&model)?;
    let mut log_file = match &cfg.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| MattingError::io(dir, e))?;
            let path = dir.join(format!("train_log_stage{}.jsonl", cfg.stage));
            let resuming = state.iteration > 0;
            let f = OpenOptions::new()
                .create(true)
                .write(true)
                .append(resuming)
                .truncate(!resuming)
                .open(&path)
                .map_err(|e| MattingError::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    for iter in state.iteration..cfg.iterations {
        let batch = make_batch(dataset, iter, cfg, model.input_size)?;
        let lr = cosine_lr(iter, cfg)?;
        let b = train_step(&net, &batch, &mut state.params, &mut state.optimizer, iter, cfg)?;
        state.iteration = iter + 1;
        let record = LogRecord {
            iter,
            lr,
            l1: b.l1,
            comp: b.comp,
            grad: b.grad,
            lap: b.lap,
            total: b.total,
        };
        if let Some((f, path)) = log_file.as_mut() {
            let line =
                serde_json::to_string(&record).map_err(|e| MattingError::Internal(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| MattingError::io(&*path, e))?;
        }
        log::debug!("iter {iter} lr {lr:.3e} total {:.5}", b.total);
        log.push(record);
        let done = state.iteration;
        if done % cfg.checkpoint_every == 0 || done == cfg.iterations {
            let path = match &cfg.output_dir {
                Some(dir) => {
                    let p = dir.join(checkpoint_file_name(cfg.stage, done));
                    state.save(&p)?;
                    Some(p)
                }
                None => None,
            };
            checkpoints.push((done, path));
        }
    }
    Ok(TrainOutcome {
        checkpoint: state,
        log,
        checkpoints,
    })
}

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn num_params(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, v: f64);
    fn name(&self, i: usize) -> String;
    fn loss(&self) -> Result<f64>;
    fn gradient(&self) -> Result<Vec<f64>>;
    /// Identifies the smooth piece containing the current point; objectives
    /// without kinks keep the default.
    fn kink_signature(&self) -> Result<u64> {
        Ok(0)
    }
}

/// The full training loss of one sample as a function of the weights.
pub struct NetworkObjective {
    net: Network,
    weights: Weights,
    sample: MattingSample,
    offsets: Vec<usize>,
}

impl NetworkObjective {
    pub fn new(params: &NetworkParams, sample: MattingSample) -> Result<Self> {
        let net = Network::new(&params.config)?;
        let weights = Weights::from_params(params)?;
        let mut offsets = vec![0];
        for t in &weights.tensors {
            offsets.push(offsets.last().unwrap() + t.len());
        }
        Ok(NetworkObjective {
            net,
            weights,
            sample,
            offsets,
        })
    }

    fn locate(&self, i: usize) -> (usize, usize) {
        let t = self.offsets.partition_point(|&o| o <= i) - 1;
        (t, i - self.offsets[t])
    }
}

impl Objective for NetworkObjective {
    fn num_params(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn param(&self, i: usize) -> f64 {
        let (t, j) = self.locate(i);
        self.weights.tensors[t].data[j]
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (t, j) = self.locate(i);
        self.weights.tensors[t].data[j] = v;
    }

    fn name(&self, i: usize) -> String {
        let (t, j) = self.locate(i);
        format!("{}[{j}]", self.weights.names[t])
    }

    fn loss(&self) -> Result<f64> {
        let input = NetworkInput::new(&self.sample.image, &self.sample.trimap)?;
        let fwd = self.net.run(&self.weights, &input)?;
        Ok(sample_loss(&fwd.prediction().data, &self.sample)?.0.total)
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let (_, grads) = sample_gradients(&self.net, &self.weights, &self.sample)?;
        Ok(grads.into_iter().flat_map(|t| t.data).collect())
    }

    fn kink_signature(&self) -> Result<u64> {
        let input = NetworkInput::new(&self.sample.image, &self.sample.trimap)?;
        let fwd = self.net.run(&self.weights, &input)?;
        let loss_sig = crate::losses::kink_signature(&fwd.prediction().data, &self.sample)?;
        Ok(fwd.graph.kink_signature() ^ loss_sig.rotate_left(17))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon: f64,
    /// Probes whose difference interval stays on one smooth piece.
    pub probes: Vec<ProbeResult>,
    /// Probes whose `±ε` interval crosses a ReLU, max-pool or `|·|` kink;
    /// reported but excluded from `max_rel_error`.
    pub straddling: Vec<ProbeResult>,
    pub max_rel_error: f64,
}

pub const AUDIT_EPSILON: f64 = 1e-3;

/// Gradients below this magnitude on both sides count as agreeing zeros.
pub const AUDIT_ZERO_FLOOR: f64 = 1e-10;

/// Upper bound on candidates drawn per requested probe.
pub const AUDIT_MAX_DRAWS_PER_PROBE: usize = 50;

/// `|a − n| / max(|a|, |n|)`, or 0 when both are below the zero floor.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < AUDIT_ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares the analytic gradient with central differences at parameters
/// drawn uniformly without replacement until `n_probes` of them have a
/// kink-free difference interval (or the draw budget runs out).
pub fn audit_objective(
    obj: &mut dyn Objective,
    n_probes: usize,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<AuditReport> {
    let grad = obj.gradient()?;
    let base = obj.kink_signature()?;
    let n = obj.num_params();
    let budget = (n_probes * AUDIT_MAX_DRAWS_PER_PROBE).min(n);
    let mut probes = Vec::with_capacity(n_probes);
    let mut straddling = Vec::new();
    for i in rand::seq::index::sample(rng, n, budget) {
        if probes.len() == n_probes {
            break;
        }
        let x = obj.param(i);
        obj.set_param(i, x + epsilon);
        let up = obj.loss()?;
        let up_sig = obj.kink_signature()?;
        obj.set_param(i, x - epsilon);
        let down = obj.loss()?;
        let down_sig = obj.kink_signature()?;
        obj.set_param(i, x);
        let numeric = (up - down) / (2.0 * epsilon);
        let result = ProbeResult {
            name: obj.name(i),
            analytic: grad[i],
            numeric,
            rel_error: relative_error(grad[i], numeric),
        };
        if up_sig == base && down_sig == base {
            probes.push(result);
        } else {
            straddling.push(result);
        }
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(AuditReport {
        epsilon,
        probes,
        straddling,
        max_rel_error,
    })
}

/// Finite-difference audit of the full training loss for one sample.
pub fn gradient_audit(
    params: &NetworkParams,
    sample: &MattingSample,
    n_probes: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mut obj = NetworkObjective::new(params, sample.clone())?;
    let mut rng = stream_rng(seed, streams::AUDIT, 0);
    audit_objective(&mut obj, n_probes, AUDIT_EPSILON, &mut rng)
}
