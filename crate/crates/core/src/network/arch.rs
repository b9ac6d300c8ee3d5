//! Layer inventory derived from a [`ModelConfig`], and the parameter store.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{MattingError, Result};
use crate::seed::{stream_rng, streams};
use crate::tensor::{ConvGeometry, Tensor};

/// Standard deviation for 1×1 projection weights.
pub const PROJECTION_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Fixed small Gaussian.
    Projection,
    /// He-style `sqrt(2 / fan_in)` Gaussian.
    FanIn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub path: String,
    pub geom: ConvGeometry,
    pub init: InitKind,
}

impl ConvSpec {
    pub fn weight_path(&self) -> String {
        format!("{}.weight", self.path)
    }

    pub fn bias_path(&self) -> String {
        format!("{}.bias", self.path)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.geom.out_ch, self.geom.in_ch, self.geom.kh, self.geom.kw]
    }
}

fn conv3(path: String, in_ch: usize, out_ch: usize, stride: usize) -> ConvSpec {
    ConvSpec {
        path,
        geom: ConvGeometry {
            in_ch,
            out_ch,
            kh: 3,
            kw: 3,
            stride,
            pad_h: 1,
            pad_w: 1,
        },
        init: InitKind::FanIn,
    }
}

fn pointwise(path: String, in_ch: usize, out_ch: usize) -> ConvSpec {
    ConvSpec {
        path,
        geom: ConvGeometry {
            in_ch,
            out_ch,
            kh: 1,
            kw: 1,
            stride: 1,
            pad_h: 0,
            pad_w: 0,
        },
        init: InitKind::Projection,
    }
}

/// Row (`1×k`) or column (`k×1`) convolution with "same" zero padding.
fn strip(path: String, ch: usize, k: usize, horizontal: bool) -> ConvSpec {
    let pad = (k - 1) / 2;
    let (kh, kw, pad_h, pad_w) = if horizontal {
        (1, k, 0, pad)
    } else {
        (k, 1, pad, 0)
    };
    ConvSpec {
        path,
        geom: ConvGeometry {
            in_ch: ch,
            out_ch: ch,
            kh,
            kw,
            stride: 1,
            pad_h,
            pad_w,
        },
        init: InitKind::FanIn,
    }
}

/// Convolutions per VGG-16 block.
pub const VGG_BLOCK_DEPTHS: [usize; 5] = [2, 2, 3, 3, 3];

/// The four strip convolutions of one global-convolution block, in order
/// `(path A: 1×k then k×1, path B: k×1 then 1×k)`.
pub fn global_block_specs(prefix: &str, ch: usize, k: usize) -> [ConvSpec; 4] {
    [
        strip(format!("{prefix}.a_row"), ch, k, true),
        strip(format!("{prefix}.a_col"), ch, k, false),
        strip(format!("{prefix}.b_col"), ch, k, false),
        strip(format!("{prefix}.b_row"), ch, k, true),
    ]
}

/// Every convolution of the model in forward order.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub convs: Vec<ConvSpec>,
}

impl Architecture {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let enc = cfg.encoder_channels();
        let s = cfg.shrink_channels;
        let mut convs = Vec::new();

        let mut in_ch = 4;
        for (b, &depth) in VGG_BLOCK_DEPTHS.iter().enumerate() {
            for j in 0..depth {
                convs.push(conv3(
                    format!("encoder.block{}.conv{}", b + 1, j + 1),
                    in_ch,
                    enc[b],
                    1,
                ));
                in_ch = enc[b];
            }
        }

        if cfg.use_ic {
            for stage in 2..=5 {
                convs.push(pointwise(
                    format!("decoder.shrink{stage}"),
                    enc[stage - 1],
                    s,
                ));
            }
        }
        convs.push(conv3(
            "decoder.stage5".into(),
            enc[4],
            cfg.decoder_channels(5),
            1,
        ));
        for stage in (2..=4).rev() {
            let upsample = cfg.decoder_channels(stage + 1);
            let skip = if cfg.use_ic {
                (6 - stage) * s
            } else {
                enc[stage - 1]
            };
            convs.push(conv3(
                format!("decoder.stage{stage}"),
                skip + upsample,
                cfg.decoder_channels(stage),
                1,
            ));
        }

        if cfg.use_gfp {
            let g = cfg.gfp_channels;
            let (k1, k2) = cfg.resolved_gfp_kernels();
            convs.push(conv3("gfp.down1".into(), 3, g, 2));
            convs.push(conv3("gfp.down2".into(), g, g, 2));
            convs.extend(global_block_specs("gfp.global1", g, k1));
            convs.extend(global_block_specs("gfp.global2", g, k2));
        }

        let h = cfg.head_channels();
        let head_in = enc[0] + cfg.decoder_channels(2) + if cfg.use_gfp { cfg.gfp_channels } else { 0 };
        convs.push(conv3("head.conv1".into(), head_in, h, 1));
        convs.push(conv3("head.conv2".into(), h, h, 1));
        convs.push(pointwise("head.out".into(), h, 1));
        Ok(Architecture { convs })
    }

    pub fn conv(&self, path: &str) -> Option<&ConvSpec> {
        self.convs.iter().find(|c| c.path == path)
    }

    /// `(path, shape)` for every parameter tensor, weights before biases.
    pub fn shape_manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::with_capacity(2 * self.convs.len());
        for c in &self.convs {
            out.push((c.weight_path(), c.weight_shape()));
            out.push((c.bias_path(), vec![c.geom.out_ch]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.shape_manifest()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// One named parameter tensor stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// All learnable weights and biases, keyed by layer path.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, ParamTensor>,
}

impl NetworkParams {
    /// Zero-mean Gaussian weights, zero biases, deterministic in `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        let arch = Architecture::new(cfg)?;
        let mut tensors = BTreeMap::new();
        for (idx, conv) in arch.convs.iter().enumerate() {
            tensors.insert(conv.weight_path(), init_weight(conv, cfg.seed, idx as u64));
            tensors.insert(
                conv.bias_path(),
                ParamTensor {
                    shape: vec![conv.geom.out_ch],
                    data: vec![0.0; conv.geom.out_ch],
                },
            );
        }
        Ok(NetworkParams {
            config: cfg.clone(),
            tensors,
        })
    }

    /// Checks that the tensor set is exactly what the config's architecture needs.
    pub fn validate(&self) -> Result<()> {
        let arch = Architecture::new(&self.config)?;
        let manifest = arch.shape_manifest();
        if manifest.len() != self.tensors.len() {
            return Err(MattingError::Archive(format!(
                "expected {} parameter tensors, found {}",
                manifest.len(),
                self.tensors.len()
            )));
        }
        for (path, shape) in manifest {
            match self.tensors.get(&path) {
                None => {
                    return Err(MattingError::Archive(format!("missing parameter {path}")));
                }
                Some(t) if t.shape != shape => {
                    return Err(MattingError::Archive(format!(
                        "parameter {path} has shape {:?}, expected {shape:?}",
                        t.shape
                    )));
                }
                Some(t) if t.data.len() != shape.iter().product::<usize>() => {
                    return Err(MattingError::Archive(format!(
                        "parameter {path} buffer length mismatch"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&ParamTensor> {
        self.tensors.get(path)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }
}

fn init_weight(conv: &ConvSpec, seed: u64, index: u64) -> ParamTensor {
    let shape = conv.weight_shape();
    let n: usize = shape.iter().product();
    let std = match conv.init {
        InitKind::Projection => PROJECTION_STD,
        InitKind::FanIn => {
            let g = conv.geom;
            (2.0 / (g.in_ch * g.kh * g.kw) as f64).sqrt()
        }
    };
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut rng = stream_rng(seed, streams::PARAMS, index);
    let data = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
    ParamTensor { shape, data }
}

/// Double-precision working copy of the parameters, ordered like the
/// architecture so graph slots are stable.
#[derive(Debug, Clone)]
pub struct Weights {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
    slots: BTreeMap<String, usize>,
}

impl Weights {
    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        params.validate()?;
        let arch = Architecture::new(&params.config)?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut slots = BTreeMap::new();
        for (path, shape) in arch.shape_manifest() {
            let p = &params.tensors[&path];
            slots.insert(path.clone(), names.len());
            names.push(path);
            tensors.push(Tensor::new(
                shape,
                p.data.iter().map(|&v| v as f64).collect(),
            ));
        }
        Ok(Weights {
            names,
            tensors,
            slots,
        })
    }

    pub fn slot(&self, path: &str) -> usize {
        *self
            .slots
            .get(path)
            .unwrap_or_else(|| panic!("no parameter named {path}"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}
