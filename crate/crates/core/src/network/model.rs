//! Forward pass: stride-4 encoder, intensive-connection decoder, global
//! foreground perception branch and the fused output head.

use super::arch::{Architecture, ConvSpec, Weights, VGG_BLOCK_DEPTHS};
use super::config::ModelConfig;
use crate::error::{MattingError, Result};
use crate::graph::{Graph, Var};
use crate::raster::{AlphaMatte, RgbImage, Trimap};
use crate::tensor::Tensor;

/// Where a feature map sits in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Encoder(usize),
    /// Concatenated input of decoder stage `i`.
    DecoderInput(usize),
    Upsample(usize),
    Gfp,
}

/// A named intermediate activation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub stage: Stage,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Tensor,
}

impl FeatureMap {
    fn from_tensor(stage: Stage, t: &Tensor) -> Self {
        let (channels, height, width) = t.chw();
        FeatureMap {
            stage,
            channels,
            height,
            width,
            data: t.clone(),
        }
    }
}

/// Network input: RGB planes plus the trimap plane encoded as {0, 0.5, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    pub rgb: Tensor,
    pub trimap: Tensor,
}

impl NetworkInput {
    pub fn new(image: &RgbImage, trimap: &Trimap) -> Result<Self> {
        crate::raster::check_dims(image.dims(), trimap.dims())?;
        let (h, w) = image.dims();
        Ok(NetworkInput {
            rgb: Tensor::new(vec![3, h, w], image.data().to_vec()),
            trimap: Tensor::new(
                vec![1, h, w],
                trimap.labels().iter().map(|l| l.to_unit()).collect(),
            ),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        let (_, h, w) = self.rgb.chw();
        (h, w)
    }

    fn stacked(&self) -> Tensor {
        let mut data = self.rgb.data.clone();
        data.extend_from_slice(&self.trimap.data);
        let (h, w) = self.dims();
        Tensor::new(vec![4, h, w], data)
    }
}

/// Recorded forward pass; keeps the tape for back-propagation.
pub struct Forward<'a> {
    pub graph: Graph<'a>,
    pub encoder: [Var; 5],
    /// `(stage, concatenated decoder input)` for stages 4, 3, 2.
    pub decoder_inputs: Vec<(usize, Var)>,
    pub f_u1: Var,
    pub gfp: Option<Var>,
    pub head_input: Var,
    pub output: Var,
}

impl Forward<'_> {
    pub fn prediction(&self) -> &Tensor {
        self.graph.value(self.output)
    }

    pub fn encoder_features(&self) -> Vec<FeatureMap> {
        self.encoder
            .iter()
            .enumerate()
            .map(|(i, v)| FeatureMap::from_tensor(Stage::Encoder(i + 1), self.graph.value(*v)))
            .collect()
    }

    pub fn decoder_input_features(&self) -> Vec<FeatureMap> {
        self.decoder_inputs
            .iter()
            .map(|(s, v)| FeatureMap::from_tensor(Stage::DecoderInput(*s), self.graph.value(*v)))
            .collect()
    }

    pub fn upsample_feature(&self) -> FeatureMap {
        FeatureMap::from_tensor(Stage::Upsample(1), self.graph.value(self.f_u1))
    }

    pub fn gfp_feature(&self) -> Option<FeatureMap> {
        self.gfp
            .map(|v| FeatureMap::from_tensor(Stage::Gfp, self.graph.value(v)))
    }

    pub fn head_input_channels(&self) -> usize {
        self.graph.value(self.head_input).chw().0
    }
}

/// Applies a convolution whose weight and bias already live on the tape.
pub fn apply_conv(g: &mut Graph<'_>, x: Var, w: Var, b: Var, spec: &ConvSpec) -> Var {
    g.conv2d(x, w, b, spec.geom)
}

/// One global-convolution block: `(1×k → k×1) + (k×1 → 1×k)`, no activation.
/// `params` holds `(weight, bias)` vars for `a_row, a_col, b_col, b_row`.
pub fn global_conv(g: &mut Graph<'_>, x: Var, specs: &[ConvSpec; 4], params: [(Var, Var); 4]) -> Var {
    let a = apply_conv(g, x, params[0].0, params[0].1, &specs[0]);
    let a = apply_conv(g, a, params[1].0, params[1].1, &specs[1]);
    let b = apply_conv(g, x, params[2].0, params[2].1, &specs[2]);
    let b = apply_conv(g, b, params[3].0, params[3].1, &specs[3]);
    g.add(a, b)
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub arch: Architecture,
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Ok(Network {
            config: config.clone(),
            arch: Architecture::new(config)?,
        })
    }

    fn spec(&self, path: &str) -> &ConvSpec {
        self.arch
            .conv(path)
            .unwrap_or_else(|| panic!("layer {path} missing from architecture"))
    }

    fn params_of(&self, g: &mut Graph<'_>, weights: &Weights, path: &str) -> (Var, Var) {
        let w = g.param(weights.slot(&format!("{path}.weight")));
        let b = g.param(weights.slot(&format!("{path}.bias")));
        (w, b)
    }

    fn conv(&self, g: &mut Graph<'_>, weights: &Weights, x: Var, path: &str) -> Var {
        let (w, b) = self.params_of(g, weights, path);
        apply_conv(g, x, w, b, self.spec(path))
    }

    fn conv_relu(&self, g: &mut Graph<'_>, weights: &Weights, x: Var, path: &str) -> Var {
        let y = self.conv(g, weights, x, path);
        g.relu(y)
    }

    /// VGG-16-style encoder with pooling only after blocks 1 and 2.
    pub fn encode(&self, g: &mut Graph<'_>, weights: &Weights, input: Var) -> [Var; 5] {
        let mut x = input;
        let mut feats = [input; 5];
        for (b, &depth) in VGG_BLOCK_DEPTHS.iter().enumerate() {
            if b == 1 || b == 2 {
                x = g.max_pool2(x);
            }
            for j in 0..depth {
                x = self.conv_relu(g, weights, x, &format!("encoder.block{}.conv{}", b + 1, j + 1));
            }
            feats[b] = x;
        }
        feats
    }

    /// Decoder from `F_E^5` up to `F_U^1`. Returns the concatenated input of
    /// stages 4, 3, 2 alongside `F_U^1`.
    pub fn decode_ic(
        &self,
        g: &mut Graph<'_>,
        weights: &Weights,
        enc: &[Var; 5],
    ) -> Result<(Vec<(usize, Var)>, Var)> {
        let dims = |g: &Graph<'_>, v: Var| {
            let (_, h, w) = g.value(v).chw();
            (h, w)
        };
        let (h4, w4) = dims(g, enc[2]);
        for i in [3, 4] {
            if dims(g, enc[i]) != (h4, w4) {
                return Err(MattingError::Internal(format!(
                    "encoder stage {} not at stride 4",
                    i + 1
                )));
            }
        }
        let shrunk: Option<Vec<Var>> = self.config.use_ic.then(|| {
            (2..=5)
                .map(|s| self.conv(g, weights, enc[s - 1], &format!("decoder.shrink{s}")))
                .collect()
        });

        let mut upsampled = self.conv_relu(g, weights, enc[4], "decoder.stage5");
        let mut inputs = Vec::new();
        for stage in (2..=4).rev() {
            let (th, tw) = dims(g, enc[stage - 1]);
            upsampled = g.resize(upsampled, th, tw);
            let mut parts = Vec::new();
            match &shrunk {
                Some(shr) => {
                    for src in (stage..=5).rev() {
                        let v = g.resize(shr[src - 2], th, tw);
                        parts.push(v);
                    }
                }
                None => parts.push(enc[stage - 1]),
            }
            parts.push(upsampled);
            let cat = g.concat(&parts);
            inputs.push((stage, cat));
            upsampled = self.conv_relu(g, weights, cat, &format!("decoder.stage{stage}"));
        }
        let (h1, w1) = dims(g, enc[0]);
        let f_u1 = g.resize(upsampled, h1, w1);
        Ok((inputs, f_u1))
    }

    /// Two stride-2 convolutions followed by two global-convolution blocks.
    pub fn gfp_forward(&self, g: &mut Graph<'_>, weights: &Weights, rgb: Var) -> Result<Var> {
        if !self.config.use_gfp {
            return Err(MattingError::Config("gfp branch disabled in this config".into()));
        }
        let x = self.conv_relu(g, weights, rgb, "gfp.down1");
        let mut x = self.conv_relu(g, weights, x, "gfp.down2");
        for block in ["gfp.global1", "gfp.global2"] {
            let names = ["a_row", "a_col", "b_col", "b_row"];
            let specs: [ConvSpec; 4] =
                names.map(|n| self.spec(&format!("{block}.{n}")).clone());
            let params = names.map(|n| self.params_of(g, weights, &format!("{block}.{n}")));
            let y = global_conv(g, x, &specs, params);
            x = g.relu(y);
        }
        Ok(x)
    }

    /// Records the full forward pass for one sample.
    pub fn run<'a>(&self, weights: &'a Weights, input: &NetworkInput) -> Result<Forward<'a>> {
        let (h, w) = input.dims();
        let s = self.config.input_size;
        if (h, w) != (s, s) {
            return Err(MattingError::DimensionMismatch {
                left: format!("{h}x{w}"),
                right: format!("{s}x{s}"),
            });
        }
        let mut g = Graph::new(&weights.tensors);
        let x = g.input(input.stacked());
        let encoder = self.encode(&mut g, weights, x);
        let (decoder_inputs, f_u1) = self.decode_ic(&mut g, weights, &encoder)?;
        let mut head_parts = vec![encoder[0], f_u1];
        let gfp = if self.config.use_gfp {
            let rgb = g.input(input.rgb.clone());
            let feat = self.gfp_forward(&mut g, weights, rgb)?;
            head_parts.push(g.resize(feat, h, w));
            Some(feat)
        } else {
            None
        };
        let head_input = g.concat(&head_parts);
        let y = self.conv_relu(&mut g, weights, head_input, "head.conv1");
        let y = self.conv_relu(&mut g, weights, y, "head.conv2");
        let y = self.conv(&mut g, weights, y, "head.out");
        let output = g.sigmoid(y);
        Ok(Forward {
            graph: g,
            encoder,
            decoder_inputs,
            f_u1,
            gfp,
            head_input,
            output,
        })
    }

    pub fn predict(&self, weights: &Weights, input: &NetworkInput) -> Result<AlphaMatte> {
        let fwd = self.run(weights, input)?;
        let (h, w) = input.dims();
        AlphaMatte::from_clamped(h, w, fwd.prediction().data.clone())
    }

    /// Encoder output shapes `(c, h, w)` by shape propagation only, without
    /// allocating activations.
    pub fn encoder_shapes(&self) -> [(usize, usize, usize); 5] {
        let (mut h, mut w) = (self.config.input_size, self.config.input_size);
        let mut out = [(0, 0, 0); 5];
        for (b, &depth) in VGG_BLOCK_DEPTHS.iter().enumerate() {
            if b == 1 || b == 2 {
                (h, w) = (h / 2, w / 2);
            }
            let mut c = 0;
            for j in 0..depth {
                let spec = self.spec(&format!("encoder.block{}.conv{}", b + 1, j + 1));
                (h, w) = spec.geom.output_dims(h, w);
                c = spec.geom.out_ch;
            }
            out[b] = (c, h, w);
        }
        out
    }

    /// Shape of the GFP feature by propagation through its convolutions.
    pub fn gfp_shape(&self) -> Option<(usize, usize, usize)> {
        if !self.config.use_gfp {
            return None;
        }
        let (mut h, mut w) = (self.config.input_size, self.config.input_size);
        let mut c = 0;
        // strip convolutions preserve size, so chaining every gfp conv is exact
        for conv in self.arch.convs.iter().filter(|c| c.path.starts_with("gfp.")) {
            (h, w) = conv.geom.output_dims(h, w);
            c = conv.geom.out_ch;
        }
        Some((c, h, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::arch::NetworkParams;
    use crate::raster::TrimapLabel;

    fn input(size: usize) -> NetworkInput {
        let img = RgbImage::from_fn(size, size, |c, y, x| ((c * 7 + y * 3 + x) % 17) as f64 / 16.0);
        let tri = Trimap::new(
            size,
            size,
            (0..size * size)
                .map(|i| match i % 3 {
                    0 => TrimapLabel::Background,
                    1 => TrimapLabel::Unknown,
                    _ => TrimapLabel::Foreground,
                })
                .collect(),
        )
        .unwrap();
        NetworkInput::new(&img, &tri).unwrap()
    }

    #[test]
    fn output_is_bounded_and_deterministic() {
        let cfg = ModelConfig::desk(32);
        let net = Network::new(&cfg).unwrap();
        let weights = Weights::from_params(&NetworkParams::init(&cfg).unwrap()).unwrap();
        let x = input(32);
        let a = net.predict(&weights, &x).unwrap();
        let b = net.predict(&weights, &x).unwrap();
        assert_eq!(a.dims(), (32, 32));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let cfg = ModelConfig::desk(32);
        let net = Network::new(&cfg).unwrap();
        let weights = Weights::from_params(&NetworkParams::init(&cfg).unwrap()).unwrap();
        assert!(net.run(&weights, &input(64)).is_err());
    }

    #[test]
    fn gfp_disabled_shrinks_head_input() {
        for (gfp, extra) in [(false, 0), (true, 8)] {
            let cfg = ModelConfig {
                use_gfp: gfp,
                ..ModelConfig::desk(32)
            };
            let net = Network::new(&cfg).unwrap();
            let weights = Weights::from_params(&NetworkParams::init(&cfg).unwrap()).unwrap();
            let fwd = net.run(&weights, &input(32)).unwrap();
            assert_eq!(
                fwd.head_input_channels(),
                cfg.encoder_channels()[0] + cfg.decoder_channels(2) + extra
            );
            assert_eq!(fwd.gfp.is_some(), gfp);
        }
    }
}
