use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};

/// VGG-16 block widths.
pub const VGG16_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];

/// Architecture hyperparameters, including the ablation switches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square input side in pixels; must be divisible by 4.
    pub input_size: usize,
    /// Channel widths of the five encoder blocks before division.
    pub base_channels: [usize; 5],
    /// Divides every encoder width (and the decoder widths derived from them).
    pub width_divisor: usize,
    /// Output width of each 1×1 shrink convolution.
    pub shrink_channels: usize,
    pub use_ic: bool,
    pub use_gfp: bool,
    /// Kernel sizes of the two global convolutions; `None` derives
    /// `(input_size/2 − 1, input_size/4 − 1)`.
    pub gfp_kernels: Option<(usize, usize)>,
    pub gfp_channels: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Base,
    BaseIc,
    I2gfp,
}

impl Ablation {
    pub fn flags(self) -> (bool, bool) {
        match self {
            Ablation::Base => (false, false),
            Ablation::BaseIc => (true, false),
            Ablation::I2gfp => (true, true),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Ablation::Base),
            "base_ic" => Ok(Ablation::BaseIc),
            "i2gfp" => Ok(Ablation::I2gfp),
            other => Err(MattingError::Config(format!(
                "unknown ablation '{other}' (expected base, base_ic or i2gfp)"
            ))),
        }
    }
}

impl ModelConfig {
    /// Full-size configuration: 512 input, VGG-16 widths, 16-channel shrink.
    pub fn full_scale() -> Self {
        ModelConfig {
            input_size: 512,
            base_channels: VGG16_WIDTHS,
            width_divisor: 1,
            shrink_channels: 16,
            use_ic: true,
            use_gfp: true,
            gfp_kernels: None,
            gfp_channels: 32,
            seed: 0,
        }
    }

    /// Small CPU-trainable configuration (widths 8, 16, 32, 64, 64).
    pub fn desk(input_size: usize) -> Self {
        ModelConfig {
            input_size,
            base_channels: VGG16_WIDTHS,
            width_divisor: 8,
            shrink_channels: 8,
            use_ic: true,
            use_gfp: true,
            gfp_kernels: None,
            gfp_channels: 8,
            seed: 0,
        }
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        (self.use_ic, self.use_gfp) = ablation.flags();
        self
    }

    pub fn ablation(&self) -> Option<Ablation> {
        match (self.use_ic, self.use_gfp) {
            (false, false) => Some(Ablation::Base),
            (true, false) => Some(Ablation::BaseIc),
            (true, true) => Some(Ablation::I2gfp),
            (false, true) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(MattingError::Config(m));
        if self.input_size == 0 || !self.input_size.is_multiple_of(4) {
            return err(format!(
                "input_size {} must be a positive multiple of 4",
                self.input_size
            ));
        }
        if self.width_divisor == 0 {
            return err("width_divisor must be positive".into());
        }
        for &c in &self.base_channels {
            if c == 0 || c % self.width_divisor != 0 {
                return err(format!(
                    "width_divisor {} does not divide base channel width {c}",
                    self.width_divisor
                ));
            }
        }
        if self.shrink_channels == 0 || self.gfp_channels == 0 {
            return err("shrink_channels and gfp_channels must be positive".into());
        }
        let (k1, k2) = self.resolved_gfp_kernels();
        for k in [k1, k2] {
            if k < 3 || k % 2 == 0 {
                return err(format!("gfp kernel {k} must be odd and at least 3"));
            }
        }
        Ok(())
    }

    pub fn resolved_gfp_kernels(&self) -> (usize, usize) {
        self.gfp_kernels.unwrap_or_else(|| {
            (
                (self.input_size / 2).saturating_sub(1),
                (self.input_size / 4).saturating_sub(1),
            )
        })
    }

    /// Encoder block output widths after division.
    pub fn encoder_channels(&self) -> [usize; 5] {
        self.base_channels.map(|c| c / self.width_divisor)
    }

    /// Output width of decoder stage `stage` ∈ {2..5}; stage 1 is the head.
    pub fn decoder_channels(&self, stage: usize) -> usize {
        (self.encoder_channels()[stage - 1] / 2).max(self.shrink_channels)
    }

    pub fn head_channels(&self) -> usize {
        self.decoder_channels(1)
    }
}
