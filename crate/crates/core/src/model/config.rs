use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How hidden states are pooled over time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Learned softmax weights per time step.
    Attention,
    /// Uniform `1/T` weights; the ablation baseline.
    Mean,
}

impl std::fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AggregationMode::Attention => "attention",
            AggregationMode::Mean => "mean",
        })
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(AggregationMode::Attention),
            "mean" => Ok(AggregationMode::Mean),
            other => Err(Error::Config(format!("unknown mode {other:?} (attention|mean)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub time_steps: usize,
    pub channels: usize,
    pub classes: usize,
    /// Edge length of the input patch.
    pub in_size: usize,
    /// Edge length of the centre-cropped label patch.
    pub out_size: usize,
    /// Encoder depth; the decoder mirrors it.
    pub blocks: usize,
    /// Channels of the first encoder block, doubled per block.
    pub base_channels: usize,
    pub lstm_hidden: usize,
    pub attn_hidden: usize,
    pub mode: AggregationMode,
}

impl Default for ModelConfig {
    /// Desk-scale network for the default synthetic scene.
    fn default() -> Self {
        Self {
            time_steps: 12,
            channels: 4,
            classes: 4,
            in_size: 32,
            out_size: 16,
            blocks: 3,
            base_channels: 8,
            lstm_hidden: 16,
            attn_hidden: 16,
            mode: AggregationMode::Attention,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration exercising every component; used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            time_steps: 4,
            channels: 2,
            classes: 3,
            in_size: 16,
            out_size: 8,
            blocks: 2,
            base_channels: 4,
            lstm_hidden: 8,
            attn_hidden: 8,
            mode: AggregationMode::Attention,
        }
    }

    /// 32 -> 16 patches, three blocks, 256 LSTM units.
    pub fn d1(time_steps: usize, channels: usize, classes: usize) -> Self {
        Self {
            time_steps,
            channels,
            classes,
            in_size: 32,
            out_size: 16,
            blocks: 3,
            base_channels: 32,
            lstm_hidden: 256,
            attn_hidden: 64,
            mode: AggregationMode::Attention,
        }
    }

    /// 64 -> 60 patches, five blocks, 256 LSTM units.
    pub fn d2(time_steps: usize, channels: usize, classes: usize) -> Self {
        Self {
            in_size: 64,
            out_size: 60,
            blocks: 5,
            ..Self::d1(time_steps, channels, classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.blocks == 0 {
            return fail("blocks must be >= 1".into());
        }
        if self.blocks >= usize::BITS as usize || self.in_size % (1usize << self.blocks) != 0 {
            return fail(format!(
                "in_size {} is not divisible by 2^blocks = 2^{}",
                self.in_size, self.blocks
            ));
        }
        if self.in_size == 0 || self.out_size == 0 || self.out_size > self.in_size {
            return fail(format!(
                "out_size {} must be in 1..=in_size ({})",
                self.out_size, self.in_size
            ));
        }
        if (self.in_size - self.out_size) % 2 != 0 {
            return fail(format!(
                "in_size - out_size ({} - {}) must be even for a centred crop",
                self.in_size, self.out_size
            ));
        }
        if self.time_steps < 2 {
            return fail(format!("time_steps must be >= 2, got {}", self.time_steps));
        }
        if self.classes < 2 || self.classes > 255 {
            return fail(format!("classes must be in 2..=255, got {}", self.classes));
        }
        for (name, v) in [
            ("channels", self.channels),
            ("base_channels", self.base_channels),
            ("lstm_hidden", self.lstm_hidden),
            ("attn_hidden", self.attn_hidden),
        ] {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn block_channels(&self, k: usize) -> usize {
        self.base_channels << k
    }

    /// Channel count of the encoder bottleneck.
    pub fn bottleneck_channels(&self) -> usize {
        self.block_channels(self.blocks - 1)
    }

    pub fn bottleneck_size(&self) -> usize {
        self.in_size >> self.blocks
    }

    /// Spatial size of block `k`'s pre-pool output.
    pub fn block_size(&self, k: usize) -> usize {
        self.in_size >> k
    }

    pub fn crop_offset(&self) -> usize {
        (self.in_size - self.out_size) / 2
    }
}
