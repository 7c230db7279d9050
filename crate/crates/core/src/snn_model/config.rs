use serde::{Deserialize, Serialize};

use crate::array_model::{ArrayGeometry, SteeringDictionary};
use crate::data_gen::AngleGrid;
use crate::{Error, Result};

/// Architecture and loss hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub n_elements: usize,
    pub element_spacing: f64,
    pub grid: AngleGrid,
    /// Width of the first dense layer on `[Re y; Im y]`, before normalization.
    pub signal_in_width: usize,
    /// Dense widths of the signal encoder after normalization.
    pub signal_widths: Vec<usize>,
    /// Output channels of the frequency encoder convolutions (input has 2 channels).
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub padding: usize,
    pub pool: usize,
    /// Dense widths after concatenation; the last one is the embedding size.
    pub fusion_widths: Vec<usize>,
    /// Maximum fraction of elements the sparse augmentation layer may zero.
    pub max_sparsity: f64,
    /// Contrastive margin.
    pub margin: f64,
    /// Weight of the contrastive term in the total loss.
    pub contrastive_weight: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_elements: 20,
            element_spacing: 0.5,
            grid: AngleGrid::default(),
            signal_in_width: 256,
            signal_widths: vec![256; 4],
            conv_channels: vec![16, 32, 64, 64],
            kernel: 3,
            padding: 1,
            pool: 2,
            fusion_widths: vec![512, 256, 256, 128],
            max_sparsity: 0.3,
            margin: 1.0,
            contrastive_weight: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_elements == 0 {
            return Err(Error::domain("n_elements must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.max_sparsity) {
            return Err(Error::domain("max_sparsity must lie in [0, 1)"));
        }
        if !(self.margin > 0.0) {
            return Err(Error::domain("margin must be positive"));
        }
        if !(self.contrastive_weight >= 0.0) {
            return Err(Error::domain("contrastive weight must be non-negative"));
        }
        let widths = std::iter::once(&self.signal_in_width)
            .chain(&self.signal_widths)
            .chain(&self.conv_channels)
            .chain(&self.fusion_widths);
        if widths.clone().any(|&w| w == 0) {
            return Err(Error::domain("all widths must be >= 1"));
        }
        if self.signal_widths.is_empty() || self.conv_channels.is_empty() || self.fusion_widths.is_empty() {
            return Err(Error::domain("every encoder stage needs at least one layer"));
        }
        if self.kernel == 0 || self.pool == 0 {
            return Err(Error::domain("kernel and pool widths must be >= 1"));
        }
        self.conv_output_len()?;
        Ok(())
    }

    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    pub fn embedding_dim(&self) -> usize {
        *self.fusion_widths.last().expect("validated non-empty")
    }

    /// Sequence length after every conv + pool stage.
    pub fn conv_output_len(&self) -> Result<usize> {
        let mut len = self.n_grid();
        for _ in &self.conv_channels {
            let padded = len + 2 * self.padding;
            if padded < self.kernel {
                return Err(Error::domain("kernel larger than padded sequence"));
            }
            len = padded - self.kernel + 1;
            if len < self.pool {
                return Err(Error::domain("sequence shorter than pooling window"));
            }
            len /= self.pool;
        }
        Ok(len)
    }

    pub fn frequency_features(&self) -> usize {
        self.conv_output_len().expect("validated") * self.conv_channels.last().expect("validated")
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::ula(self.n_elements, self.element_spacing)
    }

    /// Steering dictionary over the full array for the frequency embedding.
    pub fn dictionary(&self) -> Result<SteeringDictionary> {
        SteeringDictionary::new(self.geometry()?.positions(), &self.grid.angles())
    }

    /// Small architecture with the same layer counts, for tests and gradient checks.
    pub fn tiny(n_elements: usize, grid: AngleGrid) -> Self {
        Self {
            n_elements,
            grid,
            signal_in_width: 6,
            signal_widths: vec![5; 4],
            conv_channels: vec![3, 3, 4, 4],
            fusion_widths: vec![7, 6, 6, 5],
            ..Self::default()
        }
    }
}

/// Ablations of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Sparse augmentation and contrastive loss.
    Snn,
    /// Neither sparse augmentation nor contrastive loss.
    #[serde(rename = "basenet1")]
    BaseNet1,
    /// Sparse augmentation without contrastive loss.
    #[serde(rename = "basenet2")]
    BaseNet2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Snn, Variant::BaseNet1, Variant::BaseNet2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Snn => "snn",
            Variant::BaseNet1 => "basenet1",
            Variant::BaseNet2 => "basenet2",
        }
    }

    /// Sets the sparsity cap and contrastive weight for this variant.
    ///
    /// BaseNet1 zeroes both; BaseNet2 keeps the augmentation (which must be enabled)
    /// and drops the contrastive weight; the full model keeps both and requires a
    /// positive contrastive weight.
    pub fn apply(self, mut config: EncoderConfig) -> Result<EncoderConfig> {
        match self {
            Variant::BaseNet1 => {
                config.max_sparsity = 0.0;
                config.contrastive_weight = 0.0;
            }
            Variant::BaseNet2 => {
                if !(config.max_sparsity > 0.0) {
                    return Err(Error::domain("basenet2 needs max_sparsity > 0"));
                }
                config.contrastive_weight = 0.0;
            }
            Variant::Snn => {
                if !(config.max_sparsity > 0.0) || !(config.contrastive_weight > 0.0) {
                    return Err(Error::domain("snn needs max_sparsity > 0 and contrastive weight > 0"));
                }
            }
        }
        Ok(config)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snn" => Ok(Variant::Snn),
            "basenet1" => Ok(Variant::BaseNet1),
            "basenet2" => Ok(Variant::BaseNet2),
            other => Err(Error::domain(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
