use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::FEATURES;
use crate::uncertainty::CLASSES;

/// Convolution over the `(time, feature)` plane. Time uses zero "same"
/// padding with stride 1; the feature axis is unpadded with the given stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlock {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub filters: usize,
}

/// One parallel branch of the inception module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InceptionBranch {
    /// `time_kernel × 1` convolution (1 gives a pointwise channel mix).
    Conv { time_kernel: usize, filters: usize },
    /// Max-pool over `pool` timesteps followed by a pointwise convolution.
    PoolConv { pool: usize, filters: usize },
}

impl InceptionBranch {
    pub fn filters(&self) -> usize {
        match *self {
            InceptionBranch::Conv { filters, .. } | InceptionBranch::PoolConv { filters, .. } => filters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Timesteps per input window.
    pub window: usize,
    #[serde(default = "default_features")]
    pub input_features: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub inception: Vec<InceptionBranch>,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_units")]
    pub recurrent_units: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
}

fn default_features() -> usize {
    FEATURES
}
fn default_dropout() -> f64 {
    0.2
}
fn default_units() -> usize {
    64
}
fn default_slope() -> f64 {
    0.01
}

impl Default for ModelConfig {
    fn default() -> Self {
        let block = ConvBlock {
            kernel: (1, 2),
            stride: (1, 2),
            filters: 16,
        };
        Self {
            window: 100,
            input_features: FEATURES,
            conv_blocks: vec![block, block],
            inception: vec![
                InceptionBranch::Conv {
                    time_kernel: 1,
                    filters: 32,
                },
                InceptionBranch::Conv {
                    time_kernel: 3,
                    filters: 32,
                },
                InceptionBranch::PoolConv { pool: 3, filters: 32 },
            ],
            dropout_rate: default_dropout(),
            recurrent_units: default_units(),
            leaky_slope: default_slope(),
        }
    }
}

/// Resolved tensor geometry of a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shapes {
    /// `(width, channels)` entering each conv block, plus the final output.
    pub conv_io: Vec<(usize, usize)>,
    /// Width and channels entering the inception module.
    pub trunk_width: usize,
    pub trunk_channels: usize,
    /// Channels leaving the inception module (equal to `trunk_channels` if it is empty).
    pub inception_channels: usize,
    /// Per-timestep recurrent input size.
    pub recurrent_input: usize,
}

impl ModelConfig {
    pub fn classes(&self) -> usize {
        CLASSES
    }

    pub fn input_len(&self) -> usize {
        self.window * self.input_features
    }

    pub fn shapes(&self) -> Result<Shapes> {
        if self.window == 0 || self.input_features == 0 {
            return Err(Error::Config("window and input_features must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.recurrent_units == 0 {
            return Err(Error::Config("recurrent_units must be positive".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        let (mut width, mut channels) = (self.input_features, 1);
        let mut conv_io = vec![(width, channels)];
        for (i, b) in self.conv_blocks.iter().enumerate() {
            let (kt, kf) = b.kernel;
            let (st, sf) = b.stride;
            if kt == 0 || kf == 0 || sf == 0 || b.filters == 0 {
                return Err(Error::Config(format!(
                    "conv{i}: kernel, stride and filters must be positive"
                )));
            }
            if st != 1 {
                return Err(Error::Config(format!("conv{i}: time stride must be 1")));
            }
            if kf > width {
                return Err(Error::Config(format!(
                    "conv{i}: feature kernel {kf} wider than input width {width}"
                )));
            }
            width = (width - kf) / sf + 1;
            channels = b.filters;
            conv_io.push((width, channels));
        }
        let mut inception_channels = 0;
        for (j, br) in self.inception.iter().enumerate() {
            let ok = match *br {
                InceptionBranch::Conv { time_kernel, filters } => time_kernel > 0 && filters > 0,
                InceptionBranch::PoolConv { pool, filters } => pool > 0 && filters > 0,
            };
            if !ok {
                return Err(Error::Config(format!("inception{j}: sizes must be positive")));
            }
            inception_channels += br.filters();
        }
        if self.inception.is_empty() {
            inception_channels = channels;
        }
        Ok(Shapes {
            conv_io,
            trunk_width: width,
            trunk_channels: channels,
            inception_channels,
            recurrent_input: width * inception_channels,
        })
    }

    /// Canonical JSON used for the weight-file digest.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes_compose() {
        let s = ModelConfig::default().shapes().unwrap();
        assert_eq!(s.conv_io, vec![(40, 1), (20, 16), (10, 16)]);
        assert_eq!(s.inception_channels, 96);
        assert_eq!(s.recurrent_input, 960);
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::default();
        c.dropout_rate = 1.0;
        assert!(c.shapes().is_err());
        let mut c = ModelConfig::default();
        c.conv_blocks[0].stride = (2, 2);
        assert!(c.shapes().is_err());
        let mut c = ModelConfig::default();
        c.conv_blocks.push(ConvBlock {
            kernel: (1, 20),
            stride: (1, 1),
            filters: 4,
        });
        assert!(c.shapes().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ModelConfig::default();
        let back: ModelConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
