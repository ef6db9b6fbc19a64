//! Convolution + inception + LSTM classifier with time-consistent dropout and
//! Monte-Carlo sampling.

mod config;
mod io;
mod layers;
mod network;
mod params;
mod train;

pub use config::{ConvBlock, InceptionBranch, ModelConfig, Shapes};
pub use io::{
    config_digest, decode_weights, encode_weights, load_network, load_weights, save_weights, Metadata, WeightFile,
};
pub use network::{DropoutMask, Example, MaskObserver, Mode, Network};
pub use params::{Tensor, Weights};
pub use train::{evaluate, train, EpochLog, Optimizer, Sample, TrainConfig, TrainOutcome, TrainRngs};
