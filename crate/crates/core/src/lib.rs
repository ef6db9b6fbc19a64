//! Uncertainty-aware limit order book movement prediction and trading.
//!
//! The pipeline: [`lobdata`] turns snapshot streams into normalized, labelled
//! windows; [`neuralnet`] classifies them with Monte-Carlo dropout;
//! [`uncertainty`] summarizes the samples; [`strategy`] turns predictions into
//! actions; [`backtest`] replays them at the mid-price; [`metrics`] scores the
//! classifier and the daily returns. [`synthgen`] produces seeded synthetic
//! books for every stage.
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! fix the double-precision instantiation used by the command-line tools.

// `!(x > 0.0)` style checks are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod dataset;
pub mod error;
pub mod lobdata;
pub mod metrics;
pub mod neuralnet;
pub mod rng;
pub mod scalar;
pub mod strategy;
pub mod synthgen;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Network = neuralnet::Network<Real>;
pub type Network32 = neuralnet::Network<f32>;
pub type Weights = neuralnet::Weights<Real>;
pub type FeatureWindow = lobdata::FeatureWindow<Real>;
pub type DayWindows = lobdata::DayWindows<Real>;
pub type McSamples = uncertainty::McSamples<Real>;
pub type UncertaintySummary = uncertainty::UncertaintySummary<Real>;
pub type DayPredictions = backtest::DayPredictions<Real>;
