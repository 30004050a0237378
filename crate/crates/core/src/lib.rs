//! Online Bayesian classification of IMU movement streams.
//!
//! Each movement class is a chain of segments, each segment a vector
//! autoregressive model of the 6-D accelerometer/gyroscope signal. The
//! [`filter`] tracks the posterior over (movement, segment) sample by sample;
//! [`trainer`] fits per-movement chains by hard (Viterbi) EM with lag
//! selection by BIC. [`baselines`] holds the threshold segmenter and KNN
//! comparison classifier, [`eval`] the metrics and latency analysis.
//!
//! Labels are 0-based in memory with 0 = rest; every file format uses 1-based labels.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod io;
pub mod labels;
pub mod math;
pub mod model;
pub mod stream;
pub mod trainer;

pub use error::{Error, Result};
pub use filter::{classify_sequence, filter_init, filter_predict, filter_step, FilterState, PreparedSpec, StepOutput};
pub use labels::{LabelSequence, Provenance};
pub use model::{HhmmSpec, MovementModel, ObservationFrame, VarModel};
