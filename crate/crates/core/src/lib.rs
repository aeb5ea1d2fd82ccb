//! Signal-level toolkit for reducing the peak-to-average power ratio of
//! vibration waveforms: statistics, μ-law and learned companders, an RF
//! chain model and the metrics used to compare them.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod compander;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod papr;
pub mod pipeline;
pub mod rf;
pub mod signal;
pub mod special;

pub use error::{Error, Result};
pub use signal::{SignalSet, VibrationSignal};
