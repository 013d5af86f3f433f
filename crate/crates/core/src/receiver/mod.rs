//! Adaptive-threshold one-bit ADC receiver.
//!
//! [`quantizer`] holds the multi-bit quantizers the receiver emulates,
//! [`adaptive`] the channel-use level engine driven by selection matrices and
//! threshold coefficient schedules, and [`transition`] the discrete channel
//! laws used for rate evaluation.

pub mod adaptive;
pub mod quantizer;
pub mod transition;

pub use adaptive::{AdaptiveReceiver, ReceiverConfig, ThresholdRule};
pub use quantizer::{
    direct_bin, midpoint_thresholds, pam_constellation, sar_quantize, QuantizerSpec, MAX_PAM_LEVELS,
};
pub use transition::{normal_cdf, transition_matrix_awgn, transition_matrix_mc, TransitionMatrix};
