//! Monte Carlo throughput simulator for mmWave MIMO links whose receivers
//! only have a handful of one-bit ADCs with adaptive thresholds.
//!
//! The pipeline per user is: [`channel`] synthesis, [`subchannel`] SVD,
//! [`allocation`] of power and ADCs, [`receiver`] transition laws and
//! [`rate`] evaluation. [`estimation`] covers quantized pilots and
//! [`campaign`] drives whole Monte Carlo runs.

pub mod allocation;
pub mod campaign;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod rate;
pub mod receiver;
pub mod seed;
pub mod subchannel;

pub use allocation::{allocate, waterfill, Allocation, SelectionMode, Strategy};
pub use channel::{ArrayGeometry, ChannelMatrix, ClusterSet, LinkState, LinkTag, C64};
pub use error::{Error, Result};
pub use estimation::{AngularEstimate, PilotBlock};
pub use rate::{RateReport, SchemeTag, TdmaMode};
pub use receiver::{QuantizerSpec, TransitionMatrix};
pub use subchannel::{EffectiveChannel, SubchannelDecomposition};
