//! Channel estimation from pilots observed through low-resolution ADCs.
//!
//! During training every real dimension of every receive antenna gets the
//! same number of bits (uniform ADC allocation). Two estimators share the
//! [`AngularEstimate`] output: a Bussgang-linearized LMMSE baseline and an
//! EM-tuned GAMP with a Bernoulli-Gaussian prior on the angular coefficients.

mod bussgang;
mod gamp;
mod pilots;

pub use bussgang::{bussgang_gain, estimate_bussgang_lmmse, BussgangStats};
pub use gamp::{estimate_gamp_em, GampOptions, GampReport};
pub use pilots::{
    angular_dictionary, dequantize_observations, gen_pilots, nmse, observe_pilots,
    quantize_observations, AngularDictionaries, AngularEstimate, Observations, PilotBlock,
    AGC_LOADING, NMSE_FLOOR_DB,
};
