//! Achievable rates of the quantized subchannel scheme and the unquantized
//! Shannon benchmarks.

use serde::{Deserialize, Serialize};

use crate::allocation::{waterfill, Allocation};
use crate::error::{Error, Result};
use crate::receiver::{
    midpoint_thresholds, pam_constellation, transition_matrix_awgn, transition_matrix_mc,
    TransitionMatrix,
};
use crate::seed::rng_from;
use crate::subchannel::EffectiveChannel;

/// Bits per real symbol under the 16-PAM modulation cap.
pub const MODULATION_CAP_BITS: u32 = 4;

/// Default Monte Carlo draws per interference-aware transition matrix.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// I(X; Y) in bits for a uniform input over the rows of `m`.
pub fn mutual_information(m: &TransitionMatrix) -> Result<f64> {
    let p = m.matrix();
    let rows = p.nrows();
    let cols = p.ncols();
    let w = 1.0 / rows as f64;
    let mut py = vec![0.0; cols];
    for i in 0..rows {
        let mut s = 0.0;
        for (j, acc) in py.iter_mut().enumerate() {
            let x = p[(i, j)];
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Quantizer(format!("entry ({i}, {j}) = {x} is not a probability")));
            }
            *acc += w * x;
            s += x;
        }
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Quantizer(format!("row {i} sums to {s}")));
        }
    }
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let x = p[(i, j)];
            if x > 0.0 {
                mi += w * x * (x / py[j]).log2();
            }
        }
    }
    Ok(mi.clamp(0.0, (rows as f64).log2()))
}

/// Channel-state knowledge used to design the transmitter and receiver.
#[derive(Debug, Clone, Copy)]
pub enum Csi<'a> {
    /// Design and evaluation use the true subchannel gains.
    Perfect,
    /// Design used an estimate; evaluation goes through the true channel.
    Estimated(Mismatch<'a>),
}

/// True channel seen through an estimate-designed combiner and precoder.
#[derive(Debug, Clone, Copy)]
pub struct Mismatch<'a> {
    /// `u_est^T G_true v_est`, noise-whitened.
    pub effective: &'a EffectiveChannel,
    /// True singular values, for the Shannon benchmark.
    pub true_sigma: &'a [f64],
    pub mc_samples: usize,
    pub seed: u64,
}

/// Scheme that produced a [`RateReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeTag {
    WpUa,
    UpUa,
    SpSa,
    DlProposed,
    DlNaive,
}

/// TDMA receiver behaviour for the downlink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TdmaMode {
    /// ADCs stay on every slot and keep refining the buffered sample.
    Proposed,
    /// ADCs only quantize in the user's own slot.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Mutual information per subchannel per symbol, bits.
    pub per_subchannel_bits: Vec<f64>,
    /// Bits per channel use (bps/Hz).
    pub total_bps_per_hz: f64,
    /// `min(C, n_q)`, or `min(C / n_u, n_q)` for the downlink.
    pub benchmark_truncated: f64,
    pub scheme_tag: SchemeTag,
}

fn constellation_bits(adc_bits: u32) -> u32 {
    adc_bits.min(MODULATION_CAP_BITS)
}

/// Symbols transmitted on each subchannel, empty when it carries no data.
fn transmitted_points(alloc: &Allocation, symbol_bits: &[u32]) -> Result<Vec<Vec<f64>>> {
    (0..alloc.len())
        .map(|k| {
            if alloc.carries_data(k) && symbol_bits[k] > 0 {
                pam_constellation(1 << symbol_bits[k], alloc.powers[k])
            } else {
                Ok(Vec::new())
            }
        })
        .collect()
}

/// Rate of one real subchannel with perfect CSI: `2^min(n_bits, cap)`-PAM at
/// power `power` through gain `sigma`, detected with midpoint thresholds.
pub fn subchannel_rate(sigma: f64, power: f64, n_bits: u32, cap_bits: u32) -> Result<f64> {
    let bits = n_bits.min(cap_bits);
    if bits == 0 || sigma == 0.0 || power == 0.0 {
        return Ok(0.0);
    }
    let pts = pam_constellation(1 << bits, power)?;
    let thr: Vec<f64> = midpoint_thresholds(&pts)?.into_iter().map(|t| sigma * t).collect();
    let m = transition_matrix_awgn(&pts, &thr, sigma, 1.0)?;
    mutual_information(&m)
}

/// Rate of subchannel `k` under mismatched CSI. Thresholds follow the designed
/// gain `design_sigma`; the symbol goes through the true effective gain, and
/// every other data-carrying subchannel leaks in through its off-diagonal term.
fn mismatched_subchannel_rate(
    k: usize,
    design_sigma: f64,
    points: &[Vec<f64>],
    mm: &Mismatch<'_>,
) -> Result<f64> {
    let own = &points[k];
    if own.is_empty() || design_sigma == 0.0 {
        return Ok(0.0);
    }
    let n_tx = points.len();
    let g = &mm.effective.g;
    if k >= g.nrows() || n_tx > g.ncols() {
        return Err(Error::Dimension(format!(
            "effective channel {}x{} too small for {n_tx} subchannels",
            g.nrows(),
            g.ncols()
        )));
    }
    let gain_row: Vec<f64> = (0..n_tx).map(|j| g[(k, j)]).collect();
    let thresholds: Vec<f64> = midpoint_thresholds(own)?
        .into_iter()
        .map(|t| design_sigma * t)
        .collect();
    let mut rng = rng_from(mm.seed, &[k as u64, own.len() as u64]);
    let m = transition_matrix_mc(own, &thresholds, &gain_row, k, points, 1.0, mm.mc_samples, &mut rng)?;
    mutual_information(&m)
}

fn per_subchannel_rates(
    sigma: &[f64],
    alloc: &Allocation,
    symbol_bits: &[u32],
    csi: &Csi<'_>,
) -> Result<Vec<f64>> {
    if alloc.len() != sigma.len() {
        return Err(Error::Dimension(format!(
            "allocation over {} subchannels, {} gains",
            alloc.len(),
            sigma.len()
        )));
    }
    match csi {
        Csi::Perfect => (0..sigma.len())
            .map(|k| {
                if alloc.carries_data(k) {
                    subchannel_rate(sigma[k], alloc.powers[k], symbol_bits[k], MODULATION_CAP_BITS)
                } else {
                    Ok(0.0)
                }
            })
            .collect(),
        Csi::Estimated(mm) => {
            let points = transmitted_points(alloc, symbol_bits)?;
            (0..sigma.len())
                .map(|k| mismatched_subchannel_rate(k, sigma[k], &points, mm))
                .collect()
        }
    }
}

fn benchmark_sigma<'a>(sigma: &'a [f64], csi: &Csi<'a>) -> &'a [f64] {
    match csi {
        Csi::Perfect => sigma,
        Csi::Estimated(mm) => mm.true_sigma,
    }
}

/// Point-to-point rate of an allocation over the subchannels `sigma` (the
/// gains the allocation was designed for).
pub fn ptp_rate(sigma: &[f64], alloc: &Allocation, csi: &Csi<'_>, scheme: SchemeTag) -> Result<RateReport> {
    let symbol_bits: Vec<u32> = alloc.adc_bits.iter().map(|&b| constellation_bits(b)).collect();
    let per = per_subchannel_rates(sigma, alloc, &symbol_bits, csi)?;
    let bench = truncated_benchmark(benchmark_sigma(sigma, csi), alloc.total_power(), alloc.total_bits(), 1)?;
    Ok(RateReport {
        total_bps_per_hz: per.iter().sum(),
        per_subchannel_bits: per,
        benchmark_truncated: bench,
        scheme_tag: scheme,
    })
}

/// Waterfilling capacity `sum_k 1/2 log2(1 + sigma_k^2 P_k)` of the real subchannels.
pub fn shannon_capacity(sigma: &[f64], total_power: f64) -> Result<f64> {
    if total_power == 0.0 || sigma.iter().all(|&s| s == 0.0) {
        return Ok(0.0);
    }
    let gains_sq: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let p = waterfill(&gains_sq, total_power)?;
    Ok(gains_sq
        .iter()
        .zip(&p)
        .map(|(g, pk)| 0.5 * (1.0 + g * pk).log2())
        .sum())
}

/// Truncated benchmark `min(C / n_u, n_q)` of the true subchannels `sigma`
/// under power budget `total_power`.
pub fn truncated_benchmark(sigma: &[f64], total_power: f64, n_q: u32, n_u: u32) -> Result<f64> {
    if n_u == 0 {
        return Err(Error::Domain("downlink needs at least one user".into()));
    }
    let c = shannon_capacity(sigma, total_power)? / f64::from(n_u);
    Ok(c.min(f64::from(n_q)))
}

/// Per-channel-use downlink rate of a user served once every `n_u` slots.
///
/// In the proposed mode the buffered sample keeps being refined in the
/// other users' slots, so subchannel `k` supports `2^min(n_u * n_q,k, cap)`
/// levels; the naive receiver gets `2^min(n_q,k, cap)`.
pub fn dl_user_rate(
    sigma: &[f64],
    alloc: &Allocation,
    n_u: u32,
    mode: TdmaMode,
    csi: &Csi<'_>,
) -> Result<RateReport> {
    if n_u == 0 {
        return Err(Error::Domain("downlink needs at least one user".into()));
    }
    let looks = match mode {
        TdmaMode::Proposed => n_u,
        TdmaMode::Naive => 1,
    };
    let symbol_bits: Vec<u32> = alloc
        .adc_bits
        .iter()
        .map(|&b| constellation_bits(b.saturating_mul(looks)))
        .collect();
    let per = per_subchannel_rates(sigma, alloc, &symbol_bits, csi)?;
    let bench = truncated_benchmark(benchmark_sigma(sigma, csi), alloc.total_power(), alloc.total_bits(), n_u)?;
    Ok(RateReport {
        total_bps_per_hz: per.iter().sum::<f64>() / f64::from(n_u),
        per_subchannel_bits: per,
        benchmark_truncated: bench,
        scheme_tag: match mode {
            TdmaMode::Proposed => SchemeTag::DlProposed,
            TdmaMode::Naive => SchemeTag::DlNaive,
        },
    })
}

/// Naive TDMA rate from the point-to-point report of the same allocation:
/// the naive receiver runs exactly that link in its own slot. Equal to
/// `dl_user_rate(.., TdmaMode::Naive, ..)` without recomputing transition laws.
pub fn naive_from_ptp(ptp: &RateReport, alloc: &Allocation, benchmark_sigma: &[f64], n_u: u32) -> Result<RateReport> {
    if n_u == 0 {
        return Err(Error::Domain("downlink needs at least one user".into()));
    }
    Ok(RateReport {
        total_bps_per_hz: ptp.per_subchannel_bits.iter().sum::<f64>() / f64::from(n_u),
        per_subchannel_bits: ptp.per_subchannel_bits.clone(),
        benchmark_truncated: truncated_benchmark(benchmark_sigma, alloc.total_power(), alloc.total_bits(), n_u)?,
        scheme_tag: SchemeTag::DlNaive,
    })
}

/// Scales `rate` by the data fraction `(coherence_len - pilot_len) / coherence_len`.
pub fn overhead_scale(rate: f64, pilot_len: u32, coherence_len: u32) -> Result<f64> {
    if pilot_len >= coherence_len {
        return Err(Error::Domain(format!(
            "pilot length {pilot_len} must be shorter than the coherence length {coherence_len}"
        )));
    }
    Ok(rate * f64::from(coherence_len - pilot_len) / f64::from(coherence_len))
}
