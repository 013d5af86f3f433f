//! Transmit power and one-bit ADC allocation across real subchannels.
//!
//! All gains here are noise-normalized: subchannel `k` sees
//! `y_k = sigma_k x_k + n_k` with unit-variance `n_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-subchannel transmit powers and ADC counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub powers: Vec<f64>,
    pub adc_bits: Vec<u32>,
}

impl Allocation {
    pub fn zeros(s: usize) -> Self {
        Self {
            powers: vec![0.0; s],
            adc_bits: vec![0; s],
        }
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn total_bits(&self) -> u32 {
        self.adc_bits.iter().sum()
    }

    /// Subchannels that actually carry symbols: powered and quantized.
    pub fn carries_data(&self, k: usize) -> bool {
        self.powers[k] > 0.0 && self.adc_bits[k] > 0
    }
}

/// Heuristic used to split power and ADCs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Waterfilling power, uniform ADCs.
    WpUa,
    /// Uniform power, uniform ADCs.
    UpUa,
    /// Everything on the strongest subchannel.
    SpSa,
}

/// Whether selection diversity targets one real subchannel or an I/Q pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionMode {
    #[default]
    Single,
    IqPair,
}

const WATERFILL_REL_TOL: f64 = 1e-10;

/// Powers `max(0, mu - 1/g_k)` summing to `total_power`.
pub fn waterfill(gains_sq: &[f64], total_power: f64) -> Result<Vec<f64>> {
    if gains_sq.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
        return Err(Error::Allocation("gains must be finite and nonnegative".into()));
    }
    if !(total_power >= 0.0 && total_power.is_finite()) {
        return Err(Error::Allocation(format!("total power {total_power} must be nonnegative")));
    }
    let max_gain = gains_sq.iter().copied().fold(0.0, f64::max);
    if max_gain <= 0.0 {
        return Err(Error::Allocation("all subchannel gains are zero".into()));
    }
    if total_power == 0.0 {
        return Ok(vec![0.0; gains_sq.len()]);
    }
    let poured = |mu: f64| -> f64 {
        gains_sq
            .iter()
            .filter(|&&g| g > 0.0)
            .map(|&g| (mu - 1.0 / g).max(0.0))
            .sum()
    };
    // poured(lo) <= P < poured(hi)
    let mut lo = 1.0 / max_gain;
    let mut hi = lo + total_power;
    while hi - lo > WATERFILL_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if poured(mid) > total_power {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // closed-form level on the active set found by bisection
    let level = 0.5 * (lo + hi);
    let mut active: Vec<usize> = (0..gains_sq.len())
        .filter(|&k| gains_sq[k] > 0.0 && 1.0 / gains_sq[k] < level)
        .collect();
    if active.is_empty() {
        active = (0..gains_sq.len()).filter(|&k| gains_sq[k] == max_gain).collect();
    }
    loop {
        let inv_sum: f64 = active.iter().map(|&k| 1.0 / gains_sq[k]).sum();
        let mu = (total_power + inv_sum) / active.len() as f64;
        let before = active.len();
        active.retain(|&k| mu - 1.0 / gains_sq[k] > 0.0);
        if active.len() == before {
            let mut p = vec![0.0; gains_sq.len()];
            for &k in &active {
                p[k] = mu - 1.0 / gains_sq[k];
            }
            return Ok(p);
        }
    }
}

/// `total_power / s_active` on each of `s_active` subchannels.
pub fn uniform_power(s_active: usize, total_power: f64) -> Result<Vec<f64>> {
    if s_active == 0 {
        return Err(Error::Allocation("no active subchannels for uniform power".into()));
    }
    Ok(vec![total_power / s_active as f64; s_active])
}

/// Spreads `n_q` one-bit ADCs over `active` (ordered strongest first) in a
/// vector of length `s`: one each to the strongest when ADCs are scarce,
/// otherwise an even split with the remainder going to the strongest.
pub fn allocate_adcs_uniform(active: &[usize], s: usize, n_q: u32) -> Result<Vec<u32>> {
    let mut bits = vec![0u32; s];
    if n_q == 0 {
        return Ok(bits);
    }
    if active.is_empty() {
        return Err(Error::Allocation(format!("{n_q} ADCs but no active subchannel")));
    }
    if let Some(&bad) = active.iter().find(|&&k| k >= s) {
        return Err(Error::Dimension(format!("active index {bad} outside {s} subchannels")));
    }
    let n = active.len() as u32;
    let (base, extra) = (n_q / n, n_q % n);
    for (rank, &k) in active.iter().enumerate() {
        bits[k] = base + u32::from((rank as u32) < extra);
    }
    Ok(bits)
}

fn strongest_first(sigma: &[f64], keep: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sigma.len()).filter(|&k| keep(k)).collect();
    idx.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    idx
}

/// Waterfilling power, ADCs spread over the powered subchannels.
pub fn wp_ua(sigma: &[f64], total_power: f64, n_q: u32) -> Result<Allocation> {
    let gains_sq: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let powers = waterfill(&gains_sq, total_power)?;
    let active = strongest_first(sigma, |k| powers[k] > 0.0);
    let adc_bits = allocate_adcs_uniform(&active, sigma.len(), n_q)?;
    Ok(Allocation { powers, adc_bits })
}

/// Uniform power and ADCs over every nonzero subchannel.
pub fn up_ua(sigma: &[f64], total_power: f64, n_q: u32) -> Result<Allocation> {
    let active = strongest_first(sigma, |k| sigma[k] > 0.0);
    let per = uniform_power(active.len(), total_power)?;
    let mut powers = vec![0.0; sigma.len()];
    for (&k, p) in active.iter().zip(per) {
        powers[k] = p;
    }
    let adc_bits = allocate_adcs_uniform(&active, sigma.len(), n_q)?;
    Ok(Allocation { powers, adc_bits })
}

/// Selection diversity: all power and ADCs on the strongest subchannel
/// (lowest index on ties), or split evenly over the two strongest in
/// [`SelectionMode::IqPair`].
pub fn sp_sa(sigma: &[f64], total_power: f64, n_q: u32, mode: SelectionMode) -> Result<Allocation> {
    let order = strongest_first(sigma, |k| sigma[k] > 0.0);
    if order.is_empty() {
        return Err(Error::Allocation("no nonzero subchannel to select".into()));
    }
    let mut alloc = Allocation::zeros(sigma.len());
    let picked = match mode {
        SelectionMode::Single => &order[..1],
        SelectionMode::IqPair => &order[..order.len().min(2)],
    };
    let bits = allocate_adcs_uniform(picked, sigma.len(), n_q)?;
    for &k in picked {
        alloc.powers[k] = total_power / picked.len() as f64;
    }
    alloc.adc_bits = bits;
    Ok(alloc)
}

pub fn allocate(strategy: Strategy, sigma: &[f64], total_power: f64, n_q: u32) -> Result<Allocation> {
    match strategy {
        Strategy::WpUa => wp_ua(sigma, total_power, n_q),
        Strategy::UpUa => up_ua(sigma, total_power, n_q),
        Strategy::SpSa => sp_sa(sigma, total_power, n_q, SelectionMode::Single),
    }
}
