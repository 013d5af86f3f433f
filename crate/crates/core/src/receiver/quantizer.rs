//! PAM constellations and the multi-bit quantizers formed from one-bit
//! comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest PAM alphabet per real dimension (4 bits per symbol).
pub const MAX_PAM_LEVELS: usize = 16;

/// Zero-mean, equally spaced PAM points with average energy `power` under a
/// uniform prior.
pub fn pam_constellation(n_levels: usize, power: f64) -> Result<Vec<f64>> {
    if n_levels > MAX_PAM_LEVELS {
        return Err(Error::ModulationCap(n_levels));
    }
    if n_levels < 2 || !n_levels.is_power_of_two() {
        return Err(Error::Domain(format!(
            "PAM size must be a power of two in 2..=16, got {n_levels}"
        )));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::Domain(format!("power {power} must be finite and nonnegative")));
    }
    let m = n_levels as f64;
    // E[x^2] = a^2 (m^2 - 1) / 3 for points a * (2i - (m - 1))
    let a = (3.0 * power / (m * m - 1.0)).sqrt();
    Ok((0..n_levels)
        .map(|i| a * (2.0 * i as f64 - (m - 1.0)))
        .collect())
}

/// Decision thresholds halfway between consecutive points.
pub fn midpoint_thresholds(points: &[f64]) -> Result<Vec<f64>> {
    if points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Quantizer(
            "points must be strictly increasing (duplicates have no midpoint rule)".into(),
        ));
    }
    Ok(points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// A `2^n_bits`-level scalar quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    n_bits: u32,
    thresholds: Vec<f64>,
    reconstruction_points: Vec<f64>,
}

impl QuantizerSpec {
    pub fn new(n_bits: u32, thresholds: Vec<f64>, reconstruction_points: Vec<f64>) -> Result<Self> {
        if n_bits > 16 {
            return Err(Error::Quantizer(format!("{n_bits} bits is unsupported")));
        }
        let levels = 1usize << n_bits;
        if thresholds.len() != levels - 1 || reconstruction_points.len() != levels {
            return Err(Error::Quantizer(format!(
                "{n_bits}-bit quantizer needs {} thresholds and {levels} points, got {} and {}",
                levels - 1,
                thresholds.len(),
                reconstruction_points.len()
            )));
        }
        if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Quantizer("thresholds must be finite and strictly increasing".into()));
        }
        for (j, &r) in reconstruction_points.iter().enumerate() {
            if direct_bin(r, &thresholds) != j {
                return Err(Error::Quantizer(format!(
                    "reconstruction point {r} does not lie in bin {j}"
                )));
            }
        }
        Ok(Self {
            n_bits,
            thresholds,
            reconstruction_points,
        })
    }

    /// Detector for a PAM alphabet: the points themselves with midpoint thresholds.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        if points.len() < 2 || !points.len().is_power_of_two() {
            return Err(Error::Quantizer(format!(
                "need a power-of-two alphabet, got {} points",
                points.len()
            )));
        }
        let thresholds = midpoint_thresholds(points)?;
        Self::new(points.len().trailing_zeros(), thresholds, points.to_vec())
    }

    /// Uniform midrise quantizer with `2^n_bits` cells over `[-range, range]`,
    /// saturating beyond the edges.
    pub fn uniform_midrise(n_bits: u32, range: f64) -> Result<Self> {
        if n_bits == 0 {
            return Err(Error::Quantizer("uniform quantizer needs at least one bit".into()));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::Domain(format!("quantizer range {range} must be positive")));
        }
        let levels = 1usize << n_bits;
        let step = 2.0 * range / levels as f64;
        let thresholds = (1..levels).map(|j| -range + step * j as f64).collect();
        let points = (0..levels)
            .map(|j| -range + step * (j as f64 + 0.5))
            .collect();
        Self::new(n_bits, thresholds, points)
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn levels(&self) -> usize {
        1 << self.n_bits
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn reconstruction_points(&self) -> &[f64] {
        &self.reconstruction_points
    }

    pub fn reconstruct(&self, bin: usize) -> f64 {
        self.reconstruction_points[bin]
    }

    /// Center threshold and spacing when the thresholds are equally spaced.
    pub fn uniform_grid(&self) -> Option<(f64, f64)> {
        let t = &self.thresholds;
        match t.len() {
            0 => Some((0.0, 0.0)),
            1 => Some((t[0], 0.0)),
            n => {
                let step = (t[n - 1] - t[0]) / (n - 1) as f64;
                let uniform = t
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1e-300));
                uniform.then(|| (t[n / 2], step))
            }
        }
    }
}

/// Bin index by direct search: the number of thresholds `<= sample`.
pub fn direct_bin(sample: f64, thresholds: &[f64]) -> usize {
    thresholds.partition_point(|&t| t <= sample)
}

/// Quantizes `sample` with `n_bits` successive binary comparisons, each one
/// halving the candidate bin range. Samples on a threshold go to the upper bin.
pub fn sar_quantize(sample: f64, spec: &QuantizerSpec) -> Result<usize> {
    if sample.is_nan() {
        return Err(Error::Domain("cannot quantize NaN".into()));
    }
    let (mut lo, mut hi) = (0usize, spec.levels());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if sample >= spec.thresholds[mid - 1] {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
