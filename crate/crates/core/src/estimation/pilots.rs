use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{ArrayGeometry, C64};
use crate::error::{Error, Result};
use crate::receiver::{sar_quantize, QuantizerSpec};

/// AGC full-scale range as a multiple of the analog RMS per real dimension.
pub const AGC_LOADING: f64 = 3.0;

/// NMSE reported for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -200.0;

/// Orthonormal 2-D spatial DFT basis of a planar array, element order
/// `p * cols + q` to match the steering vectors.
pub fn angular_dictionary(geom: &ArrayGeometry) -> DMatrix<C64> {
    let dft = |n: usize| {
        let scale = 1.0 / (n as f64).sqrt();
        DMatrix::from_fn(n, n, |p, k| C64::from_polar(scale, TAU * (p * k) as f64 / n as f64))
    };
    dft(geom.rows).kronecker(&dft(geom.cols))
}

/// Receive and transmit dictionaries for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDictionaries {
    pub rx: DMatrix<C64>,
    pub tx: DMatrix<C64>,
}

impl AngularDictionaries {
    pub fn new(user: &ArrayGeometry, bs: &ArrayGeometry) -> Self {
        Self {
            rx: angular_dictionary(user),
            tx: angular_dictionary(bs),
        }
    }

    /// `A_r^H h A_t`.
    pub fn to_angular(&self, h: &DMatrix<C64>) -> DMatrix<C64> {
        self.rx.adjoint() * h * &self.tx
    }

    /// `A_r g A_t^H`.
    pub fn to_antenna(&self, g: &DMatrix<C64>) -> DMatrix<C64> {
        &self.rx * g * self.tx.adjoint()
    }
}

/// Channel estimate in both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularEstimate {
    pub g_hat: DMatrix<C64>,
    pub h_hat: DMatrix<C64>,
}

/// i.i.d. QPSK pilots, `n_t x n_p`, each column of energy `power`.
pub fn gen_pilots<R: Rng + ?Sized>(n_t: usize, n_p: usize, power: f64, rng: &mut R) -> Result<DMatrix<C64>> {
    if n_t == 0 || n_p == 0 {
        return Err(Error::Domain(format!("pilot block must be nonempty, got {n_t}x{n_p}")));
    }
    let amp = (power / n_t as f64).sqrt() * FRAC_1_SQRT_2;
    Ok(DMatrix::from_fn(n_t, n_p, |_, _| {
        let bits: u8 = rng.random_range(0..4);
        let re = if bits & 1 == 0 { amp } else { -amp };
        let im = if bits & 2 == 0 { amp } else { -amp };
        C64::new(re, im)
    }))
}

/// Analog pilot observations `h x + z`, `z` circular Gaussian of variance
/// `noise_var` per entry.
pub fn observe_pilots<R: Rng + ?Sized>(
    h: &DMatrix<C64>,
    pilots: &DMatrix<C64>,
    noise_var: f64,
    rng: &mut R,
) -> Result<DMatrix<C64>> {
    if h.ncols() != pilots.nrows() {
        return Err(Error::Dimension(format!(
            "channel has {} transmit antennas, pilots {}",
            h.ncols(),
            pilots.nrows()
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Domain(format!("noise variance {noise_var} must be nonnegative")));
    }
    let mut y = h * pilots;
    if noise_var > 0.0 {
        let s = (0.5 * noise_var).sqrt();
        for z in y.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z += C64::new(s * re, s * im);
        }
    }
    Ok(y)
}

/// Per-dimension quantizer used in training.
pub(crate) fn training_quantizer(bits_per_dim: u32, agc_range: f64) -> Result<QuantizerSpec> {
    if !(agc_range > 0.0 && agc_range.is_finite()) {
        return Err(Error::Domain(format!("AGC range {agc_range} must be positive")));
    }
    if bits_per_dim == 0 {
        return Err(Error::Domain("training needs at least one bit per dimension".into()));
    }
    QuantizerSpec::uniform_midrise(bits_per_dim, agc_range)
}

/// Quantizes the real and imaginary parts of `y` separately. Row `r` of the
/// result holds `Re y[r, :]`, row `n_r + r` holds `Im y[r, :]`.
pub fn quantize_observations(y: &DMatrix<C64>, bits_per_dim: u32, agc_range: f64) -> Result<DMatrix<u32>> {
    let q = training_quantizer(bits_per_dim, agc_range)?;
    let n_r = y.nrows();
    let mut out = DMatrix::zeros(2 * n_r, y.ncols());
    for c in 0..y.ncols() {
        for r in 0..n_r {
            let z = y[(r, c)];
            out[(r, c)] = sar_quantize(z.re, &q)? as u32;
            out[(n_r + r, c)] = sar_quantize(z.im, &q)? as u32;
        }
    }
    Ok(out)
}

/// Maps bin indices back to the cell centers.
pub fn dequantize_observations(indices: &DMatrix<u32>, bits_per_dim: u32, agc_range: f64) -> Result<DMatrix<C64>> {
    let q = training_quantizer(bits_per_dim, agc_range)?;
    if indices.nrows() % 2 != 0 {
        return Err(Error::Dimension("quantized block needs an even number of rows".into()));
    }
    let n_r = indices.nrows() / 2;
    let levels = q.levels() as u32;
    if indices.iter().any(|&i| i >= levels) {
        return Err(Error::Quantizer(format!("bin index outside [0, {levels})")));
    }
    Ok(DMatrix::from_fn(n_r, indices.ncols(), |r, c| {
        C64::new(
            q.reconstruct(indices[(r, c)] as usize),
            q.reconstruct(indices[(n_r + r, c)] as usize),
        )
    }))
}

/// What the receiver kept of the pilot observations.
#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Quantized {
        indices: DMatrix<u32>,
        bits_per_dim: u32,
        agc_range: f64,
    },
    /// Infinite-resolution limit.
    Unquantized(DMatrix<C64>),
}

/// Pilots and what the user observed of them during one training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    pub pilots: DMatrix<C64>,
    pub obs: Observations,
    /// Complex noise variance per receive antenna.
    pub noise_var: f64,
}

impl PilotBlock {
    /// Observes `h` through the pilots and quantizes with `bits_per_dim` bits
    /// (or keeps the analog samples when `None`). The AGC range is
    /// [`AGC_LOADING`] times the analog RMS per real dimension.
    pub fn observe<R: Rng + ?Sized>(
        h: &DMatrix<C64>,
        pilots: DMatrix<C64>,
        noise_var: f64,
        bits_per_dim: Option<u32>,
        rng: &mut R,
    ) -> Result<Self> {
        let y = observe_pilots(h, &pilots, noise_var, rng)?;
        let obs = match bits_per_dim {
            None => Observations::Unquantized(y),
            Some(bits) => {
                let rms = (y.norm_squared() / (2 * y.len()) as f64).sqrt();
                let agc_range = if rms > 0.0 { AGC_LOADING * rms } else { 1.0 };
                Observations::Quantized {
                    indices: quantize_observations(&y, bits, agc_range)?,
                    bits_per_dim: bits,
                    agc_range,
                }
            }
        };
        Ok(Self { pilots, obs, noise_var })
    }

    pub fn n_pilots(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn n_rx(&self) -> usize {
        match &self.obs {
            Observations::Quantized { indices, .. } => indices.nrows() / 2,
            Observations::Unquantized(y) => y.nrows(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let cols = match &self.obs {
            Observations::Quantized {
                indices,
                bits_per_dim,
                ..
            } => {
                if indices.iter().any(|&i| i >= (1 << bits_per_dim)) {
                    return Err(Error::Quantizer("bin index out of range".into()));
                }
                indices.ncols()
            }
            Observations::Unquantized(y) => y.ncols(),
        };
        if cols != self.pilots.ncols() || cols == 0 {
            return Err(Error::Dimension(format!(
                "{cols} observations for {} pilots",
                self.pilots.ncols()
            )));
        }
        Ok(())
    }
}

/// `10 log10(||h_hat - h||^2 / ||h||^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(h_true: &DMatrix<C64>, h_hat: &DMatrix<C64>) -> Result<f64> {
    if h_true.shape() != h_hat.shape() {
        return Err(Error::Dimension(format!(
            "{:?} truth vs {:?} estimate",
            h_true.shape(),
            h_hat.shape()
        )));
    }
    let e = h_true.norm_squared();
    if e == 0.0 {
        return Err(Error::Domain("NMSE of an all-zero channel is undefined".into()));
    }
    let r = (h_hat - h_true).norm_squared() / e;
    Ok(if r > 0.0 {
        (10.0 * r.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    })
}
