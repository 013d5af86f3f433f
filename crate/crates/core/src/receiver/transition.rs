//! Discrete input / discrete output channel laws `P(bin | symbol)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::quantizer::direct_bin;
use crate::error::{Error, Result};

/// Row-stochastic matrix, rows indexed by input symbol and columns by output bin.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: DMatrix<f64>,
    /// Samples behind each row when estimated by Monte Carlo.
    samples_per_row: Option<usize>,
}

impl TransitionMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() == 0 || p.ncols() == 0 {
            return Err(Error::Quantizer("empty transition matrix".into()));
        }
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Quantizer("transition probabilities must lie in [0, 1]".into()));
        }
        for (i, row) in p.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Quantizer(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            p,
            samples_per_row: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn inputs(&self) -> usize {
        self.p.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.p.ncols()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[(x, y)]
    }

    pub fn samples_per_row(&self) -> Option<usize> {
        self.samples_per_row
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("input");
        for j in 0..self.outputs() {
            out.push_str(&format!(",bin_{j}"));
        }
        out.push('\n');
        for (i, row) in self.p.row_iter().enumerate() {
            out.push_str(&i.to_string());
            for x in row.iter() {
                out.push_str(&format!(",{x:e}"));
            }
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// `(first threshold, 1 / spacing)` when the thresholds are equally spaced.
fn uniform_grid(thresholds: &[f64]) -> Option<(f64, f64)> {
    let n = thresholds.len();
    if n < 2 {
        return None;
    }
    let step = (thresholds[n - 1] - thresholds[0]) / (n - 1) as f64;
    let uniform = thresholds
        .iter()
        .enumerate()
        .all(|(j, &t)| (t - (thresholds[0] + j as f64 * step)).abs() <= 1e-12 * step.max(t.abs()));
    uniform.then(|| (thresholds[0], 1.0 / step))
}

#[derive(Default)]
struct BitSource {
    word: u64,
    left: u32,
}

impl BitSource {
    fn take<R: Rng + ?Sized>(&mut self, n: u32, rng: &mut R) -> usize {
        if self.left < n {
            self.word = rng.next_u64();
            self.left = 64;
        }
        let v = self.word & ((1u64 << n) - 1);
        self.word >>= n;
        self.left -= n;
        v as usize
    }
}

/// Sum of independent uniformly chosen interferer points.
enum Interference {
    /// Power-of-two constellations merged into lookup tables of all partial
    /// sums, each indexed by a handful of random bits.
    Tables { bias: f64, tables: Vec<(Vec<f64>, u32)> },
    Generic(Vec<Vec<f64>>),
}

impl Interference {
    const TABLE_BITS: u32 = 8;

    fn new(sets: Vec<Vec<f64>>) -> Self {
        if !sets.iter().all(|s| s.len().is_power_of_two()) {
            return Self::Generic(sets);
        }
        let mut bias = 0.0;
        let mut tables = Vec::new();
        let mut cur = (vec![0.0], 0u32);
        for set in sets {
            if set.len() == 1 {
                bias += set[0];
                continue;
            }
            let b = set.len().trailing_zeros();
            if cur.1 > 0 && cur.1 + b > Self::TABLE_BITS {
                tables.push(std::mem::replace(&mut cur, (vec![0.0], 0)));
            }
            let mut next = vec![0.0; cur.0.len() << b];
            for (j, x) in set.iter().enumerate() {
                for (i, y) in cur.0.iter().enumerate() {
                    next[i | (j << cur.1)] = y + x;
                }
            }
            cur = (next, cur.1 + b);
        }
        if cur.1 > 0 {
            tables.push(cur);
        }
        Self::Tables { bias, tables }
    }

    fn draw<R: Rng + ?Sized>(&self, bits: &mut BitSource, rng: &mut R) -> f64 {
        match self {
            Self::Tables { bias, tables } => {
                let mut e = *bias;
                for (t, b) in tables {
                    e += t[bits.take(*b, rng)];
                }
                e
            }
            Self::Generic(sets) => sets.iter().map(|s| s[rng.random_range(0..s.len())]).sum(),
        }
    }
}

/// Bins of every row `m_i + e` against equally spaced thresholds, counted
/// from one histogram over `(floor(e'), frac(e'))` with `e'` the offset in
/// threshold steps. Row `i` lands in `floor(o_i) + floor(e') + carry`, and the
/// carry only depends on where `frac(e')` falls among the row fractions, so
/// each sample costs one small search whatever the number of rows.
struct GridCounter {
    inv_step: f64,
    floors: Vec<i64>,
    /// Rank of each row's carry boundary among `boundaries`.
    ranks: Vec<usize>,
    boundaries: Vec<f64>,
    k_lo: i64,
    k_hi: i64,
    last: i64,
    hist: Vec<u64>,
}

impl GridCounter {
    const MAX_SPAN: i64 = 1 << 12;

    fn new(shifted: &[f64], t0: f64, inv_step: f64, bins: usize) -> Option<Self> {
        let offsets: Vec<f64> = shifted.iter().map(|m| (m - t0) * inv_step + 1.0).collect();
        if offsets.iter().any(|o| !o.is_finite() || o.abs() > Self::MAX_SPAN as f64) {
            return None;
        }
        let floors: Vec<i64> = offsets.iter().map(|o| o.floor() as i64).collect();
        let raw: Vec<f64> = offsets.iter().zip(&floors).map(|(o, &f)| 1.0 - (o - f as f64)).collect();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
        let mut ranks = vec![0; raw.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r;
        }
        let boundaries = order.iter().map(|&i| raw[i]).collect();
        let last = bins as i64 - 1;
        let k_lo = -floors.iter().max()? - 1;
        let k_hi = last - floors.iter().min()?;
        if k_hi - k_lo > Self::MAX_SPAN {
            return None;
        }
        let cells = (k_hi - k_lo + 1) as usize * (raw.len() + 1);
        Some(Self {
            inv_step,
            floors,
            ranks,
            boundaries,
            k_lo,
            k_hi,
            last,
            hist: vec![0; cells],
        })
    }

    fn push(&mut self, e: f64) {
        let x = e * self.inv_step;
        let k = x.floor();
        let c = self.boundaries.partition_point(|&b| b <= x - k);
        let k = (k.max(self.k_lo as f64).min(self.k_hi as f64) as i64 - self.k_lo) as usize;
        self.hist[k * (self.boundaries.len() + 1) + c] += 1;
    }

    fn finish(&self, counts: &mut [u64]) {
        let width = self.boundaries.len() + 1;
        let bins = self.last as usize + 1;
        for (cell, &n) in self.hist.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let k = (cell / width) as i64 + self.k_lo;
            let c = cell % width;
            for (i, (&f, &r)) in self.floors.iter().zip(&self.ranks).enumerate() {
                let bin = (f + k + i64::from(c > r)).clamp(0, self.last) as usize;
                counts[i * bins + bin] += n;
            }
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Closed-form law of `bin(gain * x + n)` with `n ~ N(0, noise_std^2)`.
pub fn transition_matrix_awgn(
    points: &[f64],
    thresholds: &[f64],
    gain: f64,
    noise_std: f64,
) -> Result<TransitionMatrix> {
    if !(noise_std > 0.0) {
        return Err(Error::Domain(format!("noise std {noise_std} must be positive")));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Quantizer("thresholds must be strictly increasing".into()));
    }
    if points.is_empty() {
        return Err(Error::Quantizer("no input points".into()));
    }
    let bins = thresholds.len() + 1;
    let mut p = DMatrix::zeros(points.len(), bins);
    let mut cdf = vec![0.0; bins + 1];
    for (i, &x) in points.iter().enumerate() {
        let mean = gain * x;
        cdf[0] = 0.0;
        for (j, &t) in thresholds.iter().enumerate() {
            cdf[j + 1] = normal_cdf((t - mean) / noise_std);
        }
        cdf[bins] = 1.0;
        for j in 0..bins {
            p[(i, j)] = (cdf[j + 1] - cdf[j]).max(0.0);
        }
    }
    Ok(TransitionMatrix {
        p,
        samples_per_row: None,
    })
}

/// Monte Carlo law of `bin(gain_row[self] * x + sum_j gain_row[j] X_j + n)`,
/// marginalizing interferer symbols `X_j` drawn uniformly from
/// `interference_points[j]` (the `self_index` entry is ignored).
///
/// Every input row uses the same `n_samples` draws of interference plus
/// noise, so rows are individually unbiased and the table is exactly
/// row-stochastic.
#[allow(clippy::too_many_arguments)]
pub fn transition_matrix_mc<R: Rng + ?Sized>(
    points: &[f64],
    thresholds: &[f64],
    gain_row: &[f64],
    self_index: usize,
    interference_points: &[Vec<f64>],
    noise_std: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<TransitionMatrix> {
    if !(noise_std > 0.0) {
        return Err(Error::Domain(format!("noise std {noise_std} must be positive")));
    }
    if n_samples == 0 {
        return Err(Error::Domain("need at least one Monte Carlo sample".into()));
    }
    if self_index >= gain_row.len() || interference_points.len() != gain_row.len() {
        return Err(Error::Dimension(format!(
            "gain row of {} entries, self index {self_index}, {} interferer lists",
            gain_row.len(),
            interference_points.len()
        )));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Quantizer("thresholds must be strictly increasing".into()));
    }
    if points.is_empty() {
        return Err(Error::Quantizer("no input points".into()));
    }
    // interferer constellations pre-scaled by their gains
    let interferers: Vec<Vec<f64>> = gain_row
        .iter()
        .zip(interference_points)
        .enumerate()
        .filter(|&(j, (&g, pts))| j != self_index && g != 0.0 && !pts.is_empty())
        .map(|(_, (&g, pts))| pts.iter().map(|x| g * x).collect())
        .collect();
    let interference = Interference::new(interferers);

    let g_self = gain_row[self_index];
    let shifted: Vec<f64> = points.iter().map(|&x| g_self * x).collect();
    let bins = thresholds.len() + 1;
    let grid = uniform_grid(thresholds);
    let mut counts = vec![0u64; points.len() * bins];
    let mut bits = BitSource::default();
    let mut draw = |rng: &mut R| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        noise_std * z + interference.draw(&mut bits, rng)
    };
    match grid.and_then(|(t0, inv)| GridCounter::new(&shifted, t0, inv, bins)) {
        Some(mut grid) => {
            for _ in 0..n_samples {
                let e = draw(rng);
                grid.push(e);
            }
            grid.finish(&mut counts);
        }
        None => {
            for _ in 0..n_samples {
                let e = draw(rng);
                for (row, &m) in counts.chunks_exact_mut(bins).zip(&shifted) {
                    row[direct_bin(m + e, thresholds)] += 1;
                }
            }
        }
    }
    let n = n_samples as f64;
    let p = DMatrix::from_fn(points.len(), bins, |i, j| counts[i * bins + j] as f64 / n);
    Ok(TransitionMatrix {
        p,
        samples_per_row: Some(n_samples),
    })
}
