//! Channel-use level model of the adaptive-threshold receiver.
//!
//! Channel uses are grouped in blocks of `b`. Combined outputs `V y(i)` of one
//! block are held by the delay network and processed during the next block:
//! at position `j` of a block, ADC `k` sees entry `B(j)_k` of the buffered
//! vector and compares it against `t_k + u^l_k(j) W u^r_k(j)`, where `W` stacks
//! the `{-1, +1}` ADC outputs produced so far in the block.

use nalgebra::{DMatrix, DVector};

use super::quantizer::QuantizerSpec;
use crate::error::{Error, Result};

/// Linear rule producing the adaptive part of one ADC threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    /// Weights over ADCs (length `n_q`).
    pub left: Vec<f64>,
    /// Weights over earlier positions in the block (length `j`).
    pub right: Vec<f64>,
}

impl ThresholdRule {
    pub fn zero(n_q: usize, position: usize) -> Self {
        Self {
            left: vec![0.0; n_q],
            right: vec![0.0; position],
        }
    }

    fn eval(&self, history: &[Vec<i8>]) -> f64 {
        let mut acc = 0.0;
        for (c, &wr) in self.right.iter().enumerate() {
            if wr == 0.0 {
                continue;
            }
            let col = &history[c];
            let dot: f64 = self
                .left
                .iter()
                .zip(col)
                .map(|(&wl, &b)| wl * f64::from(b))
                .sum();
            acc += dot * wr;
        }
        acc
    }
}

/// Which buffered sample and bit an ADC produces at a given block position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BitSlot {
    stream: usize,
    sample: usize,
    rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
struct SarLayout {
    bits_per_stream: Vec<u32>,
    /// `[position][adc]`
    slots: Vec<Vec<BitSlot>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    combiner: DMatrix<f64>,
    block_len: usize,
    selections: Vec<Vec<usize>>,
    fixed_thresholds: Vec<f64>,
    rules: Vec<Vec<ThresholdRule>>,
    layout: Option<SarLayout>,
}

impl ReceiverConfig {
    /// Builds a receiver from explicit schedules.
    ///
    /// `selections[j][k]` is the index into the buffered block vector (length
    /// `block_len * combiner.nrows()`) fed to ADC `k` at position `j`, i.e. the
    /// column of the single one in row `k` of `B(j)`.
    pub fn new(
        combiner: DMatrix<f64>,
        block_len: usize,
        selections: Vec<Vec<usize>>,
        fixed_thresholds: Vec<f64>,
        rules: Vec<Vec<ThresholdRule>>,
    ) -> Result<Self> {
        if block_len == 0 {
            return Err(Error::Domain("block length must be at least 1".into()));
        }
        let n_q = fixed_thresholds.len();
        let buf_len = block_len * combiner.nrows();
        for (name, len) in [("selection", selections.len()), ("coefficient", rules.len())] {
            if len < block_len {
                return Err(Error::Schedule { index: len, len: block_len });
            }
            if len > block_len {
                return Err(Error::Dimension(format!(
                    "{name} schedule has {len} entries for block length {block_len}"
                )));
            }
        }
        for (j, (sel, rule)) in selections.iter().zip(&rules).enumerate() {
            if sel.len() != n_q || rule.len() != n_q {
                return Err(Error::Dimension(format!(
                    "position {j}: {} selections and {} rules for {n_q} ADCs",
                    sel.len(),
                    rule.len()
                )));
            }
            if let Some(&bad) = sel.iter().find(|&&s| s >= buf_len) {
                return Err(Error::Dimension(format!(
                    "position {j}: selection {bad} outside buffer of {buf_len}"
                )));
            }
            for r in rule {
                if r.left.len() != n_q || r.right.len() != j {
                    return Err(Error::Dimension(format!(
                        "position {j}: coefficient vectors of length {}/{} (want {n_q}/{j})",
                        r.left.len(),
                        r.right.len()
                    )));
                }
            }
        }
        Ok(Self {
            combiner,
            block_len,
            selections,
            fixed_thresholds,
            rules,
            layout: None,
        })
    }

    /// The two-ADC scalar receiver of the textbook SISO example: each buffered
    /// sample is compared against zero, then against half of its first output.
    pub fn two_bit_example() -> Self {
        let rules = vec![
            vec![
                ThresholdRule {
                    left: vec![1.0, 0.0],
                    right: vec![],
                },
                ThresholdRule {
                    left: vec![0.0, 1.0],
                    right: vec![],
                },
            ],
            vec![
                ThresholdRule {
                    left: vec![1.0, 0.0],
                    right: vec![-0.5],
                },
                ThresholdRule {
                    left: vec![0.0, 1.0],
                    right: vec![-0.5],
                },
            ],
        ];
        let mut cfg = Self::new(
            DMatrix::from_element(1, 1, 1.0),
            2,
            vec![vec![0, 1], vec![0, 1]],
            vec![0.0, 0.0],
            rules,
        )
        .expect("static example is well formed");
        cfg.layout = Some(SarLayout {
            bits_per_stream: vec![2],
            slots: (0..2)
                .map(|pos| {
                    (0..2)
                        .map(|adc| BitSlot {
                            stream: 0,
                            sample: adc,
                            rank: pos as u32,
                        })
                        .collect()
                })
                .collect(),
        });
        cfg
    }

    /// SAR schedule for a scalar channel: `n_bits` ADCs, each refining one
    /// buffered sample over `n_bits` channel uses.
    pub fn sar_scalar(spec: &QuantizerSpec) -> Result<Self> {
        Self::sar_subchannels(DMatrix::from_element(1, 1, 1.0), std::slice::from_ref(spec))
    }

    /// SAR schedule for parallel streams `V y`, stream `k` quantized by `specs[k]`
    /// with `specs[k].n_bits()` dedicated one-bit ADCs.
    ///
    /// Thresholds of every spec must be equally spaced so that each refinement
    /// step is a linear function of the earlier comparator outputs.
    pub fn sar_subchannels(combiner: DMatrix<f64>, specs: &[QuantizerSpec]) -> Result<Self> {
        if specs.len() != combiner.nrows() {
            return Err(Error::Dimension(format!(
                "{} quantizers for {} combined streams",
                specs.len(),
                combiner.nrows()
            )));
        }
        let bits: Vec<u32> = specs.iter().map(QuantizerSpec::n_bits).collect();
        let block_len = bits
            .iter()
            .filter(|&&n| n > 0)
            .fold(1usize, |acc, &n| lcm(acc, n as usize));
        if block_len > 4096 {
            return Err(Error::Domain(format!("block length {block_len} is impractical")));
        }
        let n_streams = specs.len();
        let n_q: usize = bits.iter().map(|&n| n as usize).sum();

        let mut fixed = Vec::with_capacity(n_q);
        let mut adc_stream = Vec::with_capacity(n_q);
        for (k, spec) in specs.iter().enumerate() {
            if spec.n_bits() == 0 {
                continue;
            }
            let (center, _) = spec.uniform_grid().ok_or_else(|| {
                Error::Quantizer(format!("stream {k}: SAR schedule needs equally spaced thresholds"))
            })?;
            for local in 0..spec.n_bits() as usize {
                fixed.push(-center);
                adc_stream.push((k, local));
            }
        }

        let mut selections = Vec::with_capacity(block_len);
        let mut rules = Vec::with_capacity(block_len);
        let mut slots = Vec::with_capacity(block_len);
        for pos in 0..block_len {
            let mut sel = Vec::with_capacity(n_q);
            let mut rule = Vec::with_capacity(n_q);
            let mut slot = Vec::with_capacity(n_q);
            for (adc, &(k, local)) in adc_stream.iter().enumerate() {
                let n = specs[k].n_bits() as usize;
                let (_, step) = specs[k].uniform_grid().expect("checked above");
                let per_adc = block_len / n;
                let round = pos / n;
                let rank = pos % n;
                let sample = local * per_adc + round;
                sel.push(sample * n_streams + k);
                let mut left = vec![0.0; n_q];
                left[adc] = 1.0;
                let mut right = vec![0.0; pos];
                for (l, c) in (round * n..pos).enumerate() {
                    right[c] = -step * 2f64.powi(n as i32 - 2 - l as i32);
                }
                rule.push(ThresholdRule { left, right });
                slot.push(BitSlot {
                    stream: k,
                    sample,
                    rank: rank as u32,
                });
            }
            selections.push(sel);
            rules.push(rule);
            slots.push(slot);
        }
        let mut cfg = Self::new(combiner, block_len, selections, fixed, rules)?;
        cfg.layout = Some(SarLayout {
            bits_per_stream: bits,
            slots,
        });
        Ok(cfg)
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_adcs(&self) -> usize {
        self.fixed_thresholds.len()
    }

    pub fn n_streams(&self) -> usize {
        self.combiner.nrows()
    }

    /// Binary selection matrix `B(j)` of shape `n_q x (b * n_streams)`.
    pub fn selection_matrix(&self, position: usize) -> Result<DMatrix<f64>> {
        let sel = self.selections.get(position).ok_or(Error::Schedule {
            index: position,
            len: self.block_len,
        })?;
        let mut b = DMatrix::zeros(sel.len(), self.block_len * self.n_streams());
        for (k, &s) in sel.iter().enumerate() {
            b[(k, s)] = 1.0;
        }
        Ok(b)
    }

    pub fn rule(&self, position: usize, adc: usize) -> Result<&ThresholdRule> {
        self.rules
            .get(position)
            .and_then(|r| r.get(adc))
            .ok_or(Error::Schedule {
                index: position,
                len: self.block_len,
            })
    }

    /// Comparison bits each ADC contributes to every buffered sample, per stream.
    pub fn bits_per_sample(&self) -> Option<&[u32]> {
        self.layout.as_ref().map(|l| l.bits_per_stream.as_slice())
    }

    /// Turns the ADC outputs of one processed block into bin indices,
    /// `[stream][sample]`. Only available for SAR-built configs.
    pub fn decode_block(&self, outputs: &[Vec<i8>]) -> Result<Vec<Vec<usize>>> {
        let layout = self
            .layout
            .as_ref()
            .ok_or_else(|| Error::Quantizer("config has no SAR layout to decode".into()))?;
        if outputs.len() != self.block_len {
            return Err(Error::Dimension(format!(
                "{} output vectors for block length {}",
                outputs.len(),
                self.block_len
            )));
        }
        let mut bins = vec![vec![0usize; self.block_len]; self.n_streams()];
        for (pos, out) in outputs.iter().enumerate() {
            for (adc, slot) in layout.slots[pos].iter().enumerate() {
                let n = layout.bits_per_stream[slot.stream];
                if out[adc] > 0 {
                    bins[slot.stream][slot.sample] |= 1 << (n - 1 - slot.rank);
                }
            }
        }
        Ok(bins)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Receiver instance carrying the delay-network buffer and output history.
#[derive(Debug, Clone)]
pub struct AdaptiveReceiver {
    cfg: ReceiverConfig,
    filling: Vec<f64>,
    buffer: Option<Vec<f64>>,
    history: Vec<Vec<i8>>,
    uses: usize,
}

impl AdaptiveReceiver {
    pub fn new(cfg: ReceiverConfig) -> Self {
        Self {
            filling: Vec::with_capacity(cfg.block_len * cfg.n_streams()),
            cfg,
            buffer: None,
            history: Vec::new(),
            uses: 0,
        }
    }

    pub fn config(&self) -> &ReceiverConfig {
        &self.cfg
    }

    pub fn uses(&self) -> usize {
        self.uses
    }

    /// Comparator inputs `w(i) + t~(i) + t` for the current position, or `None`
    /// while the first block is still being buffered.
    fn comparator_inputs(&self, position: usize) -> Result<Option<Vec<f64>>> {
        let Some(buf) = &self.buffer else {
            return Ok(None);
        };
        let sel = self.cfg.selections.get(position).ok_or(Error::Schedule {
            index: position,
            len: self.cfg.block_len,
        })?;
        let mut v = Vec::with_capacity(sel.len());
        for (k, &s) in sel.iter().enumerate() {
            let adaptive = self.cfg.rule(position, k)?.eval(&self.history);
            v.push(buf[s] + adaptive + self.cfg.fixed_thresholds[k]);
        }
        Ok(Some(v))
    }

    /// Advances one channel use with analog input `y`; returns the ADC outputs
    /// in `{-1, +1}` once a full block has been buffered.
    pub fn step(&mut self, y: &DVector<f64>) -> Result<Option<Vec<i8>>> {
        if y.len() != self.cfg.combiner.ncols() {
            return Err(Error::Dimension(format!(
                "input of length {} for combiner with {} columns",
                y.len(),
                self.cfg.combiner.ncols()
            )));
        }
        let position = self.uses % self.cfg.block_len;
        if position == 0 {
            if self.uses > 0 {
                self.buffer = Some(std::mem::take(&mut self.filling));
            }
            self.history.clear();
        }
        let combined = &self.cfg.combiner * y;
        self.filling.extend(combined.iter());

        let out = self.comparator_inputs(position)?.map(|v| {
            v.into_iter()
                .map(|x| if x >= 0.0 { 1i8 } else { -1i8 })
                .collect::<Vec<_>>()
        });
        if let Some(o) = &out {
            self.history.push(o.clone());
        }
        self.uses += 1;
        Ok(out)
    }

    /// Pushes `inputs` through the receiver followed by one block of zeros to
    /// flush the pipeline, returning the decoded bins of every complete block,
    /// `[stream][sample]` with samples in arrival order.
    pub fn quantize_sequence(&mut self, inputs: &[DVector<f64>]) -> Result<Vec<Vec<usize>>> {
        let b = self.cfg.block_len;
        if inputs.len() % b != 0 {
            return Err(Error::Dimension(format!(
                "{} inputs is not a whole number of blocks of {b}",
                inputs.len()
            )));
        }
        let zeros = DVector::zeros(self.cfg.combiner.ncols());
        let mut streams = vec![Vec::with_capacity(inputs.len()); self.cfg.n_streams()];
        let mut block = Vec::with_capacity(b);
        for y in inputs.iter().chain(std::iter::repeat(&zeros).take(b)) {
            if let Some(out) = self.step(y)? {
                block.push(out);
                if block.len() == b {
                    let bins = self.cfg.decode_block(&block)?;
                    for (dst, src) in streams.iter_mut().zip(bins) {
                        dst.extend(src);
                    }
                    block.clear();
                }
            }
        }
        Ok(streams)
    }
}
