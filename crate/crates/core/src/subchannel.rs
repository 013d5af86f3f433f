//! Real-valued expansion of a complex MIMO channel and its SVD into parallel
//! real subchannels.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::C64;
use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest are treated as zero.
pub const SUBCHANNEL_TRUNCATION: f64 = 1e-6;

/// `[[Re H, -Im H], [Im H, Re H]]`.
pub fn real_expand(h: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = h.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Real expansion scaled so that the per-dimension noise has unit variance.
///
/// Complex noise of unit variance puts variance 1/2 on each real dimension;
/// multiplying by sqrt(2) whitens it, so every downstream rate formula can
/// assume `y = G x + n` with `n ~ N(0, I)`.
pub fn whitened_real_channel(h: &DMatrix<C64>) -> DMatrix<f64> {
    real_expand(h) * SQRT_2
}

/// Thin SVD of a real channel, `h = u diag(sigma) v^T`, sorted nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchannelDecomposition {
    /// `rows x k` left singular vectors, `k = min(rows, cols)`.
    pub u: DMatrix<f64>,
    /// `cols x k` right singular vectors.
    pub v: DMatrix<f64>,
    /// All `k` singular values, nonincreasing.
    pub sigma: Vec<f64>,
    /// Number of subchannels above the truncation threshold.
    pub s: usize,
}

impl SubchannelDecomposition {
    /// Gains of the `s` usable subchannels.
    pub fn active_sigma(&self) -> &[f64] {
        &self.sigma[..self.s]
    }
}

/// Decomposes `h_real` into its real subchannels.
pub fn svd_subchannels(h_real: &DMatrix<f64>) -> Result<SubchannelDecomposition> {
    if h_real.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("channel has non-finite entries".into()));
    }
    let (rows, cols) = h_real.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Err(Error::Dimension("empty channel matrix".into()));
    }
    let svd = h_real.clone().svd(true, true);
    let u_raw = svd.u.expect("requested U");
    let vt_raw = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    // stable by value, ties keep their original index order
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let mut u = DMatrix::zeros(rows, k);
    let mut v = DMatrix::zeros(cols, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc: DVector<f64> = u_raw.column(src).into_owned();
        let mut vc: DVector<f64> = vt_raw.row(src).transpose();
        // sign convention: largest-magnitude entry of u positive (first on ties)
        let pivot = uc
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bv), (i, &x)| {
                if x.abs() > bv.abs() + 1e-12 {
                    (i, x)
                } else {
                    (bi, bv)
                }
            })
            .1;
        if pivot < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(dst, &uc);
        v.set_column(dst, &vc);
        sigma.push(sv[src].max(0.0));
    }
    let cutoff = SUBCHANNEL_TRUNCATION * sigma[0];
    let s = if sigma[0] > 0.0 {
        sigma.iter().take_while(|&&x| x > cutoff).count()
    } else {
        0
    };
    Ok(SubchannelDecomposition { u, v, sigma, s })
}

/// Rotated true channel seen through a combiner/precoder designed from
/// (possibly estimated) CSI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveChannel {
    pub g: DMatrix<f64>,
}

impl EffectiveChannel {
    pub fn gain(&self, rx: usize, tx: usize) -> f64 {
        self.g[(rx, tx)]
    }

    /// Largest off-diagonal magnitude relative to the largest diagonal one.
    pub fn relative_leakage(&self) -> f64 {
        let n = self.g.nrows().min(self.g.ncols());
        let diag = (0..n).map(|i| self.g[(i, i)].abs()).fold(0.0, f64::max);
        let mut off = 0.0f64;
        for i in 0..self.g.nrows() {
            for j in 0..self.g.ncols() {
                if i != j {
                    off = off.max(self.g[(i, j)].abs());
                }
            }
        }
        if diag > 0.0 {
            off / diag
        } else {
            off
        }
    }

    pub fn off_diagonal_energy(&self) -> f64 {
        let mut e = 0.0;
        for i in 0..self.g.nrows() {
            for j in 0..self.g.ncols() {
                if i != j {
                    e += self.g[(i, j)].powi(2);
                }
            }
        }
        e
    }
}

/// `g = u_est^T h_true v_est` over all retained singular directions.
pub fn effective_channel(
    h_true_real: &DMatrix<f64>,
    decomp: &SubchannelDecomposition,
) -> Result<EffectiveChannel> {
    if h_true_real.nrows() != decomp.u.nrows() || h_true_real.ncols() != decomp.v.nrows() {
        return Err(Error::Dimension(format!(
            "channel is {}x{} but decomposition expects {}x{}",
            h_true_real.nrows(),
            h_true_real.ncols(),
            decomp.u.nrows(),
            decomp.v.nrows()
        )));
    }
    Ok(EffectiveChannel {
        g: decomp.u.transpose() * h_true_real * &decomp.v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SimRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_complex(r: usize, c: usize, rng: &mut SimRng) -> DMatrix<C64> {
        DMatrix::from_fn(r, c, |_, _| {
            C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        })
    }

    #[test]
    fn expansion_of_imaginary_unit() {
        let h = DMatrix::from_element(1, 1, C64::new(0.0, 1.0));
        let r = real_expand(&h);
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    #[test]
    fn expansion_of_real_matrix_is_block_diagonal() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).map(|x| C64::new(x, 0.0));
        let r = real_expand(&h);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(r[(i, j)], h[(i, j)].re);
                assert_eq!(r[(i + 2, j + 3)], h[(i, j)].re);
                assert_eq!(r[(i, j + 3)], 0.0);
                assert_eq!(r[(i + 2, j)], 0.0);
            }
        }
    }

    #[test]
    fn expansion_duplicates_singular_values() {
        let mut rng = SimRng::seed_from_u64(2);
        for _ in 0..10 {
            let h = random_complex(3, 5, &mut rng);
            let complex_sv = h.clone().singular_values();
            let d = svd_subchannels(&real_expand(&h)).unwrap();
            assert_eq!(d.sigma.len(), 6);
            let mut want: Vec<f64> = complex_sv.iter().flat_map(|&s| [s, s]).collect();
            want.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in d.sigma.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-8 * want[0]);
            }
            let fro_real = real_expand(&h).norm_squared();
            assert!((fro_real - 2.0 * h.norm_squared()).abs() < 1e-9 * fro_real);
        }
    }

    #[test]
    fn identity_and_diagonal() {
        let d = svd_subchannels(&DMatrix::identity(3, 3)).unwrap();
        assert!(d.sigma.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert_eq!(d.s, 3);
        let d = svd_subchannels(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]))).unwrap();
        assert!((d.sigma[0] - 3.0).abs() < 1e-12 && (d.sigma[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = SimRng::seed_from_u64(7);
        for (r, c) in [(4, 4), (4, 10), (9, 3)] {
            let h = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
            let d = svd_subchannels(&h).unwrap();
            let recon = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.sigma.clone())) * d.v.transpose();
            assert!((recon - &h).norm() <= 1e-8 * h.norm());
            let k = r.min(c);
            assert!((d.u.transpose() * &d.u - DMatrix::identity(k, k)).norm() < 1e-9);
            assert!((d.v.transpose() * &d.v - DMatrix::identity(k, k)).norm() < 1e-9);
            assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn truncation_drops_numerical_noise() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 1e-9, 0.0]));
        let d = svd_subchannels(&h).unwrap();
        assert_eq!(d.s, 2);
        assert_eq!(d.active_sigma().len(), 2);
        let zero = svd_subchannels(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.s, 0);
    }

    #[test]
    fn decomposition_is_deterministic() {
        let mut rng = SimRng::seed_from_u64(8);
        let h = real_expand(&random_complex(4, 6, &mut rng));
        assert_eq!(svd_subchannels(&h).unwrap(), svd_subchannels(&h).unwrap());
    }

    #[test]
    fn effective_channel_perfect_csi_is_diagonal() {
        let mut rng = SimRng::seed_from_u64(3);
        let h = whitened_real_channel(&random_complex(4, 8, &mut rng));
        let d = svd_subchannels(&h).unwrap();
        let g = effective_channel(&h, &d).unwrap();
        assert!(g.relative_leakage() <= 1e-9);
        for k in 0..d.sigma.len() {
            assert!((g.gain(k, k) - d.sigma[k]).abs() <= 1e-9 * d.sigma[0]);
        }
        // u, v span the full row space here, so the norm is preserved
        assert!((g.g.norm() - h.norm()).abs() <= 1e-9 * h.norm());
    }

    #[test]
    fn effective_channel_leakage_vanishes_with_error() {
        let mut rng = SimRng::seed_from_u64(4);
        let h = random_complex(3, 6, &mut rng);
        let e = random_complex(3, 6, &mut rng);
        let h_real = real_expand(&h);
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
            let h_hat = &h + &e * C64::new(eps, 0.0);
            let d = svd_subchannels(&real_expand(&h_hat)).unwrap();
            let off = effective_channel(&h_real, &d).unwrap().off_diagonal_energy();
            assert!(off < last, "eps {eps}: {off} !< {last}");
            last = off;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn effective_channel_dimension_mismatch() {
        let d = svd_subchannels(&DMatrix::identity(2, 2)).unwrap();
        assert!(effective_channel(&DMatrix::identity(3, 2), &d).is_err());
    }
}
