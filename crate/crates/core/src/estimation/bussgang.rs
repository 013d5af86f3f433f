use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::pilots::{dequantize_observations, training_quantizer, AngularDictionaries, AngularEstimate, Observations, PilotBlock};
use crate::channel::C64;
use crate::error::{Error, Result};
use crate::receiver::{normal_cdf, QuantizerSpec};

/// Ridge added to the normal equations when they are numerically singular,
/// relative to their mean diagonal.
pub const RIDGE_EPS: f64 = 1e-6;

/// Linear-plus-distortion model of a quantizer driven by `N(0, input_var)`:
/// `q(y) = gain * y + d` with `d` uncorrelated with `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BussgangStats {
    pub gain: f64,
    pub distortion_var: f64,
}

fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// Bussgang gain and distortion variance of `spec` for a zero-mean Gaussian
/// input of variance `input_var`.
pub fn bussgang_gain(spec: &QuantizerSpec, input_var: f64) -> Result<BussgangStats> {
    if !(input_var > 0.0 && input_var.is_finite()) {
        return Err(Error::Domain(format!("input variance {input_var} must be positive")));
    }
    let sd = input_var.sqrt();
    let t = spec.thresholds();
    let mut e_qy = 0.0;
    let mut e_qq = 0.0;
    for (j, &c) in spec.reconstruction_points().iter().enumerate() {
        let a = if j == 0 { f64::NEG_INFINITY } else { t[j - 1] / sd };
        let b = if j == t.len() { f64::INFINITY } else { t[j] / sd };
        e_qy += c * sd * (normal_pdf(a) - normal_pdf(b));
        e_qq += c * c * (normal_cdf(b) - normal_cdf(a));
    }
    let gain = e_qy / input_var;
    Ok(BussgangStats {
        gain,
        distortion_var: (e_qq - gain * gain * input_var).max(0.0),
    })
}

fn check_dims(block: &PilotBlock, dicts: &AngularDictionaries) -> Result<()> {
    block.validate()?;
    if dicts.tx.nrows() != block.pilots.nrows() || dicts.rx.nrows() != block.n_rx() {
        return Err(Error::Dimension(format!(
            "dictionaries {}x{} for {} rx antennas and {} pilot rows",
            dicts.rx.nrows(),
            dicts.tx.nrows(),
            block.n_rx(),
            block.pilots.nrows()
        )));
    }
    Ok(())
}

/// Solves `h M = b` for Hermitian positive (semi)definite `m`.
fn solve_right_hermitian(b: &DMatrix<C64>, m: DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = m.nrows();
    let rhs = b.adjoint();
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(&rhs).adjoint());
    }
    let mean_diag = (0..n).map(|i| m[(i, i)].re).sum::<f64>() / n as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::Domain("pilot Gram matrix is zero".into()));
    }
    let mut reg = m;
    for i in 0..n {
        reg[(i, i)] += C64::new(RIDGE_EPS * mean_diag, 0.0);
    }
    reg.cholesky()
        .map(|ch| ch.solve(&rhs).adjoint())
        .ok_or_else(|| Error::Domain("regularized normal equations are not positive definite".into()))
}

/// LMMSE estimate from Bussgang-linearized observations with an i.i.d.
/// `CN(0, prior_var)` prior on the angular coefficients.
///
/// The quantized observations are modeled as `r = a (h x + z) + d` with the
/// distortion `d` white. Because the dictionaries are unitary the i.i.d.
/// angular prior is also i.i.d. in the antenna domain, so the estimate is
/// formed there and rotated.
pub fn estimate_bussgang_lmmse(
    block: &PilotBlock,
    dicts: &AngularDictionaries,
    prior_var: f64,
) -> Result<AngularEstimate> {
    check_dims(block, dicts)?;
    if !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(Error::Domain(format!("prior variance {prior_var} must be positive")));
    }
    let x = &block.pilots;
    let col_energy = x.norm_squared() / x.ncols() as f64;
    let (r, gain, eff_noise) = match &block.obs {
        Observations::Unquantized(y) => (y.clone(), 1.0, block.noise_var),
        Observations::Quantized {
            indices,
            bits_per_dim,
            agc_range,
        } => {
            let q = training_quantizer(*bits_per_dim, *agc_range)?;
            let input_var = 0.5 * (prior_var * col_energy + block.noise_var);
            let stats = bussgang_gain(&q, input_var)?;
            let r = dequantize_observations(indices, *bits_per_dim, *agc_range)?;
            let eff = stats.gain * stats.gain * block.noise_var + 2.0 * stats.distortion_var;
            (r, stats.gain, eff)
        }
    };
    let xh = x.adjoint();
    let mut m = (x * &xh) * C64::new(gain * gain * prior_var, 0.0);
    for i in 0..m.nrows() {
        m[(i, i)] += C64::new(eff_noise, 0.0);
    }
    let b = (&r * &xh) * C64::new(gain * prior_var, 0.0);
    let h_hat = solve_right_hermitian(&b, m)?;
    Ok(AngularEstimate {
        g_hat: dicts.to_angular(&h_hat),
        h_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;
    use crate::estimation::pilots::{gen_pilots, nmse};
    use crate::seed::SimRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, var: f64, rng: &mut SimRng) -> DMatrix<C64> {
        let s = (0.5 * var).sqrt();
        DMatrix::from_fn(r, c, |_, _| {
            let (re, im): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
            C64::new(s * re, s * im)
        })
    }

    #[test]
    fn one_bit_bussgang_gain_is_closed_form() {
        // sign quantizer with outputs +-c: gain = c sqrt(2 / (pi var))
        let q = QuantizerSpec::new(1, vec![0.0], vec![-0.7, 0.7]).unwrap();
        let s = bussgang_gain(&q, 2.0).unwrap();
        let want = 0.7 * (2.0 / (PI * 2.0)).sqrt();
        assert!((s.gain - want).abs() < 1e-14);
        assert!((s.distortion_var - (0.49 - want * want * 2.0)).abs() < 1e-14);
    }

    #[test]
    fn bussgang_matches_monte_carlo() {
        let q = QuantizerSpec::uniform_midrise(3, 2.5).unwrap();
        let var = 0.9;
        let s = bussgang_gain(&q, var).unwrap();
        let mut rng = SimRng::seed_from_u64(3);
        let n = 400_000;
        let (mut qy, mut qq) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = var.sqrt() * z;
            let v = q.reconstruct(crate::receiver::direct_bin(y, q.thresholds()));
            qy += v * y;
            qq += v * v;
        }
        let gain_mc = qy / n as f64 / var;
        assert!((gain_mc - s.gain).abs() < 5e-3);
        let d_mc = qq / n as f64 - gain_mc * gain_mc * var;
        assert!((d_mc - s.distortion_var).abs() < 5e-3);
    }

    #[test]
    fn noiseless_unquantized_recovery() {
        let mut rng = SimRng::seed_from_u64(5);
        let ue = ArrayGeometry::new(2, 2).unwrap();
        let bs = ArrayGeometry::new(2, 4).unwrap();
        let dicts = AngularDictionaries::new(&ue, &bs);
        let h = gaussian(4, 8, 1.0, &mut rng);
        let x = gen_pilots(8, 2 * 4 * 8, 1.0, &mut rng).unwrap();
        let block = PilotBlock::observe(&h, x, 0.0, None, &mut rng).unwrap();
        let est = estimate_bussgang_lmmse(&block, &dicts, 1.0).unwrap();
        assert!(nmse(&h, &est.h_hat).unwrap() <= -40.0);
        assert!((dicts.to_antenna(&est.g_hat) - &est.h_hat).norm() < 1e-9 * est.h_hat.norm());
    }

    #[test]
    fn more_bits_do_not_hurt() {
        let ue = ArrayGeometry::new(2, 2).unwrap();
        let bs = ArrayGeometry::new(4, 4).unwrap();
        let dicts = AngularDictionaries::new(&ue, &bs);
        let mut rng = SimRng::seed_from_u64(8);
        let mut wins = 0;
        for _ in 0..20 {
            let seed: u64 = rng.random();
            let run = |bits: u32| {
                let mut r = SimRng::seed_from_u64(seed);
                let h = gaussian(4, 16, 4.0, &mut r);
                let x = gen_pilots(16, 128, 1.0, &mut r).unwrap();
                let block = PilotBlock::observe(&h, x, 1.0, Some(bits), &mut r).unwrap();
                nmse(&h, &estimate_bussgang_lmmse(&block, &dicts, 4.0).unwrap().h_hat).unwrap()
            };
            if run(3) <= run(1) {
                wins += 1;
            }
        }
        assert!(wins >= 18, "3 bits beat 1 bit only {wins}/20 times");
    }

    #[test]
    fn dimension_checks() {
        let mut rng = SimRng::seed_from_u64(1);
        let dicts = AngularDictionaries::new(&ArrayGeometry::new(1, 2).unwrap(), &ArrayGeometry::new(1, 2).unwrap());
        let h = gaussian(2, 4, 1.0, &mut rng);
        let x = gen_pilots(4, 16, 1.0, &mut rng).unwrap();
        let block = PilotBlock::observe(&h, x, 1.0, Some(2), &mut rng).unwrap();
        assert!(estimate_bussgang_lmmse(&block, &dicts, 1.0).is_err());
    }
}
