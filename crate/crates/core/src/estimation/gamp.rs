use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;

use super::pilots::{training_quantizer, AngularDictionaries, AngularEstimate, Observations, PilotBlock};
use crate::channel::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GampOptions {
    pub max_iter: usize,
    /// Weight of the new iterate; 1 disables damping.
    pub damping: f64,
    /// Stop once the relative squared change of the estimate drops below this.
    pub tolerance: f64,
    /// Starting fraction of nonzero angular coefficients.
    pub initial_sparsity: f64,
}

impl Default for GampOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            damping: 0.5,
            tolerance: 1e-6,
            initial_sparsity: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampReport {
    pub estimate: AngularEstimate,
    pub iterations: usize,
    /// False when `max_iter` ran out; the estimate is then the iterate that
    /// moved least.
    pub converged: bool,
    pub sparsity: f64,
    pub active_var: f64,
}

fn std_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

fn std_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Mean and variance of a standard normal truncated to `[a, b)`.
fn truncated_moments(a: f64, b: f64) -> (f64, f64) {
    if a > 0.0 {
        let (m, v) = truncated_moments(-b, -a);
        return (-m, v);
    }
    let z = std_cdf(b) - std_cdf(a);
    if z > 1e-280 {
        let mean = (std_pdf(a) - std_pdf(b)) / z;
        let xa = if a.is_infinite() { 0.0 } else { a * std_pdf(a) };
        let xb = if b.is_infinite() { 0.0 } else { b * std_pdf(b) };
        let second = 1.0 + (xa - xb) / z;
        return (mean.clamp(a, b), (second - mean * mean).clamp(0.0, 1.0));
    }
    // Far left tail: the density is close to an exponential leaning on `b`.
    let width = b - a;
    let rate = -b;
    if width * rate < 1e-3 {
        (0.5 * (a + b), width * width / 12.0)
    } else {
        ((b - 1.0 / rate).max(a), (1.0 / (rate * rate)).min(width * width / 12.0))
    }
}

enum OutputChannel {
    /// Per real dimension: bin edges of every observation.
    Quantized {
        lower: DMatrix<C64>,
        upper: DMatrix<C64>,
        noise_var: f64,
    },
    Gaussian {
        y: DMatrix<C64>,
        noise_var: f64,
    },
}

fn quantized_posterior(p: f64, v: f64, lo: f64, hi: f64, w: f64) -> (f64, f64) {
    let s = (v + w).sqrt();
    let (m, var) = truncated_moments((lo - p) / s, (hi - p) / s);
    (p + v / s * m, (v - v * v / (s * s) * (1.0 - var)).max(0.0))
}

impl OutputChannel {
    fn new(block: &PilotBlock) -> Result<Self> {
        Ok(match &block.obs {
            Observations::Unquantized(y) => Self::Gaussian {
                y: y.clone(),
                noise_var: block.noise_var,
            },
            Observations::Quantized {
                indices,
                bits_per_dim,
                agc_range,
            } => {
                let q = training_quantizer(*bits_per_dim, *agc_range)?;
                let t = q.thresholds();
                let lo = |i: u32| if i == 0 { f64::NEG_INFINITY } else { t[i as usize - 1] };
                let hi = |i: u32| if i as usize == t.len() { f64::INFINITY } else { t[i as usize] };
                let n_r = indices.nrows() / 2;
                let lower = DMatrix::from_fn(n_r, indices.ncols(), |r, c| {
                    C64::new(lo(indices[(r, c)]), lo(indices[(n_r + r, c)]))
                });
                let upper = DMatrix::from_fn(n_r, indices.ncols(), |r, c| {
                    C64::new(hi(indices[(r, c)]), hi(indices[(n_r + r, c)]))
                });
                Self::Quantized {
                    lower,
                    upper,
                    noise_var: block.noise_var,
                }
            }
        })
    }

    /// Posterior mean of `z` and mean posterior variance given the Gaussian
    /// message `CN(p_hat, tau_p)`.
    fn estimate(&self, p_hat: &DMatrix<C64>, tau_p: f64) -> (DMatrix<C64>, f64) {
        let mut z = p_hat.clone();
        let mut var_sum = 0.0;
        match self {
            Self::Gaussian { y, noise_var } => {
                let k = tau_p / (tau_p + noise_var);
                for (zi, yi) in z.iter_mut().zip(y.iter()) {
                    *zi += (yi - *zi) * k;
                }
                var_sum = k * noise_var * z.len() as f64;
            }
            Self::Quantized {
                lower,
                upper,
                noise_var,
            } => {
                let (v, w) = (0.5 * tau_p, 0.5 * noise_var);
                for ((zi, lo), hi) in z.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                    let (re, vr) = quantized_posterior(zi.re, v, lo.re, hi.re, w);
                    let (im, vi) = quantized_posterior(zi.im, v, lo.im, hi.im, w);
                    *zi = C64::new(re, im);
                    var_sum += vr + vi;
                }
            }
        }
        let n = z.len() as f64;
        (z, var_sum / n)
    }
}

struct BernoulliGaussian {
    sparsity: f64,
    active_var: f64,
}

impl BernoulliGaussian {
    /// Posterior mean and mean variance under the prior given `CN(r, tau_r)`
    /// pseudo-observations, together with the EM update of the prior.
    fn denoise(&self, r: &DMatrix<C64>, tau_r: f64) -> (DMatrix<C64>, f64, Self) {
        let (lam, theta) = (self.sparsity, self.active_var);
        let shrink = theta / (theta + tau_r);
        let v_on = theta * tau_r / (theta + tau_r);
        let prior_odds = ((1.0 - lam) / lam).ln() + ((theta + tau_r) / tau_r).ln();
        let mut var_sum = 0.0;
        let (mut pi_sum, mut energy_sum) = (0.0, 0.0);
        let x = r.map(|ri| {
            let llr = prior_odds - ri.norm_sqr() * (1.0 / tau_r - 1.0 / (theta + tau_r));
            let pi = if llr > 700.0 { 0.0 } else { 1.0 / (1.0 + llr.exp()) };
            let m = ri * shrink;
            let second = pi * (v_on + m.norm_sqr());
            let mean = m * pi;
            var_sum += second - mean.norm_sqr();
            pi_sum += pi;
            energy_sum += second;
            mean
        });
        let n = r.len() as f64;
        let next = Self {
            sparsity: (pi_sum / n).clamp(1.0 / n, 1.0 - 1e-9),
            active_var: if pi_sum > 0.0 { (energy_sum / pi_sum).max(1e-300) } else { theta },
        };
        (x, (var_sum / n).max(0.0), next)
    }
}

/// Sparse estimate of the angular coefficients by GAMP with the exact
/// quantized-output likelihood and a Bernoulli-Gaussian prior whose sparsity
/// and active variance are re-fit by EM after every pass.
///
/// `prior_var` is the expected energy per coefficient and only seeds the
/// hyperparameters. Variances are tracked as scalars.
pub fn estimate_gamp_em(
    block: &PilotBlock,
    dicts: &AngularDictionaries,
    prior_var: f64,
    opts: &GampOptions,
) -> Result<GampReport> {
    block.validate()?;
    if dicts.tx.nrows() != block.pilots.nrows() || dicts.rx.nrows() != block.n_rx() {
        return Err(Error::Dimension("dictionaries do not match the pilot block".into()));
    }
    if !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(Error::Domain(format!("prior variance {prior_var} must be positive")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Domain(format!("damping {} must lie in (0, 1]", opts.damping)));
    }
    if !(opts.initial_sparsity > 0.0 && opts.initial_sparsity < 1.0) {
        return Err(Error::Domain("initial sparsity must lie in (0, 1)".into()));
    }
    let out = OutputChannel::new(block)?;
    let a_r = &dicts.rx;
    let a_rh = a_r.adjoint();
    let x_ang = dicts.tx.adjoint() * &block.pilots;
    let x_angh = x_ang.adjoint();
    let (n_r, n_t) = (a_r.nrows(), dicts.tx.nrows());
    let frob = x_ang.norm_squared();
    // Row and column averages of |A|^2 for the operator g -> A_r g X~.
    let row_gain = frob / block.n_pilots() as f64;
    let col_gain = frob / n_t as f64;
    if !(row_gain > 0.0) {
        return Err(Error::Domain("pilots carry no energy".into()));
    }

    let mut prior = BernoulliGaussian {
        sparsity: opts.initial_sparsity,
        active_var: prior_var / opts.initial_sparsity,
    };
    let mut g = DMatrix::<C64>::zeros(n_r, n_t);
    let mut tau_g = prior_var;
    let mut s = DMatrix::<C64>::zeros(n_r, block.n_pilots());
    let d = opts.damping;
    let mut best = (f64::INFINITY, g.clone());
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let tau_p = (row_gain * tau_g).max(1e-300);
        let p_hat = a_r * &g * &x_ang - &s * C64::new(tau_p, 0.0);
        let (z_hat, tau_z) = out.estimate(&p_hat, tau_p);
        let s_new = (z_hat - p_hat) / C64::new(tau_p, 0.0);
        let tau_s = ((1.0 - tau_z / tau_p) / tau_p).max(1e-12 / tau_p);
        s = &s_new * C64::new(d, 0.0) + &s * C64::new(1.0 - d, 0.0);

        let tau_r = 1.0 / (col_gain * tau_s);
        let r = &g + (&a_rh * &s * &x_angh) * C64::new(tau_r, 0.0);
        let (g_new, tau_new, next) = prior.denoise(&r, tau_r);
        prior = next;
        let g_next = &g_new * C64::new(d, 0.0) + &g * C64::new(1.0 - d, 0.0);
        tau_g = d * tau_new + (1.0 - d) * tau_g;
        let change = (&g_next - &g).norm_squared() / g_next.norm_squared().max(1e-300);
        g = g_next;
        if !change.is_finite() {
            break;
        }
        if change < best.0 {
            best = (change, g.clone());
        }
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    let g_hat = if converged { g } else { best.1 };
    Ok(GampReport {
        estimate: AngularEstimate {
            h_hat: dicts.to_antenna(&g_hat),
            g_hat,
        },
        iterations,
        converged,
        sparsity: prior.sparsity,
        active_var: prior.active_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;
    use crate::estimation::{estimate_bussgang_lmmse, gen_pilots, nmse};
    use crate::seed::SimRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn truncated_moments_cases() {
        let (m, v) = truncated_moments(f64::NEG_INFINITY, f64::INFINITY);
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
        // half normal
        let (m, v) = truncated_moments(0.0, f64::INFINITY);
        assert!((m - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((v - (1.0 - 2.0 / PI)).abs() < 1e-12);
        let (m, v) = truncated_moments(-60.0, -50.0);
        assert!(m < -50.0 && m > -50.1 && v < 1e-3);
        let (m, v) = truncated_moments(50.0, 50.001);
        assert!((m - 50.0005).abs() < 1e-3 && v < 1e-6);
    }

    fn one_sparse(dicts: &AngularDictionaries, gain: f64, rng: &mut SimRng) -> (DMatrix<C64>, usize) {
        let (n_r, n_t) = (dicts.rx.nrows(), dicts.tx.nrows());
        let idx = rng.random_range(0..n_r * n_t);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let mut g = DMatrix::zeros(n_r, n_t);
        g[(idx % n_r, idx / n_r)] = C64::from_polar(gain, phase);
        (dicts.to_antenna(&g), idx)
    }

    fn argmax(g: &DMatrix<C64>) -> usize {
        let mut best = 0;
        for i in 0..g.len() {
            if g[i].norm() > g[best].norm() {
                best = i;
            }
        }
        best
    }

    #[test]
    fn one_sparse_support_recovery() {
        let ue = ArrayGeometry::new(2, 2).unwrap();
        let bs = ArrayGeometry::new(4, 4).unwrap();
        let dicts = AngularDictionaries::new(&ue, &bs);
        let mut rng = SimRng::seed_from_u64(17);
        let mut hits = 0;
        for _ in 0..100 {
            let (h, idx) = one_sparse(&dicts, 8.0, &mut rng);
            let x = gen_pilots(16, 64, 1.0, &mut rng).unwrap();
            let block = PilotBlock::observe(&h, x, 0.01, Some(3), &mut rng).unwrap();
            let rep = estimate_gamp_em(&block, &dicts, 1.0, &GampOptions::default()).unwrap();
            if argmax(&rep.estimate.g_hat) == idx {
                hits += 1;
            }
        }
        assert!(hits >= 95, "support recovered {hits}/100");
    }

    #[test]
    fn beats_linear_baseline_on_sparse_channels() {
        let ue = ArrayGeometry::new(2, 2).unwrap();
        let bs = ArrayGeometry::new(4, 4).unwrap();
        let dicts = AngularDictionaries::new(&ue, &bs);
        let mut rng = SimRng::seed_from_u64(23);
        let (mut lin, mut amp) = (Vec::new(), Vec::new());
        for _ in 0..30 {
            let (h1, _) = one_sparse(&dicts, 6.0, &mut rng);
            let (h2, _) = one_sparse(&dicts, 3.0, &mut rng);
            let h = h1 + h2;
            let x = gen_pilots(16, 128, 1.0, &mut rng).unwrap();
            let block = PilotBlock::observe(&h, x, 1.0, Some(3), &mut rng).unwrap();
            let prior = h.norm_squared() / h.len() as f64;
            lin.push(nmse(&h, &estimate_bussgang_lmmse(&block, &dicts, prior).unwrap().h_hat).unwrap());
            let rep = estimate_gamp_em(&block, &dicts, prior, &GampOptions::default()).unwrap();
            amp.push(nmse(&h, &rep.estimate.h_hat).unwrap());
        }
        lin.sort_by(f64::total_cmp);
        amp.sort_by(f64::total_cmp);
        assert!(amp[15] <= lin[15], "gamp {} vs lmmse {}", amp[15], lin[15]);
    }

    #[test]
    fn zero_channel_gives_small_estimate() {
        let ue = ArrayGeometry::new(2, 2).unwrap();
        let bs = ArrayGeometry::new(4, 4).unwrap();
        let dicts = AngularDictionaries::new(&ue, &bs);
        let mut rng = SimRng::seed_from_u64(2);
        let h = DMatrix::zeros(4, 16);
        let x = gen_pilots(16, 128, 1.0, &mut rng).unwrap();
        let noise_var = 0.5;
        let block = PilotBlock::observe(&h, x, noise_var, Some(3), &mut rng).unwrap();
        let rep = estimate_gamp_em(&block, &dicts, 1.0, &GampOptions::default()).unwrap();
        // noise floor of a least-squares fit over 128 unit-power pilots
        let floor = noise_var / 128.0 * h.len() as f64;
        assert!(rep.estimate.h_hat.norm_squared() <= floor, "{}", rep.estimate.h_hat.norm_squared());
    }

    #[test]
    fn unquantized_path_runs() {
        let ue = ArrayGeometry::new(1, 2).unwrap();
        let bs = ArrayGeometry::new(2, 2).unwrap();
        let dicts = AngularDictionaries::new(&ue, &bs);
        let mut rng = SimRng::seed_from_u64(9);
        let (h, _) = one_sparse(&dicts, 2.0, &mut rng);
        let x = gen_pilots(4, 32, 1.0, &mut rng).unwrap();
        let block = PilotBlock::observe(&h, x, 1e-3, None, &mut rng).unwrap();
        let rep = estimate_gamp_em(&block, &dicts, 1.0, &GampOptions::default()).unwrap();
        assert!(nmse(&h, &rep.estimate.h_hat).unwrap() < -20.0);
    }

    #[test]
    fn rejects_bad_options() {
        let dicts = AngularDictionaries::new(&ArrayGeometry::new(1, 1).unwrap(), &ArrayGeometry::new(1, 2).unwrap());
        let mut rng = SimRng::seed_from_u64(1);
        let h = DMatrix::from_element(1, 2, C64::new(1.0, 0.0));
        let x = gen_pilots(2, 8, 1.0, &mut rng).unwrap();
        let block = PilotBlock::observe(&h, x, 0.1, Some(2), &mut rng).unwrap();
        let bad = GampOptions {
            damping: 0.0,
            ..GampOptions::default()
        };
        assert!(estimate_gamp_em(&block, &dicts, 1.0, &bad).is_err());
    }
}
