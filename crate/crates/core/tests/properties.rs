use lowres_core::allocation::{up_ua, wp_ua};
use lowres_core::channel::{sample_clusters, synthesize_channel, AngleModel, LinkState, LinkTag};
use lowres_core::rate::{dl_user_rate, mutual_information, overhead_scale, ptp_rate, subchannel_rate, Csi};
use lowres_core::receiver::{
    direct_bin, midpoint_thresholds, pam_constellation, transition_matrix_awgn, transition_matrix_mc, AdaptiveReceiver,
    ReceiverConfig,
};
use lowres_core::seed::rng_from;
use lowres_core::subchannel::{real_expand, svd_subchannels};
use lowres_core::{waterfill, ArrayGeometry, QuantizerSpec, SchemeTag, TdmaMode, TransitionMatrix, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn link() -> LinkState {
    LinkState {
        tag: LinkTag::Los,
        distance: 20.0,
        shadowing_db: 0.0,
    }
}

fn complex_matrix(r: usize, c: usize, vals: &[f64]) -> DMatrix<C64> {
    DMatrix::from_fn(r, c, |i, j| {
        let k = 2 * (i * c + j);
        C64::new(vals[k % vals.len()], vals[(k + 1) % vals.len()])
    })
}

fn sigmas() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1e-2f64..30.0, 1..10).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn synthesized_channel_is_finite_and_reproducible(seed in any::<u64>(), beta in 1e-4f64..1.0) {
        let bs = ArrayGeometry::new(2, 4).unwrap();
        let ue = ArrayGeometry::new(2, 2).unwrap();
        let make = || {
            let mut rng = rng_from(seed, &[0]);
            let cl = sample_clusters(&AngleModel::default(), &mut rng).unwrap();
            synthesize_channel(&cl, &bs, &ue, beta, link()).unwrap()
        };
        let (a, b) = (make(), make());
        prop_assert_eq!(a.h.shape(), (4, 8));
        prop_assert!(a.h.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        prop_assert_eq!(&a.h, &b.h);
        let rank = a.h.clone().svd(false, false).rank(1e-10 * a.h.norm().max(1e-300));
        prop_assert!(rank <= a.clusters.total_rays());
    }

    #[test]
    fn real_expansion_pairs_singular_values(vals in proptest::collection::vec(-3.0f64..3.0, 8..40), r in 1usize..5, c in 1usize..6) {
        let h = complex_matrix(r, c, &vals);
        let hr = real_expand(&h);
        prop_assert!((hr.norm_squared() - 2.0 * h.norm_squared()).abs() <= 1e-10 * h.norm_squared().max(1.0));
        let d = svd_subchannels(&hr).unwrap();
        let top = d.sigma[0].max(1e-300);
        for pair in d.sigma.chunks(2) {
            if pair.len() == 2 {
                prop_assert!((pair[0] - pair[1]).abs() <= 1e-8 * top);
            }
        }
        prop_assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        let k = d.sigma.len();
        prop_assert!(((d.u.transpose() * &d.u) - DMatrix::identity(k, k)).norm() <= 1e-9);
        prop_assert!(((d.v.transpose() * &d.v) - DMatrix::identity(k, k)).norm() <= 1e-9);
        let back = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.sigma.clone())) * d.v.transpose();
        prop_assert!((back - &hr).norm() <= 1e-8 * hr.norm().max(1e-300));
    }

    #[test]
    fn waterfill_spends_budget_and_is_deterministic(gains in proptest::collection::vec(1e-3f64..1e3, 1..16), p in 1e-3f64..50.0) {
        let a = waterfill(&gains, p).unwrap();
        prop_assert_eq!(&a, &waterfill(&gains, p).unwrap());
        prop_assert!((a.iter().sum::<f64>() - p).abs() <= 1e-9 * p);
        prop_assert!(a.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sar_receiver_matches_direct_bins(bits in 1u32..=4, range in 0.5f64..4.0, xs in proptest::collection::vec(-6.0f64..6.0, 1..24)) {
        let spec = QuantizerSpec::uniform_midrise(bits, range).unwrap();
        let cfg = ReceiverConfig::sar_scalar(&spec).unwrap();
        let b = cfg.block_len();
        let mut inputs: Vec<DVector<f64>> = xs.iter().map(|&x| DVector::from_element(1, x)).collect();
        while inputs.len() % b != 0 {
            inputs.push(DVector::from_element(1, 0.0));
        }
        let got = AdaptiveReceiver::new(cfg).quantize_sequence(&inputs).unwrap();
        for (x, bin) in inputs.iter().zip(&got[0]) {
            prop_assert_eq!(*bin, direct_bin(x[0], spec.thresholds()));
        }
    }

    #[test]
    fn mc_matrix_is_exactly_row_stochastic(seed in any::<u64>(), bits in 1u32..=4, g in 0.1f64..4.0, gi in -1.0f64..1.0) {
        let pts = pam_constellation(1 << bits, 1.0).unwrap();
        let thr: Vec<f64> = midpoint_thresholds(&pts).unwrap().iter().map(|t| g * t).collect();
        let mut rng = rng_from(seed, &[1]);
        let m = transition_matrix_mc(&pts, &thr, &[g, gi], 0, &[Vec::new(), pts.clone()], 1.0, 4000, &mut rng).unwrap();
        for row in m.matrix().row_iter() {
            let counts: Vec<f64> = row.iter().map(|p| p * 4000.0).collect();
            prop_assert!(counts.iter().all(|c| (c - c.round()).abs() < 1e-6));
            prop_assert_eq!(counts.iter().sum::<f64>().round(), 4000.0);
        }
    }

    #[test]
    fn merging_bins_never_increases_information(bits in 1u32..=4, g in 0.1f64..5.0, noise in 0.1f64..2.0, drop in 0usize..15) {
        let pts = pam_constellation(1 << bits, 1.0).unwrap();
        let thr: Vec<f64> = midpoint_thresholds(&pts).unwrap().iter().map(|t| g * t).collect();
        let fine = transition_matrix_awgn(&pts, &thr, g, noise).unwrap();
        let mut coarse_thr = thr.clone();
        coarse_thr.remove(drop % thr.len());
        let coarse = transition_matrix_awgn(&pts, &coarse_thr, g, noise).unwrap();
        prop_assert!(mutual_information(&coarse).unwrap() <= mutual_information(&fine).unwrap() + 1e-12);
    }

    #[test]
    fn information_is_bounded(rows in 1usize..6, cols in 1usize..6, vals in proptest::collection::vec(0.0f64..1.0, 36)) {
        let mut p = DMatrix::from_fn(rows, cols, |i, j| vals[i * 6 + j] + 1e-3);
        for mut r in p.row_iter_mut() {
            let s = r.sum();
            r /= s;
        }
        let i = mutual_information(&TransitionMatrix::new(p).unwrap()).unwrap();
        prop_assert!(i >= -1e-12 && i <= (rows as f64).log2() + 1e-12);
    }

    #[test]
    fn subchannel_rate_is_bounded_and_monotone(bits in 0u32..=8, sigma in 0.0f64..20.0, p in 0.0f64..4.0) {
        let r = subchannel_rate(sigma, p, bits, 4).unwrap();
        prop_assert!(r >= -1e-12 && r <= f64::from(bits.min(4)) + 1e-9);
        prop_assert!(subchannel_rate(sigma * 1.5, p, bits, 4).unwrap() >= r - 1e-9);
    }

    #[test]
    fn perfect_csi_rates_respect_benchmark(sigma in sigmas(), p in 0.1f64..10.0, n_q in 1u32..=16, n_u in 1u32..=10) {
        for alloc in [wp_ua(&sigma, p, n_q).unwrap(), up_ua(&sigma, p, n_q).unwrap()] {
            let r = ptp_rate(&sigma, &alloc, &Csi::Perfect, SchemeTag::WpUa).unwrap();
            prop_assert!(r.total_bps_per_hz <= r.benchmark_truncated);
            prop_assert!(r.total_bps_per_hz <= f64::from(n_q));
            let prop_r = dl_user_rate(&sigma, &alloc, n_u, TdmaMode::Proposed, &Csi::Perfect).unwrap();
            let naive = dl_user_rate(&sigma, &alloc, n_u, TdmaMode::Naive, &Csi::Perfect).unwrap();
            prop_assert!(prop_r.total_bps_per_hz >= naive.total_bps_per_hz - 1e-12);
        }
    }

    #[test]
    fn overhead_is_linear(a in 0.0f64..20.0, b in 0.0f64..20.0, n_p in 0u32..1000) {
        let n_c = 10_240;
        let s = |x| overhead_scale(x, n_p, n_c).unwrap();
        prop_assert!((s(a + b) - s(a) - s(b)).abs() <= 1e-12 * (a + b).max(1.0));
        prop_assert!(s(a) <= a);
    }
}
