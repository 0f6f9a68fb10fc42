use proptest::prelude::*;

use locc_core::caratheodory::{caratheodory_reduce_minimal, weighted_sum};
use locc_core::linalg::{hermitian_eig, psd_sqrt, svd, CMatrix, C64};
use locc_core::protocol::{normalize_protocol, run_protocol};
use locc_core::random;
use locc_core::wclass::{
    apply_binary_measurement, avg_delta_c, complete_measurement, concurrence_from_ensemble,
    wootters_concurrence, Party, WClassVector,
};
use locc_core::{instrument_choi_distance, mix_instruments};

const TOL: f64 = 1e-10;

fn party() -> impl Strategy<Value = Party> {
    prop_oneof![Just(Party::A), Just(Party::B), Just(Party::C)]
}

fn simplex() -> impl Strategy<Value = WClassVector> {
    (0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        WClassVector::new(a / s, b / s, c / s).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn choi_distance_is_a_metric(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let a = random::instrument(&[2, 2], 3, &mut rng);
        let b = random::instrument(&[2, 2], 3, &mut rng);
        let c = random::instrument(&[2, 2], 3, &mut rng);
        let ab = instrument_choi_distance(&a, &b).unwrap();
        let ba = instrument_choi_distance(&b, &a).unwrap();
        let ac = instrument_choi_distance(&a, &c).unwrap();
        let cb = instrument_choi_distance(&c, &b).unwrap();
        prop_assert!((ab - ba).abs() <= TOL);
        prop_assert!(ab <= ac + cb + TOL);
        prop_assert!(instrument_choi_distance(&a, &a).unwrap() <= TOL);
    }

    #[test]
    fn mixing_interpolates_distance(seed in any::<u64>(), lambda in 0.0f64..1.0) {
        let mut rng = random::rng(seed);
        let a = random::instrument(&[2, 2], 2, &mut rng);
        let b = random::instrument(&[2, 2], 2, &mut rng);
        let mix = mix_instruments(&a, &b, lambda).unwrap();
        prop_assert!(mix.validate(TOL).valid);
        let d = instrument_choi_distance(&mix, &a).unwrap();
        let full = instrument_choi_distance(&b, &a).unwrap();
        prop_assert!((d - (1.0 - lambda) * full).abs() <= 1e-9);
    }

    #[test]
    fn normalization_preserves_the_instrument(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = random::protocol_tree(&[2, 2], 3, 2, &mut rng);
        let n = normalize_protocol(&t).unwrap();
        let d = instrument_choi_distance(&run_protocol(&t).unwrap(), &run_protocol(&n).unwrap()).unwrap();
        prop_assert!(d <= 1e-9, "distance {}", d);
    }

    #[test]
    fn eig_and_svd_reconstruct(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = random::rng(seed);
        let g = random::gaussian_matrix(d, d, &mut rng);
        let h = (&g + &g.adjoint()).scale_real(0.5);
        prop_assert!(hermitian_eig(&h).unwrap().reconstruct().max_abs_diff(&h) <= TOL);
        let s = svd(&g);
        let sigma = CMatrix::diag_real(&s.s);
        prop_assert!(s.u.matmul(&sigma).matmul(&s.v.adjoint()).max_abs_diff(&g) <= TOL);
        let p = g.gram();
        let r = psd_sqrt(&p).unwrap();
        prop_assert!(r.matmul(&r).max_abs_diff(&p) <= 1e-9);
    }

    #[test]
    fn minimal_reduction_keeps_barycenter(seed in any::<u64>(), n in 1usize..8, extra in 0usize..12) {
        let mut rng = random::rng(seed);
        let k = n + 1 + extra;
        let g = random::gaussian_matrix(k, n, &mut rng);
        let points: Vec<Vec<f64>> = (0..k).map(|i| (0..n).map(|j| g[(i, j)].re).collect()).collect();
        let weights: Vec<f64> = (0..k).map(|i| 0.1 + g[(i, 0)].im.abs()).collect();
        let r = caratheodory_reduce_minimal(&points, &weights, 1e-12).unwrap();
        prop_assert!(r.support() <= n + 1);
        let a = weighted_sum(&points, &weights);
        let b = r.weighted_sum();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= TOL);
        }
        prop_assert!(r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn wootters_on_pure_pairs(alpha_re in -1.0f64..1.0, alpha_im in -1.0f64..1.0, phase in 0.0f64..6.3) {
        let alpha = C64::new(alpha_re, alpha_im);
        let norm = alpha.norm();
        prop_assume!(norm > 1e-3 && norm < 0.999);
        let beta = C64::from_polar((1.0 - norm * norm).sqrt(), phase);
        let psi = vec![C64::new(0.0, 0.0), alpha, beta, C64::new(0.0, 0.0)];
        let rho = CMatrix::outer(&psi);
        let c = wootters_concurrence(&rho, 1e-9).unwrap();
        prop_assert!((c - 2.0 * (alpha * beta).norm()).abs() <= TOL);
        prop_assert!((concurrence_from_ensemble(&[psi]) - c).abs() <= TOL);
    }

    #[test]
    fn monotone_never_increases(x in simplex(), k in party(), star in party(), a1 in 0.01f64..0.99, c1 in 0.0f64..1.0) {
        let m = complete_measurement(k, a1, c1, C64::new(0.0, 0.0)).unwrap();
        let total: f64 = apply_binary_measurement(&x, &m).iter().map(|o| o.0).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(avg_delta_c(&x, star, &m) <= 1e-9);
    }
}
