use proptest::prelude::*;

use fracvar::functionals::{classify_regime, vstat_values, FunctionalSpec, WeakTag};
use fracvar::harness::ks_two_sample;
use fracvar::kernel::{dk_apply, hk_eval};
use fracvar::limitlaws::{tail_constants, CConvention};
use fracvar::stable::{integral_scale, tau_gamma, Domain, RngStream, StableLaw};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn char_fn_is_bounded_and_hermitian(beta in 0.1f64..1.99, scale in 0.05f64..5.0, theta in -20.0f64..20.0) {
        let law = StableLaw::symmetric(beta, scale).unwrap();
        let a = law.char_fn(theta);
        let b = law.char_fn(-theta);
        prop_assert!(a.norm() <= 1.0 + 1e-15);
        prop_assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn hk_matches_kth_difference(alpha in 0.05f64..2.5, k in 1usize..4, x in -5.0f64..200.0) {
        let direct = dk_apply(|s: f64| if s > 0.0 { s.powf(alpha) } else { 0.0 }, k, x);
        let h = hk_eval(alpha, k, x);
        prop_assert!((h - direct).abs() <= 1e-12 * (1.0 + x.abs().powf(alpha)));
    }

    #[test]
    fn integral_scale_is_homogeneous(beta in 0.5f64..1.95, c in 0.2f64..5.0, rho in 0.2f64..3.0) {
        let psi = |s: f64| (-s).exp() * (1.0 + s).sqrt();
        let tol = 1e-9;
        let base = integral_scale(psi, beta, rho, Domain::From(0.0), &[], tol).unwrap();
        let scaled_psi = integral_scale(|s| c * psi(s), beta, rho, Domain::From(0.0), &[], tol).unwrap();
        let scaled_rho = integral_scale(psi, beta, c * rho, Domain::From(0.0), &[], tol).unwrap();
        prop_assert!((scaled_psi / base - c).abs() < 1e-6 * c);
        prop_assert!((scaled_rho / base - c).abs() < 1e-6 * c);
    }

    #[test]
    fn tail_constants_are_positive_when_a_jump_constant_is(
        kp in -1.0f64..1.0, km in -1.0f64..1.0, alpha in 0.55f64..1.4, beta in 1.05f64..1.95,
    ) {
        prop_assume!(kp.abs() > 1e-3 || km.abs() > 1e-3);
        let k = 2;
        prop_assume!(alpha > k as f64 - 2.0 / beta);
        for conv in [CConvention::Boxed, CConvention::ExponentBeta, CConvention::HalfTail] {
            let (cp, cm) = tail_constants(kp, km, alpha, beta, k, 1.0, conv).unwrap();
            prop_assert!(cp >= 0.0 && cm >= 0.0);
            prop_assert!(cp + cm > 0.0);
        }
    }

    #[test]
    fn critical_iff_on_the_boundary(beta in 0.2f64..1.99, k in 1usize..4, offset in prop_oneof![Just(0.0), -0.5f64..0.5]) {
        let alpha = k as f64 - 2.0 / beta + offset;
        prop_assume!(alpha > 0.0);
        let f = FunctionalSpec::Cos { u: 1.0 };
        let r = classify_regime(alpha, beta, k, &f, None).unwrap();
        let again = classify_regime(alpha, beta, k, &f, None).unwrap();
        prop_assert_eq!(&r, &again);
        prop_assert_eq!(r.weak == WeakTag::Critical, offset.abs() < 1e-9);
    }

    #[test]
    fn vstat_negation_equivariance(seed in any::<u64>(), n in 16usize..256, b in 0.1f64..1.5) {
        let law = StableLaw::symmetric(1.5, 1.0).unwrap();
        let xs = law.sample(n, RngStream::new(seed, 0));
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let even = FunctionalSpec::Cos { u: 1.0 };
        let odd = FunctionalSpec::Sin { u: 1.0 };
        let e = (vstat_values(&xs, n, &even, 1.0, b).value, vstat_values(&neg, n, &even, 1.0, b).value);
        let o = (vstat_values(&xs, n, &odd, 1.0, b).value, vstat_values(&neg, n, &odd, 1.0, b).value);
        prop_assert!((e.0 - e.1).abs() < 1e-12);
        prop_assert!((o.0 + o.1).abs() < 1e-12);
    }

    #[test]
    fn two_sample_ks_is_symmetric(seed in any::<u64>(), na in 5usize..200, nb in 5usize..200) {
        let law = StableLaw::symmetric(1.2, 1.0).unwrap();
        let a = law.sample(na, RngStream::new(seed, 1));
        let b = law.sample(nb, RngStream::new(seed, 2));
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(ab.distance, ba.distance);
        prop_assert!((0.0..=1.0).contains(&ab.distance));
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), stream in 0u64..8, beta in 0.3f64..1.99) {
        let law = StableLaw::symmetric(beta, 1.0).unwrap();
        let a = law.sample(64, RngStream::new(seed, stream));
        let b = law.sample(64, RngStream::new(seed, stream));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn tau_is_continuous_at_one() {
    let at = tau_gamma(1.0).unwrap();
    for eps in [1e-4, 1e-5, 1e-6] {
        assert!((tau_gamma(1.0 + eps).unwrap() - at).abs() < 1e-3);
        assert!((tau_gamma(1.0 - eps).unwrap() - at).abs() < 1e-3);
    }
}
