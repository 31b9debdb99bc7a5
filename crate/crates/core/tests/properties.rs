use calabi_core::io::{profile_from_csv, profile_to_csv};
use calabi_core::*;
use proptest::prelude::*;

fn smooth_descriptor() -> impl Strategy<Value = FunctionDescriptor> {
    let leaf = prop_oneof![
        Just(FunctionDescriptor::Identity),
        Just(FunctionDescriptor::Exponential),
        (-3.0..3.0f64).prop_map(FunctionDescriptor::constant),
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| FunctionDescriptor::affine(a, b)),
        (0u32..5).prop_map(|p| FunctionDescriptor::Power(p as f64)),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (-2.0..2.0f64, inner.clone()).prop_map(|(c, d)| FunctionDescriptor::scaled(c, d)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| FunctionDescriptor::sum(a, b)),
            (inner, -1.0..1.0f64, -1.0..1.0f64)
                .prop_map(|(d, a, b)| FunctionDescriptor::composed(d, a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn catalog_derivatives_match_finite_differences(
        d in smooth_descriptor(),
        x in -1.5..1.5f64,
    ) {
        let h = 1e-4;
        let f = |x: f64| d.eval_real(x).unwrap();
        let d1 = d.derivative_real(x).unwrap();
        let d2 = d.second_derivative_real(x).unwrap();
        let fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let fd2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        let scale = 1.0 + f(x).abs() + d1.abs() + d2.abs();
        prop_assert!((fd1 - d1).abs() < 1e-6 * scale, "{d}: f′ {d1} vs {fd1}");
        prop_assert!((fd2 - d2).abs() < 1e-3 * scale, "{d}: f″ {d2} vs {fd2}");
    }

    #[test]
    fn descriptors_round_trip_through_text(d in smooth_descriptor()) {
        let back: FunctionDescriptor = d.to_string().parse().unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn random_profiles_are_admissible(seed in any::<u64>(), amplitude in 0.0..1.0f64, m in 1u32..4) {
        let g = if m == 1 { make_cp1_geometry() } else { make_cpm_geometry(m).unwrap() };
        let p = random_admissible_profile(&g, seed, amplitude).unwrap();
        prop_assert!(validate(&p, &Tolerances::default()).is_empty());
    }

    #[test]
    fn profile_csv_round_trip_is_bit_exact(seed in any::<u64>(), amplitude in 0.0..0.5f64) {
        let g = make_cp1_geometry();
        let p = random_admissible_profile(&g, seed, amplitude).unwrap();
        let back = profile_from_csv(&g, &profile_to_csv(&p)).unwrap();
        for (a, b) in p.theta().values().iter().zip(back.theta().values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn same_seed_same_profile(seed in any::<u64>()) {
        let g = make_cp1_geometry();
        let a = random_admissible_profile(&g, seed, 0.3).unwrap();
        let b = random_admissible_profile(&g, seed, 0.3).unwrap();
        prop_assert_eq!(a.theta(), b.theta());
    }
}
