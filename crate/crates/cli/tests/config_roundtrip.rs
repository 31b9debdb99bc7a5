use std::path::PathBuf;

use calabi_cli::config::{ProfileSource, RunConfig, SolveMethod};
use calabi_core::io::GeometrySelector;
use calabi_core::{FunctionDescriptor, Tolerances};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, (-20i32..20).prop_map(f64::from)]
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-14..1e3f64, Just(1e-8)]
}

fn descriptor() -> impl Strategy<Value = FunctionDescriptor> {
    let leaf = prop_oneof![
        Just(FunctionDescriptor::Identity),
        Just(FunctionDescriptor::Exponential),
        Just(FunctionDescriptor::LogGuarded),
        finite().prop_map(FunctionDescriptor::constant),
        (finite(), finite()).prop_map(|(a, b)| FunctionDescriptor::affine(a, b)),
        (-5.0..5.0f64).prop_map(FunctionDescriptor::Power),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (finite(), inner.clone()).prop_map(|(c, d)| FunctionDescriptor::scaled(c, d)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| FunctionDescriptor::sum(a, b)),
            (inner, finite(), finite()).prop_map(|(d, a, b)| FunctionDescriptor::composed(d, a, b)),
        ]
    })
}

fn path() -> impl Strategy<Value = PathBuf> {
    "[a-z0-9_]{1,8}(/[a-z0-9_.]{1,8}){0,2}".prop_map(PathBuf::from)
}

fn config() -> impl Strategy<Value = RunConfig> {
    let geometry = prop_oneof![
        Just(GeometrySelector::Cp1),
        (2u32..6).prop_map(GeometrySelector::Cpm),
        path().prop_map(GeometrySelector::Custom),
    ];
    let profile = prop_oneof![
        Just(ProfileSource::Round),
        (any::<u64>(), 0.0..1.0f64)
            .prop_map(|(seed, amplitude)| ProfileSource::Random { seed, amplitude }),
        path().prop_map(ProfileSource::File),
    ];
    let functions = (
        descriptor(),
        descriptor(),
        prop::collection::vec(descriptor(), 0..4),
        prop::collection::vec(descriptor(), 0..4),
    );
    let numbers = (
        prop::option::of(finite()),
        3usize..400,
        positive(),
        positive(),
        any::<u64>(),
        0usize..500,
        0.0..2.0f64,
        0usize..100,
        positive(),
    );
    let rest = (
        prop_oneof![Just(SolveMethod::Shoot), Just(SolveMethod::Minimize)],
        path(),
    );
    (geometry, profile, functions, numbers, rest).prop_map(
        |(geometry, profile, (f, h, sweep_f, sweep_h), numbers, (method, out))| {
            let (target, nodes, boundary, affine, seed, samples, amplitude, max_steps, alpha) =
                numbers;
            RunConfig {
                geometry,
                profile,
                f,
                h,
                target,
                nodes,
                tol: Tolerances { boundary, affine },
                seed,
                samples,
                amplitude,
                max_steps,
                method,
                sweep_f,
                sweep_h,
                alpha_threshold: alpha,
                out,
            }
        },
    )
}

proptest! {
    #[test]
    fn parse_inverts_render(cfg in config()) {
        let text = cfg.render();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.render(), text);
    }

    #[test]
    fn unknown_keys_are_rejected(key in "[a-z]{1,6}\\.[a-z]{1,6}") {
        prop_assume!(calabi_cli::config::KEYS.iter().all(|k| *k != key));
        let err = RunConfig::parse(&format!("{key} = 1")).unwrap_err();
        prop_assert!(err.contains("unknown key"));
    }
}
