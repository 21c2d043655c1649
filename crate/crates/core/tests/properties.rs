use proptest::prelude::*;

use emulcap::capacity::{capacity, eval_ratio, lp_norm};
use emulcap::channel::{channels_equal, is_idempotent};
use emulcap::emulation::{embedding_feasible, embedding_feasible_exhaustive};
use emulcap::io::{fmt_sig, ChannelFile};
use emulcap::random::{random_channel, rng_from_seed};
use emulcap::structure::ShapeVector;
use emulcap::ToleranceConfig;

fn shape() -> impl Strategy<Value = ShapeVector> {
    prop::collection::vec(1usize..=6, 1..=4).prop_map(|v| ShapeVector::new(v).unwrap())
}

fn p_value() -> impl Strategy<Value = f64> {
    prop_oneof![1.0..20.0f64, Just(f64::INFINITY)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lp_norm_decreases_in_p(v in shape(), p in 1.0..10.0f64, dp in 0.0..10.0f64) {
        let lo = lp_norm(&v, p).unwrap();
        let hi = lp_norm(&v, p + dp).unwrap();
        prop_assert!(hi <= lo * (1.0 + 1e-12));
        prop_assert!(lp_norm(&v, f64::INFINITY).unwrap() <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn lp_norm_is_multiplicative(a in shape(), b in shape(), p in p_value()) {
        let lhs = lp_norm(&a.tensor(&b), p).unwrap();
        let rhs = lp_norm(&a, p).unwrap() * lp_norm(&b, p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn shape_tensor_commutes(a in shape(), b in shape()) {
        prop_assert_eq!(a.tensor(&b), b.tensor(&a));
        prop_assert_eq!(a.tensor(&b).sum(), a.sum() * b.sum());
    }

    #[test]
    fn capacity_lower_bounds_sampled_ratios(f in shape(), g in shape(), p in p_value()) {
        let rep = capacity(&f, &g);
        if let Ok(r) = eval_ratio(&f, &g, p) {
            if r.is_finite() {
                prop_assert!(rep.value <= r + 1e-9 * r.abs().max(1.0));
            }
        }
    }

    #[test]
    fn feasibility_matches_exhaustive(
        s in prop::collection::vec(1usize..=4, 1..=4),
        t in prop::collection::vec(1usize..=4, 1..=4),
    ) {
        let mut s = s;
        let mut t = t;
        s.sort_unstable_by(|a, b| b.cmp(a));
        t.sort_unstable_by(|a, b| b.cmp(a));
        let plan = embedding_feasible(&s, &t);
        prop_assert_eq!(plan.is_some(), embedding_feasible_exhaustive(&s, &t));
        if let Some(plan) = plan {
            prop_assert!(plan.validate().is_ok());
        }
    }

    #[test]
    fn fmt_sig_round_trips_to_twelve_digits(x in prop::num::f64::NORMAL) {
        let y: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((x - y).abs() <= 1e-11 * x.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn channel_files_round_trip(seed in any::<u64>(), d_in in 1usize..=4, d_out in 1usize..=4, r in 1usize..=3) {
        let tol = ToleranceConfig::default();
        let ch = random_channel(&mut rng_from_seed(seed), d_in, d_out, r);
        let text = ChannelFile::named(&ch, "random", None).to_json_string().unwrap();
        let back = ChannelFile::from_json_str(&text).unwrap().channel.to_channel(&tol).unwrap();
        prop_assert_eq!(back.kraus(), ch.kraus());
        prop_assert!(channels_equal(&back, &ch, &tol).unwrap().equal);
    }

    #[test]
    fn random_channels_are_rarely_idempotent(seed in any::<u64>(), d in 2usize..=4) {
        let ch = random_channel(&mut rng_from_seed(seed), d, d, 2);
        prop_assert!(!is_idempotent(&ch, &ToleranceConfig::default()).unwrap().equal);
    }
}
