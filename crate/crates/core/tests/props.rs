//! Property tests for the structural invariants: simplex preservation,
//! Bayes/jump-correction agreement under random parameters, kernel grouping,
//! and bit-exact path replay.

use proptest::prelude::*;

use fshedge::filter::{self, SimplexVector};
use fshedge::model::{
    self, Bounds, Coefficient, CoefficientSet, MarkAtom, MarkSpace, Measure, ModelSpec, Payoff,
    RegimeSet,
};
use fshedge::simulate;

fn arb_spec() -> impl Strategy<Value = ModelSpec> {
    // two regimes, two atoms, random coefficients in the admissible range
    (
        0.01f64..0.2,         // switch rate
        0.01f64..0.2,         // kick rate
        -0.15f64..0.15,       // mu in regime 0
        -0.15f64..0.15,       // mu in regime 1
        0.1f64..0.35,         // sigma
        -0.05f64..0.06,       // kick size regime 0
        -0.05f64..0.06,       // kick size regime 1
        proptest::bool::ANY,  // kick flips the regime or not
    )
        .prop_map(|(sw, kick, mu0, mu1, sigma, k0, k1, kick_flips)| ModelSpec {
            regimes: RegimeSet { values: vec![0.0, 1.0] },
            marks: MarkSpace {
                atoms: vec![
                    MarkAtom { id: "switch".into(), weight: sw },
                    MarkAtom { id: "kick".into(), weight: kick },
                ],
            },
            coeffs: CoefficientSet {
                mu1: Coefficient::RegimeTable { values: vec![mu0, mu1] },
                sigma1: Coefficient::Constant { value: sigma },
                regime_jump_dest: vec![
                    vec![1, 0],
                    if kick_flips { vec![1, 0] } else { vec![0, 1] },
                ],
                price_jump: vec![vec![0.0, 0.0], vec![k0, k1]],
                bounds: Bounds {
                    c1: 0.5,
                    c2: 0.05,
                    c3: 0.5,
                    c4: 0.5,
                    price_lo: 0.3,
                    price_hi: 3.0,
                },
            },
            x0: 0,
            s0: 1.0,
            horizon: 1.0,
            payoff: Payoff::Call { strike: 0.9 },
        })
        .prop_filter("admissible", |spec| {
            fshedge::mmm::admissibility_check(spec, 5).map(|r| r.passed).unwrap_or(false)
        })
}

fn arb_simplex(d: usize) -> impl Strategy<Value = SimplexVector> {
    proptest::collection::vec(0.01f64..1.0, d)
        .prop_map(|raw| SimplexVector::project(raw).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn projection_always_lands_on_simplex(raw in proptest::collection::vec(-0.2f64..1.0, 2..5)) {
        prop_assume!(raw.iter().any(|x| *x > 1e-6));
        let v = SimplexVector::project(raw).unwrap();
        prop_assert!(v.is_on_simplex(1e-12));
    }

    #[test]
    fn jump_update_routes_agree_for_random_models(
        spec in arb_spec(),
        p in arb_simplex(2),
        t in 0.0f64..1.0,
        s in 0.6f64..1.5,
        pick_regime in 0usize..2,
        pick_measure in proptest::bool::ANY,
    ) {
        let kern = model::levy_kernel(&spec, t, pick_regime, s);
        prop_assume!(!kern.entries.is_empty());
        let z = kern.entries[0].size;
        let measure = if pick_measure { Measure::Physical } else { Measure::Minimal };
        let a = filter::jump_update(&spec, measure, t, s, z, &p).unwrap();
        let b = filter::jump_update_w_form(&spec, measure, t, s, z, &p).unwrap();
        for i in 0..2 {
            prop_assert!((a.get(i) - b.get(i)).abs() < 1e-12);
            prop_assert!(a.get(i) >= 0.0);
        }
        prop_assert!(a.is_on_simplex(1e-12));
    }

    #[test]
    fn continuous_step_preserves_simplex(
        spec in arb_spec(),
        p in arb_simplex(2),
        t in 0.0f64..0.9,
        s in 0.6f64..1.5,
        ret in -0.05f64..0.05,
        pick_measure in proptest::bool::ANY,
    ) {
        let measure = if pick_measure { Measure::Physical } else { Measure::Minimal };
        let (next, _) = filter::continuous_step(&spec, measure, t, 1.0 / 128.0, s, ret, &p).unwrap();
        prop_assert!(next.is_on_simplex(1e-12));
    }

    #[test]
    fn replay_reproduces_any_path(spec in arb_spec(), seed in 0u64..10_000) {
        let path = simulate::simulate_path(&spec, 64, Measure::Physical, seed).unwrap();
        let (regimes, prices) = simulate::replay(&spec, &path).unwrap();
        prop_assert_eq!(&regimes, &path.regimes);
        for (a, b) in prices.iter().zip(&path.prices) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert!(path.prices.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn kernel_grouping_conserves_mass(spec in arb_spec(), t in 0.0f64..1.0, s in 0.6f64..1.5) {
        for regime in 0..2 {
            let kern = model::levy_kernel(&spec, t, regime, s);
            let grouped = kern.grouped_by_size();
            let total: f64 = grouped.iter().map(|(_, r)| r).sum();
            prop_assert!((total - kern.total_rate).abs() <= 1e-12 * kern.total_rate.max(1.0));
            // interval queries reconstruct the same masses
            for (z, mass) in &grouped {
                let lo = z - 1e-9 * z.abs().max(1.0);
                let hi = z + 1e-9 * z.abs().max(1.0);
                prop_assert!((kern.rate_in_interval(lo, hi) - mass).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ensemble_binary_roundtrip(spec in arb_spec(), seed in 0u64..1_000) {
        let set = simulate::simulate_ensemble(&spec, 16, Measure::Physical, 3, seed).unwrap();
        let mut buf = Vec::new();
        simulate::write_ensemble(&set, &mut buf).unwrap();
        let back = simulate::read_ensemble(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(set.paths.len(), back.paths.len());
        for (a, b) in set.paths.iter().zip(&back.paths) {
            prop_assert_eq!(&a.prices, &b.prices);
            prop_assert_eq!(&a.regimes, &b.regimes);
            prop_assert_eq!(a.events.len(), b.events.len());
        }
    }
}
