use proptest::prelude::*;
use repeater_core::belldiag::oracle::{oracle_dejmps, oracle_dephase, oracle_depolarize_one_side, oracle_swap};
use repeater_core::belldiag::{
    convolve, dejmps, dephase, depolarize_one_side, make_werner, swap_compose, BellCoeffs, FramedPair, PauliFrame,
};

fn bell_state() -> impl Strategy<Value = BellCoeffs> {
    prop::array::uniform4(0.0f64..1.0).prop_filter_map("degenerate", |w| {
        let sum: f64 = w.iter().sum();
        (sum > 1e-6).then(|| BellCoeffs::new(w.map(|v| v / sum)).ok()).flatten()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn swap_matches_density_matrix(a in bell_state(), b in bell_state(), outcome in 0usize..4) {
        let closed = swap_compose(&FramedPair::new(a), &FramedPair::new(b), PauliFrame::from_index(outcome));
        let brute = oracle_swap(&a, &b).unwrap();
        prop_assert!(closed.state.max_abs_diff(&brute) < 1e-12);
    }

    #[test]
    fn dejmps_matches_density_matrix(kept in bell_state(), anc in bell_state()) {
        let closed = dejmps(&kept, &anc);
        let (p, s) = oracle_dejmps(&kept, &anc).unwrap();
        prop_assert!((closed.success_prob - p).abs() < 1e-12);
        match (closed.state, s) {
            (Some(x), Some(y)) => prop_assert!(x.max_abs_diff(&y) < 1e-12),
            (None, None) => {}
            other => prop_assert!(false, "mismatch {other:?}"),
        }
    }

    #[test]
    fn noise_channels_match_density_matrix(s in bell_state(), p in 0.0f64..1.0, dt in 0.0f64..1.0, rate in 0.0f64..20.0) {
        let d = depolarize_one_side(&s, p).unwrap();
        prop_assert!(d.max_abs_diff(&oracle_depolarize_one_side(&s, p).unwrap()) < 1e-12);
        let z = dephase(&s, dt, rate).unwrap();
        prop_assert!(z.max_abs_diff(&oracle_dephase(&s, dt, rate).unwrap()) < 1e-12);
    }

    #[test]
    fn channels_stay_closed(s in bell_state(), t in bell_state(), p in 0.0f64..=1.0, dt in 0.0f64..10.0, rate in 0.0f64..100.0) {
        prop_assert!(depolarize_one_side(&s, p).unwrap().is_valid());
        prop_assert!(dephase(&s, dt, rate).unwrap().is_valid());
        prop_assert!(convolve(&s, &t).is_valid());
        if let Some(post) = dejmps(&s, &t).state {
            prop_assert!(post.is_valid());
        }
    }

    #[test]
    fn convolution_commutes_and_associates(a in bell_state(), b in bell_state(), c in bell_state()) {
        prop_assert!(convolve(&a, &b).max_abs_diff(&convolve(&b, &a)) < 1e-12);
        let left = convolve(&convolve(&a, &b), &c);
        let right = convolve(&a, &convolve(&b, &c));
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn purification_gain_for_werner(f in 0.5001f64..0.9999) {
        let w = make_werner(f).unwrap();
        let out = dejmps(&w, &w);
        prop_assert!(out.success_prob > 0.0 && out.success_prob <= 1.0);
        prop_assert!(out.state.unwrap().fidelity() > f);
    }

    #[test]
    fn z_symmetric_states_are_dephasing_fixed_points(a in 0.0f64..1.0, dt in 0.0f64..5.0, rate in 0.0f64..50.0) {
        let s = BellCoeffs::new([a / 2.0, (1.0 - a) / 2.0, a / 2.0, (1.0 - a) / 2.0]).unwrap();
        prop_assert!(dephase(&s, dt, rate).unwrap().max_abs_diff(&s) < 1e-15);
    }

    #[test]
    fn dephasing_decays_monotonically(t1 in 0.0f64..1.0, gap in 1e-6f64..1.0, rate in 0.1f64..50.0) {
        // Past ~e^-20 the two fidelities are no longer distinguishable in f64.
        prop_assume!(rate * (t1 + gap) < 20.0);
        let early = dephase(&BellCoeffs::PHI_PLUS, t1, rate).unwrap().fidelity();
        let late = dephase(&BellCoeffs::PHI_PLUS, t1 + gap, rate).unwrap().fidelity();
        prop_assert!(late < early);
    }
}
