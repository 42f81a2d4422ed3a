use nvpol::analysis::{predict_observables, pulse_angle_sensitivity, subspace_purity};
use nvpol::kinetics::{propagate, propagate_numeric, FlipModel, PopulationVector, PumpRates};
use nvpol::pulse::{apply_pulse, standard_init_sequence, swap_weight, InitPulseErrors, Pulse};
use nvpol::readout::{
    extract_rabi_population, ramsey_signal_from_amplitudes, rabi_signal, LineAmplitudes, RamseyConfig,
};
use nvpol::spin::{SpinSystemParams, StateLabel, BASIS};
use proptest::prelude::*;

fn population() -> impl Strategy<Value = PopulationVector> {
    prop::array::uniform9(0.0f64..1.0)
        .prop_filter("non-empty", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| PopulationVector::normalize(w).unwrap())
}

fn rates() -> impl Strategy<Value = PumpRates> {
    (0.3f64..20.0, 0.0f64..3.0, 0.0f64..0.1, prop::bool::ANY).prop_map(|(k_s, k_i, tau_d, nn)| PumpRates {
        k_s,
        k_i,
        tau_d,
        flip_model: if nn { FlipModel::NearestNeighbor } else { FlipModel::AllPairs },
        ..Default::default()
    })
}

fn allowed_pulse() -> impl Strategy<Value = Pulse> {
    let pairs: Vec<(StateLabel, StateLabel)> = BASIS
        .iter()
        .flat_map(|&a| BASIS.iter().map(move |&b| (a, b)))
        .filter(|(a, b)| nvpol::spin::allowed_kind(*a, *b).is_some())
        .collect();
    (prop::sample::select(pairs), -1.0f64..1.0).prop_map(|((a, b), err)| {
        match nvpol::spin::allowed_kind(a, b).unwrap() {
            nvpol::spin::TransitionKind::Mw => Pulse::mw(a, b, err),
            nvpol::spin::TransitionKind::Rf => Pulse::rf(a, b, err),
        }
    })
}

proptest! {
    #[test]
    fn propagation_conserves_and_stays_positive(p in population(), r in rates(), t in 0.0f64..50.0) {
        let out = propagate(&p, &r, t).unwrap();
        prop_assert!((out.sum() - 1.0).abs() < 1e-9);
        prop_assert!(out.as_array().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn semigroup(p in population(), r in rates(), t1 in 0.0f64..5.0, t2 in 0.0f64..5.0) {
        let once = propagate(&p, &r, t1 + t2).unwrap();
        let twice = propagate(&propagate(&p, &r, t1).unwrap(), &r, t2).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-10);
    }

    #[test]
    fn electron_excitation_decays_at_k_s(p in population(), r in rates(), t in 0.0f64..10.0) {
        let excited = |q: &PopulationVector| 1.0 - q.electron_zero();
        let out = propagate(&p, &r, t).unwrap();
        prop_assert!((excited(&out) - excited(&p) * (-r.k_s * t).exp()).abs() < 1e-10);
    }

    #[test]
    fn closed_form_agrees_with_matrix_exponential(p in population(), k_s in 0.3f64..20.0, k_i in 0.01f64..3.0, t in 0.0f64..20.0) {
        let r = PumpRates { k_s, k_i, tau_d: 0.0, ..Default::default() };
        prop_assume!(!r.is_degenerate());
        let a = propagate(&p, &r, t).unwrap();
        let b = propagate_numeric(&p, &r, t).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-8);
    }

    #[test]
    fn pulses_conserve_and_stay_positive(p in population(), pulse in allowed_pulse()) {
        let out = apply_pulse(&p, &pulse, &PumpRates::default()).unwrap();
        prop_assert!((out.sum() - 1.0).abs() < 1e-9);
        prop_assert!(out.as_array().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn perfect_pi_pulse_is_an_involution(p in population(), pulse in allowed_pulse()) {
        let pulse = pulse.with_angle_error(0.0);
        let r = PumpRates::default();
        let back = apply_pulse(&apply_pulse(&p, &pulse, &r).unwrap(), &pulse, &r).unwrap();
        prop_assert!(back.max_abs_diff(&p) < 1e-15);
    }

    #[test]
    fn swap_weight_is_even(d in -3.0f64..3.0) {
        prop_assert!((swap_weight(d) - swap_weight(-d)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&swap_weight(d)));
    }

    #[test]
    fn angle_sensitivity_is_even(d in 0.0f64..0.5, idx in prop::sample::select(vec![1usize, 2, 3, 4, 6, 7])) {
        let r = PumpRates::default();
        let seq = standard_init_sequence(0.645, true, &InitPulseErrors::default());
        let p0 = PopulationVector::depolarized();
        let plus = pulse_angle_sensitivity(&seq, &r, &p0, d, idx).unwrap();
        let minus = pulse_angle_sensitivity(&seq, &r, &p0, -d, idx).unwrap();
        prop_assert!((plus - minus).abs() < 1e-12);
    }

    #[test]
    fn purity_is_scale_invariant(w in prop::array::uniform9(0.01f64..1.0), c in 0.01f64..100.0) {
        let a = PopulationVector::normalize(w).unwrap();
        let b = PopulationVector::normalize(w.map(|x| x * c)).unwrap();
        prop_assert!((subspace_purity(&a).unwrap() - subspace_purity(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ramsey_origin_is_amplitude_sum(a in -0.5f64..0.5, b in -0.5f64..0.5, c in -0.5f64..0.5, phi in -3.0f64..3.0) {
        let cfg = RamseyConfig { phi_c: phi, ..Default::default() };
        let amps = LineAmplitudes { a_m1: a, a_p1: b, a_0: c };
        let ts = ramsey_signal_from_amplitudes(&amps, &SpinSystemParams::default(), &cfg).unwrap();
        prop_assert!((ts.y()[0] - (a + b + c) * phi.cos()).abs() < 1e-12);
    }

    #[test]
    fn rabi_extraction_ignores_offsets(p in population(), offset in -5.0f64..5.0) {
        let ts = rabi_signal(&p, 2.0, 10.0, 0.01).unwrap();
        let shifted = ts.map_y(|_, y| y + offset);
        let a = extract_rabi_population(&ts, 2.0).unwrap();
        let b = extract_rabi_population(&shifted, 2.0).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn observables_derivative_matches_analytic(tau in 0.1f64..8.0) {
        let r = PumpRates::default();
        let swap = PopulationVector::swap_initialized();
        let h = 1e-5;
        let plus = predict_observables(&r, tau + h, &swap).unwrap();
        let minus = predict_observables(&r, tau - h, &swap).unwrap();
        let t = r.effective_time(tau);
        let (ks, ki) = (r.k_s, r.k_i);
        let (es, ei) = ((-ks * t).exp(), (-3.0 * ki * t).exp());
        let den = 3.0 * ki - ks;
        let dp00 = 2.0 * (ki - ks) / den * (ks * es - 3.0 * ki * ei) / 3.0;
        let dpm10 = -ks * es / 3.0;
        let fd_a0 = (plus.a_0 - minus.a_0) / (2.0 * h);
        let fd_pm10 = (plus.p_m1_0 - minus.p_m1_0) / (2.0 * h);
        let tol = |x: f64| 1e-6 * x.abs().max(1e-3);
        prop_assert!((fd_a0 - (dp00 - dpm10)).abs() < tol(dp00 - dpm10), "{fd_a0} vs {}", dp00 - dpm10);
        prop_assert!((fd_pm10 - dpm10).abs() < tol(dpm10));
    }
}
