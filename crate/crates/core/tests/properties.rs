use cavity_wv::dynamics::{
    auto_phi, drive_block, jc_coefficients, jc_propagator, rabi_transition_probability,
    selective_drive_propagator_in, DispersiveDriveParams, Frame,
};
use cavity_wv::hilbert::{outcome_distribution, tensor, CavityState, MeterBasis, QubitState};
use cavity_wv::oracle::{oracle_success_probability, oracle_weak_values};
use cavity_wv::protocol::{final_state, ProtocolConfig};
use cavity_wv::tomography::{fidelity, predict, reconstruct, ReconstructOptions, WeakValueEstimate, WeakValueModel};
use cavity_wv::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(seed: u64, n_max: usize) -> CavityState {
    CavityState::haar_random(n_max, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_sum_rule(seed in any::<u64>(), n_max in 1usize..=8, phi in 0.05f64..3.0) {
        let s = state(seed, n_max);
        let w = oracle_weak_values(&s, phi);
        prop_assume!(!w[0].anomalous);
        let sum: C64 = w.iter().map(|x| x.value).sum();
        prop_assert!((sum - C64::new(1.0, 0.0)).norm() < 1e-10 * (1.0 / w[0].overlap.norm()).max(1.0));
    }

    #[test]
    fn weak_values_are_gauge_invariant(seed in any::<u64>(), n_max in 1usize..=6, theta in 0.0f64..6.3) {
        let s = state(seed, n_max);
        let phi = auto_phi(n_max);
        let a = oracle_weak_values(&s, phi);
        let b = oracle_weak_values(&s.with_global_phase(theta), phi);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.value - y.value).norm() < 1e-10);
        }
    }

    #[test]
    fn circuit_forward_model_matches_oracle(seed in any::<u64>(), n_max in 1usize..=6) {
        let s = state(seed, n_max);
        let phi = auto_phi(n_max);
        let jc = jc_coefficients(phi, n_max);
        let pred = predict(s.amps(), &jc, WeakValueModel::CircuitEffect);
        for (p, o) in pred.weak_values.iter().zip(cavity_wv::oracle::oracle_circuit_weak_values(&s, phi)) {
            prop_assert!((p - o.value).norm() < 1e-10);
        }
        prop_assert!((pred.success_probability - oracle_success_probability(&s, phi)).abs() < 1e-14);
    }

    #[test]
    fn drive_blocks_are_unitary(eps in -20.0f64..20.0, gamma in 0.0f64..2.0, t in 0.0f64..10.0) {
        for frame in [Frame::Rotating, Frame::Interaction] {
            let u = drive_block(eps, gamma, t, frame);
            for i in 0..2 {
                for j in 0..2 {
                    let v: C64 = (0..2).map(|k| u[k][i].conj() * u[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v - C64::new(want, 0.0)).norm() < 1e-12);
                }
            }
            prop_assert!((u[1][0].norm_sqr() - rabi_transition_probability(eps, gamma, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn propagators_are_unitary(phi in -4.0f64..4.0, n_max in 1usize..=8, target in 0usize..=8, gamma in 0.0f64..0.5) {
        prop_assert!(jc_propagator(phi, n_max).unwrap().unitarity_defect() < 1e-12);
        let target = target.min(n_max);
        let p = DispersiveDriveParams::resonant(2.0, 1.0, gamma, 3.0, target);
        prop_assert!(selective_drive_propagator_in(&p, n_max, Frame::Interaction).unwrap().unitarity_defect() < 1e-12);
    }

    #[test]
    fn outcome_tables_are_distributions(seed in any::<u64>(), n_max in 1usize..=5, target in 0usize..=5) {
        let mut cfg = ProtocolConfig::new(state(seed, n_max));
        cfg.target_n = target.min(n_max);
        let out = final_state(&cfg).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        for basis in MeterBasis::BOTH {
            let t = outcome_distribution(&out, basis);
            prop_assert!((t.total() - 1.0).abs() < 1e-12);
            prop_assert!(t.flat().iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
        }
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>(), n_max in 1usize..=6) {
        let (x, y) = (state(a, n_max), state(b, n_max));
        let f = fidelity(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - fidelity(&y, &x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn tensor_product_is_normalized(seed in any::<u64>(), n_max in 1usize..=6, t in 0.0f64..6.3) {
        let q = QubitState::new(C64::new(t.cos(), 0.0), C64::from_polar(t.sin(), t)).normalize().unwrap();
        let j = tensor(&state(seed, n_max), &q, &QubitState::ground()).unwrap();
        prop_assert!((j.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_round_trip(seed in any::<u64>(), n_max in 1usize..=8) {
        let s = state(seed, n_max);
        prop_assume!(s.amps().iter().all(|c| c.norm() >= 0.05));
        let phi = auto_phi(n_max);
        let est: Vec<_> = oracle_weak_values(&s, phi)
            .iter()
            .map(|w| WeakValueEstimate::exact(w.n, w.value, 0.05))
            .collect();
        let opts = ReconstructOptions {
            success_probability: Some((oracle_success_probability(&s, phi), 0.0)),
            ..Default::default()
        };
        let r = reconstruct(&est, &jc_coefficients(phi, n_max), &opts).unwrap();
        prop_assert!(fidelity(&r.amps, &s).unwrap() >= 1.0 - 1e-8);
        let g = r.amps.amps()[0];
        prop_assert!(g.im == 0.0 && g.re > 0.0);
        prop_assert!((r.amps.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!(r.residual_truncation >= 0.0);
    }
}
