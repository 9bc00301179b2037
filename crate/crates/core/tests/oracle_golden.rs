use cavity_wv::dynamics::auto_phi;
use cavity_wv::hilbert::CavityState;
use cavity_wv::oracle::{oracle_success_probability, oracle_weak_values};
use cavity_wv::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn pairs(v: &Value) -> Vec<C64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|p| C64::new(p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
        .collect()
}

#[test]
fn golden_weak_values_are_stable() {
    let text = include_str!("fixtures/oracle_golden.json");
    let doc: Value = serde_json::from_str(text).unwrap();
    let cases = doc["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 4);
    for case in cases {
        let n_max = case["n_max"].as_u64().unwrap() as usize;
        let phi = case["phi"].as_f64().unwrap();
        assert!((phi - auto_phi(n_max)).abs() < 1e-15);

        let amps = pairs(&case["amps"]);
        let state = CavityState::new(amps.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(case["seed"].as_u64().unwrap());
        let regenerated = CavityState::haar_random(n_max, &mut rng).unwrap();
        for (a, b) in regenerated.amps().iter().zip(&amps) {
            assert!((a - b).norm() < 1e-15);
        }

        let expected = pairs(&case["weak_values"]);
        for (w, e) in oracle_weak_values(&state, phi).iter().zip(&expected) {
            assert!((w.value - e).norm() < 1e-12, "n = {}", w.n);
        }
        let p = case["success_probability"].as_f64().unwrap();
        assert!((oracle_success_probability(&state, phi) - p).abs() < 1e-14);
    }
}
