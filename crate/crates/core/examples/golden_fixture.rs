//! Regenerates `tests/fixtures/oracle_golden.json`.
//!
//! cargo run -p cavity-wv --example golden_fixture > crates/core/tests/fixtures/oracle_golden.json

use cavity_wv::dynamics::auto_phi;
use cavity_wv::hilbert::CavityState;
use cavity_wv::oracle::{oracle_success_probability, oracle_weak_values};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn main() {
    let cases: Vec<_> = [(1u64, 3usize), (2, 5), (3, 6), (4, 8)]
        .into_iter()
        .map(|(seed, n_max)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let state = CavityState::haar_random(n_max, &mut rng).expect("valid truncation");
            let phi = auto_phi(n_max);
            let weak: Vec<[f64; 2]> = oracle_weak_values(&state, phi).iter().map(|w| [w.value.re, w.value.im]).collect();
            let amps: Vec<[f64; 2]> = state.amps().iter().map(|c| [c.re, c.im]).collect();
            json!({
                "seed": seed,
                "n_max": n_max,
                "phi": phi,
                "amps": amps,
                "weak_values": weak,
                "success_probability": oracle_success_probability(&state, phi),
            })
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&json!({ "cases": cases })).expect("serializable"));
}
