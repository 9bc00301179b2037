//! Direct ground-truth evaluation from the true cavity state.
//!
//! Everything here works on plain amplitude vectors and only borrows
//! [`jc_coefficients`] from the dynamics layer, so it shares no code path with
//! the simulated circuit or the reconstruction.

use serde::{Deserialize, Serialize};

use crate::dynamics::jc_coefficients;
use crate::error::{Error, Result};
use crate::hilbert::{CavityState, QubitState, C64};

/// Below this overlap magnitude the post-selection is treated as orthogonal.
pub const ORTHOGONAL_OVERLAP: f64 = 1e-12;

/// A weak value together with its post-selection overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleWeakValue {
    pub n: usize,
    pub value: C64,
    /// ⟨Ψ_f|Ψ⟩ for the projected model, the success probability for the circuit model.
    pub overlap: C64,
    /// Set when |overlap| < [`ORTHOGONAL_OVERLAP`]; `value` is then unreliable.
    pub anomalous: bool,
}

/// Unnormalized post-selected amplitudes `f_n = α_n c_n − β_{n+1} c_{n+1}`.
fn postselected_amplitudes(c: &[C64], phi: f64) -> Vec<C64> {
    let n_max = c.len() - 1;
    let jc = jc_coefficients(phi, n_max + 1);
    (0..=n_max)
        .map(|n| {
            let next = if n < n_max { c[n + 1] } else { C64::new(0.0, 0.0) };
            jc.alpha[n] * c[n] - jc.beta[n + 1] * next
        })
        .collect()
}

fn check_index(state: &CavityState, n: usize) -> Result<()> {
    if n > state.n_max() {
        return Err(Error::FockIndexOutOfRange {
            index: n,
            n_max: state.n_max(),
        });
    }
    Ok(())
}

/// `|Ψ_f⟩ ∝ c_0α_0|0⟩ + Σ_n c_n(α_n|n⟩ − β_n|n−1⟩)`, normalized.
pub fn oracle_postselected_state(true_state: &CavityState, phi: f64) -> Result<CavityState> {
    let f = postselected_amplitudes(true_state.amps(), phi);
    let norm = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < ORTHOGONAL_OVERLAP {
        return Err(Error::ZeroNorm);
    }
    CavityState::new(f.into_iter().map(|z| z / norm).collect())
}

/// `⟨Ψ_f|Π_n|Ψ⟩ / ⟨Ψ_f|Ψ⟩` evaluated directly.
pub fn oracle_weak_value(true_state: &CavityState, phi: f64, n: usize) -> Result<OracleWeakValue> {
    check_index(true_state, n)?;
    Ok(oracle_weak_values(true_state, phi)[n])
}

/// [`oracle_weak_value`] for every n = 0..=n_max.
pub fn oracle_weak_values(true_state: &CavityState, phi: f64) -> Vec<OracleWeakValue> {
    let c = true_state.amps();
    let f = postselected_amplitudes(c, phi);
    let numerators: Vec<C64> = f.iter().zip(c).map(|(fi, ci)| fi.conj() * ci).collect();
    let overlap: C64 = numerators.iter().sum();
    let anomalous = overlap.norm() < ORTHOGONAL_OVERLAP;
    numerators
        .into_iter()
        .enumerate()
        .map(|(n, num)| OracleWeakValue {
            n,
            value: num / overlap,
            overlap,
            anomalous,
        })
        .collect()
}

/// Probability of finding the post-selection qubit in `|g⟩` with the meter decoupled:
/// `½ Σ_n |f_n|²`.
pub fn oracle_success_probability(true_state: &CavityState, phi: f64) -> f64 {
    0.5 * postselected_amplitudes(true_state.amps(), phi)
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
}

/// Weak value the simulated circuit actually realizes.
///
/// Post-selecting the second qubit applies the Kraus operator
/// `K|m⟩ = (α_m|m⟩ − β_m|m−1⟩)/√2` to the cavity, so the conditioned meter sees
/// `⟨Ψ|K†K Π_n|Ψ⟩ / ⟨Ψ|K†K|Ψ⟩`. It coincides with [`oracle_weak_value`] on Fock
/// states but not on superpositions.
pub fn oracle_circuit_weak_value(true_state: &CavityState, phi: f64, n: usize) -> Result<OracleWeakValue> {
    check_index(true_state, n)?;
    Ok(oracle_circuit_weak_values(true_state, phi)[n])
}

pub fn oracle_circuit_weak_values(true_state: &CavityState, phi: f64) -> Vec<OracleWeakValue> {
    let c = true_state.amps();
    let n_max = c.len() - 1;
    let jc = jc_coefficients(phi, n_max);
    // K as an explicit matrix, then K†K Ψ by brute force
    let mut k = vec![vec![C64::new(0.0, 0.0); n_max + 1]; n_max + 1];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for m in 0..=n_max {
        k[m][m] += jc.alpha[m] * s;
        if m > 0 {
            k[m - 1][m] -= jc.beta[m] * s;
        }
    }
    let kc: Vec<C64> = (0..=n_max).map(|r| (0..=n_max).map(|m| k[r][m] * c[m]).sum()).collect();
    let p: f64 = kc.iter().map(|z| z.norm_sqr()).sum();
    let anomalous = p < ORTHOGONAL_OVERLAP;
    (0..=n_max)
        .map(|n| {
            // (K†K Ψ)_n = Σ_r conj(K[r][n]) (KΨ)_r
            let ekc: C64 = (0..=n_max).map(|r| k[r][n].conj() * kc[r]).sum();
            OracleWeakValue {
                n,
                value: ekc.conj() * c[n] / p,
                overlap: C64::new(p, 0.0),
                anomalous,
            }
        })
        .collect()
}

/// First-order conditioned meter state `|g⟩ − i γτ W |e⟩`, normalized.
pub fn oracle_meter_state(true_state: &CavityState, phi: f64, n: usize, gamma_tau: f64) -> Result<QubitState> {
    let w = oracle_weak_value(true_state, phi, n)?.value;
    meter_state_for(w, gamma_tau)
}

/// Same as [`oracle_meter_state`] but with the circuit weak value.
pub fn oracle_circuit_meter_state(true_state: &CavityState, phi: f64, n: usize, gamma_tau: f64) -> Result<QubitState> {
    let w = oracle_circuit_weak_value(true_state, phi, n)?.value;
    meter_state_for(w, gamma_tau)
}

fn meter_state_for(w: C64, gamma_tau: f64) -> Result<QubitState> {
    QubitState::new(C64::new(1.0, 0.0), C64::new(0.0, -gamma_tau) * w).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn vacuum_weak_value_is_one() {
        let s = CavityState::vacuum(4).unwrap();
        for phi in [0.0, 0.3, 1.1, PI] {
            let w = oracle_weak_value(&s, phi, 0).unwrap();
            assert!((w.value - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn fock_weak_values_are_indicator() {
        let s = CavityState::fock(5, 3).unwrap();
        for w in oracle_weak_values(&s, 0.7) {
            let want = if w.n == 3 { 1.0 } else { 0.0 };
            assert!((w.value - c(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_angle_postselects_the_state_itself() {
        let s = CavityState::normalized(vec![c(0.3, 0.1), c(-0.2, 0.5), c(0.4, 0.0)]).unwrap();
        let f = oracle_postselected_state(&s, 0.0).unwrap();
        assert!((s.inner(&f).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn one_photon_at_quarter_turn_postselects_vacuum() {
        let s = CavityState::fock(3, 1).unwrap();
        let f = oracle_postselected_state(&s, FRAC_PI_2).unwrap();
        assert!((f.amps()[0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_postselection_is_flagged() {
        // φ = π/2: f_0 = c_0 + i c_1, f_1 = 0
        let s = CavityState::normalized(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
        assert!(oracle_weak_values(&s, FRAC_PI_2).iter().all(|w| w.anomalous));
        assert!(oracle_postselected_state(&s, FRAC_PI_2).is_err());
    }

    #[test]
    fn meter_state_examples() {
        let vac = CavityState::vacuum(3).unwrap();
        let m = oracle_meter_state(&vac, 0.5, 0, 0.05).unwrap();
        let want = QubitState::new(c(1.0, 0.0), c(0.0, -0.05)).normalize().unwrap();
        assert!(m.trace_distance(&want) < 1e-15);
        let m = oracle_meter_state(&vac, 0.5, 2, 0.05).unwrap();
        assert!(m.trace_distance(&QubitState::ground()) < 1e-15);
    }

    #[test]
    fn circuit_and_projected_agree_on_fock_states() {
        let s = CavityState::fock(4, 2).unwrap();
        let a = oracle_weak_values(&s, 0.8);
        let b = oracle_circuit_weak_values(&s, 0.8);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).norm() < 1e-14);
        }
    }

    #[test]
    fn circuit_weak_values_sum_to_one() {
        let s = CavityState::normalized(vec![c(0.5, 0.0), c(0.1, 0.4), c(-0.3, 0.2), c(0.2, -0.1)]).unwrap();
        let sum: C64 = oracle_circuit_weak_values(&s, 0.9).iter().map(|w| w.value).sum();
        assert!((sum - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn success_probability_at_zero_angle_is_half() {
        let s = CavityState::coherent(8, c(0.8, 0.3)).unwrap();
        assert!((oracle_success_probability(&s, 0.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn index_out_of_range() {
        let s = CavityState::vacuum(2).unwrap();
        assert!(oracle_weak_value(&s, 0.1, 3).is_err());
    }
}
