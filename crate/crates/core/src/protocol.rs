//! One run of the measurement protocol for a single target photon number:
//! weak selective drive on the meter, post-selection circuit on the second
//! qubit, then meter statistics conditioned on the post-selection qubit
//! being found in `|g⟩`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    auto_phi, first_order_drive, jc_propagator, ry_half_pi, selective_drive_propagator_in,
    DispersiveDriveParams, Frame,
};
use crate::error::{Error, Result};
use crate::hilbert::{
    apply, outcome_distribution, tensor, CavityState, Factor, JointState, Level, MeterBasis,
    OutcomeTable, QubitState, C64,
};

/// Shots per RNG chunk. Each chunk owns an independent ChaCha stream, so merged
/// counts do not depend on how chunks are scheduled.
pub const SHOT_CHUNK: u64 = 1 << 16;

/// Below this post-selection probability the conditional averages are undefined.
pub const MIN_SUCCESS_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Monte Carlo shots drawn from the exact outcome distribution.
    Sampled,
    /// Infinite-ensemble limit computed from the outcome probabilities.
    ExactEnsemble,
}

/// How the weak meter interaction is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveModel {
    /// Exact block propagator of the driven dispersive Hamiltonian (interaction frame).
    Exact,
    /// `1 − i(γτ) Π_n σx`, renormalized.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub true_state: CavityState,
    pub chi: f64,
    pub gamma: f64,
    /// Weak drive duration.
    pub tau: f64,
    pub delta1: f64,
    /// Resonant exchange angle of the post-selection qubit.
    pub phi: f64,
    pub target_n: usize,
    /// Shots per target, split between the X and Y meter settings.
    pub shots: u64,
    /// Fraction of `shots` spent on the X setting.
    pub basis_split: f64,
    pub seed: u64,
    pub mode: Mode,
    pub drive_model: DriveModel,
}

impl ProtocolConfig {
    /// Default operating point in units of χ: χ = 1, γ = χ/50, χτ = π, Δ₁ = 5χ.
    pub fn new(true_state: CavityState) -> Self {
        let chi = 1.0;
        let phi = auto_phi(true_state.n_max());
        Self {
            true_state,
            chi,
            gamma: chi / 50.0,
            tau: std::f64::consts::PI / chi,
            delta1: 5.0 * chi,
            phi,
            target_n: 0,
            shots: 1_000_000,
            basis_split: 0.5,
            seed: 0,
            mode: Mode::Sampled,
            drive_model: DriveModel::Exact,
        }
    }

    pub fn n_max(&self) -> usize {
        self.true_state.n_max()
    }

    pub fn gamma_tau(&self) -> f64 {
        self.gamma * self.tau
    }

    pub fn with_target(&self, target_n: usize) -> Self {
        Self {
            target_n,
            ..self.clone()
        }
    }

    pub fn drive_params(&self) -> DispersiveDriveParams {
        DispersiveDriveParams::resonant(self.delta1, self.chi, self.gamma, self.tau, self.target_n)
    }

    /// Shots assigned to the X and Y meter settings.
    pub fn shots_per_basis(&self) -> (u64, u64) {
        let x = ((self.shots as f64) * self.basis_split).round() as u64;
        let x = x.min(self.shots);
        (x, self.shots - x)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.true_state.is_normalized() {
            return Err(Error::NotNormalized(self.true_state.norm_sqr()));
        }
        if self.target_n > self.n_max() {
            return Err(Error::FockIndexOutOfRange {
                index: self.target_n,
                n_max: self.n_max(),
            });
        }
        self.drive_params().validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.phi.is_finite() {
            return Err(Error::InvalidParameter("phi must be finite".into()));
        }
        if !(self.basis_split > 0.0 && self.basis_split < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "basis_split must lie in (0, 1), got {}",
                self.basis_split
            )));
        }
        if self.mode == Mode::Sampled && self.shots < 1 {
            return Err(Error::InvalidParameter("shots must be >= 1 in sampled mode".into()));
        }
        Ok(())
    }
}

/// Raw counts of one sampled run; index `[meter ±][ps g/e]` per setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotBatch {
    pub counts_x: [[u64; 2]; 2],
    pub counts_y: [[u64; 2]; 2],
    pub shots: u64,
    pub seed: u64,
}

impl ShotBatch {
    pub fn counts(&self, basis: MeterBasis) -> &[[u64; 2]; 2] {
        match basis {
            MeterBasis::X => &self.counts_x,
            MeterBasis::Y => &self.counts_y,
        }
    }

    pub fn postselected(&self, basis: MeterBasis) -> u64 {
        let c = self.counts(basis);
        c[0][0] + c[1][0]
    }

    pub fn total(&self) -> u64 {
        self.counts_x.iter().chain(&self.counts_y).flatten().sum()
    }
}

/// Meter averages conditioned on the post-selection qubit ending in `|g⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalAverages {
    pub avg_sx: f64,
    pub avg_sy: f64,
    pub stderr_sx: f64,
    pub stderr_sy: f64,
    pub ps_success_rate: f64,
    pub stderr_success: f64,
}

/// Prepares `|Ψ⟩|g⟩|g⟩` and applies the selective weak drive to cavity ⊗ meter.
pub fn run_weak_interaction(config: &ProtocolConfig) -> Result<JointState> {
    config.validate()?;
    let n_max = config.n_max();
    let initial = tensor(&config.true_state, &QubitState::ground(), &QubitState::ground())?;
    let drive = match config.drive_model {
        DriveModel::Exact => {
            selective_drive_propagator_in(&config.drive_params(), n_max, Frame::Interaction)?
        }
        DriveModel::FirstOrder => first_order_drive(config.gamma_tau(), config.target_n, n_max)?,
    };
    apply(&drive, &initial, Factor::CavityMeter)
}

/// Resonant exchange with the post-selection qubit, then the π/2 σy rotation. No measurement.
pub fn run_postselection_circuit(state: &JointState, phi: f64) -> Result<JointState> {
    let jc = jc_propagator(phi, state.n_max())?;
    let exchanged = apply(&jc, state, Factor::CavityPs)?;
    apply(&ry_half_pi(), &exchanged, Factor::Ps)
}

/// Final joint state of the full circuit, before any measurement.
pub fn final_state(config: &ProtocolConfig) -> Result<JointState> {
    run_postselection_circuit(&run_weak_interaction(config)?, config.phi)
}

/// Outcome tables for the X and Y meter settings.
pub fn outcome_tables(config: &ProtocolConfig) -> Result<(OutcomeTable, OutcomeTable)> {
    let state = final_state(config)?;
    Ok((
        outcome_distribution(&state, MeterBasis::X),
        outcome_distribution(&state, MeterBasis::Y),
    ))
}

fn conditional_mean(table: &OutcomeTable) -> Result<f64> {
    let pg = table.ps_marginal(Level::G);
    if pg < MIN_SUCCESS_PROBABILITY {
        return Err(Error::DegeneratePostselection(pg));
    }
    Ok((table.p(0, Level::G) - table.p(1, Level::G)) / pg)
}

/// Infinite-ensemble conditional averages.
pub fn conditional_averages_exact(config: &ProtocolConfig) -> Result<ConditionalAverages> {
    let (x, y) = outcome_tables(config)?;
    Ok(ConditionalAverages {
        avg_sx: conditional_mean(&x)?,
        avg_sy: conditional_mean(&y)?,
        stderr_sx: 0.0,
        stderr_sy: 0.0,
        ps_success_rate: x.ps_marginal(Level::G),
        stderr_success: 0.0,
    })
}

fn stream_id(target_n: usize, basis: MeterBasis, chunk: u64) -> u64 {
    let b = match basis {
        MeterBasis::X => 0,
        MeterBasis::Y => 1,
    };
    ((target_n as u64) << 33) | (b << 32) | chunk
}

/// Draws `shots` outcomes from `table`, flattened `[(+,g), (+,e), (−,g), (−,e)]`.
fn sample_table(table: &OutcomeTable, shots: u64, seed: u64, target_n: usize, basis: MeterBasis) -> [[u64; 2]; 2] {
    let p = table.flat();
    let cumulative = [p[0], p[0] + p[1], p[0] + p[1] + p[2]];
    let chunks = shots.div_ceil(SHOT_CHUNK);
    let flat = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(target_n, basis, chunk));
            let n = SHOT_CHUNK.min(shots - chunk * SHOT_CHUNK);
            let mut counts = [0u64; 4];
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * (cumulative[2] + p[3]);
                let k = cumulative.iter().position(|&c| u < c).unwrap_or(3);
                counts[k] += 1;
            }
            counts
        })
        .reduce(|| [0u64; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    [[flat[0], flat[1]], [flat[2], flat[3]]]
}

/// Samples the per-shot (meter, ps) records for both meter settings.
pub fn sample_shots(config: &ProtocolConfig) -> Result<ShotBatch> {
    config.validate()?;
    if config.shots < 1 {
        return Err(Error::InvalidParameter("shots must be >= 1".into()));
    }
    let (x, y) = outcome_tables(config)?;
    let (shots_x, shots_y) = config.shots_per_basis();
    Ok(ShotBatch {
        counts_x: sample_table(&x, shots_x, config.seed, config.target_n, MeterBasis::X),
        counts_y: sample_table(&y, shots_y, config.seed, config.target_n, MeterBasis::Y),
        shots: config.shots,
        seed: config.seed,
    })
}

/// Conditional mean of the ±1 meter record over post-selected shots, with its
/// binomial standard error floored at 1/n so a unanimous record keeps a finite weight.
fn mean_and_stderr(counts: &[[u64; 2]; 2], basis: MeterBasis, shots: u64) -> Result<(f64, f64)> {
    let n = counts[0][0] + counts[1][0];
    if n == 0 {
        return Err(Error::NoPostselectedShots {
            basis: basis.name(),
            shots,
        });
    }
    let nf = n as f64;
    let mean = (counts[0][0] as f64 - counts[1][0] as f64) / nf;
    let var = (1.0 - mean * mean).max(1.0 / nf);
    Ok((mean, (var / nf).sqrt()))
}

/// Monte Carlo conditional averages; shots with the post-selection qubit in `|e⟩` are discarded.
pub fn conditional_averages_sampled(config: &ProtocolConfig) -> Result<(ConditionalAverages, ShotBatch)> {
    let batch = sample_shots(config)?;
    let (shots_x, shots_y) = config.shots_per_basis();
    let (avg_sx, stderr_sx) = mean_and_stderr(&batch.counts_x, MeterBasis::X, shots_x)?;
    let (avg_sy, stderr_sy) = mean_and_stderr(&batch.counts_y, MeterBasis::Y, shots_y)?;
    let total = batch.total() as f64;
    let successes = (batch.postselected(MeterBasis::X) + batch.postselected(MeterBasis::Y)) as f64;
    let rate = successes / total;
    let averages = ConditionalAverages {
        avg_sx,
        avg_sy,
        stderr_sx,
        stderr_sy,
        ps_success_rate: rate,
        stderr_success: (rate * (1.0 - rate) / total).sqrt(),
    };
    Ok((averages, batch))
}

/// Dispatches on `config.mode`.
pub fn conditional_averages(config: &ProtocolConfig) -> Result<(ConditionalAverages, Option<ShotBatch>)> {
    match config.mode {
        Mode::ExactEnsemble => Ok((conditional_averages_exact(config)?, None)),
        Mode::Sampled => {
            let (avgs, batch) = conditional_averages_sampled(config)?;
            Ok((avgs, Some(batch)))
        }
    }
}

/// Trace distance between the initial cavity state and the cavity's reduced
/// state right after the weak interaction.
pub fn cavity_disturbance(config: &ProtocolConfig) -> Result<f64> {
    let after = run_weak_interaction(config)?.reduced_cavity();
    let c = config.true_state.amps();
    let before = DMatrix::from_fn(c.len(), c.len(), |i, j| c[i] * c[j].conj());
    Ok(trace_distance(&before, &after))
}

/// `½ Σ |λ_i|` of the Hermitian difference.
pub fn trace_distance(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> f64 {
    let diff = rho - sigma;
    let eig = SymmetricEigen::new(diff);
    0.5 * eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>()
}

/// Meter density matrix conditioned on ps = g, cavity traced out; `(g, e)` order.
pub fn conditioned_meter_density(config: &ProtocolConfig) -> Result<DMatrix<C64>> {
    let state = final_state(config)?;
    let mut rho = DMatrix::<C64>::zeros(2, 2);
    for n in 0..=state.n_max() {
        for (i, mi) in Level::BOTH.into_iter().enumerate() {
            for (j, mj) in Level::BOTH.into_iter().enumerate() {
                rho[(i, j)] += state.amp(n, mi, Level::G) * state.amp(n, mj, Level::G).conj();
            }
        }
    }
    let p = rho[(0, 0)].re + rho[(1, 1)].re;
    if p < MIN_SUCCESS_PROBABILITY {
        return Err(Error::DegeneratePostselection(p));
    }
    Ok(rho / C64::new(p, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{ONE, ZERO};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn plus_state(n_max: usize) -> CavityState {
        let mut amps = vec![ZERO; n_max + 1];
        amps[0] = ONE;
        amps[1] = ONE;
        CavityState::normalized(amps).unwrap()
    }

    #[test]
    fn zero_drive_leaves_state_up_to_phases() {
        let mut cfg = ProtocolConfig::new(plus_state(4));
        cfg.gamma = 0.0;
        let s = run_weak_interaction(&cfg).unwrap();
        for n in 0..=4 {
            assert_eq!(s.amp(n, Level::E, Level::G), ZERO);
            let want = cfg.true_state.amps()[n].norm();
            assert!((s.amp(n, Level::G, Level::G).norm() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn strong_resonant_drive_flips_meter() {
        let mut cfg = ProtocolConfig::new(CavityState::fock(4, 2).unwrap());
        cfg.target_n = 2;
        cfg.gamma = FRAC_PI_2 / cfg.tau;
        let s = run_weak_interaction(&cfg).unwrap();
        assert!((s.amp(2, Level::E, Level::G).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weak_drive_amplitude_is_first_order() {
        // target 0, γτ = 0.05, χτ = π: the (0, e, g) amplitude is ≈ −i γτ c_0
        let mut cfg = ProtocolConfig::new(plus_state(4));
        cfg.gamma = 0.05 / cfg.tau;
        let s = run_weak_interaction(&cfg).unwrap();
        let expect = C64::new(0.0, -0.05 * FRAC_1_SQRT_2);
        let got = s.amp(0, Level::E, Level::G);
        assert!((got - expect).norm() < 0.05f64.powi(2), "{got}");
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn postselection_circuit_at_zero_angle_decouples() {
        let cfg = ProtocolConfig::new(plus_state(3));
        let s = run_postselection_circuit(&run_weak_interaction(&cfg).unwrap(), 0.0).unwrap();
        for n in 0..=3 {
            for m in Level::BOTH {
                let g = s.amp(n, m, Level::G);
                let e = s.amp(n, m, Level::E);
                assert!((g - e).norm() < 1e-15);
            }
        }
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_target_zero_gives_unit_weak_value_limit() {
        let mut cfg = ProtocolConfig::new(CavityState::vacuum(3).unwrap());
        cfg.mode = Mode::ExactEnsemble;
        let a = conditional_averages_exact(&cfg).unwrap();
        let gt = cfg.gamma_tau();
        // meter state cos(γτ)|g⟩ − i sin(γτ)|e⟩ exactly
        assert!(a.avg_sx.abs() < 1e-14);
        assert!((a.avg_sy + (2.0 * gt).sin()).abs() < 1e-14);
        assert!((a.ps_success_rate - 0.5).abs() < 1e-14);
    }

    #[test]
    fn other_fock_target_gives_zero() {
        let mut cfg = ProtocolConfig::new(CavityState::fock(4, 2).unwrap());
        cfg.target_n = 1;
        let a = conditional_averages_exact(&cfg).unwrap();
        // only the off-resonant leak of block 2 remains
        assert!(a.avg_sx.abs() < 1e-3 && a.avg_sy.abs() < 1e-3);
    }

    #[test]
    fn single_shot_is_deterministic() {
        let mut cfg = ProtocolConfig::new(plus_state(2));
        cfg.shots = 1;
        cfg.seed = 42;
        let a = sample_shots(&cfg).unwrap();
        let b = sample_shots(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), 1);
    }

    #[test]
    fn counts_sum_to_shots_and_depend_on_seed() {
        let mut cfg = ProtocolConfig::new(plus_state(2));
        cfg.shots = 300_001;
        let a = sample_shots(&cfg).unwrap();
        assert_eq!(a.total(), 300_001);
        cfg.seed = 1;
        assert_ne!(sample_shots(&cfg).unwrap(), a);
    }

    #[test]
    fn sampled_matches_exact_within_four_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = CavityState::haar_random(4, &mut rng).unwrap();
        let mut cfg = ProtocolConfig::new(state);
        cfg.target_n = 1;
        cfg.gamma = 0.3 / cfg.tau;
        cfg.shots = 1_000_000;
        cfg.seed = 3;
        let exact = conditional_averages_exact(&cfg).unwrap();
        let (s, _) = conditional_averages_sampled(&cfg).unwrap();
        assert!((s.avg_sx - exact.avg_sx).abs() < 4.0 * s.stderr_sx);
        assert!((s.avg_sy - exact.avg_sy).abs() < 4.0 * s.stderr_sy);
        assert!((s.ps_success_rate - exact.ps_success_rate).abs() < 4.0 * s.stderr_success);
    }

    #[test]
    fn degenerate_postselection_is_reported() {
        // φ = π/2 gives α1 = 0, β1 = −i, so (|0⟩ + i|1⟩)/√2 has no post-selected branch.
        let amps = vec![C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2), ZERO];
        let mut cfg = ProtocolConfig::new(CavityState::new(amps).unwrap());
        cfg.phi = FRAC_PI_2;
        cfg.gamma = 0.0;
        assert!(matches!(
            conditional_averages_exact(&cfg),
            Err(Error::DegeneratePostselection(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProtocolConfig::new(plus_state(2));
        cfg.target_n = 3;
        assert!(cfg.validate().is_err());
        cfg.target_n = 0;
        cfg.shots = 0;
        assert!(cfg.validate().is_err());
        cfg.mode = Mode::ExactEnsemble;
        assert!(cfg.validate().is_ok());
        cfg.basis_split = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn backaction_is_small_and_shrinks() {
        let mut cfg = ProtocolConfig::new(plus_state(4));
        let mut last = f64::INFINITY;
        for gt in [0.1, 0.05, 0.025] {
            cfg.gamma = gt / cfg.tau;
            let d = cavity_disturbance(&cfg).unwrap();
            assert!(d < 2.0 * gt * gt, "γτ = {gt}: {d}");
            assert!(d < last);
            last = d;
        }
        let _ = PI;
    }
}
