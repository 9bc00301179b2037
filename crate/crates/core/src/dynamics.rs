//! Closed-form propagators for the three interactions of the protocol:
//! the photon-number-selective meter drive, the resonant Jaynes–Cummings
//! exchange with the post-selection qubit, and the π/2 σy rotation.
//!
//! Units: ħ = 1, every coupling is an angular frequency and only the products
//! (γt, χt, εt) enter the propagators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{LinearOp, OpKind, C64, ONE, ZERO};

/// Parameters of the dispersively coupled, externally driven meter qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveDriveParams {
    /// Bare half-splitting Δ₁.
    pub delta1: f64,
    /// Dispersive shift χ.
    pub chi: f64,
    /// Drive strength γ.
    pub gamma: f64,
    /// Drive frequency ω.
    pub omega: f64,
    /// Drive duration.
    pub t: f64,
}

impl DispersiveDriveParams {
    /// Drive tuned to the `target_n`-photon-shifted transition, ω = 2(Δ₁ + nχ).
    pub fn resonant(delta1: f64, chi: f64, gamma: f64, t: f64, target_n: usize) -> Self {
        Self {
            delta1,
            chi,
            gamma,
            omega: 2.0 * (delta1 + target_n as f64 * chi),
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta1, self.chi, self.gamma, self.omega, self.t]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite drive parameter".into()));
        }
        if self.chi <= 0.0 {
            return Err(Error::InvalidParameter(format!("chi must be > 0, got {}", self.chi)));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.t < 0.0 {
            return Err(Error::InvalidParameter(format!("t must be >= 0, got {}", self.t)));
        }
        Ok(())
    }

    /// Signed rotating-frame detuning of block `n`: Δ₁ + nχ − ω/2.
    pub fn detuning(&self, n: usize) -> f64 {
        self.delta1 + n as f64 * self.chi - 0.5 * self.omega
    }
}

/// Detuning ε and generalized Rabi frequency γ̃ = √(ε² + γ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningProfile {
    pub epsilon: f64,
    pub gamma_tilde: f64,
}

impl DetuningProfile {
    pub fn new(epsilon: f64, gamma: f64) -> Self {
        Self {
            epsilon: epsilon.abs(),
            gamma_tilde: epsilon.hypot(gamma),
        }
    }
}

/// Frame in which the drive propagator is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Frame rotating at ω/2 about σz; each block evolves under ε σz + γ σx.
    Rotating,
    /// Rotating frame with the dispersive free evolution ⊕ ε σz removed as well.
    /// Off-resonant blocks then stay at the identity up to O(γ/ε).
    Interaction,
}

/// 2×2 block propagator `exp(−i(ε σz + γ σx) t)` in `(g, e)` order, `[row][col]`.
pub fn drive_block(epsilon: f64, gamma: f64, t: f64, frame: Frame) -> [[C64; 2]; 2] {
    let gt = epsilon.hypot(gamma);
    let x = gt * t;
    let c = x.cos();
    let s_over = if gt == 0.0 { t } else { x.sin() / gt };
    // σz|g⟩ = −|g⟩, so H = [[−ε, γ], [γ, ε]].
    let mut u = [
        [C64::new(c, s_over * epsilon), C64::new(0.0, -s_over * gamma)],
        [C64::new(0.0, -s_over * gamma), C64::new(c, -s_over * epsilon)],
    ];
    if frame == Frame::Interaction {
        let back = [C64::from_polar(1.0, -epsilon * t), C64::from_polar(1.0, epsilon * t)];
        for (row, phase) in u.iter_mut().zip(back) {
            row[0] *= phase;
            row[1] *= phase;
        }
    }
    u
}

/// Block-diagonal propagator of the driven dispersive Hamiltonian on cavity ⊗ meter
/// (local index `n * 2 + meter`), in the rotating frame.
pub fn selective_drive_propagator(params: &DispersiveDriveParams, n_max: usize) -> Result<LinearOp> {
    selective_drive_propagator_in(params, n_max, Frame::Rotating)
}

pub fn selective_drive_propagator_in(
    params: &DispersiveDriveParams,
    n_max: usize,
    frame: Frame,
) -> Result<LinearOp> {
    params.validate()?;
    if n_max < 1 {
        return Err(Error::InvalidTruncation(n_max));
    }
    let d = 2 * (n_max + 1);
    let mut m = DMatrix::zeros(d, d);
    for n in 0..=n_max {
        let block = drive_block(params.detuning(n), params.gamma, params.t, frame);
        for (r, row) in block.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(2 * n + r, 2 * n + c)] = *v;
            }
        }
    }
    LinearOp::new(m, OpKind::Unitary)
}

/// First-order weak-coupling model `1 − i(γt) Π_n σx` on cavity ⊗ meter. Not unitary.
pub fn first_order_drive(gamma_t: f64, target_n: usize, n_max: usize) -> Result<LinearOp> {
    if target_n > n_max {
        return Err(Error::FockIndexOutOfRange { index: target_n, n_max });
    }
    let d = 2 * (n_max + 1);
    let mut m = DMatrix::identity(d, d);
    m[(2 * target_n + 1, 2 * target_n)] = C64::new(0.0, -gamma_t);
    m[(2 * target_n, 2 * target_n + 1)] = C64::new(0.0, -gamma_t);
    Ok(LinearOp::general(m))
}

/// Probability of |g⟩ → |e⟩ under a drive detuned by ε: (γ/γ̃)² sin²(γ̃t).
pub fn rabi_transition_probability(epsilon: f64, gamma: f64, t: f64) -> f64 {
    if epsilon == 0.0 {
        return (gamma * t).sin().powi(2);
    }
    let gt = epsilon.hypot(gamma);
    let ratio = gamma / gt;
    ratio * ratio * (gt * t).sin().powi(2)
}

/// One row of the off-resonant suppression table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectivityRow {
    /// Photon-number distance |n′ − n| from the driven block.
    pub m: u32,
    pub epsilon: f64,
    pub gamma_tilde: f64,
    pub p_e: f64,
    /// (γ/(mχ))²; infinite for the resonant row.
    pub bound: f64,
}

/// Excitation probability of the block `m` photons away from resonance, using the exact γ̃.
pub fn selectivity_map(
    chi: f64,
    gamma: f64,
    t: f64,
    m_range: impl IntoIterator<Item = u32>,
) -> Result<Vec<SelectivityRow>> {
    if !(chi > 0.0) || gamma < 0.0 || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "selectivity needs chi > 0, gamma >= 0, t >= 0 (got {chi}, {gamma}, {t})"
        )));
    }
    let rows: Vec<_> = m_range
        .into_iter()
        .map(|m| {
            let epsilon = m as f64 * chi;
            let profile = DetuningProfile::new(epsilon, gamma);
            let bound = if m == 0 {
                f64::INFINITY
            } else {
                (gamma / epsilon).powi(2)
            };
            SelectivityRow {
                m,
                epsilon,
                gamma_tilde: profile.gamma_tilde,
                p_e: rabi_transition_probability(epsilon, gamma, t),
                bound,
            }
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidParameter("empty m range".into()));
    }
    Ok(rows)
}

/// Resonant Jaynes–Cummings coefficients α_n = cos(√n φ), β_n = −i sin(√n φ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JcCoefficients {
    pub phi: f64,
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
}

impl JcCoefficients {
    pub fn n_max(&self) -> usize {
        self.alpha.len() - 1
    }

    /// α_n for any n, including beyond the stored truncation.
    pub fn alpha_at(&self, n: usize) -> C64 {
        jc_alpha(self.phi, n)
    }

    pub fn beta_at(&self, n: usize) -> C64 {
        jc_beta(self.phi, n)
    }
}

fn jc_alpha(phi: f64, n: usize) -> C64 {
    if n == 0 {
        ONE
    } else {
        C64::new(((n as f64).sqrt() * phi).cos(), 0.0)
    }
}

fn jc_beta(phi: f64, n: usize) -> C64 {
    if n == 0 {
        ZERO
    } else {
        C64::new(0.0, -((n as f64).sqrt() * phi).sin())
    }
}

pub fn jc_coefficients(phi: f64, n_max: usize) -> JcCoefficients {
    JcCoefficients {
        phi,
        alpha: (0..=n_max).map(|n| jc_alpha(phi, n)).collect(),
        beta: (0..=n_max).map(|n| jc_beta(phi, n)).collect(),
    }
}

/// Resonant JC exchange on cavity ⊗ ps (local index `n * 2 + ps`).
///
/// Each doublet `{|g,n⟩, |e,n−1⟩}` rotates as `[[α_n, β_n], [β_n, α_n]]`; `|g,0⟩` is
/// fixed. `|e,n_max⟩` has no partner inside the truncation and is left untouched.
pub fn jc_propagator(phi: f64, n_max: usize) -> Result<LinearOp> {
    if n_max < 1 {
        return Err(Error::InvalidTruncation(n_max));
    }
    let d = 2 * (n_max + 1);
    let g = |n: usize| 2 * n;
    let e = |n: usize| 2 * n + 1;
    let mut m = DMatrix::zeros(d, d);
    m[(g(0), g(0))] = ONE;
    m[(e(n_max), e(n_max))] = ONE;
    for n in 1..=n_max {
        let (a, b) = (jc_alpha(phi, n), jc_beta(phi, n));
        m[(g(n), g(n))] = a;
        m[(e(n - 1), g(n))] = b;
        m[(g(n), e(n - 1))] = b;
        m[(e(n - 1), e(n - 1))] = a;
    }
    LinearOp::new(m, OpKind::Unitary)
}

/// `exp(−i(π/4)σy)`: |g⟩ ↦ (|g⟩+|e⟩)/√2, |e⟩ ↦ (|e⟩−|g⟩)/√2.
pub fn ry_half_pi() -> LinearOp {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    LinearOp::new(DMatrix::from_row_slice(2, 2, &[h, -h, h, h]), OpKind::Unitary)
        .expect("rotation matrix is unitary")
}

/// Qubit rotation `exp(−i(θ/2)σy)`.
pub fn ry(theta: f64) -> LinearOp {
    let (s, c) = (0.5 * theta).sin_cos();
    let m = DMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]);
    LinearOp::new(m, OpKind::Unitary).expect("rotation matrix is unitary")
}

/// Minimum angular distance kept between √n·φ and any zero of sin(√n φ) (n ≥ 1)
/// or cos(√n φ).
pub const PHI_ZERO_MARGIN: f64 = 0.05;

const PHI_SEARCH_STEP: f64 = 1e-3;

fn distance_to_zeros(angle: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    // zeros of sin (kπ, k ≥ 1) and cos ((k + ½)π) are the multiples jπ/2, j ≥ 1
    let j = (angle / FRAC_PI_2).round().max(1.0);
    (angle - j * FRAC_PI_2).abs()
}

/// True when √n·φ stays `margin` away from the zeros of sin (n ≥ 1) and cos (n ≥ 0).
pub fn phi_is_safe(phi: f64, n_max: usize, margin: f64) -> bool {
    (1..=n_max).all(|n| distance_to_zeros((n as f64).sqrt() * phi) >= margin)
}

/// Default JC angle: 0.6π/√(n_max+1), nudged to the nearest value that keeps every
/// √n·φ (n ≤ n_max) at least [`PHI_ZERO_MARGIN`] from a zero of sin or cos.
pub fn auto_phi(n_max: usize) -> f64 {
    let base = 0.6 * std::f64::consts::PI / ((n_max + 1) as f64).sqrt();
    for k in 0..100_000 {
        let step = k as f64 * PHI_SEARCH_STEP;
        for candidate in [base - step, base + step] {
            if candidate > 0.0 && phi_is_safe(candidate, n_max, PHI_ZERO_MARGIN) {
                return candidate;
            }
        }
    }
    base
}
