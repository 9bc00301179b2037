//! From conditional meter averages to weak values, and from a full set of
//! weak values back to the Fock amplitudes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::JcCoefficients;
use crate::error::{Error, Result};
use crate::hilbert::{CavityState, C64};
use crate::lm::{self, LmSettings};
use crate::protocol::ConditionalAverages;

/// Minimum |β_{n+1}| required to link c_{n+1} to the weak value at n.
pub const BETA_GUARD: f64 = 1e-3;
/// Floor on initial magnitudes and threshold below which an amplitude counts as zero.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;
/// Gauge threshold: the first amplitude above it is made real positive.
pub const GAUGE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakValueEstimate {
    pub n: usize,
    pub value: C64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub gamma_tau: f64,
}

impl WeakValueEstimate {
    /// Noise-free estimate, e.g. straight from the oracle.
    pub fn exact(n: usize, value: C64, gamma_tau: f64) -> Self {
        Self {
            n,
            value,
            stderr_re: 0.0,
            stderr_im: 0.0,
            gamma_tau,
        }
    }
}

/// `W = (i⟨σx⟩ − ⟨σy⟩) / (2γτ)`, with each quadrature's standard error scaled by 1/(2γτ).
pub fn weak_value_from_averages(avgs: &ConditionalAverages, n: usize, gamma_tau: f64) -> Result<WeakValueEstimate> {
    if !(gamma_tau > 0.0) || !gamma_tau.is_finite() {
        return Err(Error::NonPositiveGammaTau(gamma_tau));
    }
    let k = 1.0 / (2.0 * gamma_tau);
    Ok(WeakValueEstimate {
        n,
        value: C64::new(-avgs.avg_sy * k, avgs.avg_sx * k),
        stderr_re: avgs.stderr_sy * k,
        stderr_im: avgs.stderr_sx * k,
        gamma_tau,
    })
}

fn check_coverage(estimates: &[WeakValueEstimate], n_max: usize) -> Result<()> {
    if estimates.len() != n_max + 1 || estimates.iter().enumerate().any(|(i, e)| e.n != i) {
        return Err(Error::IncompleteEstimates {
            n_max,
            found: estimates.len(),
        });
    }
    Ok(())
}

fn check_sequence(estimates: &[WeakValueEstimate]) -> Result<()> {
    if estimates.len() < 2 {
        return Err(Error::IncompleteEstimates {
            n_max: estimates.len().saturating_sub(1),
            found: estimates.len(),
        });
    }
    check_coverage(estimates, estimates.len() - 1)
}

/// `|Σ_n W_n − 1|`.
pub fn exact_weak_value_sum_check(estimates: &[WeakValueEstimate]) -> Result<f64> {
    check_sequence(estimates)?;
    let sum: C64 = estimates.iter().map(|e| e.value).sum();
    Ok((sum - C64::new(1.0, 0.0)).norm())
}

/// Propagated standard error of `|Σ_n W_n − 1|`, treating the estimates as independent.
pub fn sum_check_stderr(estimates: &[WeakValueEstimate]) -> f64 {
    estimates
        .iter()
        .map(|e| e.stderr_re.powi(2) + e.stderr_im.powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Which forward model links amplitudes to weak values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeakValueModel {
    /// `W_n = (α_n c_n − β_{n+1} c_{n+1})* c_n / D` with D = ⟨Ψ_f|Ψ⟩.
    ProjectedState,
    /// `W_n = ⟨Ψ|K†K Π_n|Ψ⟩ / ⟨Ψ|K†K|Ψ⟩` with K the post-selection Kraus operator of
    /// the circuit; this is what the simulated meter records.
    CircuitEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Multistart weighted least squares on the full weak-value set.
    LeastSquares,
    /// Sequential ratio sweep with sum-rule rescaling, iterated to a fixed point.
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub model: WeakValueModel,
    pub solver: Solver,
    /// Measured post-selection success probability and its standard error.
    /// Without it the weak values alone admit several distinct solutions.
    pub success_probability: Option<(f64, f64)>,
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            model: WeakValueModel::ProjectedState,
            solver: Solver::LeastSquares,
            success_probability: None,
            starts: 64,
            seed: 0,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Gauge: first non-negligible amplitude real positive.
    pub amps: CavityState,
    /// ⟨Ψ_f|Ψ⟩ for the projected model, the success probability for the circuit model.
    pub d_factor: C64,
    /// |c_{N+1}| implied by the last weak value.
    pub residual_truncation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub model: WeakValueModel,
    pub solver: Solver,
    /// Weighted sum of squared residuals at the solution.
    pub chi_square: f64,
    /// Indices whose amplitude fell below [`AMPLITUDE_FLOOR`].
    pub degenerate: Vec<usize>,
}

/// Post-selected amplitudes `f_n = α_n c_n − β_{n+1} c_{n+1}` with c_{N+1} = 0.
fn f_amplitudes(c: &[C64], jc: &JcCoefficients) -> Vec<C64> {
    let n_max = c.len() - 1;
    (0..=n_max)
        .map(|n| {
            let next = if n < n_max { jc.beta_at(n + 1) * c[n + 1] } else { C64::new(0.0, 0.0) };
            jc.alpha_at(n) * c[n] - next
        })
        .collect()
}

/// Forward model prediction for normalized amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub weak_values: Vec<C64>,
    pub success_probability: f64,
    pub d_factor: C64,
}

pub fn predict(c: &[C64], jc: &JcCoefficients, model: WeakValueModel) -> Prediction {
    let f = f_amplitudes(c, jc);
    let p = 0.5 * f.iter().map(|z| z.norm_sqr()).sum::<f64>();
    match model {
        WeakValueModel::ProjectedState => {
            let nums: Vec<C64> = f.iter().zip(c).map(|(fi, ci)| fi.conj() * ci).collect();
            let d: C64 = nums.iter().sum();
            Prediction {
                weak_values: nums.into_iter().map(|x| x / d).collect(),
                success_probability: p,
                d_factor: d,
            }
        }
        WeakValueModel::CircuitEffect => {
            let weak_values = (0..c.len())
                .map(|n| {
                    let prev = if n > 0 { jc.beta_at(n).conj() * f[n - 1] } else { C64::new(0.0, 0.0) };
                    let e = 0.5 * (jc.alpha_at(n).conj() * f[n] - prev);
                    e.conj() * c[n] / p
                })
                .collect();
            Prediction {
                weak_values,
                success_probability: p,
                d_factor: C64::new(p, 0.0),
            }
        }
    }
}

/// Indices n < n_max whose weak value is non-negligible while |β_{n+1}| < [`BETA_GUARD`].
pub fn beta_guard_violations(estimates: &[WeakValueEstimate], jc: &JcCoefficients) -> Vec<usize> {
    let n_max = estimates.len().saturating_sub(1);
    estimates
        .iter()
        .filter(|e| e.n < n_max)
        .filter(|e| e.value.norm() > 1e-9 + 4.0 * e.stderr_re.max(e.stderr_im))
        .filter(|e| jc.beta_at(e.n + 1).norm() < BETA_GUARD)
        .map(|e| e.n)
        .collect()
}

pub fn fidelity(a: &CavityState, b: &CavityState) -> Result<f64> {
    let overlap = a.inner(b)?.norm_sqr();
    let norm = a.norm_sqr() * b.norm_sqr();
    Ok((overlap / norm).clamp(0.0, 1.0))
}

/// Recovers the Fock amplitudes from weak values at n = 0..=n_max.
pub fn reconstruct(
    estimates: &[WeakValueEstimate],
    jc: &JcCoefficients,
    options: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    check_sequence(estimates)?;
    let n_max = estimates.len() - 1;
    if jc.n_max() < n_max {
        return Err(Error::DimensionMismatch {
            expected: n_max + 1,
            found: jc.n_max() + 1,
        });
    }
    if estimates.iter().any(|e| !e.value.re.is_finite() || !e.value.im.is_finite()) {
        return Err(Error::InvalidParameter("non-finite weak value".into()));
    }
    if let Some(&n) = beta_guard_violations(estimates, jc).first() {
        return Err(Error::BetaTooSmall {
            n: n + 1,
            value: jc.beta_at(n + 1).norm(),
        });
    }
    match options.solver {
        Solver::LeastSquares => least_squares(estimates, jc, options),
        Solver::FixedPoint => fixed_point(estimates, jc, options.model),
    }
}

fn initial_amplitudes(estimates: &[WeakValueEstimate]) -> Result<Vec<C64>> {
    let sum: C64 = estimates.iter().map(|e| e.value).sum();
    if sum.norm() < 1e-15 {
        return Err(Error::ZeroWeakValueSum);
    }
    let c: Vec<C64> = estimates
        .iter()
        .map(|e| C64::new((e.value / sum).re.max(AMPLITUDE_FLOOR).sqrt(), 0.0))
        .collect();
    Ok(normalize(c))
}

fn normalize(c: Vec<C64>) -> Vec<C64> {
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    c.into_iter().map(|z| z / norm).collect()
}

/// x = (c_0 real, Re c_1, Im c_1, …).
fn pack(c: &[C64]) -> Vec<f64> {
    let phase = if c[0].norm() > 0.0 { c[0].conj() / c[0].norm() } else { C64::new(1.0, 0.0) };
    let mut x = vec![(c[0] * phase).re];
    for z in &c[1..] {
        let z = z * phase;
        x.push(z.re);
        x.push(z.im);
    }
    x
}

fn unpack(x: &[f64]) -> Vec<C64> {
    let mut c = vec![C64::new(x[0], 0.0)];
    c.extend(x[1..].chunks(2).map(|p| C64::new(p[0], p[1])));
    c
}

fn weights(estimates: &[WeakValueEstimate], p: Option<(f64, f64)>) -> (Vec<(f64, f64)>, Option<(f64, f64)>, bool) {
    let errs: Vec<f64> = estimates
        .iter()
        .flat_map(|e| [e.stderr_re, e.stderr_im])
        .chain(p.map(|(_, s)| s))
        .collect();
    let exact = errs.iter().all(|&s| s == 0.0);
    let floor = errs.iter().copied().filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    let sigma = |s: f64| if exact { 1.0 } else { s.max(floor) };
    let w = estimates.iter().map(|e| (sigma(e.stderr_re), sigma(e.stderr_im))).collect();
    (w, p.map(|(v, s)| (v, sigma(s))), exact)
}

fn least_squares(
    estimates: &[WeakValueEstimate],
    jc: &JcCoefficients,
    options: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    let (sigmas, p_datum, exact) = weights(estimates, options.success_probability);
    let model = options.model;
    let residuals = |x: &[f64]| -> Vec<f64> {
        let raw = unpack(x);
        let norm2: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
        let c: Vec<C64> = raw.iter().map(|z| z / norm2.sqrt()).collect();
        let pred = predict(&c, jc, model);
        let mut r = Vec::with_capacity(2 * c.len() + 2);
        for ((w, e), (sr, si)) in pred.weak_values.iter().zip(estimates).zip(&sigmas) {
            let d = w - e.value;
            r.push(d.re / sr);
            r.push(d.im / si);
        }
        if let Some((pv, ps)) = p_datum {
            r.push((pred.success_probability - pv) / ps);
        }
        r
    };
    let settings = LmSettings {
        max_iterations: options.max_iterations,
        target_cost: if exact { 1e-24 } else { 0.0 },
        // cost is ½χ², so 1e-4 relative is far below statistical resolution
        stall_tolerance: if exact { 1e-12 } else { 1e-4 },
        unit_sphere: true,
    };

    let init = initial_amplitudes(estimates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<lm::LmOutcome> = None;
    let mut total_iterations = 0;
    for start in 0..options.starts.max(1) {
        let c0 = match start {
            0 => init.clone(),
            s if s % 2 == 1 => init
                .iter()
                .map(|z| z * C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
                .collect(),
            _ => (0..init.len())
                .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect(),
        };
        let out = lm::minimize(residuals, pack(&normalize(c0)), &settings);
        total_iterations += out.iterations;
        let better = best.as_ref().is_none_or(|b| out.cost < b.cost);
        if better {
            best = Some(out);
        }
        if exact && best.as_ref().is_some_and(|b| b.cost < 1e-20) {
            break;
        }
    }
    let best = best.expect("at least one start");
    let c = normalize(unpack(&best.x));
    let converged = best.converged;
    finish(c, estimates, jc, model, Solver::LeastSquares, total_iterations, converged, 2.0 * best.cost)
}

fn fixed_point(estimates: &[WeakValueEstimate], jc: &JcCoefficients, model: WeakValueModel) -> Result<ReconstructionResult> {
    let sum: C64 = estimates.iter().map(|e| e.value).sum();
    if sum.norm() < 1e-15 {
        return Err(Error::ZeroWeakValueSum);
    }
    let w: Vec<C64> = estimates.iter().map(|e| e.value / sum).collect();
    let n_max = w.len() - 1;
    let mut c = initial_amplitudes(estimates)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 200 {
        iterations += 1;
        let d = predict(&c, jc, WeakValueModel::ProjectedState).d_factor;
        let mut next = c.clone();
        for n in 0..n_max {
            if next[n].norm() < AMPLITUDE_FLOOR {
                continue;
            }
            let target = (d * w[n] / next[n]).conj();
            next[n + 1] = (jc.alpha_at(n) * next[n] - target) / jc.beta_at(n + 1);
        }
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            break;
        }
        let next = normalize(next);
        let change = next.iter().zip(&c).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        c = next;
        if change < 1e-10 {
            converged = true;
            break;
        }
    }
    let chi_square = predict(&c, jc, model)
        .weak_values
        .iter()
        .zip(&w)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    finish(c, estimates, jc, model, Solver::FixedPoint, iterations, converged, chi_square)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    c: Vec<C64>,
    estimates: &[WeakValueEstimate],
    jc: &JcCoefficients,
    model: WeakValueModel,
    solver: Solver,
    iterations: usize,
    converged: bool,
    chi_square: f64,
) -> Result<ReconstructionResult> {
    let amps = CavityState::new(c)?.gauge_fixed(GAUGE_THRESHOLD);
    let c = amps.amps();
    let n = c.len() - 1;
    let pred = predict(c, jc, model);
    let degenerate: Vec<usize> = (0..=n).filter(|&k| c[k].norm() < AMPLITUDE_FLOOR).collect();
    let residual_truncation = if c[n].norm() < AMPLITUDE_FLOOR {
        0.0
    } else {
        let w = estimates[n].value;
        let f_n = match model {
            WeakValueModel::ProjectedState => (pred.d_factor * w / c[n]).conj(),
            WeakValueModel::CircuitEffect => {
                let f = f_amplitudes(c, jc);
                let e = (w * pred.success_probability / c[n]).conj();
                (2.0 * e + jc.beta_at(n).conj() * f[n - 1]) / jc.alpha_at(n).conj()
            }
        };
        ((jc.alpha_at(n) * c[n] - f_n) / jc.beta_at(n + 1)).norm()
    };
    Ok(ReconstructionResult {
        amps,
        d_factor: pred.d_factor,
        residual_truncation: if residual_truncation.is_finite() { residual_truncation } else { f64::MAX },
        iterations,
        converged,
        model,
        solver,
        chi_square,
        degenerate,
    })
}
