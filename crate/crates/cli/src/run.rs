use std::fmt;

use cavity_wv::dynamics::jc_coefficients;
use cavity_wv::hilbert::CavityState;
use cavity_wv::oracle::{oracle_circuit_weak_values, oracle_weak_values};
use cavity_wv::protocol::{conditional_averages, ConditionalAverages, ProtocolConfig, ShotBatch};
use cavity_wv::tomography::{
    beta_guard_violations, exact_weak_value_sum_check, fidelity, reconstruct, sum_check_stderr,
    weak_value_from_averages, ReconstructOptions, ReconstructionResult, Solver, WeakValueEstimate, WeakValueModel,
};
use cavity_wv::{Error, C64};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Io = 1,
    Config = 2,
    Degenerate = 3,
    NotConverged = 4,
}

#[derive(Debug)]
pub struct RunError {
    pub kind: ExitKind,
    pub source: anyhow::Error,
}

impl RunError {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Config,
            source: e.into(),
        }
    }

    pub fn io(e: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: ExitKind::Io,
            source: e.into(),
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::DegeneratePostselection(_) | Error::NoPostselectedShots { .. } => ExitKind::Degenerate,
            Error::NotConverged { .. } => ExitKind::NotConverged,
            _ => ExitKind::Config,
        };
        Self { kind, source: e.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Circuit,
    Projected,
}

impl From<ModelArg> for WeakValueModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Circuit => WeakValueModel::CircuitEffect,
            ModelArg::Projected => WeakValueModel::ProjectedState,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    LeastSquares,
    FixedPoint,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::LeastSquares => Solver::LeastSquares,
            SolverArg::FixedPoint => Solver::FixedPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub model: ModelArg,
    pub solver: SolverArg,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            model: ModelArg::Circuit,
            solver: SolverArg::LeastSquares,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRecord {
    pub averages: ConditionalAverages,
    pub batch: Option<ShotBatch>,
    pub estimate: WeakValueEstimate,
    pub oracle: C64,
    pub circuit_oracle: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fidelity: Option<f64>,
    /// |Σ W_n − 1| of the oracle values.
    pub oracle_sum_deviation: f64,
    pub estimate_sum_deviation: f64,
    pub estimate_sum_stderr: f64,
    /// RMS |W_est − W_oracle| against the oracle matching the reconstruction model.
    pub wv_rms_error: f64,
    pub wv_rms_error_projected: f64,
    pub wv_rms_error_circuit: f64,
    /// Largest |ΔW|/σ over targets and quadratures; absent for exact runs.
    pub max_z_projected: Option<f64>,
    pub max_z_circuit: Option<f64>,
    pub mean_stderr: f64,
    pub success_probability: f64,
    pub success_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub protocol: ProtocolConfig,
    pub options: RunOptions,
    pub targets: Vec<TargetRecord>,
    pub reconstruction: ReconstructionResult,
    pub metrics: Metrics,
}

impl RunOutcome {
    pub fn estimates(&self) -> Vec<WeakValueEstimate> {
        self.targets.iter().map(|t| t.estimate).collect()
    }
}

/// Runs the protocol once per target photon number, in parallel, in target order.
pub fn measure(cfg: &ProtocolConfig) -> Result<Vec<TargetRecord>, Error> {
    let projected = oracle_weak_values(&cfg.true_state, cfg.phi);
    let circuit = oracle_circuit_weak_values(&cfg.true_state, cfg.phi);
    (0..=cfg.n_max())
        .into_par_iter()
        .map(|n| {
            let (averages, batch) = conditional_averages(&cfg.with_target(n))?;
            Ok(TargetRecord {
                averages,
                batch,
                estimate: weak_value_from_averages(&averages, n, cfg.gamma_tau())?,
                oracle: projected[n].value,
                circuit_oracle: circuit[n].value,
            })
        })
        .collect()
}

/// Inverse-variance pooled post-selection rate over targets (plain mean for exact data).
pub fn pooled_success(rates: &[(f64, f64)]) -> (f64, f64) {
    if rates.iter().any(|&(_, s)| s <= 0.0) {
        let mean = rates.iter().map(|r| r.0).sum::<f64>() / rates.len() as f64;
        return (mean, 0.0);
    }
    let w: f64 = rates.iter().map(|&(_, s)| 1.0 / (s * s)).sum();
    let p = rates.iter().map(|&(p, s)| p / (s * s)).sum::<f64>() / w;
    (p, (1.0 / w).sqrt())
}

fn rms(diffs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = diffs.collect();
    (v.iter().map(|d| d * d).sum::<f64>() / v.len() as f64).sqrt()
}

fn max_z(targets: &[TargetRecord], pick: impl Fn(&TargetRecord) -> C64) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for t in targets {
        let e = t.estimate;
        if e.stderr_re <= 0.0 || e.stderr_im <= 0.0 {
            return None;
        }
        let d = e.value - pick(t);
        worst = worst.max((d.re / e.stderr_re).abs()).max((d.im / e.stderr_im).abs());
    }
    Some(worst)
}

pub fn reconstruct_options(options: &RunOptions, success: (f64, f64), seed: u64) -> ReconstructOptions {
    ReconstructOptions {
        model: options.model.into(),
        solver: options.solver.into(),
        success_probability: Some(success),
        seed,
        ..Default::default()
    }
}

/// Measures every target, reconstructs and scores against the true state.
pub fn execute(config: &RunConfig, options: &RunOptions) -> Result<RunOutcome, RunError> {
    let protocol = config.protocol().map_err(RunError::config)?;
    let targets = measure(&protocol)?;
    let estimates: Vec<_> = targets.iter().map(|t| t.estimate).collect();
    let rates: Vec<_> = targets
        .iter()
        .map(|t| (t.averages.ps_success_rate, t.averages.stderr_success))
        .collect();
    let success = pooled_success(&rates);
    let jc = jc_coefficients(protocol.phi, protocol.n_max());
    let reconstruction = reconstruct(&estimates, &jc, &reconstruct_options(options, success, protocol.seed))?;
    let metrics = score(&targets, &protocol.true_state, &reconstruction, options, success)?;
    Ok(RunOutcome {
        config: config.clone(),
        protocol,
        options: *options,
        targets,
        reconstruction,
        metrics,
    })
}

fn score(
    targets: &[TargetRecord],
    truth: &CavityState,
    reconstruction: &ReconstructionResult,
    options: &RunOptions,
    success: (f64, f64),
) -> Result<Metrics, Error> {
    let estimates: Vec<_> = targets.iter().map(|t| t.estimate).collect();
    let oracle_sum: C64 = targets.iter().map(|t| t.oracle).sum();
    let projected = rms(targets.iter().map(|t| (t.estimate.value - t.oracle).norm()));
    let circuit = rms(targets.iter().map(|t| (t.estimate.value - t.circuit_oracle).norm()));
    Ok(Metrics {
        fidelity: Some(fidelity(&reconstruction.amps, truth)?),
        oracle_sum_deviation: (oracle_sum - C64::new(1.0, 0.0)).norm(),
        estimate_sum_deviation: exact_weak_value_sum_check(&estimates)?,
        estimate_sum_stderr: sum_check_stderr(&estimates),
        wv_rms_error: match options.model {
            ModelArg::Circuit => circuit,
            ModelArg::Projected => projected,
        },
        wv_rms_error_projected: projected,
        wv_rms_error_circuit: circuit,
        max_z_projected: max_z(targets, |t| t.oracle),
        max_z_circuit: max_z(targets, |t| t.circuit_oracle),
        mean_stderr: estimates.iter().map(|e| 0.5 * (e.stderr_re + e.stderr_im)).sum::<f64>() / estimates.len() as f64,
        success_probability: success.0,
        success_stderr: success.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Shots,
    GammaTau,
    Phi,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Shots => "shots",
            SweepAxis::GammaTau => "gamma_tau",
            SweepAxis::Phi => "phi",
        }
    }

    pub fn apply(self, base: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Shots => cfg.shots = value.round().max(0.0) as u64,
            SweepAxis::GammaTau => cfg.gamma = value / cfg.tau,
            SweepAxis::Phi => cfg.phi = crate::config::PhiSpec::Value(value),
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub status: String,
    pub fidelity: f64,
    pub wv_rms_error: f64,
    pub wv_rms_error_projected: f64,
    pub mean_stderr: f64,
    pub ps_success_rate: f64,
    pub converged: bool,
    /// Weak-value indices n whose |β_{n+1}| is below the reconstruction guard, ';'-separated.
    pub beta_guard_n: String,
    pub wall_time_s: f64,
}

fn sweep_point(base: &RunConfig, axis: SweepAxis, value: f64, options: &RunOptions) -> SweepRow {
    let start = std::time::Instant::now();
    let cfg = axis.apply(base, value);
    let mut row = SweepRow {
        axis: axis.name().to_string(),
        value,
        status: "ok".into(),
        fidelity: f64::NAN,
        wv_rms_error: f64::NAN,
        wv_rms_error_projected: f64::NAN,
        mean_stderr: f64::NAN,
        ps_success_rate: f64::NAN,
        converged: false,
        beta_guard_n: String::new(),
        wall_time_s: 0.0,
    };
    let outcome = cfg.protocol().map_err(RunError::config).and_then(|protocol| {
        let targets = measure(&protocol)?;
        Ok((protocol, targets))
    });
    match outcome {
        Err(e) => row.status = format!("error: {e}"),
        Ok((protocol, targets)) => {
            let estimates: Vec<_> = targets.iter().map(|t| t.estimate).collect();
            let jc = jc_coefficients(protocol.phi, protocol.n_max());
            let guard = beta_guard_violations(&estimates, &jc);
            row.beta_guard_n = guard.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";");
            let rates: Vec<_> = targets
                .iter()
                .map(|t| (t.averages.ps_success_rate, t.averages.stderr_success))
                .collect();
            let success = pooled_success(&rates);
            row.ps_success_rate = success.0;
            row.wv_rms_error_projected = rms(targets.iter().map(|t| (t.estimate.value - t.oracle).norm()));
            let circuit = rms(targets.iter().map(|t| (t.estimate.value - t.circuit_oracle).norm()));
            row.wv_rms_error = match options.model {
                ModelArg::Circuit => circuit,
                ModelArg::Projected => row.wv_rms_error_projected,
            };
            row.mean_stderr =
                estimates.iter().map(|e| 0.5 * (e.stderr_re + e.stderr_im)).sum::<f64>() / estimates.len() as f64;
            match reconstruct(&estimates, &jc, &reconstruct_options(options, success, protocol.seed)) {
                Ok(r) => {
                    row.converged = r.converged;
                    row.fidelity = fidelity(&r.amps, &protocol.true_state).unwrap_or(f64::NAN);
                    if !r.converged {
                        row.status = "not-converged".into();
                    }
                }
                Err(e) => row.status = format!("precondition: {e}"),
            }
        }
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

/// One row per axis value, in input order; points run concurrently.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64], options: &RunOptions) -> Vec<SweepRow> {
    values.par_iter().map(|&v| sweep_point(base, axis, v, options)).collect()
}

