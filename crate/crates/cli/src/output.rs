//! CSV and JSON artifacts. Complex numbers are written as `_re`/`_im` column pairs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cavity_wv::dynamics::SelectivityRow;
use cavity_wv::tomography::{ReconstructionResult, WeakValueEstimate};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{Metrics, ModelArg, RunOptions, RunOutcome, SolverArg, SweepRow};

pub const WEAK_VALUES_CSV: &str = "weak_values.csv";
pub const RECONSTRUCTION_JSON: &str = "reconstruction.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakValueRow {
    pub n: usize,
    pub phi: f64,
    pub gamma_tau: f64,
    pub w_re: f64,
    pub w_im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub oracle_re: f64,
    pub oracle_im: f64,
    pub circuit_oracle_re: f64,
    pub circuit_oracle_im: f64,
    pub avg_sx: f64,
    pub avg_sy: f64,
    pub stderr_sx: f64,
    pub stderr_sy: f64,
    pub ps_success_rate: f64,
    pub ps_stderr: f64,
    pub postselected_x: Option<u64>,
    pub postselected_y: Option<u64>,
    pub oracle_sum_deviation: f64,
    pub estimate_sum_deviation: f64,
}

pub fn weak_value_rows(outcome: &RunOutcome) -> Vec<WeakValueRow> {
    outcome
        .targets
        .iter()
        .map(|t| {
            let e = t.estimate;
            let a = t.averages;
            WeakValueRow {
                n: e.n,
                phi: outcome.protocol.phi,
                gamma_tau: e.gamma_tau,
                w_re: e.value.re,
                w_im: e.value.im,
                stderr_re: e.stderr_re,
                stderr_im: e.stderr_im,
                oracle_re: t.oracle.re,
                oracle_im: t.oracle.im,
                circuit_oracle_re: t.circuit_oracle.re,
                circuit_oracle_im: t.circuit_oracle.im,
                avg_sx: a.avg_sx,
                avg_sy: a.avg_sy,
                stderr_sx: a.stderr_sx,
                stderr_sy: a.stderr_sy,
                ps_success_rate: a.ps_success_rate,
                ps_stderr: a.stderr_success,
                postselected_x: t.batch.as_ref().map(|b| b.postselected(cavity_wv::hilbert::MeterBasis::X)),
                postselected_y: t.batch.as_ref().map(|b| b.postselected(cavity_wv::hilbert::MeterBasis::Y)),
                oracle_sum_deviation: outcome.metrics.oracle_sum_deviation,
                estimate_sum_deviation: outcome.metrics.estimate_sum_deviation,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Minimal weak-value table accepted by `reconstruct`: `n, w_re, w_im` are required.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WeakValueInput {
    pub n: usize,
    pub w_re: f64,
    pub w_im: f64,
    #[serde(default)]
    pub stderr_re: f64,
    #[serde(default)]
    pub stderr_im: f64,
    pub gamma_tau: Option<f64>,
    pub phi: Option<f64>,
    pub ps_success_rate: Option<f64>,
    pub ps_stderr: Option<f64>,
}

pub fn read_weak_values(path: &Path) -> Result<Vec<WeakValueInput>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<WeakValueInput>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        bail!("{} holds no weak values", path.display());
    }
    Ok(rows)
}

pub fn estimates_from_input(rows: &[WeakValueInput]) -> Vec<WeakValueEstimate> {
    rows.iter()
        .map(|r| WeakValueEstimate {
            n: r.n,
            value: cavity_wv::C64::new(r.w_re, r.w_im),
            stderr_re: r.stderr_re,
            stderr_im: r.stderr_im,
            gamma_tau: r.gamma_tau.unwrap_or(f64::NAN),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionJson {
    pub model: ModelArg,
    pub solver: SolverArg,
    pub phi: f64,
    pub converged: bool,
    pub iterations: usize,
    pub chi_square: f64,
    pub amps: Vec<[f64; 2]>,
    pub d_factor: [f64; 2],
    pub residual_truncation: f64,
    pub degenerate: Vec<usize>,
    pub success_probability: Option<[f64; 2]>,
    pub fidelity: Option<f64>,
}

impl ReconstructionJson {
    pub fn new(
        r: &ReconstructionResult,
        options: &RunOptions,
        phi: f64,
        success: Option<(f64, f64)>,
        fidelity: Option<f64>,
    ) -> Self {
        Self {
            model: options.model,
            solver: options.solver,
            phi,
            converged: r.converged,
            iterations: r.iterations,
            chi_square: r.chi_square,
            amps: r.amps.amps().iter().map(|c| [c.re, c.im]).collect(),
            d_factor: [r.d_factor.re, r.d_factor.im],
            residual_truncation: r.residual_truncation,
            degenerate: r.degenerate.clone(),
            success_probability: success.map(|(p, s)| [p, s]),
            fidelity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix: u64,
    pub finished_unix: u64,
    /// `SOURCE_DATE_EPOCH` when that variable is set, else `system-clock`.
    pub source: String,
}

impl Timestamps {
    pub fn now() -> Self {
        match std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse::<u64>().ok()) {
            Some(t) => Self {
                started_unix: t,
                finished_unix: t,
                source: "SOURCE_DATE_EPOCH".into(),
            },
            None => {
                let t = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                Self {
                    started_unix: t,
                    finished_unix: t,
                    source: "system-clock".into(),
                }
            }
        }
    }

    pub fn finish(mut self) -> Self {
        if self.source != "SOURCE_DATE_EPOCH" {
            self.finished_unix = Self::now().finished_unix;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestWeakValue {
    pub n: usize,
    pub re: f64,
    pub im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub phi: f64,
    pub gamma_tau: f64,
    pub shots_per_basis: [u64; 2],
    pub model: ModelArg,
    pub solver: SolverArg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub resolved: Resolved,
    pub master_seed: u64,
    pub timestamps: Timestamps,
    pub weak_values: Vec<ManifestWeakValue>,
    pub reconstruction: ReconstructionJson,
    pub metrics: Metrics,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Run options recorded in a manifest, if `path` is one.
pub fn manifest_options(path: &Path) -> Option<RunOptions> {
    RunManifest::load(path).ok().map(|m| RunOptions {
        model: m.resolved.model,
        solver: m.resolved.solver,
    })
}

/// Writes the weak-value table, reconstruction and manifest into `dir`.
pub fn write_run(dir: &Path, command: &str, outcome: &RunOutcome, timestamps: Timestamps) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join(WEAK_VALUES_CSV);
    write_csv(&csv_path, &weak_value_rows(outcome))?;

    let success = Some((outcome.metrics.success_probability, outcome.metrics.success_stderr));
    let recon = ReconstructionJson::new(
        &outcome.reconstruction,
        &outcome.options,
        outcome.protocol.phi,
        success,
        outcome.metrics.fidelity,
    );
    let recon_path = dir.join(RECONSTRUCTION_JSON);
    write_json(&recon_path, &recon)?;

    let (sx, sy) = outcome.protocol.shots_per_basis();
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool: "cavity-wv".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: outcome.config.clone(),
        resolved: Resolved {
            phi: outcome.protocol.phi,
            gamma_tau: outcome.protocol.gamma_tau(),
            shots_per_basis: [sx, sy],
            model: outcome.options.model,
            solver: outcome.options.solver,
        },
        master_seed: outcome.config.seed,
        timestamps: timestamps.finish(),
        weak_values: outcome
            .estimates()
            .iter()
            .map(|e| ManifestWeakValue {
                n: e.n,
                re: e.value.re,
                im: e.value.im,
                stderr_re: e.stderr_re,
                stderr_im: e.stderr_im,
            })
            .collect(),
        reconstruction: recon,
        metrics: outcome.metrics.clone(),
        outputs: vec![WEAK_VALUES_CSV.into(), RECONSTRUCTION_JSON.into()],
    };
    let manifest_path = dir.join(MANIFEST_JSON);
    write_json(&manifest_path, &manifest)?;
    Ok(vec![csv_path, recon_path, manifest_path])
}

pub fn write_reconstruction(path: &Path, recon: &ReconstructionJson) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_json(path, recon)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectivityCsvRow {
    pub m: u32,
    pub epsilon: f64,
    pub gamma_tilde: f64,
    #[serde(rename = "P_e")]
    pub p_e: f64,
    pub bound: f64,
}

impl From<&SelectivityRow> for SelectivityCsvRow {
    fn from(r: &SelectivityRow) -> Self {
        Self {
            m: r.m,
            epsilon: r.epsilon,
            gamma_tilde: r.gamma_tilde,
            p_e: r.p_e,
            bound: r.bound,
        }
    }
}

pub fn sweep_file_name(rows: &[SweepRow]) -> String {
    format!("sweep_{}.csv", rows.first().map(|r| r.axis.as_str()).unwrap_or("empty"))
}
