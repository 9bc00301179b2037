use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use cavity_wv::dynamics::{jc_coefficients, selectivity_map};
use cavity_wv::protocol::Mode;
use cavity_wv::tomography::reconstruct;
use cavity_wv_cli::config::RunConfig;
use cavity_wv_cli::output::{
    estimates_from_input, manifest_options, read_weak_values, sweep_file_name, write_csv, write_reconstruction,
    write_run, ReconstructionJson, SelectivityCsvRow, Timestamps, RECONSTRUCTION_JSON,
};
use cavity_wv_cli::run::{
    execute, pooled_success, reconstruct_options, sweep, ExitKind, ModelArg, RunError, RunOptions, SolverArg,
    SweepAxis,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cavity-wv", version, about = "Weak-value tomography of a cavity photon state")]
struct Cli {
    /// Directory for result files.
    #[arg(long, global = true, env = "CAVITY_WV_OUT_DIR", default_value = "cavity-wv-out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON) or a manifest from an earlier run.
    config: PathBuf,
    /// Forward model used for reconstruction [default: circuit].
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// [default: least-squares]
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled run over every target photon number, then reconstruction.
    Simulate(RunArgs),
    /// Same outputs from exact conditional averages (no sampling).
    Exact(RunArgs),
    /// Off-resonant excitation table for the selective drive.
    Selectivity {
        #[arg(long, default_value_t = 1.0)]
        chi: f64,
        #[arg(long, default_value_t = 0.02)]
        gamma: f64,
        #[arg(long, default_value_t = std::f64::consts::PI)]
        t: f64,
        #[arg(long, default_value_t = 8)]
        m_max: u32,
    },
    /// Fidelity and weak-value error along one parameter axis.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value = "circuit")]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "least-squares")]
        solver: SolverArg,
    },
    /// Reconstruct amplitudes from a weak-value CSV.
    Reconstruct {
        csv: PathBuf,
        /// JC angle; taken from the `phi` column when omitted.
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long, value_enum, default_value = "circuit")]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "least-squares")]
        solver: SolverArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file [default: <out-dir>/reconstruction.json].
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn resolve_options(args: &RunArgs) -> RunOptions {
    let recorded = manifest_options(&args.config).unwrap_or_default();
    RunOptions {
        model: args.model.unwrap_or(recorded.model),
        solver: args.solver.unwrap_or(recorded.solver),
    }
}

fn cmd_run(out_dir: &Path, args: &RunArgs, exact: bool) -> Result<(), RunError> {
    let timestamps = Timestamps::now();
    let mut config = RunConfig::load(&args.config).map_err(RunError::config)?;
    if exact {
        config.mode = Mode::ExactEnsemble;
    }
    let options = resolve_options(args);
    let outcome = execute(&config, &options)?;
    let command = if exact { "exact" } else { "simulate" };
    let files = write_run(out_dir, command, &outcome, timestamps).map_err(RunError::io)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    let m = &outcome.metrics;
    println!(
        "fidelity {:.6}  sum-rule deviation {:.3e}  P(g) {:.4}",
        m.fidelity.unwrap_or(f64::NAN),
        m.estimate_sum_deviation,
        m.success_probability
    );
    if !outcome.reconstruction.converged {
        return Err(RunError {
            kind: ExitKind::NotConverged,
            source: anyhow!(
                "reconstruction did not converge after {} iterations (chi-square {:.3e})",
                outcome.reconstruction.iterations,
                outcome.reconstruction.chi_square
            ),
        });
    }
    Ok(())
}

fn cmd_selectivity(out_dir: &Path, chi: f64, gamma: f64, t: f64, m_max: u32) -> Result<(), RunError> {
    if m_max < 1 {
        return Err(RunError::config(anyhow!("m_max must be at least 1")));
    }
    let rows = selectivity_map(chi, gamma, t, 0..=m_max)?;
    let rows: Vec<SelectivityCsvRow> = rows.iter().map(Into::into).collect();
    std::fs::create_dir_all(out_dir).map_err(RunError::io)?;
    let path = out_dir.join("selectivity.csv");
    write_csv(&path, &rows).map_err(RunError::io)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(out_dir: &Path, config: &Path, axis: SweepAxis, values: &[f64], options: RunOptions) -> Result<(), RunError> {
    if values.is_empty() {
        return Err(RunError::config(anyhow!("sweep needs at least one axis value")));
    }
    let base = RunConfig::load(config).map_err(RunError::config)?;
    base.protocol().map_err(RunError::config)?;
    let rows = sweep(&base, axis, values, &options);
    std::fs::create_dir_all(out_dir).map_err(RunError::io)?;
    let path = out_dir.join(sweep_file_name(&rows));
    write_csv(&path, &rows).map_err(RunError::io)?;
    for r in rows.iter().filter(|r| r.status != "ok") {
        eprintln!("{} = {}: {}", r.axis, r.value, r.status);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_reconstruct(
    out_dir: &Path,
    csv: &Path,
    phi: Option<f64>,
    options: RunOptions,
    seed: u64,
    output: Option<PathBuf>,
) -> Result<(), RunError> {
    let rows = read_weak_values(csv).map_err(RunError::config)?;
    let phi = phi
        .or(rows[0].phi)
        .ok_or_else(|| RunError::config(anyhow!("no phi column in {}; pass --phi", csv.display())))?;
    let estimates = estimates_from_input(&rows);
    let rates: Option<Vec<(f64, f64)>> = rows
        .iter()
        .map(|r| r.ps_success_rate.map(|p| (p, r.ps_stderr.unwrap_or(0.0))))
        .collect();
    let success = rates.map(|r| pooled_success(&r));
    let mut opts = reconstruct_options(&options, success.unwrap_or((0.0, 0.0)), seed);
    opts.success_probability = success;
    let jc = jc_coefficients(phi, estimates.len().saturating_sub(1));
    let result = reconstruct(&estimates, &jc, &opts)?;
    let json = ReconstructionJson::new(&result, &options, phi, success, None);
    let path = output.unwrap_or_else(|| out_dir.join(RECONSTRUCTION_JSON));
    write_reconstruction(&path, &json).map_err(RunError::io)?;
    println!("wrote {}", path.display());
    if !result.converged {
        return Err(RunError {
            kind: ExitKind::NotConverged,
            source: anyhow!("reconstruction did not converge"),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out_dir.as_path();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_run(out, args, false),
        Command::Exact(args) => cmd_run(out, args, true),
        Command::Selectivity { chi, gamma, t, m_max } => cmd_selectivity(out, *chi, *gamma, *t, *m_max),
        Command::Sweep {
            config,
            axis,
            values,
            model,
            solver,
        } => cmd_sweep(out, config, *axis, values, RunOptions { model: *model, solver: *solver }),
        Command::Reconstruct {
            csv,
            phi,
            model,
            solver,
            seed,
            output,
        } => cmd_reconstruct(out, csv, *phi, RunOptions { model: *model, solver: *solver }, *seed, output.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
