//! The three subcommands. Each returns a one-line summary for stdout or a
//! [`CliError`] carrying the exit code.

use std::path::Path;

use depi_core::continuum::{convergence_study, fit_slope, one_step_errors, validate_epsilons, ConvergenceReport};
use depi_core::lagrangian::Side;
use depi_core::lie::So3;
use depi_core::stepper::{ep_residual, integrate_ep};
use depi_core::systems::{invariant_report, InvariantReport, Scheme};
use depi_core::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{atomic_write, trajectory_csv, write_json};
use crate::suite::{run_suite, SuiteOptions, SuiteReport};
use crate::CliError;

/// Slope required of the one-step error.
pub const MIN_ONE_STEP_SLOPE: f64 = 1.9;

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub system: String,
    pub side: Side,
    pub scheme: Scheme,
    pub epsilon: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub completed_steps: usize,
    pub status: &'static str,
    pub error: Option<String>,
    /// Largest recomputed step residual.
    pub max_residual: f64,
    pub invariants: InvariantReport,
    pub warnings: Vec<String>,
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, cfg.side)?;
    let guess = So3::exp(&(cfg.omega_guess * cfg.epsilon));
    let (traj, failure) = match integrate_ep(&lag, cfg.system_name(), cfg.epsilon, cfg.initial, cfg.n_steps, &guess, &cfg.newton) {
        Ok(t) => (t, None),
        Err(int) => (int.trajectory, Some(int.error)),
    };
    let residuals = traj
        .states
        .iter()
        .zip(&traj.increments)
        .map(|(s, w)| ep_residual(&lag, s, w).map(|r| r.norm()))
        .collect::<Result<Vec<f64>, Error>>()?;
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let message = failure.as_ref().map(|e| e.to_string());
    atomic_write(
        &out_dir.join(&cfg.outputs.trajectory),
        trajectory_csv(&traj, &residuals, message.as_deref())?.as_bytes(),
    )?;
    let report = SimulationReport {
        system: cfg.system_name().into(),
        side: cfg.side,
        scheme: cfg.scheme,
        epsilon: cfg.epsilon,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
        completed_steps: traj.step_count(),
        status: if failure.is_some() { "failed" } else { "ok" },
        error: message,
        max_residual,
        invariants: invariant_report(&cfg.system, &lag, &traj)?,
        warnings: cfg.warnings.clone(),
    };
    write_json(&out_dir.join(&cfg.outputs.report), &report)?;
    match failure {
        Some(e) => Err(CliError::Solver(e)),
        None => Ok(format!(
            "{} steps of {} completed, max residual {:e}",
            report.completed_steps, report.system, max_residual
        )),
    }
}

pub fn verify(cfg: &RunConfig, out_dir: &Path, corrupt_map: bool) -> Result<(String, SuiteReport), CliError> {
    let report = run_suite(cfg, SuiteOptions { seed: cfg.seed, corrupt_map });
    write_json(&out_dir.join(&cfg.outputs.verify_report), &report)?;
    let mut table = String::new();
    for c in &report.checks {
        table.push_str(&format!(
            "{} {:<40} {:>12.3e} < {:.0e}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        ));
    }
    if report.pass {
        Ok((table, report))
    } else {
        Err(CliError::Property(format!("failing checks: {}\n{table}", report.failed.join(", "))))
    }
}

#[derive(Debug, Serialize)]
pub struct OneStepReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Absent when every error is at roundoff.
    pub slope: Option<f64>,
    pub exact: bool,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceSummary {
    pub system: String,
    pub side: Side,
    pub scheme: Scheme,
    pub t_end: f64,
    pub seed: u64,
    pub one_step: OneStepReport,
    pub trajectory: ConvergenceReport,
    pub pass: bool,
}

pub fn converge(cfg: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    validate_epsilons(&cfg.epsilons).map_err(|e| CliError::Config(format!("field `epsilons`: {e}")))?;
    let lc = cfg.system.continuous()?;
    let make = |e: f64| cfg.system.discrete(e, cfg.scheme, cfg.side);
    let (one, study) = rayon::join(
        || one_step_errors(&lc, cfg.side, make, &cfg.initial, &cfg.epsilons, &cfg.newton),
        || convergence_study(&lc, cfg.side, make, &cfg.initial, cfg.t_end, &cfg.epsilons, &cfg.newton),
    );
    let (errors, study) = (one?, study?);
    let exact = errors.iter().all(|e| *e <= depi_core::continuum::EXACT_THRESHOLD);
    let slope = if exact { None } else { fit_slope(&cfg.epsilons, &errors) };
    let one_step = OneStepReport {
        epsilons: cfg.epsilons.clone(),
        pass: exact || slope.is_some_and(|s| s >= MIN_ONE_STEP_SLOPE),
        errors,
        slope,
        exact,
    };
    let summary = ConvergenceSummary {
        system: cfg.system_name().into(),
        side: cfg.side,
        scheme: cfg.scheme,
        t_end: cfg.t_end,
        seed: cfg.seed,
        pass: one_step.pass && study.pass,
        one_step,
        trajectory: study,
    };
    atomic_write(&out_dir.join(&cfg.outputs.convergence_csv), summary.trajectory.to_csv().as_bytes())?;
    write_json(&out_dir.join(&cfg.outputs.convergence_json), &summary)?;
    let describe = |slope: Option<f64>, exact: bool| match (exact, slope) {
        (true, _) => "exact".to_string(),
        (false, Some(s)) => format!("{s:.3}"),
        (false, None) => "undefined".to_string(),
    };
    let line = format!(
        "trajectory slope {}, one-step slope {}",
        describe(summary.trajectory.slope, summary.trajectory.exact),
        describe(summary.one_step.slope, summary.one_step.exact)
    );
    if summary.pass {
        Ok(line)
    } else {
        Err(CliError::Property(format!("convergence check failed: {line}")))
    }
}
