//! Experiment orchestration behind the command-line front end.

pub mod analytic;
pub mod compare;
pub mod config;
pub mod ensemble;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

pub use analytic::{analytic_rows, write_analytic, AnalyticRow, Method};
pub use compare::{compare, read_estimates, read_reference, CompareReport, Z_LIMIT};
pub use config::{load_config, parse_config, ExperimentConfig, Overrides, Preset};
pub use ensemble::{collect_statistics, write_estimates, EnsembleStatistics, Estimate};

use crate::error::{Error, Result};
use crate::lindblad::{integrate, thermal_state, truncation_convergence, write_populations};
use crate::model::make_rates;
use crate::trajectory::write_jump_dump;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "QHO_CAL_THREADS";

/// Relative moment change on doubling the dimension above which `oracle` warns.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Parses a `QHO_CAL_THREADS` value.
pub fn parse_thread_cap(raw: &str) -> Result<usize> {
    raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::InvalidParameter {
        name: THREADS_VAR,
        reason: format!("expected a positive integer, found `{raw}`"),
    })
}

/// Runs `f` on a pool capped by `QHO_CAL_THREADS`, or on the global pool
/// when the variable is unset.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return f();
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parse_thread_cap(&raw)?)
        .build()
        .map_err(|e| Error::InvalidParameter { name: THREADS_VAR, reason: e.to_string() })?;
    pool.install(f)
}

#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub n_traj: u64,
    pub wall_time: Duration,
    /// Trajectories whose top-level population passed the warning level.
    pub flagged: u64,
    pub top_population: f64,
}

impl fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n_traj={} wall_time={:.2}s truncation_warnings={} max_top_population={:.2e}",
            self.n_traj,
            self.wall_time.as_secs_f64(),
            self.flagged,
            self.top_population
        )
    }
}

/// Simulates the ensemble and writes the estimate table to `out`. The jump
/// dump, when configured, goes to its own file. Workers are capped by
/// `QHO_CAL_THREADS`.
pub fn run_simulate<W: Write>(config: &ExperimentConfig, out: W) -> Result<SimulateSummary> {
    let start = Instant::now();
    let rates = make_rates(&config.params)?;
    let keep_jumps = config.outputs.jump_dump.is_some();
    let stats = with_thread_cap(|| collect_statistics(&config.params, &rates, &config.ensemble, keep_jumps))?;
    write_estimates(out, &config.provenance("simulate"), &stats)?;
    if let Some(path) = &config.outputs.jump_dump {
        let file = BufWriter::new(File::create(path)?);
        write_jump_dump(file, stats.jumps.iter().map(|(id, events)| (*id, events.as_slice())))?;
    }
    Ok(SimulateSummary {
        n_traj: stats.n_traj,
        wall_time: start.elapsed(),
        flagged: stats.flagged,
        top_population: stats.top_population(),
    })
}

pub fn run_analytic<W: Write>(config: &ExperimentConfig, out: W) -> Result<Vec<AnalyticRow>> {
    let rates = make_rates(&config.params)?;
    let rows = analytic_rows(&config.params, &rates, &config.ensemble.checkpoint_grid, &config.policy)?;
    write_analytic(out, &config.provenance("analytic"), &rows)?;
    Ok(rows)
}

/// Integrates the master equation from the thermal state and writes level
/// populations. Returns the truncation convergence measure.
pub fn run_oracle<W: Write>(config: &ExperimentConfig, out: W) -> Result<f64> {
    let params = &config.params;
    let rates = make_rates(params)?;
    let grid = &config.ensemble.checkpoint_grid;
    let states = integrate(&thermal_state(params.beta, params.dim)?, params, &rates, grid)?;
    let convergence = truncation_convergence(params, &rates, grid)?;
    let mut header = config.provenance("oracle");
    header.push(format!("truncation_convergence={convergence:.3e}"));
    write_populations(out, grid, &states, &header)?;
    if convergence > CONVERGENCE_TOL {
        log::warn!(
            "moments change by {convergence:.2e} when dim is doubled from {}; consider a larger dim",
            params.dim
        );
    }
    Ok(convergence)
}

pub fn run_compare(
    estimates: &Path,
    reference: &Path,
    method: Option<Method>,
    t_max: Option<f64>,
) -> Result<CompareReport> {
    let est = read_estimates(File::open(estimates)?)?;
    let reference = read_reference(File::open(reference)?)?;
    compare(&est, &reference, method, t_max)
}
