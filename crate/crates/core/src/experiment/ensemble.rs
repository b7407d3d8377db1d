//! Streaming ensemble statistics: trajectories are reduced as they are
//! generated, so memory does not grow with the ensemble.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{PhysicalParams, Rates};
use crate::trajectory::{
    trajectory_rng, EnsembleConfig, JumpEvent, Stream, TrajectoryEngine, TrajectoryRecord, TOP_LEVEL_ERROR, TOP_LEVEL_WARN,
};
use crate::work::{calorimetric_work_given, projective_work, sample_initial_guardian, MomentSummary, WorkHistogram};

/// Sufficient statistics per checkpoint. Merging is exact for the integer
/// histograms; floating sums merge in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStatistics {
    pub times: Vec<f64>,
    pub projective: Vec<WorkHistogram>,
    pub calorimetric: Vec<WorkHistogram>,
    population_sum: Vec<Vec<f64>>,
    population_sq: Vec<Vec<f64>>,
    number_sum: Vec<f64>,
    number_sq: Vec<f64>,
    pub n_traj: u64,
    /// Trajectories whose top-level population passed the warning level.
    pub flagged: u64,
    /// Jump records by trajectory index, when requested.
    pub jumps: Vec<(usize, Vec<JumpEvent>)>,
}

/// Ensemble mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

fn estimate(sum: f64, sq: f64, n: u64) -> Estimate {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    Estimate { mean, stderr: (var / nf).sqrt() }
}

impl EnsembleStatistics {
    pub fn empty(times: &[f64], dim: usize) -> Self {
        let k = times.len();
        Self {
            times: times.to_vec(),
            projective: vec![WorkHistogram::new(); k],
            calorimetric: vec![WorkHistogram::new(); k],
            population_sum: vec![vec![0.0; dim]; k],
            population_sq: vec![vec![0.0; dim]; k],
            number_sum: vec![0.0; k],
            number_sq: vec![0.0; k],
            n_traj: 0,
            flagged: 0,
            jumps: Vec::new(),
        }
    }

    /// Folds trajectory `index` in. The projective stream supplies one final
    /// level per checkpoint; the calorimetric stream supplies `ell_i` once and
    /// then one `ell_f` per checkpoint.
    pub fn add(&mut self, master_seed: u64, index: usize, record: TrajectoryRecord, rates: &Rates, keep_jumps: bool) -> Result<()> {
        let mut proj_rng = trajectory_rng(master_seed, index, Stream::Projective);
        let mut cal_rng = trajectory_rng(master_seed, index, Stream::Calorimetric);
        let ell_i = sample_initial_guardian(record.initial_level, rates, cal_rng.random());
        for (k, &tau) in self.times.iter().enumerate() {
            self.projective[k].push(projective_work(&record, tau, &mut proj_rng)?.value);
            let (sample, _) = calorimetric_work_given(&record, tau, rates, ell_i, &mut cal_rng)?;
            self.calorimetric[k].push(sample.value);
            let pops = record.checkpoint_at(tau)?.state.populations();
            let mut number = 0.0;
            for (level, p) in pops.iter().enumerate() {
                self.population_sum[k][level] += p;
                self.population_sq[k][level] += p * p;
                number += level as f64 * p;
            }
            self.number_sum[k] += number;
            self.number_sq[k] += number * number;
        }
        self.n_traj += 1;
        if record.truncation_warning() {
            self.flagged += 1;
        }
        if keep_jumps {
            self.jumps.push((index, record.jumps));
        }
        Ok(())
    }

    pub fn merge(mut self, other: Self) -> Self {
        for k in 0..self.times.len() {
            self.projective[k].merge(&other.projective[k]);
            self.calorimetric[k].merge(&other.calorimetric[k]);
            for (a, b) in self.population_sum[k].iter_mut().zip(&other.population_sum[k]) {
                *a += b;
            }
            for (a, b) in self.population_sq[k].iter_mut().zip(&other.population_sq[k]) {
                *a += b;
            }
            self.number_sum[k] += other.number_sum[k];
            self.number_sq[k] += other.number_sq[k];
        }
        self.n_traj += other.n_traj;
        self.flagged += other.flagged;
        self.jumps.extend(other.jumps);
        self
    }

    /// Ensemble-averaged level populations at each checkpoint.
    pub fn populations(&self) -> Vec<Vec<Estimate>> {
        self.population_sum
            .iter()
            .zip(&self.population_sq)
            .map(|(s, q)| s.iter().zip(q).map(|(&s, &q)| estimate(s, q, self.n_traj)).collect())
            .collect()
    }

    /// Ensemble-averaged `<n>` at each checkpoint.
    pub fn mean_number(&self) -> Vec<Estimate> {
        self.number_sum.iter().zip(&self.number_sq).map(|(&s, &q)| estimate(s, q, self.n_traj)).collect()
    }

    /// Largest ensemble-averaged top-level population over the grid.
    pub fn top_population(&self) -> f64 {
        let n = self.n_traj.max(1) as f64;
        self.population_sum.iter().map(|p| p.last().copied().unwrap_or(0.0) / n).fold(0.0, f64::max)
    }

    pub fn projective_summary(&self) -> Result<MomentSummary> {
        MomentSummary::from_histograms(&self.times, self.projective.clone())
    }

    pub fn calorimetric_summary(&self) -> Result<MomentSummary> {
        MomentSummary::from_histograms(&self.times, self.calorimetric.clone())
    }
}

/// Runs the ensemble and reduces it. Fails when the ensemble-averaged
/// top-level population exceeds the truncation limit.
pub fn collect_statistics(
    params: &PhysicalParams,
    rates: &Rates,
    config: &EnsembleConfig,
    keep_jumps: bool,
) -> Result<EnsembleStatistics> {
    let engine = TrajectoryEngine::new(params, rates, config)?;
    let grid = engine.grid().to_vec();
    let stats = engine.map_reduce(
        config.n_traj,
        config.master_seed,
        || EnsembleStatistics::empty(&grid, params.dim),
        |acc, index, record| acc.add(config.master_seed, index, record, rates, keep_jumps),
        EnsembleStatistics::merge,
    )?;
    let top = stats.top_population();
    if top > TOP_LEVEL_ERROR {
        return Err(Error::TruncationExceeded { population: top, limit: TOP_LEVEL_ERROR });
    }
    if top > TOP_LEVEL_WARN {
        log::warn!("ensemble-averaged top-level population {top:.2e} exceeds {TOP_LEVEL_WARN:e}; increase dim");
    }
    Ok(stats)
}

pub const ESTIMATE_COLUMNS: [&str; 10] = [
    "t", "mean_Wp", "se_mean_Wp", "var_Wp", "se_var_Wp", "mean_Wc", "se_mean_Wc", "var_Wc", "se_var_Wc", "n_traj",
];

pub(crate) fn number(x: f64) -> String {
    format!("{x:.10e}")
}

/// Writes one row per checkpoint, preceded by `#` comment lines.
pub fn write_estimates<W: Write>(mut out: W, header: &[String], stats: &EnsembleStatistics) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let proj = stats.projective_summary()?;
    let cal = stats.calorimetric_summary()?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(ESTIMATE_COLUMNS)?;
    for k in 0..stats.times.len() {
        writer.write_record([
            number(stats.times[k]),
            number(proj.mean[k]),
            number(proj.stderr_mean[k]),
            number(proj.variance[k]),
            number(proj.stderr_variance[k]),
            number(cal.mean[k]),
            number(cal.stderr_mean[k]),
            number(cal.variance[k]),
            number(cal.stderr_variance[k]),
            stats.n_traj.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
